//! Distributions on ℝ^d and partial-sum path simulation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banach::{NormKind, SpaceSpec, TruncatedCov, PSD_TOL};
use crate::error::{Error, Result};
use crate::rng::trial_stream;
use crate::slowvary::Normalizer;
use crate::stats::{self, Z95};

/// A real law, embedded along one axis by [`DistSpec::ScalarEmbedded`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarLaw {
    Gaussian { sigma: f64 },
    Rademacher,
    Constant { value: f64 },
    /// `P(|ξ| > r) = r^{-a}` for `r ≥ 1`, symmetric sign.
    SymmetricPareto { tail_index: f64 },
}

/// Distribution of a single summand `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    /// Centered Gaussian with the given covariance.
    Gaussian { cov: Vec<Vec<f64>> },
    /// Independent coordinates `±scales[i]`.
    RademacherProduct { scales: Vec<f64> },
    /// `R·θ` with `P(R > r) = r^{-a}` (r ≥ 1) and `θ` uniform on the
    /// Euclidean sphere.
    RadialPareto { tail_index: f64, dim: usize },
    PointMass { point: Vec<f64> },
    ScalarEmbedded { law: ScalarLaw, axis: usize, dim: usize },
}

fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

impl ScalarLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            ScalarLaw::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")))
            }
            ScalarLaw::Constant { value } if !value.is_finite() => {
                Err(Error::invalid("constant must be finite"))
            }
            ScalarLaw::SymmetricPareto { tail_index } if !(tail_index > 0.0 && tail_index.is_finite()) => {
                Err(Error::invalid(format!("tail index must be > 0, got {tail_index}")))
            }
            _ => Ok(()),
        }
    }

    /// `E ξ² 1{|ξ| ≤ t}`.
    pub fn truncated_second_moment(&self, t: f64) -> Result<f64> {
        Ok(match *self {
            ScalarLaw::Gaussian { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else if t.is_infinite() {
                    sigma * sigma
                } else {
                    let u = t / sigma;
                    let m = sigma * sigma * (libm::erf(u * FRAC_1_SQRT_2) - 2.0 * u * std_normal_pdf(u));
                    m.max(0.0)
                }
            }
            ScalarLaw::Rademacher => {
                if t >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarLaw::Constant { value } => {
                if value.abs() <= t {
                    value * value
                } else {
                    0.0
                }
            }
            ScalarLaw::SymmetricPareto { tail_index: a } => {
                if t < 1.0 {
                    0.0
                } else if t.is_infinite() {
                    if a > 2.0 {
                        a / (a - 2.0)
                    } else {
                        return Err(Error::invalid("second moment is infinite for tail index <= 2"));
                    }
                } else if (a - 2.0).abs() < 1e-12 {
                    2.0 * t.ln()
                } else {
                    a * (t.powf(2.0 - a) - 1.0) / (2.0 - a)
                }
            }
        })
    }

    /// `P(|ξ| > r)`.
    pub fn tail_prob(&self, r: f64) -> f64 {
        match *self {
            ScalarLaw::Gaussian { sigma } => {
                if sigma == 0.0 {
                    f64::from(r < 0.0)
                } else {
                    libm::erfc(r / sigma * FRAC_1_SQRT_2).min(1.0)
                }
            }
            ScalarLaw::Rademacher => f64::from(r < 1.0),
            ScalarLaw::Constant { value } => f64::from(value.abs() > r),
            ScalarLaw::SymmetricPareto { tail_index } => {
                if r < 1.0 {
                    1.0
                } else {
                    r.powf(-tail_index)
                }
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarLaw::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            ScalarLaw::Rademacher => random_sign(rng),
            ScalarLaw::Constant { value } => value,
            ScalarLaw::SymmetricPareto { tail_index } => random_sign(rng) * pareto_radius(rng, tail_index),
        }
    }
}

#[inline]
fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// `U^{-1/a}` with `U` uniform on (0, 1].
#[inline]
fn pareto_radius<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    u.powf(-1.0 / a)
}

impl DistSpec {
    pub fn dim(&self) -> usize {
        match self {
            DistSpec::Gaussian { cov } => cov.len(),
            DistSpec::RademacherProduct { scales } => scales.len(),
            DistSpec::RadialPareto { dim, .. } => *dim,
            DistSpec::PointMass { point } => point.len(),
            DistSpec::ScalarEmbedded { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::invalid("distribution dimension must be at least 1"));
        }
        match self {
            DistSpec::Gaussian { cov } => {
                let m = self.gaussian_matrix()?;
                if cov.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("covariance has non-finite entries"));
                }
                let asym = (&m - m.transpose()).amax();
                if asym > PSD_TOL * m.amax().max(1.0) {
                    return Err(Error::NotSymmetric { asymmetry: asym });
                }
                let min = m.symmetric_eigenvalues().min();
                if min < -PSD_TOL * m.amax().max(1.0) {
                    return Err(Error::NotPsd { min_eigenvalue: min });
                }
            }
            DistSpec::RademacherProduct { scales } => {
                if scales.iter().any(|s| !s.is_finite()) {
                    return Err(Error::invalid("scales must be finite"));
                }
            }
            DistSpec::RadialPareto { tail_index, .. } => {
                if !(*tail_index > 0.0 && tail_index.is_finite()) {
                    return Err(Error::invalid(format!("tail index must be > 0, got {tail_index}")));
                }
            }
            DistSpec::PointMass { point } => {
                if point.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("point must be finite"));
                }
            }
            DistSpec::ScalarEmbedded { law, axis, dim } => {
                if axis >= dim {
                    return Err(Error::invalid(format!("axis {axis} out of range for dim {dim}")));
                }
                law.validate()?;
            }
        }
        Ok(())
    }

    fn gaussian_matrix(&self) -> Result<DMatrix<f64>> {
        let DistSpec::Gaussian { cov } = self else {
            unreachable!("gaussian_matrix on non-Gaussian");
        };
        let d = cov.len();
        if cov.iter().any(|row| row.len() != d) {
            return Err(Error::invalid("covariance must be square"));
        }
        Ok(DMatrix::from_fn(d, d, |i, j| cov[i][j]))
    }

    /// Whether `E X = 0` holds exactly (all families here are symmetric
    /// except point masses and nonzero constants).
    pub fn is_centered(&self) -> bool {
        match self {
            DistSpec::PointMass { point } => point.iter().all(|v| *v == 0.0),
            DistSpec::ScalarEmbedded {
                law: ScalarLaw::Constant { value },
                ..
            } => *value == 0.0,
            _ => true,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DistSpec::Gaussian { cov } => format!("gaussian(d={})", cov.len()),
            DistSpec::RademacherProduct { scales } => format!("rademacher-product(d={})", scales.len()),
            DistSpec::RadialPareto { tail_index, dim } => format!("radial-pareto(a={tail_index}, d={dim})"),
            DistSpec::PointMass { point } => format!("point-mass(d={})", point.len()),
            DistSpec::ScalarEmbedded { law, axis, dim } => {
                format!("scalar {law:?} on axis {axis} of d={dim}")
            }
        }
    }

    /// Closed-form `Σ_t = E X Xᵀ 1{‖X‖ ≤ t}` where one is available.
    pub fn truncated_cov(&self, t: f64, space: &SpaceSpec) -> Result<Option<TruncatedCov>> {
        space.check_dim(self.dim())?;
        if t.is_nan() || t < 0.0 {
            return Err(Error::invalid(format!("threshold must be >= 0, got {t}")));
        }
        let d = self.dim();
        let matrix = match self {
            DistSpec::PointMass { point } => {
                let v = nalgebra::DVector::from_column_slice(point);
                if space.norm_kind().apply(point) <= t {
                    &v * v.transpose()
                } else {
                    DMatrix::zeros(d, d)
                }
            }
            DistSpec::RademacherProduct { scales } => {
                // every sign pattern has the same norm
                if space.norm_kind().apply(scales) <= t {
                    DMatrix::from_fn(d, d, |i, j| if i == j { scales[i] * scales[i] } else { 0.0 })
                } else {
                    DMatrix::zeros(d, d)
                }
            }
            DistSpec::ScalarEmbedded { law, axis, .. } => {
                let m = law.truncated_second_moment(t)?;
                let mut out = DMatrix::zeros(d, d);
                out[(*axis, *axis)] = m;
                out
            }
            DistSpec::RadialPareto { tail_index, dim } => {
                if space.norm_kind() != NormKind::L2 {
                    return Ok(None);
                }
                let m = ScalarLaw::SymmetricPareto {
                    tail_index: *tail_index,
                }
                .truncated_second_moment(t)?;
                DMatrix::identity(*dim, *dim) * (m / *dim as f64)
            }
            DistSpec::Gaussian { cov } => {
                if d != 1 {
                    return Ok(None);
                }
                let sigma = cov[0][0].max(0.0).sqrt();
                let m = ScalarLaw::Gaussian { sigma }.truncated_second_moment(t)?;
                DMatrix::from_element(1, 1, m)
            }
        };
        TruncatedCov::new(matrix, t, 0).map(Some)
    }

    /// Almost-sure bound on `‖X‖`, if the law is bounded.
    pub fn norm_bound(&self, space: &SpaceSpec) -> Option<f64> {
        let p = space.norm_kind();
        match self {
            DistSpec::PointMass { point } => Some(p.apply(point)),
            DistSpec::RademacherProduct { scales } => Some(p.apply(scales)),
            DistSpec::ScalarEmbedded { law, .. } => match *law {
                ScalarLaw::Rademacher => Some(1.0),
                ScalarLaw::Constant { value } => Some(value.abs()),
                ScalarLaw::Gaussian { sigma: 0.0 } => Some(0.0),
                _ => None,
            },
            DistSpec::Gaussian { cov } if cov.iter().flatten().all(|v| *v == 0.0) => Some(0.0),
            _ => None,
        }
    }

    /// `P(‖X‖ > r)` where available in closed form.
    pub fn tail_prob(&self, r: f64, space: &SpaceSpec) -> Option<f64> {
        let p = space.norm_kind();
        match self {
            DistSpec::PointMass { point } => Some(f64::from(p.apply(point) > r)),
            DistSpec::RademacherProduct { scales } => Some(f64::from(p.apply(scales) > r)),
            DistSpec::ScalarEmbedded { law, .. } => Some(law.tail_prob(r)),
            DistSpec::RadialPareto { tail_index, .. } if p == NormKind::L2 => Some(
                ScalarLaw::SymmetricPareto {
                    tail_index: *tail_index,
                }
                .tail_prob(r),
            ),
            DistSpec::Gaussian { cov } if cov.len() == 1 => Some(
                ScalarLaw::Gaussian {
                    sigma: cov[0][0].max(0.0).sqrt(),
                }
                .tail_prob(r),
            ),
            _ => None,
        }
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Compact forms: `normal[:σ]`, `gaussian-iid:<d>`, `rademacher:<d>`,
/// `pareto:<a>:<d>`, `zero:<d>`.
impl FromStr for DistSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::parse(s, "missing field"))?
                .parse()
                .map_err(|_| Error::parse(s, "bad number"))
        };
        let dim = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .ok_or_else(|| Error::parse(s, "missing dimension"))?
                .parse()
                .map_err(|_| Error::parse(s, "bad dimension"))
        };
        let spec = match (parts[0], parts.len()) {
            ("normal", 1) => DistSpec::ScalarEmbedded {
                law: ScalarLaw::Gaussian { sigma: 1.0 },
                axis: 0,
                dim: 1,
            },
            ("normal", 2) => DistSpec::ScalarEmbedded {
                law: ScalarLaw::Gaussian { sigma: num(1)? },
                axis: 0,
                dim: 1,
            },
            ("gaussian-iid", 2) => {
                let d = dim(1)?;
                DistSpec::Gaussian {
                    cov: (0..d)
                        .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
                        .collect(),
                }
            }
            ("rademacher", 2) => DistSpec::RademacherProduct {
                scales: vec![1.0; dim(1)?],
            },
            ("pareto", 3) => DistSpec::RadialPareto {
                tail_index: num(1)?,
                dim: dim(2)?,
            },
            ("zero", 2) => DistSpec::PointMass {
                point: vec![0.0; dim(1)?],
            },
            _ => {
                return Err(Error::parse(
                    s,
                    "expected normal[:s], gaussian-iid:d, rademacher:d, pareto:a:d or zero:d",
                ))
            }
        };
        spec.validate().map_err(|e| Error::parse(s, e.to_string()))?;
        Ok(spec)
    }
}

/// Draws samples of a validated [`DistSpec`].
#[derive(Debug, Clone)]
pub struct Sampler {
    dist: DistSpec,
    /// `L` with `L Lᵀ = Σ`, for the Gaussian family.
    factor: Option<DMatrix<f64>>,
    dim: usize,
}

impl Sampler {
    pub fn new(dist: &DistSpec, space: &SpaceSpec) -> Result<Self> {
        dist.validate()?;
        space.check_dim(dist.dim())?;
        let factor = match dist {
            DistSpec::Gaussian { .. } => {
                let eig = dist.gaussian_matrix()?.symmetric_eigen();
                let mut l = eig.eigenvectors;
                for (j, lambda) in eig.eigenvalues.iter().enumerate() {
                    let s = lambda.max(0.0).sqrt();
                    l.column_mut(j).scale_mut(s);
                }
                Some(l)
            }
            _ => None,
        };
        Ok(Sampler {
            dist: dist.clone(),
            factor,
            dim: dist.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes one draw of `X` into `out` (length `dim`).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.dist {
            DistSpec::Gaussian { .. } => {
                let l = self.factor.as_ref().unwrap();
                let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..self.dim).map(|j| l[(i, j)] * z[j]).sum();
                }
            }
            DistSpec::RademacherProduct { scales } => {
                for (o, s) in out.iter_mut().zip(scales) {
                    *o = random_sign(rng) * s;
                }
            }
            DistSpec::RadialPareto { tail_index, .. } => {
                let r2 = loop {
                    for o in out.iter_mut() {
                        *o = rng.sample(StandardNormal);
                    }
                    let r2 = out.iter().map(|x| x * x).sum::<f64>();
                    if r2 > 0.0 {
                        break r2;
                    }
                };
                let scale = random_sign(rng) * pareto_radius(rng, *tail_index) / r2.sqrt();
                for o in out.iter_mut() {
                    *o *= scale;
                }
            }
            DistSpec::PointMass { point } => out.copy_from_slice(point),
            DistSpec::ScalarEmbedded { law, axis, .. } => {
                out.fill(0.0);
                out[*axis] = law.sample(rng);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.sample_into(rng, &mut x);
        x
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Neumaier compensated summation, one accumulator per coordinate.
#[derive(Debug, Clone)]
struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSum {
    fn new(d: usize) -> Self {
        CompensatedSum {
            sum: vec![0.0; d],
            comp: vec![0.0; d],
        }
    }

    #[inline]
    fn add(&mut self, x: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(x) {
            let t = *s + v;
            if s.abs() >= v.abs() {
                *c += (*s - t) + v;
            } else {
                *c += (v - t) + *s;
            }
            *s = t;
        }
    }

    fn value_into(&self, out: &mut [f64]) {
        for ((o, s), c) in out.iter_mut().zip(&self.sum).zip(&self.comp) {
            *o = s + c;
        }
    }
}

/// Path simulation settings. Trial `k` draws from its own stream, so results
/// do not depend on the worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n_max: u64,
    pub checkpoints: Vec<u64>,
    pub seed: u64,
    pub trials: usize,
}

pub const CHECKPOINT_RATIO: f64 = 1.3;

/// `1, ⌈1.3⌉, …` up to `n_max`, always ending at `n_max`.
pub fn geometric_checkpoints(n_max: u64, ratio: f64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut n = 1u64;
    while n < n_max {
        out.push(n);
        n = ((n as f64 * ratio).ceil() as u64).max(n + 1);
    }
    out.push(n_max);
    out
}

impl PathConfig {
    pub fn new(n_max: u64, trials: usize, seed: u64) -> Result<Self> {
        let cfg = PathConfig {
            n_max,
            checkpoints: geometric_checkpoints(n_max, CHECKPOINT_RATIO),
            seed,
            trials,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 || self.trials == 0 {
            return Err(Error::invalid("n_max and trials must be positive"));
        }
        if self.checkpoints.is_empty()
            || self.checkpoints.windows(2).any(|w| w[1] <= w[0])
            || self.checkpoints[0] == 0
            || *self.checkpoints.last().unwrap() > self.n_max
        {
            return Err(Error::invalid("checkpoints must increase within 1..=n_max"));
        }
        Ok(())
    }
}

/// `‖S_n‖ / c_n` at each checkpoint, one row per trial.
#[derive(Debug, Clone, Serialize)]
pub struct RatioPaths {
    pub checkpoints: Vec<u64>,
    pub ratios: Vec<Vec<f64>>,
}

fn run_trials<T: Send>(
    config: &PathConfig,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..config.trials).into_par_iter().map(f).collect()
}

/// Simulates `trials` independent paths of `S_n = X_1 + … + X_n`.
pub fn run_path(
    dist: &DistSpec,
    space: &SpaceSpec,
    normalizer: &Normalizer,
    config: &PathConfig,
) -> Result<RatioPaths> {
    config.validate()?;
    let sampler = Sampler::new(dist, space)?;
    let norm = space.norm_kind();
    let scale: Vec<f64> = config.checkpoints.iter().map(|&n| normalizer.eval(n as f64)).collect();
    let ratios = run_trials(config, |trial| {
        let mut rng = trial_stream(config.seed, trial as u64);
        let d = sampler.dim();
        let mut x = vec![0.0; d];
        let mut s = vec![0.0; d];
        let mut acc = CompensatedSum::new(d);
        let mut row = Vec::with_capacity(scale.len());
        let mut next = 0;
        for step in 1..=*config.checkpoints.last().unwrap() {
            sampler.sample_into(&mut rng, &mut x);
            acc.add(&x);
            if step == config.checkpoints[next] {
                acc.value_into(&mut s);
                let r = norm.apply(&s);
                if !r.is_finite() {
                    return Err(Error::Overflow { trial: trial as u64, step });
                }
                row.push(r / scale[next]);
                next += 1;
            }
        }
        Ok(row)
    })?;
    Ok(RatioPaths {
        checkpoints: config.checkpoints.clone(),
        ratios,
    })
}

/// Per-trial maxima over the tail window and their spread.
#[derive(Debug, Clone, Serialize)]
pub struct LimsupEstimate {
    pub tail_from: u64,
    pub tail_max: Vec<f64>,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;

/// `max_{n in tail} ‖S_n‖/c_n` per trial, over the last `tail_fraction` of
/// the checkpoints.
pub fn limsup_estimate(paths: &RatioPaths, tail_fraction: f64) -> Result<LimsupEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::invalid("tail fraction must lie in (0, 1]"));
    }
    if paths.ratios.is_empty() || paths.checkpoints.is_empty() {
        return Err(Error::EmptySamples);
    }
    let start = stats::tail_start(paths.checkpoints.len(), tail_fraction);
    let tail_max: Vec<f64> = paths
        .ratios
        .iter()
        .map(|row| row[start..].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(LimsupEstimate {
        tail_from: paths.checkpoints[start],
        median: stats::quantile(&tail_max, 0.5),
        q10: stats::quantile(&tail_max, 0.1),
        q90: stats::quantile(&tail_max, 0.9),
        tail_max,
    })
}

/// Coupled paths `S_n` and `S'_n = Σ X_k 1{‖X_k‖ ≤ c_k}`.
#[derive(Debug, Clone, Serialize)]
pub struct TruncatedPaths {
    pub checkpoints: Vec<u64>,
    /// Number of `k ≤ n_max` with `‖X_k‖ > c_k`, per trial.
    pub truncations: Vec<u64>,
    pub last_truncation: Vec<Option<u64>>,
    /// `‖S_n − S'_n‖ / c_n` at each checkpoint, per trial.
    pub gaps: Vec<Vec<f64>>,
}

impl TruncatedPaths {
    pub fn mean_truncations(&self) -> f64 {
        self.truncations.iter().sum::<u64>() as f64 / self.truncations.len() as f64
    }

    /// Per trial, the largest gap at checkpoints past the last truncation
    /// (0 when the path never truncated after the first checkpoint).
    pub fn gap_after_last(&self) -> Vec<f64> {
        self.gaps
            .iter()
            .zip(&self.last_truncation)
            .map(|(row, last)| {
                let from = last.unwrap_or(0);
                self.checkpoints
                    .iter()
                    .zip(row)
                    .filter(|(n, _)| **n >= from)
                    .map(|(_, g)| *g)
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

pub fn truncated_path(
    dist: &DistSpec,
    space: &SpaceSpec,
    normalizer: &Normalizer,
    config: &PathConfig,
) -> Result<TruncatedPaths> {
    config.validate()?;
    let sampler = Sampler::new(dist, space)?;
    let norm = space.norm_kind();
    let rows = run_trials(config, |trial| {
        let mut rng = trial_stream(config.seed, trial as u64);
        let d = sampler.dim();
        let mut x = vec![0.0; d];
        let mut diff = CompensatedSum::new(d);
        let mut gap = vec![0.0; d];
        let mut count = 0u64;
        let mut last = None;
        let mut row = Vec::with_capacity(config.checkpoints.len());
        let mut next = 0;
        for step in 1..=*config.checkpoints.last().unwrap() {
            sampler.sample_into(&mut rng, &mut x);
            let c_k = normalizer.eval(step as f64);
            let r = norm.apply(&x);
            if !r.is_finite() {
                return Err(Error::Overflow { trial: trial as u64, step });
            }
            if r > c_k {
                count += 1;
                last = Some(step);
                diff.add(&x);
            }
            if step == config.checkpoints[next] {
                diff.value_into(&mut gap);
                row.push(norm.apply(&gap) / c_k);
                next += 1;
            }
        }
        Ok((count, last, row))
    })?;
    let mut out = TruncatedPaths {
        checkpoints: config.checkpoints.clone(),
        truncations: Vec::with_capacity(rows.len()),
        last_truncation: Vec::with_capacity(rows.len()),
        gaps: Vec::with_capacity(rows.len()),
    };
    for (c, l, g) in rows {
        out.truncations.push(c);
        out.last_truncation.push(l);
        out.gaps.push(g);
    }
    Ok(out)
}

/// `Σ_{k ≤ n_max} P(‖X‖ > c_k)`.
pub fn expected_truncations(
    dist: &DistSpec,
    space: &SpaceSpec,
    normalizer: &Normalizer,
    n_max: u64,
) -> Result<f64> {
    dist.validate()?;
    space.check_dim(dist.dim())?;
    let mut total = 0.0;
    for k in 1..=n_max {
        total += dist
            .tail_prob(normalizer.eval(k as f64), space)
            .ok_or_else(|| Error::NoClosedForm(format!("tail of {}", dist.describe())))?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanNormRow {
    pub n: u64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub se: f64,
}

pub const MIN_MEAN_NORM_TRIALS: usize = 30;

/// Estimate of `E‖S_n‖ / c_n` at each checkpoint with a 95% normal CI.
pub fn mean_norm_curve(
    dist: &DistSpec,
    space: &SpaceSpec,
    normalizer: &Normalizer,
    config: &PathConfig,
) -> Result<Vec<MeanNormRow>> {
    if config.trials < MIN_MEAN_NORM_TRIALS {
        return Err(Error::invalid(format!(
            "mean-norm curve needs at least {MIN_MEAN_NORM_TRIALS} trials"
        )));
    }
    let paths = run_path(dist, space, normalizer, config)?;
    Ok(mean_rows(&paths))
}

fn mean_rows(paths: &RatioPaths) -> Vec<MeanNormRow> {
    paths
        .checkpoints
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let col: Vec<f64> = paths.ratios.iter().map(|row| row[j]).collect();
            let (mean, se) = stats::mean_se(&col);
            MeanNormRow {
                n,
                mean,
                ci_lo: mean - Z95 * se,
                ci_hi: mean + Z95 * se,
                se,
            }
        })
        .collect()
}

impl RatioPaths {
    /// Across-trial mean of the ratio at every checkpoint.
    pub fn mean_curve(&self) -> Vec<MeanNormRow> {
        mean_rows(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::aux_stream;
    use crate::slowvary::SlowVaryFn;

    fn space(d: usize, p: NormKind) -> SpaceSpec {
        SpaceSpec::new(d, p).unwrap()
    }

    fn normal(sigma: f64) -> DistSpec {
        DistSpec::ScalarEmbedded {
            law: ScalarLaw::Gaussian { sigma },
            axis: 0,
            dim: 1,
        }
    }

    #[test]
    fn gaussian_truncated_moment_examples() {
        let g = ScalarLaw::Gaussian { sigma: 1.0 };
        assert_eq!(g.truncated_second_moment(0.0).unwrap(), 0.0);
        assert!((g.truncated_second_moment(40.0).unwrap() - 1.0).abs() < 1e-15);
        // E ξ²1{|ξ|≤1} = erf(1/√2) − 2φ(1)
        let expected = 0.682_689_492_137_085_9 - 2.0 * 0.241_970_724_519_143_37;
        assert!((g.truncated_second_moment(1.0).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn pareto_truncated_moment_continuous_at_two() {
        let t = 50.0;
        let at = |a: f64| {
            ScalarLaw::SymmetricPareto { tail_index: a }
                .truncated_second_moment(t)
                .unwrap()
        };
        assert!((at(2.0) - 2.0 * t.ln()).abs() < 1e-12);
        assert!((at(2.0 + 1e-6) - at(2.0)).abs() < 1e-4);
        assert!(ScalarLaw::SymmetricPareto { tail_index: 1.5 }
            .truncated_second_moment(f64::INFINITY)
            .is_err());
    }

    #[test]
    fn rademacher_product_cov() {
        let dist = DistSpec::RademacherProduct {
            scales: vec![1.0, 2.0],
        };
        let s = space(2, NormKind::LInf);
        let c = dist.truncated_cov(2.0, &s).unwrap().unwrap();
        assert_eq!(c.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        let c = dist.truncated_cov(1.9, &s).unwrap().unwrap();
        assert!(c.matrix().iter().all(|v| *v == 0.0));
        assert_eq!(dist.norm_bound(&s), Some(2.0));
    }

    #[test]
    fn validation() {
        assert!(DistSpec::Gaussian {
            cov: vec![vec![1.0, 2.0], vec![2.0, 1.0]]
        }
        .validate()
        .is_err());
        assert!(DistSpec::ScalarEmbedded {
            law: ScalarLaw::Rademacher,
            axis: 2,
            dim: 2
        }
        .validate()
        .is_err());
        assert!(DistSpec::PointMass { point: vec![] }.validate().is_err());
        assert!(normal(-1.0).validate().is_err());
    }

    #[test]
    fn compact_forms() {
        assert_eq!("normal".parse::<DistSpec>().unwrap(), normal(1.0));
        assert_eq!("normal:2".parse::<DistSpec>().unwrap(), normal(2.0));
        assert_eq!(
            "rademacher:3".parse::<DistSpec>().unwrap(),
            DistSpec::RademacherProduct {
                scales: vec![1.0; 3]
            }
        );
        assert_eq!("gaussian-iid:2".parse::<DistSpec>().unwrap().dim(), 2);
        assert_eq!("pareto:3:4".parse::<DistSpec>().unwrap().dim(), 4);
        assert!("zero:2".parse::<DistSpec>().unwrap().norm_bound(&space(2, NormKind::L2)) == Some(0.0));
        for bad in ["", "normal:x", "pareto:3", "zero:0", "cauchy:1"] {
            assert!(bad.parse::<DistSpec>().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn serde_round_trip_and_unknown_fields() {
        let d = DistSpec::ScalarEmbedded {
            law: ScalarLaw::SymmetricPareto { tail_index: 3.0 },
            axis: 1,
            dim: 2,
        };
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<DistSpec>(&json).unwrap(), d);
        let bad = r#"{"family":"point_mass","point":[0.0],"extra":1}"#;
        assert!(serde_json::from_str::<DistSpec>(bad).is_err());
    }

    #[test]
    fn gaussian_sampler_matches_covariance() {
        let dist = DistSpec::Gaussian {
            cov: vec![vec![2.0, 0.6], vec![0.6, 1.0]],
        };
        let s = space(2, NormKind::L2);
        let sampler = Sampler::new(&dist, &s).unwrap();
        let mut rng = aux_stream(7, 1);
        let n = 200_000;
        let mut m = [0.0; 3];
        for _ in 0..n {
            let x = sampler.sample(&mut rng);
            m[0] += x[0] * x[0];
            m[1] += x[0] * x[1];
            m[2] += x[1] * x[1];
        }
        let m: Vec<f64> = m.iter().map(|v| v / n as f64).collect();
        assert!((m[0] - 2.0).abs() < 0.03 && (m[1] - 0.6).abs() < 0.02 && (m[2] - 1.0).abs() < 0.02);
    }

    #[test]
    fn radial_pareto_tail() {
        let dist = DistSpec::RadialPareto {
            tail_index: 3.0,
            dim: 3,
        };
        let s = space(3, NormKind::L2);
        let sampler = Sampler::new(&dist, &s).unwrap();
        let mut rng = aux_stream(3, 2);
        let n = 100_000;
        let over = (0..n)
            .filter(|_| NormKind::L2.apply(&sampler.sample(&mut rng)) > 2.0)
            .count() as f64
            / n as f64;
        assert!((over - 0.125).abs() < 0.005, "{over}");
        assert_eq!(dist.tail_prob(2.0, &s), Some(0.125));
        assert!(dist.truncated_cov(2.0, &space(3, NormKind::L1)).unwrap().is_none());
    }

    #[test]
    fn checkpoints_shape() {
        let c = geometric_checkpoints(100, 1.3);
        assert_eq!(c[0], 1);
        assert_eq!(*c.last().unwrap(), 100);
        assert!(c.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(geometric_checkpoints(1, 1.3), vec![1]);
    }

    #[test]
    fn zero_law_paths_are_zero() {
        let dist = DistSpec::PointMass { point: vec![0.0] };
        let s = space(1, NormKind::L2);
        let cfg = PathConfig::new(1000, 4, 1).unwrap();
        let paths = run_path(&dist, &s, &Normalizer::classical(), &cfg).unwrap();
        assert!(paths.ratios.iter().flatten().all(|r| *r == 0.0));
    }

    #[test]
    fn runs_are_reproducible() {
        let s = space(1, NormKind::L2);
        let cfg = PathConfig::new(500, 6, 42).unwrap();
        let a = run_path(&normal(1.0), &s, &Normalizer::classical(), &cfg).unwrap();
        let b = run_path(&normal(1.0), &s, &Normalizer::classical(), &cfg).unwrap();
        assert_eq!(a.ratios, b.ratios);
    }

    #[test]
    fn overflow_is_reported() {
        let dist = DistSpec::PointMass {
            point: vec![f64::MAX],
        };
        let s = space(1, NormKind::L2);
        let cfg = PathConfig::new(10, 1, 0).unwrap();
        assert!(matches!(
            run_path(&dist, &s, &Normalizer::classical(), &cfg),
            Err(Error::Overflow { trial: 0, .. })
        ));
    }

    #[test]
    fn compensated_sum_is_exact_for_cancelling_terms() {
        let mut acc = CompensatedSum::new(1);
        for x in [1e16, 1.0, -1e16, 1.0] {
            acc.add(&[x]);
        }
        let mut out = [0.0];
        acc.value_into(&mut out);
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn limsup_on_known_paths() {
        let paths = RatioPaths {
            checkpoints: vec![1, 2, 3, 4],
            ratios: vec![vec![5.0, 1.0, 0.5, 0.7], vec![0.1, 0.2, 0.9, 0.3]],
        };
        let est = limsup_estimate(&paths, 0.5).unwrap();
        assert_eq!(est.tail_from, 3);
        assert_eq!(est.tail_max, vec![0.7, 0.9]);
        assert!((est.median - 0.8).abs() < 1e-12);
        assert!(limsup_estimate(&paths, 0.0).is_err());
    }

    #[test]
    fn bounded_law_never_truncates_eventually() {
        let dist = DistSpec::ScalarEmbedded {
            law: ScalarLaw::Rademacher,
            axis: 0,
            dim: 1,
        };
        let s = space(1, NormKind::L2);
        let c = Normalizer::psi(SlowVaryFn::constant(1.0).unwrap());
        // c_k = √k exceeds 1 from k = 2 on
        let cfg = PathConfig::new(200, 3, 5).unwrap();
        let t = truncated_path(&dist, &s, &c, &cfg).unwrap();
        assert!(t.truncations.iter().all(|&k| k == 0));
        assert_eq!(expected_truncations(&dist, &s, &c, 200).unwrap(), 0.0);
    }

    #[test]
    fn mean_norm_needs_enough_trials() {
        let s = space(1, NormKind::L2);
        let cfg = PathConfig::new(100, 10, 1).unwrap();
        assert!(mean_norm_curve(&normal(1.0), &s, &Normalizer::classical(), &cfg).is_err());
    }
}
