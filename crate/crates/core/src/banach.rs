//! Finite-dimensional Banach-space primitives.
//!
//! The space is ℝ^d with an ℓ^p norm, p ∈ {1, 2, ∞}. The truncated
//! second-moment function
//!
//! ```text
//! H(t) = sup_{‖f‖_* ≤ 1} E f(X)² 1{‖X‖ ≤ t}
//! ```
//!
//! reduces to the supremum of the quadratic form `f ↦ fᵀ Σ_t f` over the
//! dual unit ball, where `Σ_t = E X Xᵀ 1{‖X‖ ≤ t}`. For the three supported
//! norms this supremum is computed exactly:
//!
//! | norm | dual ball | supremum |
//! |------|-----------|----------|
//! | ℓ²   | ℓ² ball   | largest eigenvalue |
//! | ℓ^∞  | ℓ¹ ball (extreme points ±eᵢ) | max diagonal entry |
//! | ℓ¹   | ℓ^∞ ball (extreme points {±1}^d) | max over sign vectors |

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::DistSpec;

/// Largest dimension for which the ℓ¹ dual-ball supremum is enumerated.
pub const MAX_VERTEX_DIM: usize = 20;

/// Tolerance for symmetry and positive semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    LInf,
}

impl NormKind {
    /// ℓ^p norm of `v`.
    #[inline]
    pub fn apply(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::L1 => "1",
            NormKind::L2 => "2",
            NormKind::LInf => "inf",
        })
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(NormKind::L1),
            "2" | "l2" => Ok(NormKind::L2),
            "inf" | "linf" | "∞" | "max" => Ok(NormKind::LInf),
            _ => Err(Error::parse(s, "expected one of 1, 2, inf")),
        }
    }
}

/// ℝ^d with an ℓ^p norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    dim: usize,
    norm: NormKind,
}

impl SpaceSpec {
    pub fn new(dim: usize, norm: NormKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("space dimension must be at least 1"));
        }
        Ok(SpaceSpec { dim, norm })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }
}

/// Norm of `v` in `space`.
pub fn norm(v: &[f64], space: &SpaceSpec) -> Result<f64> {
    space.check_dim(v.len())?;
    Ok(space.norm.apply(v))
}

/// Truncated second-moment matrix `Σ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedCov {
    matrix: DMatrix<f64>,
    threshold: f64,
    sample_count: usize,
}

impl TruncatedCov {
    /// Wraps a square matrix, symmetrizing drift up to [`PSD_TOL`].
    /// `sample_count` is 0 for analytic matrices.
    pub fn new(matrix: DMatrix<f64>, threshold: f64, sample_count: usize) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid(format!(
                "covariance must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariance has non-finite entries"));
        }
        let scale = matrix.amax().max(1.0);
        let asymmetry = (&matrix - matrix.transpose()).amax();
        if asymmetry > PSD_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        Ok(TruncatedCov {
            matrix,
            threshold,
            sample_count,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `fᵀ Σ f`.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let row: f64 = f.iter().enumerate().map(|(j, fj)| self.matrix[(i, j)] * fj).sum();
            acc += f[i] * row;
        }
        acc
    }
}

/// Supremum of `fᵀ Σ f` over the unit ball of the dual norm.
pub fn dual_ball_sup(cov: &TruncatedCov, space: &SpaceSpec) -> Result<f64> {
    space.check_dim(cov.dim())?;
    if space.norm == NormKind::L1 && space.dim > MAX_VERTEX_DIM {
        return Err(Error::DimensionGuard {
            dim: space.dim,
            max: MAX_VERTEX_DIM,
        });
    }
    let m = &cov.matrix;
    if m.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let eig = m.clone().symmetric_eigenvalues();
    let min = eig.min();
    if min < -PSD_TOL * m.amax().max(1.0) {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let sup = match space.norm {
        NormKind::L2 => eig.max(),
        NormKind::LInf => m.diagonal().max(),
        NormKind::L1 => sign_vertex_max(m),
    };
    Ok(sup.max(0.0))
}

/// max over f ∈ {−1, +1}^d of fᵀ M f, by Gray-code enumeration with the
/// first coordinate pinned to +1 (the form is even in f).
fn sign_vertex_max(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    let mut f = vec![1.0; d];
    // g = M f
    let mut g: Vec<f64> = (0..d).map(|i| m.row(i).sum()).collect();
    let mut q: f64 = g.iter().sum();
    let mut best = q;
    if d == 1 {
        return best;
    }
    let steps: u64 = 1 << (d - 1);
    for step in 1..steps {
        // flip coordinate k = 1 + trailing zeros of step
        let k = 1 + step.trailing_zeros() as usize;
        let fk = f[k];
        q += -4.0 * fk * g[k] + 4.0 * m[(k, k)];
        for (i, gi) in g.iter_mut().enumerate() {
            *gi -= 2.0 * fk * m[(i, k)];
        }
        f[k] = -fk;
        best = best.max(q);
    }
    best
}

/// Empirical `Σ_t = (1/N) Σ_k x_k x_kᵀ 1{‖x_k‖ ≤ t}`.
pub fn trunc_cov_empirical(
    samples: &[Vec<f64>],
    t: f64,
    space: &SpaceSpec,
) -> Result<TruncatedCov> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if t.is_nan() || t < 0.0 {
        return Err(Error::invalid(format!("threshold must be >= 0, got {t}")));
    }
    let d = space.dim;
    let mut acc = DMatrix::<f64>::zeros(d, d);
    for x in samples {
        space.check_dim(x.len())?;
        if space.norm.apply(x) <= t {
            add_outer(&mut acc, x);
        }
    }
    acc /= samples.len() as f64;
    TruncatedCov::new(acc, t, samples.len())
}

fn add_outer(acc: &mut DMatrix<f64>, x: &[f64]) {
    let d = x.len();
    for i in 0..d {
        for j in 0..d {
            acc[(i, j)] += x[i] * x[j];
        }
    }
}

/// Where `H` comes from: a distribution with a closed-form `Σ_t`, or samples.
#[derive(Debug, Clone, Copy)]
pub enum HSource<'a> {
    Dist(&'a DistSpec),
    Samples(&'a [Vec<f64>]),
}

/// `H(t)` for a distribution or a sample set.
pub fn h_eval(source: HSource<'_>, t: f64, space: &SpaceSpec) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::invalid(format!("H(t) needs t >= 0, got {t}")));
    }
    let cov = match source {
        HSource::Dist(dist) => dist
            .truncated_cov(t, space)?
            .ok_or_else(|| Error::NoClosedForm(dist.describe()))?,
        HSource::Samples(samples) => trunc_cov_empirical(samples, t, space)?,
    };
    dual_ball_sup(&cov, space)
}

/// A truncated second-moment function `t ↦ H(t)`.
///
/// Evaluators downstream work on `ln t` so that arguments far beyond the
/// f64 range (e.g. `a_n` for `n = 2^120`) stay representable.
pub trait TruncatedMoment: Send + Sync {
    fn eval(&self, t: f64) -> f64;

    fn eval_ln(&self, ln_t: f64) -> f64 {
        self.eval(ln_t.exp())
    }

    /// True when `H` at this argument is not backed by data (frozen value).
    fn extrapolated(&self, _ln_t: f64) -> bool {
        false
    }
}

impl<T: TruncatedMoment + ?Sized> TruncatedMoment for &T {
    fn eval(&self, t: f64) -> f64 {
        (**self).eval(t)
    }
    fn eval_ln(&self, ln_t: f64) -> f64 {
        (**self).eval_ln(ln_t)
    }
    fn extrapolated(&self, ln_t: f64) -> bool {
        (**self).extrapolated(ln_t)
    }
}

/// Idealized `H` shapes used for analytic scenarios.
///
/// Text forms: `zero`, `const:<c>`, `llpow:<e>` for `H(x) = (LLx)^e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HModel {
    Zero,
    Const(f64),
    LogLogPower(f64),
}

impl TruncatedMoment for HModel {
    fn eval(&self, t: f64) -> f64 {
        self.eval_ln(t.ln())
    }

    fn eval_ln(&self, ln_t: f64) -> f64 {
        match *self {
            HModel::Zero => 0.0,
            HModel::Const(c) => c,
            HModel::LogLogPower(e) => {
                let l = ln_t.max(1.0);
                let ll = l.ln().max(1.0);
                ll.powf(e)
            }
        }
    }
}

impl fmt::Display for HModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HModel::Zero => write!(f, "zero"),
            HModel::Const(c) => write!(f, "const:{c}"),
            HModel::LogLogPower(e) => write!(f, "llpow:{e}"),
        }
    }
}

impl FromStr for HModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" || s == "0" {
            return Ok(HModel::Zero);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::parse(s, "expected zero, const:<c> or llpow:<e>"))?;
        let value: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::parse(s, "bad number"))?;
        if !value.is_finite() {
            return Err(Error::parse(s, "value must be finite"));
        }
        match kind.trim() {
            "const" if value >= 0.0 => Ok(HModel::Const(value)),
            "llpow" => Ok(HModel::LogLogPower(value)),
            "const" => Err(Error::parse(s, "H must be nonnegative")),
            _ => Err(Error::parse(s, "unknown H model")),
        }
    }
}

/// `H` of a distribution with closed-form `Σ_t`.
#[derive(Debug, Clone)]
pub struct DistMoment {
    dist: DistSpec,
    space: SpaceSpec,
}

impl DistMoment {
    pub fn new(dist: DistSpec, space: SpaceSpec) -> Result<Self> {
        dist.validate()?;
        space.check_dim(dist.dim())?;
        if dist.truncated_cov(1.0, &space)?.is_none() {
            return Err(Error::NoClosedForm(dist.describe()));
        }
        Ok(DistMoment { dist, space })
    }
}

impl TruncatedMoment for DistMoment {
    fn eval(&self, t: f64) -> f64 {
        h_eval(HSource::Dist(&self.dist), t.max(0.0), &self.space).unwrap_or(f64::NAN)
    }

    fn eval_ln(&self, ln_t: f64) -> f64 {
        self.eval(ln_t.min(700.0).exp())
    }
}

/// Empirical `H` precomputed over a fixed sample set.
///
/// Samples are sorted by norm with cumulative outer-product sums stored at a
/// stride, so each evaluation costs one dual-ball supremum plus at most one
/// stride of accumulation. Beyond the largest sample norm `H` is frozen and
/// [`TruncatedMoment::extrapolated`] reports it.
#[derive(Debug, Clone)]
pub struct EmpiricalMoment {
    space: SpaceSpec,
    sorted: Vec<Vec<f64>>,
    norms: Vec<f64>,
    stride: usize,
    prefix: Vec<DMatrix<f64>>,
}

impl EmpiricalMoment {
    pub fn new(samples: Vec<Vec<f64>>, space: SpaceSpec) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        for x in &samples {
            space.check_dim(x.len())?;
        }
        let mut keyed: Vec<(f64, Vec<f64>)> = samples
            .into_iter()
            .map(|x| (space.norm.apply(&x), x))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (norms, sorted): (Vec<f64>, Vec<Vec<f64>>) = keyed.into_iter().unzip();
        let d = space.dim;
        let stride = ((sorted.len() * d * d) / 2_000_000).max(1);
        let mut prefix = Vec::with_capacity(sorted.len() / stride + 1);
        let mut acc = DMatrix::<f64>::zeros(d, d);
        prefix.push(acc.clone());
        for (k, x) in sorted.iter().enumerate() {
            add_outer(&mut acc, x);
            if (k + 1) % stride == 0 {
                prefix.push(acc.clone());
            }
        }
        Ok(EmpiricalMoment {
            space,
            sorted,
            norms,
            stride,
            prefix,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        *self.norms.last().unwrap()
    }

    /// `Σ_t` built from the stored samples.
    pub fn truncated_cov(&self, t: f64) -> TruncatedCov {
        let count = self.norms.partition_point(|&r| r <= t);
        let block = count / self.stride;
        let mut acc = self.prefix[block].clone();
        for x in &self.sorted[block * self.stride..count] {
            add_outer(&mut acc, x);
        }
        acc /= self.sorted.len() as f64;
        TruncatedCov::new(acc, t, self.sorted.len()).expect("accumulated outer products are symmetric")
    }
}

impl TruncatedMoment for EmpiricalMoment {
    fn eval(&self, t: f64) -> f64 {
        dual_ball_sup(&self.truncated_cov(t), &self.space).unwrap_or(f64::NAN)
    }

    fn extrapolated(&self, ln_t: f64) -> bool {
        ln_t > self.max_norm().ln()
    }
}

/// Adapter turning any closure into a [`TruncatedMoment`].
pub struct FnMoment<F>(pub F);

impl<F: Fn(f64) -> f64 + Send + Sync> TruncatedMoment for FnMoment<F> {
    fn eval(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}
