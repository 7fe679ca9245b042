//! Klein–Rio and Fuk–Nagaev type tail bounds for sums of independent
//! bounded (or `s`-integrable) vectors, with explicit constants, and a
//! Monte Carlo harness that looks for violations.
//!
//! Notation: `M` bounds `‖Y_i‖` almost surely, `Λ_n = sup_{f ∈ B₁*} Σ E f²(Y_j)`
//! is the weak variance, `mean_norm = E‖Σ Y_i‖` and `β_n = 2M·mean_norm + Λ_n`.

use std::f64::consts::E;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banach::{dual_ball_sup, SpaceSpec, TruncatedCov};
use crate::error::{Error, Result};
use crate::rng::{pilot_stream, trial_stream};
use crate::simulate::{DistSpec, Sampler};
use crate::slowvary::geometric_grid;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentData {
    pub n: u64,
    /// Almost-sure bound on each summand's norm (0 allowed).
    pub m: f64,
    pub lambda_n: f64,
    pub mean_norm: f64,
    /// `Σ E‖X_i‖^s`.
    pub moment_s: f64,
}

impl MomentData {
    pub fn new(n: u64, m: f64, lambda_n: f64, mean_norm: f64, moment_s: f64) -> Result<Self> {
        let d = MomentData {
            n,
            m,
            lambda_n,
            mean_norm,
            moment_s,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("M", self.m),
            ("Lambda_n", self.lambda_n),
            ("mean_norm", self.mean_norm),
            ("moment_s", self.moment_s),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.m.is_finite() && self.m > 0.0 {
            let cap = self.n as f64 * self.m * self.m;
            if self.lambda_n > cap * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::invalid(format!(
                    "Lambda_n = {} exceeds n M^2 = {cap}",
                    self.lambda_n
                )));
            }
        }
        Ok(())
    }

    /// `β_n = 2M·mean_norm + Λ_n`.
    pub fn beta_n(&self) -> f64 {
        2.0 * self.m * self.mean_norm + self.lambda_n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub eta: f64,
    pub delta: f64,
    /// Explicit ε for the split bound; derived from `delta` when `None`.
    pub epsilon: Option<f64>,
    pub s: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            eta: 1.0,
            delta: 1.0,
            epsilon: None,
            s: 3.0,
        }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.s > 2.0 && self.s.is_finite()) {
            return Err(Error::invalid(format!("s must be > 2, got {}", self.s)));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::invalid(format!("epsilon must be > 0, got {e}")));
            }
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| epsilon_for(self.delta))
    }
}

fn admissible_s(s: f64, m: f64) -> Result<()> {
    let upper = if m > 0.0 { 2.0 / (3.0 * m) } else { f64::INFINITY };
    if !(s > 0.0 && s < upper) {
        return Err(Error::invalid(format!("s must lie in (0, {upper}), got {s}")));
    }
    Ok(())
}

/// `ln E exp(s‖S_n‖)` bound: `s·mean_norm + β_n s² / (2 − 3Ms)`.
pub fn kr_mgf_log_bound(s: f64, data: &MomentData) -> Result<f64> {
    data.validate()?;
    admissible_s(s, data.m)?;
    Ok(s * data.mean_norm + data.beta_n() * s * s / (2.0 - 3.0 * data.m * s))
}

/// `E exp(s‖S_n‖) ≤ exp(s·mean_norm + β_n s²/(2 − 3Ms))` for `0 < s < 2/(3M)`.
pub fn kr_mgf_bound(s: f64, data: &MomentData) -> Result<f64> {
    Ok(kr_mgf_log_bound(s, data)?.exp())
}

/// `P(max_{k≤n} ‖S_k‖ ≥ mean_norm + x) ≤ exp(−x² / (2Λ_n + (4·mean_norm + 3x)M))`.
pub fn maximal_tail_bound(x: f64, data: &MomentData) -> Result<f64> {
    data.validate()?;
    if !(x > 0.0) {
        return Err(Error::invalid(format!("x must be > 0, got {x}")));
    }
    let denom = 2.0 * data.lambda_n + (4.0 * data.mean_norm + 3.0 * x) * data.m;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((-x * x / denom).exp())
}

/// `D_{ε,η} = (1 + 2/ε)(3 + 4/η)`.
pub fn d_constant(epsilon: f64, eta: f64) -> f64 {
    (1.0 + 2.0 / epsilon) * (3.0 + 4.0 / eta)
}

/// `P(max_{k≤n} ‖S_k‖ ≥ (1+η)·mean_norm + y) ≤
/// exp(−y²/((2+ε)Λ_n)) + exp(−y/(D_{ε,η} M))`.
pub fn split_tail_bound(y: f64, params: &BoundParams, data: &MomentData) -> Result<f64> {
    params.validate()?;
    data.validate()?;
    if !(y > 0.0) {
        return Err(Error::invalid(format!("y must be > 0, got {y}")));
    }
    let eps = params.epsilon();
    let gauss = if data.lambda_n == 0.0 {
        0.0
    } else {
        (-y * y / ((2.0 + eps) * data.lambda_n)).exp()
    };
    let bounded = if data.m == 0.0 {
        0.0
    } else {
        (-y / (d_constant(eps, params.eta) * data.m)).exp()
    };
    Ok(gauss + bounded)
}

/// Largest ε with `(2+ε)(1+9ε)² ≤ 2+δ`, by bisection to 1e-12.
pub fn epsilon_for(delta: f64) -> f64 {
    let f = |e: f64| (2.0 + e) * (1.0 + 9.0 * e).powi(2) - (2.0 + delta);
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The explicit constant chain behind the Fuk–Nagaev bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FnConstants {
    pub delta: f64,
    pub eta: f64,
    pub s: f64,
    pub epsilon: f64,
    pub d: f64,
    /// `(2s/e)^{2s} = max_a (log a)^{2s}/a`.
    pub k_s: f64,
    pub c_prime: f64,
    pub c_dprime: f64,
    pub c: f64,
}

impl FnConstants {
    /// `ρ(β) = min(1, 1/(2ε D_{ε,η} log(1/β)))`, the truncation level (in
    /// units of `y`) used inside the proof.
    pub fn rho(&self, beta: f64) -> f64 {
        (1.0 / (2.0 * self.epsilon * self.d * (1.0 / beta).ln())).min(1.0)
    }

    pub const RHO_FORMULA: &'static str = "rho(beta) = min(1, 1/(2*epsilon*D*ln(1/beta)))";
}

pub fn fn_constants(delta: f64, eta: f64, s: f64) -> Result<FnConstants> {
    BoundParams {
        eta,
        delta,
        epsilon: None,
        s,
    }
    .validate()?;
    let epsilon = epsilon_for(delta);
    let d = d_constant(epsilon, eta);
    let k_s = (2.0 * s / E).powf(2.0 * s);
    let c_prime = k_s * (2.0 * d).powf(2.0 * s);
    let c_dprime = 1.0 + c_prime + epsilon.powf(-s);
    let c = c_dprime * (1.0 + 9.0 * epsilon).powf(s);
    Ok(FnConstants {
        delta,
        eta,
        s,
        epsilon,
        d,
        k_s,
        c_prime,
        c_dprime,
        c,
    })
}

/// `P(max_{k≤n} ‖S_k‖ ≥ (1+η) E‖S_n‖ + t) ≤
/// exp(−t²/((2+δ)Λ_n)) + C Σ E‖X_i‖^s / t^s`, capped at 1.
pub fn theorem4_bound(t: f64, params: &BoundParams, data: &MomentData) -> Result<f64> {
    let k = fn_constants(params.delta, params.eta, params.s)?;
    theorem4_with(t, &k, data)
}

fn theorem4_with(t: f64, k: &FnConstants, data: &MomentData) -> Result<f64> {
    data.validate()?;
    if !(t > 0.0) {
        return Err(Error::invalid(format!("t must be > 0, got {t}")));
    }
    if !data.moment_s.is_finite() {
        return Err(Error::invalid("moment_s must be finite"));
    }
    let gauss = if data.lambda_n == 0.0 {
        0.0
    } else {
        (-t * t / ((2.0 + k.delta) * data.lambda_n)).exp()
    };
    let poly = k.c * data.moment_s / t.powf(k.s);
    Ok((gauss + poly).min(1.0))
}

// ---------------------------------------------------------------------------
// Monte Carlo harness

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Theorem4,
    Kr1,
    Split,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Theorem4 => "theorem4",
            BoundKind::Kr1 => "kr1",
            BoundKind::Split => "split",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub n: u64,
    pub trials: usize,
    pub t_grid: Vec<f64>,
    pub params: BoundParams,
    pub seed: u64,
    /// Number of mgf test points inside `(0, 2/(3M))`.
    pub s_points: usize,
}

/// Number of standard errors an empirical value must clear before it
/// counts as a violation.
pub const VIOLATION_SE: f64 = 3.0;
/// Pilot sample means beyond this many standard errors reject the law.
pub const CENTERING_SE: f64 = 5.0;

/// 20 points geometric in `[0.5√n, 5√n]`.
pub fn default_t_grid(n: u64) -> Vec<f64> {
    let r = (n as f64).sqrt();
    geometric_grid(0.5 * r, 5.0 * r, 20)
}

impl VerifyConfig {
    pub fn new(n: u64, trials: usize, seed: u64) -> Self {
        VerifyConfig {
            n,
            trials,
            t_grid: default_t_grid(n),
            params: BoundParams::default(),
            seed,
            s_points: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.trials == 0 {
            return Err(Error::invalid("n and trials must be positive"));
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("t grid must be nonempty with positive finite points"));
        }
        self.params.validate()
    }
}

/// Plug-in moments from the pilot run.
#[derive(Debug, Clone, Serialize)]
pub struct PilotStats {
    pub trials: usize,
    pub mean_norm: f64,
    pub mean_norm_se: f64,
    pub lambda_n: f64,
    /// `exact` when `Σ` is known in closed form, `pilot` otherwise.
    pub lambda_source: String,
    pub moment_s: f64,
    pub m: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRow {
    pub kind: BoundKind,
    pub t: f64,
    /// Level the running maximum is compared with.
    pub threshold: f64,
    pub p_hat: f64,
    pub se: f64,
    pub bound: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MgfRow {
    pub s: f64,
    pub empirical: f64,
    pub se: f64,
    pub bound: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub dist: DistSpec,
    pub n: u64,
    pub trials: usize,
    pub params: BoundParams,
    pub constants: FnConstants,
    pub pilot: PilotStats,
    pub rows: Vec<VerifyRow>,
    pub mgf: Vec<MgfRow>,
    pub violations: usize,
}

impl VerifyReport {
    pub fn has_violation(&self) -> bool {
        self.violations > 0
    }
}

struct TrialOutcome {
    max_norm: f64,
    final_norm: f64,
}

fn simulate_trial(
    sampler: &Sampler,
    space: &SpaceSpec,
    n: u64,
    rng: &mut impl rand::Rng,
    mut on_sample: impl FnMut(&[f64]),
) -> TrialOutcome {
    let d = sampler.dim();
    let mut x = vec![0.0; d];
    let mut s = vec![0.0; d];
    let mut max_norm: f64 = 0.0;
    for _ in 0..n {
        sampler.sample_into(rng, &mut x);
        on_sample(&x);
        for (si, xi) in s.iter_mut().zip(&x) {
            *si += xi;
        }
        max_norm = max_norm.max(space.norm_kind().apply(&s));
    }
    TrialOutcome {
        max_norm,
        final_norm: space.norm_kind().apply(&s),
    }
}

#[derive(Clone)]
struct PilotAcc {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    outer: DMatrix<f64>,
    moment_s: f64,
    count: u64,
}

impl PilotAcc {
    fn new(d: usize) -> Self {
        PilotAcc {
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
            outer: DMatrix::zeros(d, d),
            moment_s: 0.0,
            count: 0,
        }
    }

    fn merge(mut self, other: PilotAcc) -> Self {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self.outer += other.outer;
        self.moment_s += other.moment_s;
        self.count += other.count;
        self
    }
}

fn run_pilot(
    dist: &DistSpec,
    space: &SpaceSpec,
    sampler: &Sampler,
    cfg: &VerifyConfig,
) -> Result<PilotStats> {
    let d = sampler.dim();
    let s = cfg.params.s;
    let results: Vec<(f64, PilotAcc)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = pilot_stream(cfg.seed, trial as u64);
            let mut acc = PilotAcc::new(d);
            let out = simulate_trial(sampler, space, cfg.n, &mut rng, |x| {
                for i in 0..d {
                    acc.sum[i] += x[i];
                    acc.sum_sq[i] += x[i] * x[i];
                    for j in 0..d {
                        acc.outer[(i, j)] += x[i] * x[j];
                    }
                }
                acc.moment_s += space.norm_kind().apply(x).powf(s);
                acc.count += 1;
            });
            (out.final_norm, acc)
        })
        .collect();
    let finals: Vec<f64> = results.iter().map(|r| r.0).collect();
    let acc = results
        .into_iter()
        .map(|r| r.1)
        .reduce(PilotAcc::merge)
        .unwrap();
    let count = acc.count as f64;
    for i in 0..d {
        let mean = acc.sum[i] / count;
        let var = (acc.sum_sq[i] / count - mean * mean).max(0.0);
        let se = (var / count).sqrt();
        if mean.abs() > CENTERING_SE * se {
            return Err(Error::NonCentered {
                coordinate: i,
                mean,
                se,
            });
        }
    }
    let (mean_norm, mean_norm_se) = stats::mean_se(&finals);
    let n = cfg.n as f64;
    let (lambda_n, lambda_source) = match dist.truncated_cov(f64::INFINITY, space) {
        Ok(Some(cov)) => (n * dual_ball_sup(&cov, space)?, "exact"),
        _ => {
            let cov = TruncatedCov::new(acc.outer / count, f64::INFINITY, acc.count as usize)?;
            (n * dual_ball_sup(&cov, space)?, "pilot")
        }
    };
    Ok(PilotStats {
        trials: cfg.trials,
        mean_norm,
        mean_norm_se,
        lambda_n,
        lambda_source: lambda_source.to_string(),
        moment_s: n * acc.moment_s / count,
        m: dist.norm_bound(space),
    })
}

fn binomial_se(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Estimates the moment inputs from a pilot run, then compares empirical
/// tail frequencies of `max_{k≤n} ‖S_k‖` with each bound on `t_grid`, and the
/// empirical `E exp(s‖S_n‖)` with the mgf bound.
pub fn mc_verify(dist: &DistSpec, space: &SpaceSpec, cfg: &VerifyConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let sampler = Sampler::new(dist, space)?;
    let constants = fn_constants(cfg.params.delta, cfg.params.eta, cfg.params.s)?;
    let pilot = run_pilot(dist, space, &sampler, cfg)?;

    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_stream(cfg.seed, trial as u64);
            simulate_trial(&sampler, space, cfg.n, &mut rng, |_| {})
        })
        .collect();
    let maxima: Vec<f64> = outcomes.iter().map(|o| o.max_norm).collect();
    let trials = cfg.trials;
    let freq = |level: f64| maxima.iter().filter(|&&m| m >= level).count() as f64 / trials as f64;

    let m = pilot.m.unwrap_or(f64::INFINITY);
    let data = MomentData {
        n: cfg.n,
        m,
        lambda_n: pilot.lambda_n,
        mean_norm: pilot.mean_norm,
        moment_s: pilot.moment_s,
    };
    let eta = cfg.params.eta;
    let mut rows = Vec::new();
    let mut push = |kind, t: f64, threshold: f64, bound: f64| {
        let p_hat = freq(threshold);
        let se = binomial_se(p_hat, trials);
        rows.push(VerifyRow {
            kind,
            t,
            threshold,
            p_hat,
            se,
            bound,
            violation: p_hat - VIOLATION_SE * se > bound,
        });
    };
    for &t in &cfg.t_grid {
        let b = theorem4_with(t, &constants, &data)?;
        push(BoundKind::Theorem4, t, (1.0 + eta) * data.mean_norm + t, b);
    }
    if m.is_finite() {
        for &t in &cfg.t_grid {
            push(BoundKind::Kr1, t, data.mean_norm + t, maximal_tail_bound(t, &data)?);
        }
        for &t in &cfg.t_grid {
            let b = split_tail_bound(t, &cfg.params, &data)?;
            push(BoundKind::Split, t, (1.0 + eta) * data.mean_norm + t, b);
        }
    }

    let mut mgf = Vec::new();
    if m.is_finite() {
        let finals: Vec<f64> = outcomes.iter().map(|o| o.final_norm).collect();
        for k in 1..=cfg.s_points {
            let s = if m > 0.0 {
                k as f64 / (cfg.s_points + 1) as f64 * 2.0 / (3.0 * m)
            } else {
                k as f64
            };
            let vals: Vec<f64> = finals.iter().map(|z| (s * z).exp()).collect();
            let (empirical, se) = stats::mean_se(&vals);
            let bound = kr_mgf_bound(s, &data)?;
            mgf.push(MgfRow {
                s,
                empirical,
                se,
                bound,
                violation: empirical - VIOLATION_SE * se > bound,
            });
        }
    }
    let violations =
        rows.iter().filter(|r| r.violation).count() + mgf.iter().filter(|r| r.violation).count();
    Ok(VerifyReport {
        dist: dist.clone(),
        n: cfg.n,
        trials,
        params: cfg.params,
        constants,
        pilot,
        rows,
        mgf,
        violations,
    })
}
