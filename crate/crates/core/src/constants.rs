//! Limit constants: series classification, `C₀`, `λ`, `α₀`, `σ²`, `β₀`.
//!
//! The series `Σ n⁻¹ exp(−c² r(n))` in question (with `r(n) = h(n)/(2H(a_n))`
//! for `C₀`, `r(n) = c_n²/(2nH(c_n))` for `α₀`) can be thinned to the
//! geometric subsequence `n_j = ⌈ρ^j⌉`, where it behaves like
//! `Σ_j exp(−c² r(n_j))`. That sum converges roughly when `c² r(n_j)`
//! outgrows `log j` with slope above 1, and the classifier reads exactly
//! that slope off the tail of the subsequence.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::banach::{SpaceSpec, TruncatedMoment};
use crate::error::{Error, Result};
use crate::simulate::{mean_norm_curve, DistSpec, MeanNormRow, PathConfig};
use crate::slowvary::{check_normalizing_conditions, geometric_grid, Normalizer, SlowVaryFn};
use crate::stats;

/// An `f64` that serializes `±∞` and NaN as the strings `"+inf"`, `"-inf"`,
/// `"nan"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtF64(pub f64);

impl Serialize for ExtF64 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("+inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl fmt::Display for ExtF64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("+inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

/// What decided a [`SeriesVerdict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictReason {
    Slope,
    /// The exponent outgrows every multiple of `log j`.
    SuperLogGrowth,
    /// The exponent grows slower than any multiple of `log j`.
    SubLogGrowth,
    AllTermsZero,
    HarmonicAtZero,
    TooFewTerms,
}

/// Subsequence probe settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesProbe {
    pub rho: f64,
    pub terms: usize,
    pub margin: f64,
    pub window: f64,
}

impl Default for SeriesProbe {
    fn default() -> Self {
        SeriesProbe {
            rho: 2.0,
            terms: 120,
            margin: 0.1,
            window: 0.25,
        }
    }
}

impl SeriesProbe {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be > 1, got {}", self.rho)));
        }
        if self.terms < 8 {
            return Err(Error::invalid("probe needs at least 8 terms"));
        }
        if !(self.margin >= 0.0 && self.margin < 1.0) {
            return Err(Error::invalid("margin must lie in [0, 1)"));
        }
        if !(self.window > 0.0 && self.window <= 1.0) {
            return Err(Error::invalid("window must lie in (0, 1]"));
        }
        Ok(())
    }

    /// `ln ⌈ρ^j⌉` for `j = 1..=terms`.
    fn ln_n(&self) -> Vec<f64> {
        (1..=self.terms)
            .map(|j| {
                let ln = j as f64 * self.rho.ln();
                if ln < 36.0 {
                    self.rho.powi(j as i32).ceil().ln()
                } else {
                    ln
                }
            })
            .collect()
    }
}

/// Curvature beyond which the exponent is treated as super- or
/// sub-logarithmic in `j`.
pub const CURVATURE_LIMIT: f64 = 0.5;
const SLACK: f64 = 1e-9;

/// `c`-independent shape `r_j` of the exponent along the subsequence.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesProfile {
    pub ln_j: Vec<f64>,
    /// `r(n_j)`; `+∞` where `H = 0` (zero term).
    pub r: Vec<f64>,
    pub extrapolated: bool,
    probe: SeriesProbe,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    AllZero,
    TooFew,
    Super,
    Sub,
    Slope(f64),
}

impl SeriesProfile {
    fn build(
        probe: &SeriesProbe,
        r_of_ln_n: impl Fn(f64) -> (f64, bool),
    ) -> Result<Self> {
        probe.validate()?;
        let mut extrapolated = false;
        let start = stats::tail_start(probe.terms, probe.window);
        let mut r = Vec::with_capacity(probe.terms);
        for (k, ln_n) in probe.ln_n().into_iter().enumerate() {
            let (v, ex) = r_of_ln_n(ln_n);
            if v.is_nan() {
                return Err(Error::invalid(format!("series exponent is NaN at ln n = {ln_n}")));
            }
            extrapolated |= ex && k >= start;
            r.push(v);
        }
        Ok(SeriesProfile {
            ln_j: (1..=probe.terms).map(|j| (j as f64).ln()).collect(),
            r,
            extrapolated,
            probe: *probe,
        })
    }

    /// Profile of `h(n)/(2H(a_n))`, `a_n = Ψ(n)`.
    pub fn for_c0(h: &SlowVaryFn, big_h: &dyn TruncatedMoment, probe: &SeriesProbe) -> Result<Self> {
        Self::build(probe, |ln_n| {
            let ln_h = h.ln_eval_ln(ln_n);
            let ln_a = 0.5 * (ln_n + ln_h);
            let hv = big_h.eval_ln(ln_a);
            (ratio(ln_h, hv), big_h.extrapolated(ln_a))
        })
    }

    /// Profile of `c_n²/(2nH(c_n))`.
    pub fn for_alpha0(c: &Normalizer, big_h: &dyn TruncatedMoment, probe: &SeriesProbe) -> Result<Self> {
        Self::build(probe, |ln_n| {
            let ln_c = c.ln_eval_ln(ln_n);
            let hv = big_h.eval_ln(ln_c);
            (ratio(2.0 * ln_c - ln_n, hv), big_h.extrapolated(ln_c))
        })
    }

    fn window(&self) -> (Vec<f64>, Vec<f64>) {
        let start = stats::tail_start(self.r.len(), self.probe.window);
        self.ln_j[start..]
            .iter()
            .zip(&self.r[start..])
            .filter(|(_, r)| r.is_finite())
            .map(|(&u, &r)| (u, r))
            .unzip()
    }

    /// Slope of `r` against `log j` over the window, and the curvature
    /// `κ = log(s₂/s₁) / log(ū₂/ū₁)` between the window halves (0 for a
    /// linear profile, 1 for `(log j)²`).
    fn shape(&self) -> (Shape, Option<f64>, Option<f64>) {
        let start = stats::tail_start(self.r.len(), self.probe.window);
        if self.r[start..].iter().all(|r| r.is_infinite()) {
            return (Shape::AllZero, None, None);
        }
        let (u, r) = self.window();
        if u.len() < 4 {
            return (Shape::TooFew, None, None);
        }
        let slope = stats::ls_slope(&u, &r).unwrap_or(0.0);
        let mid = u.len() / 2;
        let s1 = stats::ls_slope(&u[..mid], &r[..mid]).unwrap_or(0.0);
        let s2 = stats::ls_slope(&u[mid..], &r[mid..]).unwrap_or(0.0);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let spread = (mean(&u[mid..]) / mean(&u[..mid])).ln();
        let tiny = 1e-12 * r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let kappa = if s1 > tiny && s2 > tiny {
            Some((s2 / s1).ln() / spread)
        } else if s1 <= tiny && s2 > tiny {
            Some(f64::INFINITY)
        } else {
            None
        };
        let shape = match kappa {
            Some(k) if k > CURVATURE_LIMIT => Shape::Super,
            Some(k) if k < -CURVATURE_LIMIT => Shape::Sub,
            _ => Shape::Slope(slope),
        };
        (shape, Some(slope), kappa)
    }

    /// Verdict for the series with constant `c`.
    pub fn classify(&self, c: f64) -> SeriesVerdict {
        let (shape, base, kappa) = self.shape();
        let margin = self.probe.margin;
        let (verdict, reason, slope) = if c == 0.0 {
            (Verdict::Diverges, VerdictReason::HarmonicAtZero, Some(0.0))
        } else {
            match shape {
                Shape::AllZero => (Verdict::Converges, VerdictReason::AllTermsZero, None),
                Shape::TooFew => (Verdict::Inconclusive, VerdictReason::TooFewTerms, None),
                Shape::Super => (Verdict::Converges, VerdictReason::SuperLogGrowth, base.map(|b| c * c * b)),
                Shape::Sub => (Verdict::Diverges, VerdictReason::SubLogGrowth, base.map(|b| c * c * b)),
                Shape::Slope(b) => {
                    let s = c * c * b;
                    let v = if s >= 1.0 + margin - SLACK {
                        Verdict::Converges
                    } else if s <= 1.0 - margin + SLACK {
                        Verdict::Diverges
                    } else {
                        Verdict::Inconclusive
                    };
                    (v, VerdictReason::Slope, Some(s))
                }
            }
        };
        SeriesVerdict {
            c,
            verdict,
            reason,
            slope,
            curvature: kappa,
            extrapolated: self.extrapolated,
            exponents: self.r.iter().map(|r| ExtF64(c * c * r)).collect(),
        }
    }
}

fn ratio(ln_num: f64, big_h: f64) -> f64 {
    if big_h <= 0.0 {
        f64::INFINITY
    } else {
        (ln_num - big_h.ln()).exp() / 2.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesVerdict {
    pub c: f64,
    pub verdict: Verdict,
    pub reason: VerdictReason,
    /// Slope of the exponent `c² r(n_j)` against `log j`.
    pub slope: Option<f64>,
    pub curvature: Option<f64>,
    pub extrapolated: bool,
    /// `c² r(n_j)` along the subsequence.
    pub exponents: Vec<ExtF64>,
}

/// Classifies `Σ n⁻¹ exp(−c² h(n)/(2H(a_n)))`.
pub fn series_classify(
    c: f64,
    h: &SlowVaryFn,
    big_h: &dyn TruncatedMoment,
    probe: &SeriesProbe,
) -> Result<SeriesVerdict> {
    check_c(c)?;
    Ok(SeriesProfile::for_c0(h, big_h, probe)?.classify(c))
}

/// Classifies `Σ n⁻¹ exp(−α² c_n²/(2nH(c_n)))`.
pub fn series_classify_normalized(
    alpha: f64,
    c: &Normalizer,
    big_h: &dyn TruncatedMoment,
    probe: &SeriesProbe,
) -> Result<SeriesVerdict> {
    check_c(alpha)?;
    Ok(SeriesProfile::for_alpha0(c, big_h, probe)?.classify(alpha))
}

fn check_c(c: f64) -> Result<()> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("c must be finite and >= 0, got {c}")));
    }
    Ok(())
}

/// Upper end of the doubling search.
pub const C_CAP: f64 = 1e6;

/// Bracket for a critical constant.
///
/// `[lo, hi]` (width ≤ tol) brackets the point where the exponent slope
/// crosses 1. `band_lo`/`band_hi` are the nearest constants with conclusive
/// verdicts (`DIVERGES` at `band_lo`, `CONVERGES` at `band_hi`); constants in
/// between are `INCONCLUSIVE` under the probe margin.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalInterval {
    pub lo: ExtF64,
    pub hi: ExtF64,
    pub band_lo: ExtF64,
    pub band_hi: ExtF64,
    pub inconclusive_inside: bool,
    pub structural: Option<VerdictReason>,
    pub at_lo: Option<SeriesVerdict>,
    pub at_hi: Option<SeriesVerdict>,
}

impl CriticalInterval {
    fn exact(v: f64, reason: VerdictReason) -> Self {
        CriticalInterval {
            lo: ExtF64(v),
            hi: ExtF64(v),
            band_lo: ExtF64(v),
            band_hi: ExtF64(v),
            inconclusive_inside: false,
            structural: Some(reason),
            at_lo: None,
            at_hi: None,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo.0 <= x && x <= self.hi.0
    }

    pub fn midpoint(&self) -> f64 {
        if self.hi.0.is_infinite() {
            f64::INFINITY
        } else {
            0.5 * (self.lo.0 + self.hi.0)
        }
    }
}

/// Bisection for `inf{c ≥ 0 : series converges}` on a fixed profile.
pub fn critical_constant(profile: &SeriesProfile, tol: f64) -> Result<CriticalInterval> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be > 0, got {tol}")));
    }
    let (shape, _, _) = profile.shape();
    let base = match shape {
        Shape::AllZero => return Ok(CriticalInterval::exact(0.0, VerdictReason::AllTermsZero)),
        Shape::Super => return Ok(CriticalInterval::exact(0.0, VerdictReason::SuperLogGrowth)),
        Shape::Sub => {
            return Ok(CriticalInterval::exact(f64::INFINITY, VerdictReason::SubLogGrowth))
        }
        Shape::TooFew => {
            return Err(Error::invalid("series probe has too few finite terms in its window"))
        }
        Shape::Slope(b) => b,
    };
    let slope_at = |c: f64| c * c * base;
    let margin = profile.probe.margin;
    // smallest c whose slope reaches `target`, by doubling then bisection
    let crossing = |target: f64| -> (f64, f64) {
        let mut hi = 1.0;
        while slope_at(hi) < target {
            hi *= 2.0;
            if hi > C_CAP {
                return (C_CAP, f64::INFINITY);
            }
        }
        let mut lo = hi / 2.0;
        while lo > tol && slope_at(lo) >= target {
            lo /= 2.0;
        }
        if slope_at(lo) >= target {
            lo = 0.0;
        }
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if slope_at(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo, hi)
    };
    let (lo, hi) = crossing(1.0);
    let (band_lo, _) = crossing(1.0 - margin + SLACK);
    let (_, band_hi) = crossing(1.0 + margin - SLACK);
    let at_lo = profile.classify(lo);
    let at_hi = hi.is_finite().then(|| profile.classify(hi));
    let inconclusive_inside = margin > 0.0
        && (at_lo.verdict == Verdict::Inconclusive
            || at_hi.as_ref().is_some_and(|v| v.verdict == Verdict::Inconclusive));
    Ok(CriticalInterval {
        lo: ExtF64(lo),
        hi: ExtF64(hi),
        band_lo: ExtF64(band_lo),
        band_hi: ExtF64(band_hi),
        inconclusive_inside,
        structural: None,
        at_lo: Some(at_lo),
        at_hi,
    })
}

/// `C₀ = inf{c ≥ 0 : Σ n⁻¹ exp(−c² h(n)/(2H(a_n))) < ∞}`.
pub fn c0_compute(
    h: &SlowVaryFn,
    big_h: &dyn TruncatedMoment,
    tol: f64,
    probe: &SeriesProbe,
) -> Result<CriticalInterval> {
    critical_constant(&SeriesProfile::for_c0(h, big_h, probe)?, tol)
}

/// Range on which the regularity conditions of `c_n` are checked.
pub const NORMALIZER_CHECK_N: u64 = 1_000_000;

/// `α₀ = inf{α ≥ 0 : Σ n⁻¹ exp(−α² c_n²/(2nH(c_n))) < ∞}`.
pub fn alpha0_compute(
    c: &Normalizer,
    big_h: &dyn TruncatedMoment,
    tol: f64,
    probe: &SeriesProbe,
) -> Result<CriticalInterval> {
    let report = check_normalizing_conditions(c, NORMALIZER_CHECK_N)?;
    if !report.re_pass || !report.reg_pass() {
        return Err(Error::invalid(format!(
            "normalizer {c} fails its regularity checks (growth {:.4}, monotone {}, pair check {})",
            report.re_growth,
            report.re_monotone,
            report.reg_pass()
        )));
    }
    critical_constant(&SeriesProfile::for_alpha0(c, big_h, probe)?, tol)
}

/// A curve with its tail-window summary.
#[derive(Debug, Clone, Serialize)]
pub struct TailCurve {
    pub ln_x: Vec<f64>,
    pub values: Vec<f64>,
    pub tail_from: usize,
    pub tail_max: f64,
    pub last: f64,
    pub extrapolated: bool,
}

impl TailCurve {
    fn new(ln_x: Vec<f64>, values: Vec<f64>, window: f64, extrapolated: bool) -> Self {
        let tail_from = stats::tail_start(values.len(), window);
        let tail_max = values[tail_from..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        TailCurve {
            last: *values.last().unwrap(),
            ln_x,
            values,
            tail_from,
            tail_max,
            extrapolated,
        }
    }
}

pub const TAIL_WINDOW: f64 = 0.25;

/// Default `ln x` grid: 400 points geometric from ln 10 to 1e30.
pub fn default_ln_x_grid() -> Vec<f64> {
    geometric_grid(std::f64::consts::LN_10, 1e30, 400)
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaEstimate {
    /// `√` of the tail maximum of `g`.
    pub lambda: ExtF64,
    /// `√` of the last grid value of `g`.
    pub lambda_last: f64,
    /// `g(x) = 2Ψ⁻¹(x LLx) H(x) / (x² LLx)`.
    pub curve: TailCurve,
    /// Set when `g` is still climbing steeply at the end of the grid.
    pub unbounded: bool,
}

/// `λ² = limsup 2Ψ⁻¹(x LLx) H(x) / (x² LLx)` estimated on `ln_x_grid`.
pub fn lambda_compute(
    h: &SlowVaryFn,
    big_h: &dyn TruncatedMoment,
    ln_x_grid: &[f64],
) -> Result<LambdaEstimate> {
    check_grid(ln_x_grid)?;
    let mut values = Vec::with_capacity(ln_x_grid.len());
    let mut extrapolated = false;
    let start = stats::tail_start(ln_x_grid.len(), TAIL_WINDOW);
    for (k, &u) in ln_x_grid.iter().enumerate() {
        let hv = big_h.eval_ln(u);
        extrapolated |= k >= start && big_h.extrapolated(u);
        if hv.is_nan() || hv < 0.0 {
            return Err(Error::invalid(format!("H is not a nonnegative number at ln x = {u}")));
        }
        if hv == 0.0 {
            values.push(0.0);
            continue;
        }
        let ln_ll = u.max(1.0).ln().max(1.0).ln();
        // ln Ψ⁻¹(x LLx) = 2 ln x + 2 ln LLx − δ
        let delta = h.psi_inv_offset(u + ln_ll)?;
        values.push((std::f64::consts::LN_2 + ln_ll - delta + hv.ln()).exp());
    }
    let curve = TailCurve::new(ln_x_grid.to_vec(), values, TAIL_WINDOW, extrapolated);
    let tail = &curve.values[curve.tail_from..];
    let climbing = tail.windows(2).all(|w| w[1] > w[0]);
    let unbounded = climbing && tail[0] > 0.0 && curve.last > 2.0 * tail[0];
    Ok(LambdaEstimate {
        lambda: ExtF64(if unbounded { f64::INFINITY } else { curve.tail_max.sqrt() }),
        lambda_last: curve.last.sqrt(),
        curve,
        unbounded,
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("grid must be finite and increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct LilRatioCheck {
    /// `(LLn) H(a_n / LLn) / h(n)` on the `ln n` grid.
    pub curve: TailCurve,
    /// `√(2 · tail max)`, comparable with λ.
    pub lambda_implied: f64,
}

impl LilRatioCheck {
    /// Relative difference between the implied λ and `lambda`; `None` when
    /// either is zero or infinite.
    pub fn relative_gap(&self, lambda: f64) -> Option<f64> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        (ok(lambda) && ok(self.lambda_implied)).then(|| (self.lambda_implied - lambda).abs() / lambda)
    }
}

pub const LIL_RATIO_AGREEMENT: f64 = 0.1;

/// Cross-check curve whose limsup equals `λ²/2`.
pub fn lil_ratio_check(
    h: &SlowVaryFn,
    big_h: &dyn TruncatedMoment,
    ln_n_grid: &[f64],
) -> Result<LilRatioCheck> {
    check_grid(ln_n_grid)?;
    let start = stats::tail_start(ln_n_grid.len(), TAIL_WINDOW);
    let mut extrapolated = false;
    let values: Vec<f64> = ln_n_grid
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let ln_h = h.ln_eval_ln(u);
            let ln_ll = u.max(1.0).ln().max(1.0).ln();
            let ln_arg = 0.5 * (u + ln_h) - ln_ll;
            extrapolated |= k >= start && big_h.extrapolated(ln_arg);
            let hv = big_h.eval_ln(ln_arg);
            if hv <= 0.0 {
                0.0
            } else {
                (ln_ll + hv.ln() - ln_h).exp()
            }
        })
        .collect();
    let curve = TailCurve::new(ln_n_grid.to_vec(), values, TAIL_WINDOW, extrapolated);
    Ok(LilRatioCheck {
        lambda_implied: (2.0 * curve.tail_max).sqrt(),
        curve,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaEstimate {
    pub sigma2: ExtF64,
    /// Last `t` evaluated.
    pub t_stop: f64,
    pub cap_hit: bool,
    pub note: Option<String>,
}

pub const SIGMA_K_MIN: i32 = -30;
pub const SIGMA_K_CAP: i32 = 200;
pub const SIGMA_REL_TOL: f64 = 1e-6;
/// Consecutive small increments required before stopping.
const SIGMA_SETTLE: usize = 3;

/// `σ² = lim_{t→∞} H(t)` along `t = 2^k`.
pub fn sigma_compute(big_h: &dyn TruncatedMoment) -> Result<SigmaEstimate> {
    let mut prev = f64::NAN;
    let mut settled = 0;
    for k in SIGMA_K_MIN..=SIGMA_K_CAP {
        let t = 2f64.powi(k);
        let v = big_h.eval(t);
        if v.is_nan() || v < 0.0 {
            return Err(Error::invalid(format!("H({t}) is not a nonnegative number")));
        }
        if v.is_infinite() {
            return Ok(SigmaEstimate {
                sigma2: ExtF64(f64::INFINITY),
                t_stop: t,
                cap_hit: false,
                note: Some(format!("H({t}) is infinite")),
            });
        }
        if v > 0.0 && prev > 0.0 && (v - prev) / prev < SIGMA_REL_TOL {
            settled += 1;
            // a plateau can be temporary; confirm against the far end
            if settled >= SIGMA_SETTLE
                && big_h.eval(2f64.powi(SIGMA_K_CAP)) <= v * (1.0 + SIGMA_REL_TOL)
            {
                return Ok(SigmaEstimate {
                    sigma2: ExtF64(v),
                    t_stop: t,
                    cap_hit: false,
                    note: None,
                });
            }
        } else {
            settled = 0;
        }
        prev = v;
    }
    let t = 2f64.powi(SIGMA_K_CAP);
    if prev == 0.0 {
        return Ok(SigmaEstimate {
            sigma2: ExtF64(0.0),
            t_stop: t,
            cap_hit: true,
            note: None,
        });
    }
    Ok(SigmaEstimate {
        sigma2: ExtF64(f64::INFINITY),
        t_stop: t,
        cap_hit: true,
        note: Some(format!("H still increasing at t = 2^{SIGMA_K_CAP}")),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Beta0Estimate {
    pub beta0: f64,
    pub ci: [f64; 2],
    /// Checkpoint where the tail maximum is attained.
    pub n_at_max: u64,
    pub curve: Vec<MeanNormRow>,
}

/// `β₀ = limsup E‖S_n‖/c_n`: the largest across-trial mean over the tail
/// window of checkpoints, with that point's 95% CI.
pub fn beta0_estimate(
    dist: &DistSpec,
    space: &SpaceSpec,
    c: &Normalizer,
    config: &PathConfig,
    tail_fraction: f64,
) -> Result<Beta0Estimate> {
    let curve = mean_norm_curve(dist, space, c, config)?;
    let start = stats::tail_start(curve.len(), tail_fraction);
    let best = curve[start..]
        .iter()
        .copied()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .unwrap();
    Ok(Beta0Estimate {
        beta0: best.mean,
        ci: [best.ci_lo, best.ci_hi],
        n_at_max: best.n,
        curve,
    })
}

/// `[(1−q)^{1/2} λ, λ]`.
pub fn theorem3_bounds(q: f64, lambda: f64) -> Result<[f64; 2]> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("q must lie in [0, 1], got {q}")));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let lo = if lambda.is_infinite() && q == 1.0 {
        0.0
    } else {
        (1.0 - q).sqrt() * lambda
    };
    Ok([lo, lambda])
}

/// Whether `[lo, hi]` is consistent with the sandwich
/// `(1−q)^{1/2} λ ≤ C₀ ≤ λ` within `tol`.
pub fn sandwich_holds(c0: &CriticalInterval, q: f64, lambda: f64, tol: f64) -> bool {
    let Ok([lo, hi]) = theorem3_bounds(q, lambda) else {
        return false;
    };
    if !(lambda.is_finite() && c0.hi.0.is_finite()) {
        return true;
    }
    lo <= c0.hi.0 + tol && c0.lo.0 <= hi + tol
}

/// Summary document of a constants run.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub h: String,
    #[serde(rename = "H")]
    pub big_h: String,
    pub c0_lo: ExtF64,
    pub c0_hi: ExtF64,
    pub c0_band: [ExtF64; 2],
    pub lambda: ExtF64,
    pub lambda_last: f64,
    pub alpha0_lo: ExtF64,
    pub alpha0_hi: ExtF64,
    pub alpha0_normalizer: String,
    pub sigma2: ExtF64,
    pub beta0: Option<f64>,
    pub beta0_ci: Option<[f64; 2]>,
    pub q_used: f64,
    pub theorem3: [ExtF64; 2],
    pub sandwich_ok: bool,
    pub lil_ratio_lambda: f64,
    pub lil_ratio_gap: Option<f64>,
    pub extrapolated: bool,
    pub verdict_diagnostics: Vec<SeriesVerdict>,
}

/// Inputs of [`ConstantsReport::compute`].
#[derive(Debug, Clone)]
pub struct ConstantsOptions {
    pub tol: f64,
    pub q: f64,
    pub probe: SeriesProbe,
    /// Normalizer for `α₀`; `a_n = Ψ(n)` when `None`.
    pub normalizer: Option<Normalizer>,
    pub ln_x_grid: Vec<f64>,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        ConstantsOptions {
            tol: 1e-3,
            q: 0.0,
            probe: SeriesProbe::default(),
            normalizer: None,
            ln_x_grid: default_ln_x_grid(),
        }
    }
}

impl ConstantsReport {
    /// Every analytic constant for `(h, H)`; `β₀` is attached separately
    /// with [`ConstantsReport::with_beta0`].
    pub fn compute(
        h: &SlowVaryFn,
        big_h: &dyn TruncatedMoment,
        big_h_label: &str,
        opts: &ConstantsOptions,
    ) -> Result<Self> {
        let c0 = c0_compute(h, big_h, opts.tol, &opts.probe)?;
        let lambda = lambda_compute(h, big_h, &opts.ln_x_grid)?;
        let normalizer = opts
            .normalizer
            .clone()
            .unwrap_or_else(|| Normalizer::psi(h.clone()));
        let alpha0 = alpha0_compute(&normalizer, big_h, opts.tol, &opts.probe)?;
        let sigma = sigma_compute(big_h)?;
        let ratio = lil_ratio_check(h, big_h, &opts.ln_x_grid)?;
        let theorem3 = theorem3_bounds(opts.q, lambda.lambda.0)?;
        let mut diagnostics = Vec::new();
        for iv in [&c0, &alpha0] {
            diagnostics.extend(iv.at_lo.iter().cloned());
            diagnostics.extend(iv.at_hi.iter().cloned());
        }
        let extrapolated = lambda.curve.extrapolated
            || ratio.curve.extrapolated
            || diagnostics.iter().any(|d| d.extrapolated);
        Ok(ConstantsReport {
            h: h.to_string(),
            big_h: big_h_label.to_string(),
            c0_lo: c0.lo,
            c0_hi: c0.hi,
            c0_band: [c0.band_lo, c0.band_hi],
            sandwich_ok: sandwich_holds(&c0, opts.q, lambda.lambda.0, opts.tol.max(0.05)),
            lil_ratio_gap: ratio.relative_gap(lambda.lambda.0),
            lil_ratio_lambda: ratio.lambda_implied,
            lambda: lambda.lambda,
            lambda_last: lambda.lambda_last,
            alpha0_lo: alpha0.lo,
            alpha0_hi: alpha0.hi,
            alpha0_normalizer: normalizer.to_string(),
            sigma2: sigma.sigma2,
            beta0: None,
            beta0_ci: None,
            q_used: opts.q,
            theorem3: [ExtF64(theorem3[0]), ExtF64(theorem3[1])],
            extrapolated,
            verdict_diagnostics: diagnostics,
        })
    }

    pub fn with_beta0(mut self, est: &Beta0Estimate) -> Self {
        self.beta0 = Some(est.beta0);
        self.beta0_ci = Some(est.ci);
        self
    }
}
