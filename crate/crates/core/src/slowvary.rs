//! Slowly varying normalizers.
//!
//! A [`SlowVaryFn`] is an expression tree over
//! `c`, `(Lt)^r`, `(LLt)^p` and `exp((Lt)^β)` (0 < β < 1), closed under
//! products and positive powers, with `Lt = log(t ∨ e)` and `LLt = L(Lt)`.
//! Every such tree is positive, continuous, nondecreasing and slowly varying
//! by construction.
//!
//! Evaluation is done on `ln t` so that `h(n)`, `Ψ(x) = √(x h(x))` and `Ψ⁻¹`
//! can be taken at arguments like `n = 2^120` or `x = e^{10^{20}}`.
//!
//! Text form (used by the config reader and the CLI):
//!
//! ```text
//! 2*(LL)^1        2 LLt
//! (L)^0.5         (Lt)^{1/2}
//! exp((L)^0.5)    exp((Lt)^{1/2})
//! (2*(LL)^1)^2    (2 LLt)^2
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::banach::SpaceSpec;
use crate::error::{Error, Result};
use crate::simulate::{DistSpec, Sampler};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    LogPow(f64),
    LogLogPow(f64),
    ExpLogPow(f64),
    Product(Vec<Node>),
    Pow(Box<Node>, f64),
}

/// A slowly varying function `h ∈ H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowVaryFn {
    node: Node,
}

#[inline]
fn big_l(ln_t: f64) -> f64 {
    ln_t.max(1.0)
}

#[inline]
fn big_ll(ln_t: f64) -> f64 {
    big_l(ln_t).ln().max(1.0)
}

impl Node {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("slowly varying term: {what}")));
        match *self {
            Node::Const(c) if !(c > 0.0 && c.is_finite()) => bad("constant must be positive"),
            Node::LogPow(r) if !(r > 0.0 && r.is_finite()) => bad("(L)^r needs r > 0"),
            Node::LogLogPow(p) if !(p > 0.0 && p.is_finite()) => bad("(LL)^p needs p > 0"),
            Node::ExpLogPow(b) if !(b > 0.0 && b < 1.0) => bad("exp((L)^b) needs 0 < b < 1"),
            Node::Pow(_, e) if !(e > 0.0 && e.is_finite()) => bad("power must be positive"),
            Node::Product(ref v) if v.is_empty() => bad("empty product"),
            Node::Product(ref v) => v.iter().try_for_each(Node::validate),
            Node::Pow(ref inner, _) => inner.validate(),
            _ => Ok(()),
        }
    }

    fn ln_eval_ln(&self, u: f64) -> f64 {
        match self {
            Node::Const(c) => c.ln(),
            Node::LogPow(r) => r * big_l(u).ln(),
            Node::LogLogPow(p) => p * big_ll(u).ln(),
            Node::ExpLogPow(b) => big_l(u).powf(*b),
            Node::Product(v) => v.iter().map(|n| n.ln_eval_ln(u)).sum(),
            Node::Pow(inner, e) => e * inner.ln_eval_ln(u),
        }
    }

    /// ln h(e^{u+d}) − ln h(e^u) for d ≥ 0, without cancellation when
    /// `u` is huge and `d` comparatively small.
    fn ln_shift(&self, u: f64, d: f64) -> f64 {
        let a = big_l(u);
        let gap = if u >= 1.0 { d } else { big_l(u + d) - 1.0 };
        let rel = gap / a;
        match self {
            Node::Const(_) => 0.0,
            Node::LogPow(r) => r * rel.ln_1p(),
            Node::LogLogPow(p) => {
                let la = a.ln();
                let step = rel.ln_1p();
                if la >= 1.0 {
                    p * (step / la).ln_1p()
                } else {
                    p * (la + step).max(1.0).ln()
                }
            }
            Node::ExpLogPow(b) => a.powf(*b) * (b * rel.ln_1p()).exp_m1(),
            Node::Product(v) => v.iter().map(|n| n.ln_shift(u, d)).sum(),
            Node::Pow(inner, e) => e * inner.ln_shift(u, d),
        }
    }

    fn fmt_into(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c}"),
            Node::LogPow(r) => write!(f, "(L)^{r}"),
            Node::LogLogPow(p) => write!(f, "(LL)^{p}"),
            Node::ExpLogPow(b) => write!(f, "exp((L)^{b})"),
            Node::Product(v) => {
                for (i, n) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    n.fmt_into(f)?;
                }
                Ok(())
            }
            Node::Pow(inner, e) => {
                f.write_str("(")?;
                inner.fmt_into(f)?;
                write!(f, ")^{e}")
            }
        }
    }
}

fn product(nodes: Vec<Node>) -> Node {
    let mut flat = Vec::with_capacity(nodes.len());
    for n in nodes {
        match n {
            Node::Product(inner) => flat.extend(inner),
            other => flat.push(other),
        }
    }
    if flat.len() == 1 {
        flat.pop().unwrap()
    } else {
        Node::Product(flat)
    }
}

impl SlowVaryFn {
    fn from_node(node: Node) -> Result<Self> {
        node.validate()?;
        Ok(SlowVaryFn { node })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::from_node(Node::Const(c))
    }

    /// `(Lt)^r`.
    pub fn log_pow(r: f64) -> Result<Self> {
        Self::from_node(Node::LogPow(r))
    }

    /// `(LLt)^p`.
    pub fn loglog_pow(p: f64) -> Result<Self> {
        Self::from_node(Node::LogLogPow(p))
    }

    /// `exp((Lt)^β)`.
    pub fn exp_log_pow(beta: f64) -> Result<Self> {
        Self::from_node(Node::ExpLogPow(beta))
    }

    /// `c · (LLt)^p`, the family behind `√(2n(LLn)^p)` normalizers.
    pub fn scaled_loglog(c: f64, p: f64) -> Result<Self> {
        Self::from_node(product(vec![Node::Const(c), Node::LogLogPow(p)]))
    }

    pub fn mul(&self, other: &SlowVaryFn) -> SlowVaryFn {
        SlowVaryFn {
            node: product(vec![self.node.clone(), other.node.clone()]),
        }
    }

    pub fn pow(&self, e: f64) -> Result<SlowVaryFn> {
        Self::from_node(Node::Pow(Box::new(self.node.clone()), e))
    }

    /// `ln h(e^u)`; `u = −∞` gives `ln h(0)`.
    pub fn ln_eval_ln(&self, ln_t: f64) -> f64 {
        self.node.ln_eval_ln(ln_t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.ln_eval_ln(t.ln()).exp()
    }

    /// `ln h(t f)` − `ln h(t)` where `ln f = d ≥ 0`.
    pub fn ln_shift_ratio(&self, ln_t: f64, d: f64) -> f64 {
        self.node.ln_shift(ln_t, d)
    }

    /// `Ψ(x) = √(x h(x))`.
    pub fn psi(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        (0.5 * (x.ln() + self.ln_eval_ln(x.ln()))).exp()
    }

    /// Solves `ln x = 2 ln y − ln h(x)` for the offset `δ = ln h(x)`.
    ///
    /// The map `δ ↦ δ − ln h(exp(2 ln y − δ))` is increasing, and the root
    /// lies between `ln h(0)` and `ln h(y² / h(0))`; bisection runs to an
    /// absolute width of 1e-12 (or until the bracket stops shrinking).
    pub fn psi_inv_offset(&self, ln_y: f64) -> Result<f64> {
        if ln_y.is_nan() {
            return Err(Error::BracketFailure("Ψ⁻¹ of NaN".into()));
        }
        let mut lo = self.ln_eval_ln(f64::NEG_INFINITY);
        let mut hi = self.ln_eval_ln(2.0 * ln_y - lo);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::BracketFailure(format!(
                "non-finite bracket [{lo}, {hi}] at ln y = {ln_y}"
            )));
        }
        for _ in 0..400 {
            if hi - lo <= 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mid - self.ln_eval_ln(2.0 * ln_y - mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `ln Ψ⁻¹(e^{ln_y})`.
    pub fn ln_psi_inv_ln(&self, ln_y: f64) -> Result<f64> {
        Ok(2.0 * ln_y - self.psi_inv_offset(ln_y)?)
    }

    /// `Ψ⁻¹(y)` for `y ≥ 0`.
    pub fn psi_inv(&self, y: f64) -> Result<f64> {
        if y.is_nan() || y < 0.0 {
            return Err(Error::invalid(format!("Ψ⁻¹ needs y >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        Ok(self.ln_psi_inv_ln(y.ln())?.exp())
    }

    /// Sanity guard: `h(2t)/h(t)` on `t = 10^k`, `k = 1..=12`.
    ///
    /// Slow variation is guaranteed by construction; this only flags trees
    /// whose convergence is too slow to be visible at desk scale.
    pub fn slow_variation_check(&self) -> SlowVariationCheck {
        let ratios: Vec<(i32, f64)> = (1..=12)
            .map(|k| {
                let u = k as f64 * std::f64::consts::LN_10;
                (k, self.ln_shift_ratio(u, std::f64::consts::LN_2).exp())
            })
            .collect();
        let last = ratios.last().unwrap().1;
        SlowVariationCheck {
            ratios,
            within_tolerance: (last - 1.0).abs() <= SLOW_VARIATION_TOL,
        }
    }
}

pub const SLOW_VARIATION_TOL: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct SlowVariationCheck {
    pub ratios: Vec<(i32, f64)>,
    pub within_tolerance: bool,
}

impl fmt::Display for SlowVaryFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.node.fmt_into(f)
    }
}

impl FromStr for SlowVaryFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut p = Parser {
            src: s,
            chars: &tokens,
            pos: 0,
        };
        let parsed = p.expr()?;
        if p.pos != tokens.len() {
            return Err(Error::parse(s, format!("unexpected input at {}", p.pos)));
        }
        let node = p.finish(parsed)?;
        node.validate().map_err(|e| Error::parse(s, e.to_string()))?;
        Ok(SlowVaryFn { node })
    }
}

impl Serialize for SlowVaryFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SlowVaryFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

enum Parsed {
    Node(Node),
    BareL,
    BareLL,
    Group(Node),
    Number(f64),
}

struct Parser<'a> {
    src: &'a str,
    chars: &'a [char],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::parse(self.src, format!("{msg} at position {}", self.pos))
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        let w: Vec<char> = w.chars().collect();
        if self.chars[self.pos..].starts_with(&w) {
            self.pos += w.len();
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            let exp_sign = (c == '-' || c == '+')
                && self.pos > start
                && matches!(self.chars[self.pos - 1], 'e' | 'E');
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map_err(|_| self.err(&format!("bad number {text:?}")))
    }

    fn finish(&self, p: Parsed) -> Result<Node> {
        Ok(match p {
            Parsed::Node(n) | Parsed::Group(n) => n,
            Parsed::BareL => Node::LogPow(1.0),
            Parsed::BareLL => Node::LogLogPow(1.0),
            Parsed::Number(c) => Node::Const(c),
        })
    }

    fn expr(&mut self) -> Result<Parsed> {
        let first = self.term()?;
        if self.peek() != Some('*') {
            return Ok(first);
        }
        let mut nodes = vec![self.finish(first)?];
        while self.eat('*') {
            let t = self.term()?;
            nodes.push(self.finish(t)?);
        }
        Ok(Parsed::Node(product(nodes)))
    }

    fn term(&mut self) -> Result<Parsed> {
        let base = self.primary()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let e = self.number()?;
        Ok(Parsed::Node(match base {
            Parsed::BareL => Node::LogPow(e),
            Parsed::BareLL => Node::LogLogPow(e),
            Parsed::Number(c) => Node::Const(c.powf(e)),
            Parsed::Group(n) | Parsed::Node(n) => Node::Pow(Box::new(n), e),
        }))
    }

    fn primary(&mut self) -> Result<Parsed> {
        match self.peek() {
            Some('L') => {
                if self.eat_word("LL") {
                    Ok(Parsed::BareLL)
                } else {
                    self.pos += 1;
                    Ok(Parsed::BareL)
                }
            }
            Some('e') if self.eat_word("exp(") => {
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected ')' after exp argument"));
                }
                match self.finish(inner)? {
                    Node::LogPow(b) => Ok(Parsed::Node(Node::ExpLogPow(b))),
                    _ => Err(self.err("exp(...) only accepts (L)^b")),
                }
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(match inner {
                    bare @ (Parsed::BareL | Parsed::BareLL) => bare,
                    Parsed::Number(c) => Parsed::Group(Node::Const(c)),
                    Parsed::Node(n) | Parsed::Group(n) => Parsed::Group(n),
                })
            }
            Some(c) if c.is_ascii_digit() || c == '.' => Ok(Parsed::Number(self.number()?)),
            _ => Err(self.err("expected a term")),
        }
    }
}

// ---------------------------------------------------------------------------
// H_q membership diagnostics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HqVerdict {
    Member,
    NonMember,
    Inconclusive,
}

pub const HQ_TOL: f64 = 0.02;
pub const HQ_WINDOW: f64 = 0.25;

/// Default `ln t` grid: 120 points geometric from 10 to 1e30.
pub fn default_ln_t_grid() -> Vec<f64> {
    geometric_grid(10.0, 1e30, 120)
}

pub fn default_tau_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// `count` points geometric between `lo` and `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TauCurve {
    pub tau: f64,
    pub ln_t: Vec<f64>,
    pub ratio: Vec<f64>,
    pub verdict: HqVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct HqReport {
    pub h: String,
    pub q: f64,
    pub tol: f64,
    pub curves: Vec<TauCurve>,
    pub verdict: HqVerdict,
}

/// Numerical `H_q` diagnostic: for each `τ < 1 − q` in `tau_grid`, the
/// curve `h(t f_τ(t)) / h(t)` with `f_τ(t) = exp((Lt)^τ)` on `ln_t_grid`.
///
/// A curve is `MEMBER` when every ratio in the last quarter of the grid is
/// within `1 ± tol`, `NON_MEMBER` when those ratios move monotonically away
/// from 1 and end outside the band, `INCONCLUSIVE` otherwise. The overall
/// verdict is `MEMBER` only if every curve is.
pub fn hq_classify(
    h: &SlowVaryFn,
    q: f64,
    ln_t_grid: &[f64],
    tau_grid: &[f64],
    tol: f64,
) -> Result<HqReport> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("q must lie in [0, 1], got {q}")));
    }
    if ln_t_grid.is_empty() || tau_grid.is_empty() {
        return Err(Error::invalid("grids must be nonempty"));
    }
    if ln_t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("t grid must be increasing"));
    }
    let start = stats::tail_start(ln_t_grid.len(), HQ_WINDOW);
    let mut curves = Vec::new();
    for &tau in tau_grid.iter().filter(|&&tau| tau > 0.0 && tau < 1.0 - q) {
        let ln_ratio: Vec<f64> = ln_t_grid
            .iter()
            .map(|&u| h.ln_shift_ratio(u, big_l(u).powf(tau)))
            .collect();
        let window = &ln_ratio[start..];
        let inside = window.iter().all(|r| (r.exp() - 1.0).abs() <= tol);
        let drifting = window.windows(2).all(|w| w[1].abs() >= w[0].abs())
            && (window.last().unwrap().exp() - 1.0).abs() > tol;
        let verdict = if inside {
            HqVerdict::Member
        } else if drifting {
            HqVerdict::NonMember
        } else {
            HqVerdict::Inconclusive
        };
        curves.push(TauCurve {
            tau,
            ln_t: ln_t_grid.to_vec(),
            ratio: ln_ratio.iter().map(|r| r.exp()).collect(),
            verdict,
        });
    }
    let verdict = if curves.iter().all(|c| c.verdict == HqVerdict::Member) {
        HqVerdict::Member
    } else if curves.iter().any(|c| c.verdict == HqVerdict::NonMember) {
        HqVerdict::NonMember
    } else {
        HqVerdict::Inconclusive
    };
    Ok(HqReport {
        h: h.to_string(),
        q,
        tol,
        curves,
        verdict,
    })
}

/// Smallest `q` from `q_grid` for which [`hq_classify`] reports `MEMBER`
/// (1.0 when none does, since `H_1 = H`).
pub fn smallest_member_q(h: &SlowVaryFn, q_grid: &[f64]) -> f64 {
    let grid = default_ln_t_grid();
    let taus = default_tau_grid();
    q_grid
        .iter()
        .copied()
        .find(|&q| {
            hq_classify(h, q, &grid, &taus, HQ_TOL)
                .map(|r| r.verdict == HqVerdict::Member)
                .unwrap_or(false)
        })
        .unwrap_or(1.0)
}

// ---------------------------------------------------------------------------
// Normalizing sequences

/// A normalizing sequence `c_n`.
///
/// Text forms: `psi:<h>` for `c_n = Ψ(n) = √(n h(n))`, `pow:<e>` for `n^e`
/// and `pow:<e>:<k>` for `k n^e`.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalizer {
    Psi(SlowVaryFn),
    Power { exponent: f64, coef: f64 },
}

impl Normalizer {
    /// `a_n = Ψ(n)` for the given `h`.
    pub fn psi(h: SlowVaryFn) -> Self {
        Normalizer::Psi(h)
    }

    /// `√(2 n LLn)`.
    pub fn classical() -> Self {
        Normalizer::Psi(SlowVaryFn::scaled_loglog(2.0, 1.0).unwrap())
    }

    pub fn power(exponent: f64, coef: f64) -> Result<Self> {
        if !(exponent > 0.0 && coef > 0.0 && exponent.is_finite() && coef.is_finite()) {
            return Err(Error::invalid("pow normalizer needs positive exponent and coefficient"));
        }
        Ok(Normalizer::Power { exponent, coef })
    }

    pub fn ln_eval_ln(&self, ln_n: f64) -> f64 {
        match self {
            Normalizer::Psi(h) => 0.5 * (ln_n + h.ln_eval_ln(ln_n)),
            Normalizer::Power { exponent, coef } => coef.ln() + exponent * ln_n,
        }
    }

    pub fn eval(&self, n: f64) -> f64 {
        self.ln_eval_ln(n.ln()).exp()
    }
}

impl fmt::Display for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalizer::Psi(h) => write!(f, "psi:{h}"),
            Normalizer::Power { exponent, coef } if *coef == 1.0 => write!(f, "pow:{exponent}"),
            Normalizer::Power { exponent, coef } => write!(f, "pow:{exponent}:{coef}"),
        }
    }
}

impl FromStr for Normalizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(h) = s.strip_prefix("psi:") {
            return Ok(Normalizer::Psi(h.parse()?));
        }
        if let Some(rest) = s.strip_prefix("pow:") {
            let mut parts = rest.split(':');
            let num = |p: Option<&str>| -> Result<f64> {
                p.unwrap_or("1")
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(s, "bad number"))
            };
            let exponent = num(parts.next())?;
            let coef = num(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::parse(s, "too many fields"));
            }
            return Normalizer::power(exponent, coef).map_err(|e| Error::parse(s, e.to_string()));
        }
        Err(Error::parse(s, "expected psi:<h> or pow:<e>[:<k>]"))
    }
}

impl Serialize for Normalizer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Normalizer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegCheck {
    pub epsilon: f64,
    pub pass: bool,
    /// Smallest grid `m` above every violating pair.
    pub m_epsilon: u64,
    pub witnesses: Vec<(u64, u64)>,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizingReport {
    pub normalizer: String,
    pub n_max: u64,
    pub re_monotone: bool,
    pub re_first_violation: Option<u64>,
    /// `(c_N/√N) / (c_m/√m)` with `m = ⌈√N⌉`.
    pub re_growth: f64,
    pub re_pass: bool,
    pub reg: Vec<RegCheck>,
}

impl NormalizingReport {
    pub fn reg_pass(&self) -> bool {
        self.reg.iter().all(|r| r.pass)
    }
}

const DENSE_LIMIT: u64 = 2_000_000;
const MAX_WITNESSES: usize = 20;

/// Finite-range checks of `c_n/√n ↗ ∞` and of
/// `c_n/c_m ≤ (1+ε)(n/m)` for `m_ε ≤ m < n`, ε ∈ {0.1, 0.01}.
///
/// Monotonicity is checked at every `n` up to 2·10⁶ and on a fine geometric
/// grid beyond. The pair condition is checked on all pairs of a 200-point
/// geometric grid; it passes when the violations stop below `√n_max`.
pub fn check_normalizing_conditions(c: &Normalizer, n_max: u64) -> Result<NormalizingReport> {
    if n_max < 4 {
        return Err(Error::invalid("n_max must be at least 4"));
    }
    let ln_ratio = |n: u64| c.ln_eval_ln((n as f64).ln()) - 0.5 * (n as f64).ln();

    let mut points: Vec<u64> = (1..=n_max.min(DENSE_LIMIT)).collect();
    let mut n = DENSE_LIMIT as f64;
    while (n as u64) < n_max {
        n *= 1.0 + 1e-4;
        points.push((n as u64).min(n_max));
    }
    points.dedup();
    let mut first_violation = None;
    let mut prev = ln_ratio(points[0]);
    for &n in &points[1..] {
        let cur = ln_ratio(n);
        if cur < prev - 1e-12 && first_violation.is_none() {
            first_violation = Some(n);
        }
        prev = cur;
    }
    let m = (n_max as f64).sqrt().ceil() as u64;
    let growth = (ln_ratio(n_max) - ln_ratio(m)).exp();

    let mut grid: Vec<u64> = geometric_grid(1.0, n_max as f64, 200)
        .into_iter()
        .map(|x| x.round() as u64)
        .collect();
    grid.dedup();
    let ln_c: Vec<f64> = grid.iter().map(|&n| c.ln_eval_ln((n as f64).ln())).collect();
    let reg = [0.1, 0.01]
        .iter()
        .map(|&eps| {
            let mut witnesses = Vec::new();
            let mut violations = 0;
            let mut worst_m_idx: Option<usize> = None;
            for i in 0..grid.len() {
                for j in i + 1..grid.len() {
                    let lhs = ln_c[j] - ln_c[i];
                    let rhs = (1.0f64 + eps).ln() + (grid[j] as f64 / grid[i] as f64).ln();
                    if lhs > rhs + 1e-12 {
                        violations += 1;
                        worst_m_idx = Some(worst_m_idx.map_or(i, |w: usize| w.max(i)));
                        if witnesses.len() < MAX_WITNESSES {
                            witnesses.push((grid[i], grid[j]));
                        }
                    }
                }
            }
            let m_epsilon = match worst_m_idx {
                None => 1,
                Some(i) => grid.get(i + 1).copied().unwrap_or(n_max + 1),
            };
            RegCheck {
                epsilon: eps,
                pass: (m_epsilon as f64) <= (n_max as f64).sqrt(),
                m_epsilon,
                witnesses,
                violations,
            }
        })
        .collect();

    let re_monotone = first_violation.is_none();
    Ok(NormalizingReport {
        normalizer: c.to_string(),
        n_max,
        re_monotone,
        re_first_violation: first_violation,
        re_growth: growth,
        re_pass: re_monotone && growth > 1.0 + 1e-9,
        reg,
    })
}

// ---------------------------------------------------------------------------
// E Ψ⁻¹(‖X‖)

#[derive(Debug, Clone, Serialize)]
pub struct PsiInvMoment {
    pub mean: f64,
    pub se: f64,
    /// Estimate from the first half of the samples.
    pub half_mean: f64,
    pub samples: usize,
    pub heavy: bool,
}

/// Relative change between the half-sample and full-sample estimate above
/// which the estimate is flagged as heavy-tailed.
pub const HEAVY_CHANGE: f64 = 0.2;

/// Monte Carlo estimate of `E Ψ⁻¹(‖X‖)`.
pub fn psi_inv_moment<R: Rng + ?Sized>(
    dist: &DistSpec,
    h: &SlowVaryFn,
    space: &SpaceSpec,
    n_samples: usize,
    rng: &mut R,
) -> Result<PsiInvMoment> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let sampler = Sampler::new(dist, space)?;
    let mut x = vec![0.0; space.dim()];
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        sampler.sample_into(rng, &mut x);
        values.push(h.psi_inv(space.norm_kind().apply(&x))?);
    }
    let (mean, se) = stats::mean_se(&values);
    let half = n_samples.div_ceil(2);
    let (half_mean, _) = stats::mean_se(&values[..half]);
    let heavy = mean > 0.0 && ((mean - half_mean) / mean).abs() > HEAVY_CHANGE;
    Ok(PsiInvMoment {
        mean,
        se,
        half_mean,
        samples: n_samples,
        heavy,
    })
}
