//! Acceptance gate. Run with `cargo test -p lil-lab --test acceptance`;
//! prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::time::Instant;

use lil_lab::banach::DistMoment;
use lil_lab::constants::{
    alpha0_compute, c0_compute, default_ln_x_grid, lambda_compute, lil_ratio_check,
    series_classify, theorem3_bounds, SeriesProbe, Verdict,
};
use lil_lab::fuknagaev::{fn_constants, mc_verify, BoundKind, VerifyConfig};
use lil_lab::simulate::{limsup_estimate, mean_norm_curve, run_path, PathConfig};
use lil_lab::slowvary::{
    default_ln_t_grid, default_tau_grid, hq_classify, smallest_member_q, HqVerdict, HQ_TOL,
};
use lil_lab::{
    dual_ball_sup, DistSpec, HModel, NormKind, Normalizer, SlowVaryFn, SpaceSpec, TruncatedCov,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn series_oracle() -> Outcome {
    let start = Instant::now();
    let probe = SeriesProbe::default();
    let one = HModel::Const(1.0);
    let mut seen = Vec::new();
    for a in [0.5, 0.9, 1.1, 2.0] {
        // Σ 1/(n (Ln)^a) is the c = 1 series for h = 2a·LL, H ≡ 1
        let h = SlowVaryFn::scaled_loglog(2.0 * a, 1.0).unwrap();
        let v = series_classify(1.0, &h, &one, &probe).map_err(|e| e.to_string())?;
        let want = if a > 1.0 { Verdict::Converges } else { Verdict::Diverges };
        if v.verdict != want {
            return Err(format!("a = {a}: got {:?}", v.verdict));
        }
        seen.push(format!("a={a}:{:?}", v.verdict));
    }
    let h = SlowVaryFn::scaled_loglog(2.0, 1.0).unwrap();
    let c0 = c0_compute(&h, &one, 1e-3, &probe).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    check(
        c0.lo.0 >= 0.9 && c0.hi.0 <= 1.1 && elapsed < 1.0,
        format!("{}; C0 in [{:.4}, {:.4}]; {elapsed:.3}s", seen.join(" "), c0.lo.0, c0.hi.0),
    )
}

fn classical_lil() -> Outcome {
    let dist: DistSpec = "normal".parse().unwrap();
    let space = SpaceSpec::new(1, NormKind::L2).unwrap();
    let h = SlowVaryFn::scaled_loglog(2.0, 1.0).unwrap();
    let cfg = PathConfig::new(1_000_000, 50, 1).unwrap();
    let paths = run_path(&dist, &space, &Normalizer::psi(h), &cfg).map_err(|e| e.to_string())?;
    let est = limsup_estimate(&paths, 0.5).map_err(|e| e.to_string())?;
    let worst = est.tail_max.iter().copied().fold(0.0, f64::max);
    let big_h = DistMoment::new(dist, space).unwrap();
    let alpha = alpha0_compute(&Normalizer::classical(), &big_h, 1e-3, &SeriesProbe::default())
        .map_err(|e| e.to_string())?;
    check(
        (0.75..=1.15).contains(&est.median)
            && worst < 1.6
            && alpha.lo.0 >= 0.95
            && alpha.hi.0 <= 1.05,
        format!(
            "seed 1: median {:.3}, max tail {:.3} (trials >= 1.6: {}), alpha0 in [{:.4}, {:.4}]",
            est.median,
            worst,
            est.tail_max.iter().filter(|v| **v >= 1.6).count(),
            alpha.lo.0,
            alpha.hi.0
        ),
    )
}

fn bounds_never_violated() -> Outcome {
    let dist: DistSpec = "rademacher:5".parse().unwrap();
    let space = SpaceSpec::new(5, NormKind::LInf).unwrap();
    let cfg = VerifyConfig::new(200, 100_000, 4);
    let rep = mc_verify(&dist, &space, &cfg).map_err(|e| e.to_string())?;
    let t4: Vec<_> = rep.rows.iter().filter(|r| r.kind == BoundKind::Theorem4).collect();
    let t4_bad = t4.iter().filter(|r| r.violation).count();
    let mgf_bad = rep.mgf.iter().filter(|r| r.violation).count();
    check(
        t4.len() == 20 && rep.mgf.len() == 10 && t4_bad == 0 && mgf_bad == 0,
        format!(
            "{} t points, {} mgf points, violations {t4_bad} + {mgf_bad} (all kinds {})",
            t4.len(),
            rep.mgf.len(),
            rep.violations
        ),
    )
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 * hi.abs().max(1.0) {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    f(0.5 * (lo + hi))
}

fn constant_assembly() -> Outcome {
    let mut worst_res = 0.0f64;
    for delta in [0.1, 0.5, 1.0, 2.0] {
        let k = fn_constants(delta, 1.0, 3.0).map_err(|e| e.to_string())?;
        let f = |e: f64| (2.0 + e) * (1.0 + 9.0 * e).powi(2) - (2.0 + delta);
        let r = f(k.epsilon);
        if r > 0.0 || r.abs() > 1e-10 || f(k.epsilon * (1.0 + 1e-6)) <= 0.0 {
            return Err(format!("delta = {delta}: residual {r:e}"));
        }
        worst_res = worst_res.max(r.abs());
    }
    let mut worst_rel = 0.0f64;
    for s in [2.5, 3.0, 4.0] {
        let k = fn_constants(1.0, 1.0, s).map_err(|e| e.to_string())?;
        // maximize log((ln a)^{2s}/a) = 2s ln u − u over u = ln a
        let best = golden_max(|u| 2.0 * s * u.ln() - u, 1e-3, 100.0).exp();
        let rel = (k.k_s - best).abs() / best;
        worst_rel = worst_rel.max(rel);
    }
    check(
        worst_rel <= 1e-9,
        format!("eps residual <= {worst_res:.1e}, K_s rel err <= {worst_rel:.1e}"),
    )
}

fn jacobi_max_eigen(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max)
}

fn quad(m: &DMatrix<f64>, f: &[f64]) -> f64 {
    let n = f.len();
    (0..n).map(|i| (0..n).map(|j| f[i] * m[(i, j)] * f[j]).sum::<f64>()).sum()
}

fn dual_norm(norm: NormKind, f: &[f64]) -> f64 {
    match norm {
        NormKind::L1 => f.iter().fold(0.0, |m, v| m.max(v.abs())),
        NormKind::L2 => f.iter().map(|v| v * v).sum::<f64>().sqrt(),
        NormKind::LInf => f.iter().map(|v| v.abs()).sum(),
    }
}

fn dual_ball_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for d in 1..=8 {
        for _ in 0..10 {
            let b = DMatrix::from_fn(d, d + 2, |_, _| rng.random_range(-1.0..1.0));
            let m = &b * b.transpose() / (d + 2) as f64;
            let cov = TruncatedCov::new(m.clone(), f64::INFINITY, 0).unwrap();
            for norm in [NormKind::L1, NormKind::L2, NormKind::LInf] {
                let space = SpaceSpec::new(d, norm).unwrap();
                let got = dual_ball_sup(&cov, &space).map_err(|e| e.to_string())?;
                let want = match norm {
                    NormKind::L1 => (0..1u32 << d)
                        .map(|mask| {
                            let f: Vec<f64> =
                                (0..d).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                            quad(&m, &f)
                        })
                        .fold(f64::NEG_INFINITY, f64::max),
                    NormKind::L2 => jacobi_max_eigen(&m),
                    NormKind::LInf => (0..d).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max),
                };
                worst = worst.max((got - want).abs());
                for _ in 0..200 {
                    let f: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let r = dual_norm(norm, &f);
                    let f: Vec<f64> = f.iter().map(|v| v / r).collect();
                    if quad(&m, &f) > got + 1e-8 {
                        return Err(format!("d = {d}, l{norm}: direction beats the supremum"));
                    }
                }
                cases += 1;
            }
        }
    }
    check(worst <= 1e-8, format!("{cases} matrices, max abs diff {worst:.1e}"))
}

fn hq_classification() -> Outcome {
    let ln_t = default_ln_t_grid();
    let tau = default_tau_grid();
    let verdict = |text: &str, q: f64| {
        let h: SlowVaryFn = text.parse().unwrap();
        hq_classify(&h, q, &ln_t, &tau, HQ_TOL).map(|r| r.verdict).map_err(|e| e.to_string())
    };
    let mut lines = Vec::new();
    for text in ["(LL)^0.5", "(LL)^1", "(LL)^2", "(L)^0.5", "(L)^1", "(L)^2"] {
        let v = verdict(text, 0.0)?;
        if v != HqVerdict::Member {
            return Err(format!("{text} in H_0: {v:?}"));
        }
        lines.push(text.to_string());
    }
    let at_half = verdict("exp((L)^0.5)", 0.5)?;
    let at_02 = verdict("exp((L)^0.5)", 0.2)?;
    check(
        at_half == HqVerdict::Member && at_02 == HqVerdict::NonMember,
        format!("{} in H_0; exp((L)^0.5): H_0.5 {at_half:?}, H_0.2 {at_02:?}", lines.join(", ")),
    )
}

fn c0_lambda_sandwich() -> Outcome {
    let grid = default_ln_x_grid();
    let q_grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    for p in [1.0, 1.5, 2.0] {
        let h = SlowVaryFn::scaled_loglog(2.0, p).unwrap();
        let big_h = HModel::LogLogPower(p - 1.0);
        let q = smallest_member_q(&h, &q_grid);
        let lambda = lambda_compute(&h, &big_h, &grid).map_err(|e| e.to_string())?.lambda.0;
        let c0 = c0_compute(&h, &big_h, 1e-3, &SeriesProbe::default()).map_err(|e| e.to_string())?;
        let [lower, upper] = theorem3_bounds(q, lambda).map_err(|e| e.to_string())?;
        let lil = lil_ratio_check(&h, &big_h, &grid).map_err(|e| e.to_string())?;
        let half = lambda * lambda / 2.0;
        let gap = (lil.curve.tail_max - half).abs() / half;
        let inside = c0.lo.0 >= lower - 0.05 && c0.hi.0 <= upper + 0.05;
        ok &= inside && gap <= 0.1;
        lines.push(format!(
            "p={p}: C0 [{:.4}, {:.4}] vs [{:.4}, {:.4}], lil gap {:.3}",
            c0.lo.0, c0.hi.0, lower, upper, gap
        ));
    }
    check(ok, lines.join("; "))
}

fn mean_norm_analytics() -> Outcome {
    let dist: DistSpec = "normal".parse().unwrap();
    let space = SpaceSpec::new(1, NormKind::L2).unwrap();
    let cfg = PathConfig::new(10_000, 2_000, 8).unwrap();
    let root = mean_norm_curve(&dist, &space, &Normalizer::power(0.5, 1.0).unwrap(), &cfg)
        .map_err(|e| e.to_string())?;
    let last = root.last().unwrap();
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let width = last.ci_hi - last.ci_lo;
    let near = (last.mean - target).abs() <= 3.0 * width;

    let lil = mean_norm_curve(&dist, &space, &Normalizer::classical(), &cfg)
        .map_err(|e| e.to_string())?;
    // later checkpoints start past the n where LLn leaves its floor
    let tail: Vec<_> = lil.iter().filter(|r| r.n >= 16).collect();
    let steps_down = tail.windows(2).all(|w| w[1].mean <= w[0].mean + 0.5 * (w[0].ci_hi - w[0].ci_lo));
    let falls = tail.last().unwrap().mean < tail.first().unwrap().mean;
    check(
        near && steps_down && falls,
        format!(
            "sqrt(n): {:.4} vs {target:.4} (CI width {width:.4}); classical {:.4} -> {:.4}",
            last.mean,
            tail.first().unwrap().mean,
            tail.last().unwrap().mean
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("series oracle", series_oracle),
        ("classical LIL", classical_lil),
        ("tail bounds never violated", bounds_never_violated),
        ("constant assembly", constant_assembly),
        ("dual-ball oracle", dual_ball_oracle),
        ("H_q classification", hq_classification),
        ("C0-lambda sandwich", c0_lambda_sandwich),
        ("mean-norm analytics", mean_norm_analytics),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name} ({secs:.1}s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name} ({secs:.1}s): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
