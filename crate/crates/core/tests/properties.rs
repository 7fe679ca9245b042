use lil_lab::banach::{h_eval, HSource};
use lil_lab::constants::{SeriesProfile, SeriesProbe, Verdict};
use lil_lab::fuknagaev::{maximal_tail_bound, split_tail_bound, theorem4_bound, BoundParams, MomentData};
use lil_lab::simulate::{run_path, truncated_path, PathConfig};
use lil_lab::slowvary::{default_ln_t_grid, default_tau_grid, hq_classify, HqVerdict, HQ_TOL};
use lil_lab::{DistSpec, HModel, NormKind, Normalizer, SlowVaryFn, SpaceSpec};
use proptest::prelude::*;

fn norm_kind() -> impl Strategy<Value = NormKind> {
    prop_oneof![Just(NormKind::L1), Just(NormKind::L2), Just(NormKind::LInf)]
}

fn leaf() -> impl Strategy<Value = SlowVaryFn> {
    prop_oneof![
        (0.1f64..10.0).prop_map(|c| SlowVaryFn::constant(c).unwrap()),
        (0.1f64..3.0).prop_map(|r| SlowVaryFn::log_pow(r).unwrap()),
        (0.1f64..3.0).prop_map(|p| SlowVaryFn::loglog_pow(p).unwrap()),
        (0.05f64..0.95).prop_map(|b| SlowVaryFn::exp_log_pow(b).unwrap()),
    ]
}

fn slowvary() -> impl Strategy<Value = SlowVaryFn> {
    leaf().prop_recursive(3, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(&b)),
            (inner, 0.25f64..2.0).prop_map(|(a, e)| a.pow(e).unwrap()),
        ]
    })
}

fn samples(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_form_round_trips(h in slowvary()) {
        let text = h.to_string();
        let back: SlowVaryFn = text.parse().unwrap();
        prop_assert_eq!(back.to_string(), text);
        for ln_t in [1.0, 10.0, 1e3, 1e8] {
            let (a, b) = (h.ln_eval_ln(ln_t), back.ln_eval_ln(ln_t));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn psi_round_trip(h in slowvary(), e in 1.0f64..250.0) {
        let ln_x = e * std::f64::consts::LN_10;
        let ln_y = 0.5 * (ln_x + h.ln_eval_ln(ln_x));
        let back = h.ln_psi_inv_ln(ln_y).unwrap();
        // 1e-9 relative in x
        prop_assert!((back - ln_x).abs() <= 1e-9, "ln x {} vs {}", ln_x, back);
    }

    #[test]
    fn h_bounded_and_monotone(d in 1usize..5, norm in norm_kind(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let space = SpaceSpec::new(d, norm).unwrap();
        let mut prev = 0.0;
        for k in 0..20 {
            let t = 0.2 * k as f64;
            let v = h_eval(HSource::Samples(&xs), t, &space).unwrap();
            prop_assert!(v >= 0.0 && v <= t * t + 1e-12);
            prop_assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn h_scales_quadratically(xs in samples(3), norm in norm_kind(), k in -3i32..4, t in 0.0f64..5.0) {
        let space = SpaceSpec::new(3, norm).unwrap();
        let c = 2f64.powi(k);
        let scaled: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|v| c * v).collect()).collect();
        let a = h_eval(HSource::Samples(&scaled), c * t, &space).unwrap();
        let b = h_eval(HSource::Samples(&xs), t, &space).unwrap();
        prop_assert!((a - c * c * b).abs() <= 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn verdict_monotone_in_c(scale in 0.2f64..5.0, p in 0.5f64..2.0) {
        let h = SlowVaryFn::scaled_loglog(2.0 * scale, p).unwrap();
        let big_h = HModel::LogLogPower(p - 1.0);
        let profile = SeriesProfile::for_c0(&h, &big_h, &SeriesProbe::default()).unwrap();
        let rank = |v: Verdict| match v {
            Verdict::Diverges => 0,
            Verdict::Inconclusive => 1,
            Verdict::Converges => 2,
        };
        let mut last = 0;
        for k in 0..40 {
            let c = 0.05 * k as f64;
            let r = rank(profile.classify(c).verdict);
            prop_assert!(r >= last, "c = {}", c);
            last = r;
        }
    }

    #[test]
    fn bounds_nonincreasing(lambda in 0.1f64..50.0, m in 0.01f64..2.0, mean in 0.0f64..10.0, mom in 0.0f64..100.0) {
        let data = MomentData::new(100, m, lambda.min(100.0 * m * m), mean, mom).unwrap();
        let params = BoundParams::default();
        let mut prev = [f64::INFINITY; 3];
        for k in 1..60 {
            let x = 0.5 * k as f64;
            let now = [
                maximal_tail_bound(x, &data).unwrap(),
                split_tail_bound(x, &params, &data).unwrap(),
                theorem4_bound(x, &params, &data).unwrap(),
            ];
            for i in 0..3 {
                prop_assert!(now[i] <= prev[i] * (1.0 + 1e-12), "bound {} at {}", i, x);
            }
            prev = now;
        }
    }
}

#[test]
fn psi_inverse_has_index_two() {
    for text in ["2*(LL)^1", "(L)^1", "(LL)^2", "exp((L)^0.5)"] {
        let h: SlowVaryFn = text.parse().unwrap();
        let y = 1e10;
        let ratio = h.psi_inv(2.0 * y).unwrap() / h.psi_inv(y).unwrap();
        assert!((4.0 / 1.15..=4.0 * 1.15).contains(&ratio), "{text}: {ratio}");
    }
}

#[test]
fn hq_membership_monotone_in_q() {
    let qs = [0.0, 0.2, 0.4, 0.5, 0.6, 0.8];
    for text in ["(LL)^1", "(L)^2", "exp((L)^0.5)", "exp((L)^0.3)", "exp((L)^0.8)"] {
        let h: SlowVaryFn = text.parse().unwrap();
        let mut member = false;
        for q in qs {
            let v = hq_classify(&h, q, &default_ln_t_grid(), &default_tau_grid(), HQ_TOL)
                .unwrap()
                .verdict;
            if member {
                assert_eq!(v, HqVerdict::Member, "{text} at q = {q}");
            }
            member |= v == HqVerdict::Member;
        }
    }
}

#[test]
fn paths_are_deterministic() {
    let dist: DistSpec = "pareto:3:2".parse().unwrap();
    let space = SpaceSpec::new(2, NormKind::L1).unwrap();
    let cfg = PathConfig::new(5_000, 4, 42).unwrap();
    let a = run_path(&dist, &space, &Normalizer::classical(), &cfg).unwrap();
    let b = run_path(&dist, &space, &Normalizer::classical(), &cfg).unwrap();
    assert_eq!(a.ratios, b.ratios);
}

#[test]
fn unit_steps_give_sqrt_n() {
    let dist = DistSpec::PointMass { point: vec![1.0] };
    let space = SpaceSpec::new(1, NormKind::L2).unwrap();
    let cfg = PathConfig::new(10_000, 1, 0).unwrap();
    let c = Normalizer::psi(SlowVaryFn::constant(1.0).unwrap());
    let paths = run_path(&dist, &space, &c, &cfg).unwrap();
    for (n, r) in paths.checkpoints.iter().zip(&paths.ratios[0]) {
        assert!((r - (*n as f64).sqrt()).abs() <= 1e-9 * r, "n = {n}");
    }
}

#[test]
fn ratios_scale_with_the_distribution() {
    let space = SpaceSpec::new(3, NormKind::LInf).unwrap();
    let cfg = PathConfig::new(2_000, 3, 9).unwrap();
    let c = Normalizer::classical();
    let base = run_path(&DistSpec::RademacherProduct { scales: vec![1.0, 0.5, 2.0] }, &space, &c, &cfg).unwrap();
    for k in [2.0, 3.0, 0.25] {
        let scaled = DistSpec::RademacherProduct { scales: vec![k, 0.5 * k, 2.0 * k] };
        let other = run_path(&scaled, &space, &c, &cfg).unwrap();
        for (a, b) in base.ratios.iter().flatten().zip(other.ratios.iter().flatten()) {
            assert!((b - k * a).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }
}

#[test]
fn truncation_gap_settles() {
    let dist: DistSpec = "pareto:2.5:1".parse().unwrap();
    let space = SpaceSpec::new(1, NormKind::L2).unwrap();
    let cfg = PathConfig::new(20_000, 10, 3).unwrap();
    let t = truncated_path(&dist, &space, &Normalizer::classical(), &cfg).unwrap();
    for (row, last) in t.gaps.iter().zip(&t.last_truncation) {
        let from = last.unwrap_or(0);
        let after: Vec<f64> = t
            .checkpoints
            .iter()
            .zip(row)
            .filter(|(n, _)| **n >= from)
            .map(|(_, g)| *g)
            .collect();
        assert!(after.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}
