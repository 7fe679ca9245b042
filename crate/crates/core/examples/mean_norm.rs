// E‖S_n‖ / c_n under two normalizers.

use lil_lab::simulate::{mean_norm_curve, PathConfig};
use lil_lab::{DistSpec, NormKind, Normalizer, SpaceSpec};

pub fn run_example() -> lil_lab::Result<()> {
    let dist: DistSpec = "normal".parse()?;
    let space = SpaceSpec::new(1, NormKind::L2)?;
    let cfg = PathConfig::new(10_000, 200, 5)?;
    for c in [Normalizer::power(0.5, 1.0)?, Normalizer::classical()] {
        let curve = mean_norm_curve(&dist, &space, &c, &cfg)?;
        let last = curve.last().unwrap();
        println!(
            "{c}: n = {} mean {:.4} [{:.4}, {:.4}]",
            last.n, last.mean, last.ci_lo, last.ci_hi
        );
    }
    println!("sqrt(2/pi) = {:.4}", (2.0 / std::f64::consts::PI).sqrt());
    Ok(())
}

fn main() -> lil_lab::Result<()> {
    run_example()
}
