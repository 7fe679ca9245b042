// Normalized partial sums of Gaussian steps against √(2n LLn).

use lil_lab::simulate::{limsup_estimate, run_path, PathConfig};
use lil_lab::{DistSpec, NormKind, Normalizer, SpaceSpec};

pub fn run_example() -> lil_lab::Result<()> {
    let dist: DistSpec = "normal".parse()?;
    let space = SpaceSpec::new(1, NormKind::L2)?;
    let cfg = PathConfig::new(50_000, 20, 3)?;
    let paths = run_path(&dist, &space, &Normalizer::classical(), &cfg)?;
    let est = limsup_estimate(&paths, 0.5)?;
    println!(
        "tail max over n >= {}: median {:.3}, q10 {:.3}, q90 {:.3}",
        est.tail_from, est.median, est.q10, est.q90
    );
    Ok(())
}

fn main() -> lil_lab::Result<()> {
    run_example()
}
