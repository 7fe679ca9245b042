// Coupling a heavy-tailed path with its truncation at the normalizer.

use lil_lab::simulate::{expected_truncations, truncated_path, PathConfig};
use lil_lab::{DistSpec, NormKind, Normalizer, SpaceSpec};

pub fn run_example() -> lil_lab::Result<()> {
    let dist: DistSpec = "pareto:3:2".parse()?;
    let space = SpaceSpec::new(2, NormKind::L2)?;
    let c = Normalizer::classical();
    let cfg = PathConfig::new(20_000, 20, 11)?;
    let t = truncated_path(&dist, &space, &c, &cfg)?;
    println!(
        "mean truncations {:.2}, expected {:.2}",
        t.mean_truncations(),
        expected_truncations(&dist, &space, &c, cfg.n_max)?
    );
    let gaps = t.gap_after_last();
    println!("largest gap after the last truncation: {:.4}", gaps.iter().copied().fold(0.0, f64::max));
    Ok(())
}

fn main() -> lil_lab::Result<()> {
    run_example()
}
