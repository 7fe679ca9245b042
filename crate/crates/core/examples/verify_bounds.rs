// Monte Carlo check that empirical tail frequencies stay under the bounds.

use lil_lab::fuknagaev::{mc_verify, VerifyConfig};
use lil_lab::{DistSpec, NormKind, SpaceSpec};

pub fn run_example() -> lil_lab::Result<()> {
    let dist: DistSpec = "rademacher:5".parse()?;
    let space = SpaceSpec::new(5, NormKind::LInf)?;
    let cfg = VerifyConfig::new(100, 2_000, 7);
    let rep = mc_verify(&dist, &space, &cfg)?;
    for row in rep.rows.iter().step_by(6) {
        println!(
            "{:<9} t = {:>6.2}: p_hat {:.4} (se {:.4}) vs bound {:.4}",
            row.kind.as_str(),
            row.t,
            row.p_hat,
            row.se,
            row.bound
        );
    }
    println!("violations: {}", rep.violations);
    Ok(())
}

fn main() -> lil_lab::Result<()> {
    run_example()
}
