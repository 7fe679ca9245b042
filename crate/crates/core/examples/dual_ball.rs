// Truncated second moments and their dual-ball suprema under each norm.

use lil_lab::{dual_ball_sup, h_eval, DistSpec, HSource, NormKind, SpaceSpec, TruncatedCov};
use nalgebra::DMatrix;

pub fn run_example() -> lil_lab::Result<()> {
    let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 1.5]);
    let cov = TruncatedCov::new(m, f64::INFINITY, 0)?;
    for norm in [NormKind::L1, NormKind::L2, NormKind::LInf] {
        let space = SpaceSpec::new(3, norm)?;
        println!("sup over dual ball of l{norm}: {:.6}", dual_ball_sup(&cov, &space)?);
    }

    let dist: DistSpec = "rademacher:4".parse()?;
    let space = SpaceSpec::new(4, NormKind::L2)?;
    for t in [1.0, 2.0, 3.0] {
        println!("H({t}) for {dist} in l2: {}", h_eval(HSource::Dist(&dist), t, &space)?);
    }
    Ok(())
}

fn main() -> lil_lab::Result<()> {
    run_example()
}
