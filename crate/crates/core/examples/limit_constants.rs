// The critical constant C₀, λ and the sandwich between them.

use lil_lab::constants::{ConstantsOptions, ConstantsReport};
use lil_lab::{HModel, SlowVaryFn};

pub fn run_example() -> lil_lab::Result<()> {
    let opts = ConstantsOptions::default();
    for (h, big_h) in [
        ("2*(LL)^1", HModel::Const(1.0)),
        ("2*(LL)^1", HModel::Const(0.5)),
        ("(LL)^2", HModel::LogLogPower(1.0)),
    ] {
        let h: SlowVaryFn = h.parse()?;
        let rep = ConstantsReport::compute(&h, &big_h, &big_h.to_string(), &opts)?;
        println!(
            "h = {h}, H = {big_h}: C0 in [{:?}, {:?}], lambda {:?}, sandwich {}",
            rep.c0_lo, rep.c0_hi, rep.lambda, rep.sandwich_ok
        );
    }
    Ok(())
}

fn main() -> lil_lab::Result<()> {
    run_example()
}
