// Evaluating the exponential and polynomial tail bounds for fixed moment data.

use lil_lab::fuknagaev::{
    fn_constants, maximal_tail_bound, split_tail_bound, theorem4_bound, BoundParams, MomentData,
};

pub fn run_example() -> lil_lab::Result<()> {
    let params = BoundParams::default();
    let k = fn_constants(params.delta, params.eta, params.s)?;
    println!("epsilon {:.6}, D {:.3}, C {:.4e}", k.epsilon, k.d, k.c);

    // 200 Rademacher vectors in l_inf^5: M = 1, Lambda_n = 200
    let data = MomentData::new(200, 1.0, 200.0, 30.0, 5.0e3)?;
    for t in [20.0, 40.0, 80.0, 160.0, 1e9] {
        println!(
            "t = {t:>8.0}: maximal {:.3e}, split {:.3e}, combined {:.3e}",
            maximal_tail_bound(t, &data)?,
            split_tail_bound(t, &params, &data)?,
            theorem4_bound(t, &params, &data)?
        );
    }
    Ok(())
}

fn main() -> lil_lab::Result<()> {
    run_example()
}
