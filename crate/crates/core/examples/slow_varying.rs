// Slowly varying functions, the inverse of Ψ(x) = √(x h(x)), and H_q membership.

use lil_lab::slowvary::{default_ln_t_grid, default_tau_grid, hq_classify, smallest_member_q};
use lil_lab::SlowVaryFn;

pub fn run_example() -> lil_lab::Result<()> {
    let h: SlowVaryFn = "2*(LL)^1".parse()?;
    for x in [1e3, 1e6, 1e12] {
        let y = h.psi(x);
        println!("Psi({x:e}) = {y:.4}, inverse recovers {:.6e}", h.psi_inv(y)?);
    }
    // far beyond f64 range of x, still fine in the log domain
    println!("ln Psi^-1(e^500) = {:.6}", h.ln_psi_inv_ln(500.0)?);

    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    for text in ["(LL)^1", "(L)^2", "exp((L)^0.5)"] {
        let f: SlowVaryFn = text.parse()?;
        let rep = hq_classify(&f, 0.0, &default_ln_t_grid(), &default_tau_grid(), 0.02)?;
        println!(
            "{text}: H_0 verdict {:?}, smallest member q on the grid {}",
            rep.verdict,
            smallest_member_q(&f, &grid)
        );
    }
    Ok(())
}

fn main() -> lil_lab::Result<()> {
    run_example()
}
