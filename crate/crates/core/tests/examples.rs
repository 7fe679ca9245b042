macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(dual_ball, "dual_ball.rs");
example!(slow_varying, "slow_varying.rs");
example!(limit_constants, "limit_constants.rs");
example!(fuk_nagaev_bounds, "fuk_nagaev_bounds.rs");
example!(verify_bounds, "verify_bounds.rs");
example!(classical_lil, "classical_lil.rs");
example!(truncation, "truncation.rs");
example!(mean_norm, "mean_norm.rs");

#[test]
fn examples_run() {
    dual_ball::run_example().unwrap();
    slow_varying::run_example().unwrap();
    limit_constants::run_example().unwrap();
    fuk_nagaev_bounds::run_example().unwrap();
    verify_bounds::run_example().unwrap();
    classical_lil::run_example().unwrap();
    truncation::run_example().unwrap();
    mean_norm::run_example().unwrap();
}
