use sisdp_core::generate::generate_nonlinear_instance;
use sisdp_core::path::{initial_point, rescue_solve, residual, PathConfig};
use sisdp_core::problem::build_nonlinear_quartic;

#[test]
#[ignore]
fn probe_centering() {
    let seed: u64 = std::env::var("SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    let inst = generate_nonlinear_instance(10, seed);
    let p = build_nonlinear_quartic(&inst).unwrap();
    let config = PathConfig::default();
    let it = initial_point(&p, &config.reduction).unwrap();
    let r0 = residual(&p, &it, 1.0, &config.reduction).norm();
    eprintln!("seed={seed} initial r(mu=1)={r0:.6e}");
    match rescue_solve(&p, it, 1.0, 0.05, 0.9, &config) {
        Ok((w, stats)) => {
            let r = residual(&p, &w, 1.0, &config.reduction).norm();
            eprintln!("centered: r={r:.6e} iters={}", stats.iters);
        }
        Err(e) => eprintln!("centering failed: {e}"),
    }
}
