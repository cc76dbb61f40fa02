use sisdp_core::directions::ScalingKind;
use sisdp_core::generate::{generate_linear_instance, generate_nonlinear_instance};
use sisdp_core::path::{initial_point, solve_two_step, PathConfig, Schedule};
use sisdp_core::problem::{build_linear_eig, build_nonlinear_quartic};

#[test]
#[ignore]
fn probe_one_nonlinear_seed() {
    let seed: u64 = std::env::var("SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    let scaling = match std::env::var("SCALING").as_deref() {
        Ok("aho") => ScalingKind::Aho,
        Ok("hkm") => ScalingKind::Hkm,
        _ => ScalingKind::Nt,
    };
    let p = if std::env::var("PROBLEM").as_deref() == Ok("linear") {
        let inst = generate_linear_instance(10, 9, seed).unwrap();
        build_linear_eig(&inst).unwrap()
    } else {
        let inst = generate_nonlinear_instance(10, seed);
        build_nonlinear_quartic(&inst).unwrap()
    };
    let cfg = PathConfig { scaling, ..PathConfig::default() };
    let w0 = initial_point(&p, &cfg.reduction).unwrap();
    let sched = Schedule::standard(p.m, 1.0);
    let out = solve_two_step(&p, w0, sched, &cfg);
    println!(
        "status={:?} rows={} fail={:?}",
        out.trace.status,
        out.trace.rows.len(),
        out.trace.failure
    );
    for row in &out.trace.rows {
        println!(
            "  k={} mu={:.3e} eps={:.3e} r_mu={:.3e} r_0={:.3e} fb={}",
            row.k, row.mu, row.eps, row.r_mu, row.r_0, row.fallback_used
        );
    }
}
