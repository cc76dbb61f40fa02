use sisdp_core::directions::ScalingKind;
use sisdp_core::exchange::{solve_exchange, ExchangeConfig};
use sisdp_core::generate::{generate_linear_instance, generate_nonlinear_instance};
use sisdp_core::path::{initial_point, residual, solve_two_step, PathConfig, Schedule};
use sisdp_core::problem::{build_linear_eig, build_nonlinear_quartic};
use std::time::Instant;

#[test]
#[ignore]
fn probe_grid() {
    for seed in 0..10u64 {
        let inst = generate_linear_instance(10, 9, seed).unwrap();
        let p = build_linear_eig(&inst).unwrap();
        for (name, kind) in [("aho", ScalingKind::Aho), ("nt", ScalingKind::Nt), ("hkm", ScalingKind::Hkm)] {
            let config = PathConfig { scaling: kind, ..PathConfig::default() };
            let w0 = initial_point(&p, &config.reduction).unwrap();
            let t = Instant::now();
            let out = solve_two_step(&p, w0, Schedule::standard(10, 1.0), &config);
            let r0 = residual(&p, &out.iterate, 0.0, &config.reduction).norm();
            println!(
                "seed={seed} {name}: {:.0?} status={} iters={} R0={:.2e} fb={:.0}% fit={:.3?} fail={:?}",
                t.elapsed(),
                out.trace.status,
                out.trace.rows.len(),
                r0,
                out.trace.fallback_rate() * 100.0,
                out.trace.exponent_fit,
                out.trace.failure,
            );
        }
        let out = solve_exchange(&p, &ExchangeConfig::default());
        println!(
            "seed={seed} disc: status={} rounds={} added={:?}",
            out.status,
            out.rounds.len(),
            out.state.added
        );
    }
}

#[test]
#[ignore]
fn probe_nonlinear() {
    for seed in 0..10u64 {
        let inst = generate_nonlinear_instance(10, seed);
        let p = build_nonlinear_quartic(&inst).unwrap();
        let config = PathConfig::default();
        let w0 = initial_point(&p, &config.reduction).unwrap();
        let t = Instant::now();
        let out = solve_two_step(&p, w0, Schedule::standard(10, 1.0), &config);
        let r0 = residual(&p, &out.iterate, 0.0, &config.reduction).norm();
        println!(
            "seed={seed} nt: {:.0?} status={} iters={} R0={:.2e} fb={:.0}% fail={:?}",
            t.elapsed(),
            out.trace.status,
            out.trace.rows.len(),
            r0,
            out.trace.fallback_rate() * 100.0,
            out.trace.failure,
        );
    }
}
