use nalgebra::DVector;
use sisdp_core::directions::{first_direction, step_size, ScalingKind};
use sisdp_core::generate::generate_nonlinear_instance;
use sisdp_core::path::{initial_point, residual, Iterate, PathConfig};
use sisdp_core::problem::build_nonlinear_quartic;
use sisdp_core::reduction::detect_maximizers;
use sisdp_core::SymMatrix;

fn advance_like(
    p: &sisdp_core::problem::SisdpProblem,
    w: &Iterate,
    d: &sisdp_core::directions::Direction,
    s: f64,
    cfg: &sisdp_core::reduction::ReductionConfig,
) -> Iterate {
    let x2 = &w.x + &d.dx * s;
    let mut v2 = w.v.clone();
    v2.axpy(s, &d.dv);
    let red2 = detect_maximizers(p, &x2, cfg);
    let mut y2 = DVector::zeros(red2.p());
    for (k, mx) in red2.maximizers.iter().enumerate() {
        for (k0, mx0) in w.reduced.maximizers.iter().enumerate() {
            if (mx.tau - mx0.tau).abs() < 0.05 {
                y2[k] = (w.y[k0] + s * d.dy[k0]).max(0.0);
            }
        }
    }
    Iterate { x: x2, reduced: red2, y: y2, z: &w.z + &d.dz * s, v: v2 }
}

fn delta_f_of(p: &sisdp_core::problem::SisdpProblem, dx: &DVector<f64>) -> SymMatrix {
    let mut m = SymMatrix::zeros(p.m);
    for i in 0..p.n {
        m.axpy(dx[i], &p.fi[i]);
    }
    m
}

#[test]
#[ignore]
fn probe_stuck_and_reset() {
    let inst = generate_nonlinear_instance(10, 7);
    let p = build_nonlinear_quartic(&inst).unwrap();
    let cfg = PathConfig::default();
    let mu = 1.0;
    let eps = 7.4162;

    // Replicate the damped walk until it stalls.
    let mut w = initial_point(&p, &cfg.reduction).unwrap();
    let mut r = residual(&p, &w, mu, &cfg.reduction).norm();
    for it in 0..20 {
        if r <= eps {
            println!("entered neighborhood after {it} iterations, r={r:.4e}");
            break;
        }
        let d = first_direction(&p, &w.reduced, &w.x, &w.y, &w.z, &w.v, mu, ScalingKind::Aho)
            .unwrap();
        {
            use sisdp_core::directions::{assemble_hp, lagrangian_hessian, Scaling};
            let sc = Scaling::new(ScalingKind::Aho, &p, &w.x, &w.v).unwrap();
            let raw = lagrangian_hessian(&p, &w.reduced, &w.x, &w.y) + assemble_hp(&sc).unwrap();
            let eig = SymMatrix::from_dense_symmetrize(&raw).eigen();
            let lmin = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
            println!(
                "it={it} r={r:.4e} lifted={} lam_min(B)={lmin:.3e} |dx|={:.3e}",
                d.lifted,
                d.dx.norm()
            );
        }
        let f = p.f_matrix(&w.x);
        let mut s = step_size(&f, &delta_f_of(&p, &d.dx), &w.v, &d.dv, 0.9).unwrap();
        let mut hit = false;
        for _ in 0..=30 {
            let t = advance_like(&p, &w, &d, s, &cfg.reduction);
            let rt = residual(&p, &t, mu, &cfg.reduction).norm();
            if rt <= (1.0 - 1e-4 * s) * r {
                w = t;
                r = rt;
                hit = true;
                break;
            }
            s *= 0.5;
        }
        if !hit {
            println!(
                "stalled at it={it} r={r:.6e} y={:?} ghat={:.4}",
                w.y.as_slice(),
                w.reduced.maximizers[0].value
            );
            // Hypothesis test: zero the dead multiplier mass and retry.
            let mut w2 = w.clone();
            w2.y.fill(0.0);
            let r2 = residual(&p, &w2, mu, &cfg.reduction).norm();
            println!("after y := 0: r={r2:.6e}  (eps={eps})");
            let d2 = first_direction(
                &p, &w2.reduced, &w2.x, &w2.y, &w2.z, &w2.v, mu, ScalingKind::Aho,
            )
            .unwrap();
            let f2 = p.f_matrix(&w2.x);
            let s2 = step_size(&f2, &delta_f_of(&p, &d2.dx), &w2.v, &d2.dv, 0.9).unwrap();
            for sc in [1.0, 0.5, 0.25, 0.125] {
                let t = advance_like(&p, &w2, &d2, s2 * sc, &cfg.reduction);
                let rt = residual(&p, &t, mu, &cfg.reduction).norm();
                println!("  retry s={:.4e}: rt={rt:.6e}", s2 * sc);
            }
            return;
        }
    }
}
