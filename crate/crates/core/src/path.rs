//! Barrier path following: the residual and neighborhood tests, the barrier
//! parameter schedule, the one-step and two-step outer loops, and the damped
//! fallback that rescues rejected steps.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::directions::{
    delta_f, first_direction, lagrangian_hessian, second_direction, step_size, Direction,
    DirectionError, ScalingKind,
};
use crate::problem::{IndexSet, SisdpProblem};
use crate::reduction::{detect_maximizers, global_max, track, ReducedModel, ReductionConfig};
use crate::symcone::{congruence, jordan, SymMatrix};

#[derive(Debug, Error)]
pub enum PathError {
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error("initial point infeasible: {0}")]
    BadInitialPoint(String),
    #[error("no sufficient residual decrease after {halvings} halvings at mu = {mu:.3e}")]
    NoDecrease { halvings: usize, mu: f64 },
    #[error("fallback exhausted {0} iterations without entering the neighborhood")]
    InnerExhausted(usize),
}

/// Full primal-dual state: primal point, its reduced constraint model, the
/// multipliers aligned with that model, equality multipliers, and the dual
/// cone matrix.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub x: DVector<f64>,
    pub reduced: ReducedModel,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub v: SymMatrix,
}

/// Barrier parameter, neighborhood tolerance, and the constants driving both.
#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub mu: f64,
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub c: f64,
    pub delta_step: f64,
}

/// Floor below which the neighborhood tolerance is never tightened.
pub const EPS_FLOOR: f64 = 1e-7;

impl Schedule {
    /// Standard constants: `gamma1 = sqrt(m(m+1)/2)` couples the tolerance to
    /// the cone dimension; the rest are fixed defaults.
    pub fn standard(m: usize, mu0: f64) -> Self {
        let gamma1 = (m as f64 * (m as f64 + 1.0) / 2.0).sqrt();
        let alpha = 0.99;
        Schedule {
            mu: mu0,
            eps: EPS_FLOOR.max(gamma1 * mu0.powf(1.0 + alpha)),
            alpha,
            beta: 0.8,
            gamma1,
            gamma2: 5.0,
            c: 1.0 / 2.99,
            delta_step: 0.9,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mu > 0.0) {
            return Err("mu must be positive".into());
        }
        if !(self.eps > 0.0) {
            return Err("eps must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err("alpha must lie in (0, 1)".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err("beta must lie in (0, 1)".into());
        }
        if !(self.gamma1 > 0.0 && self.gamma2 > 0.0) {
            return Err("gamma1 and gamma2 must be positive".into());
        }
        if !(self.delta_step > 0.0 && self.delta_step < 1.0) {
            return Err("delta_step must lie in (0, 1)".into());
        }
        if !(self.c > 0.0 && self.c <= 1.0 / (self.alpha + 2.0)) {
            return Err("c must lie in (0, 1/(alpha+2)]".into());
        }
        Ok(())
    }

    /// Superlinear tightening: the barrier shrinks by at least `beta` and,
    /// once small, by the power `1 + c alpha`.
    pub fn tighten_superlinear(&mut self) {
        self.mu = (self.beta * self.mu).min(self.gamma2 * self.mu.powf(1.0 + self.c * self.alpha));
        self.eps = EPS_FLOOR.max(self.gamma1 * self.mu.powf(1.0 + self.alpha));
    }

    /// Plain geometric tightening of both parameters.
    pub fn tighten_geometric(&mut self) {
        self.mu *= self.beta;
        self.eps *= self.beta;
    }
}

/// The five blocks of the optimality residual at barrier level `mu`.
#[derive(Debug, Clone)]
pub struct ResidualParts {
    /// Positive part of the worst semi-infinite violation.
    pub theta: f64,
    /// Stationarity of the Lagrangian in x.
    pub phi1: DVector<f64>,
    /// Multiplier complementarity over the reduced constraints.
    pub phi2: f64,
    /// Cone complementarity `svec(F o V - mu I)`.
    pub phi3: DVector<f64>,
    /// Equality violation norm.
    pub eq: f64,
}

impl ResidualParts {
    pub fn norm(&self) -> f64 {
        (self.theta * self.theta
            + self.phi1.norm_squared()
            + self.phi2 * self.phi2
            + self.phi3.norm_squared()
            + self.eq * self.eq)
            .sqrt()
    }
}

pub fn residual(
    problem: &SisdpProblem,
    it: &Iterate,
    mu: f64,
    cfg: &ReductionConfig,
) -> ResidualParts {
    assert_eq!(it.y.len(), it.reduced.p(), "multipliers misaligned with the reduced model");
    let theta = global_max(problem, &it.x, cfg)
        .map(|(_, v)| v.max(0.0))
        .unwrap_or(0.0);

    let mut phi1 = problem.objective.gradient(&it.x);
    let mut phi2 = 0.0;
    for (k, m) in it.reduced.maximizers.iter().enumerate() {
        phi1.axpy(it.y[k], &m.grad, 1.0);
        phi2 += it.y[k] * m.value;
    }
    for i in 0..problem.n {
        phi1[i] -= problem.fi[i].inner(&it.v);
    }
    for (t, eq) in problem.equalities.iter().enumerate() {
        phi1.axpy(it.z[t], &eq.a, 1.0);
    }

    let mut dev = jordan(&problem.f_matrix(&it.x), &it.v);
    dev.axpy(-mu, &SymMatrix::identity(problem.m));
    let phi3 = dev.svec();

    let eq = problem
        .equalities
        .iter()
        .map(|e| {
            let r = e.a.dot(&it.x) - e.b;
            r * r
        })
        .sum::<f64>()
        .sqrt();

    ResidualParts { theta, phi1, phi2, phi3, eq }
}

/// Membership in the barrier neighborhood: residual within tolerance,
/// strict interiority on both cone sides, nonnegative multipliers.
pub fn in_neighborhood(
    problem: &SisdpProblem,
    it: &Iterate,
    mu: f64,
    eps: f64,
    cfg: &ReductionConfig,
) -> bool {
    residual(problem, it, mu, cfg).norm() <= eps
        && problem.f_matrix(&it.x).is_pd()
        && it.v.is_pd()
        && it.y.iter().all(|&t| t >= 0.0)
}

#[derive(Debug, Clone, Copy)]
pub struct PathConfig {
    pub scaling: ScalingKind,
    pub reduction: ReductionConfig,
    /// Stop once the mu = 0 residual falls below this.
    pub tol_r0: f64,
    /// Stop once the barrier falls below this.
    pub mu_min: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            scaling: ScalingKind::Nt,
            reduction: ReductionConfig::default(),
            tol_r0: 1e-8,
            mu_min: 1e-10,
            max_outer: 200,
            max_inner: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MuFloor,
    FallbackFailed,
    MaxIterations,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::MuFloor => "MuFloor",
            SolveStatus::FallbackFailed => "FallbackFailed",
            SolveStatus::MaxIterations => "MaxIterations",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub k: usize,
    pub mu: f64,
    pub eps: f64,
    pub r_mu: f64,
    pub r_0: f64,
    pub s_half: f64,
    pub s_one: f64,
    pub fallback_used: bool,
    pub p_active: usize,
    pub qp_iters: usize,
    pub wall_ms: f64,
}

pub const TRACE_HEADER: &str = "k,mu,eps,R_mu,R_0,s_half,s_one,fallback_used,p_active,qp_iters,wall_ms";

impl TraceRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{:e}",
            self.k,
            self.mu,
            self.eps,
            self.r_mu,
            self.r_0,
            self.s_half,
            self.s_one,
            self.fallback_used,
            self.p_active,
            self.qp_iters,
            self.wall_ms,
        )
    }
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
    pub status: SolveStatus,
    /// Human-readable cause when status is FallbackFailed.
    pub failure: Option<String>,
    /// Least-squares slope of consecutive log-errors over the final accepted
    /// iterations; None when too few usable points exist.
    pub exponent_fit: Option<f64>,
}

impl SolveTrace {
    pub fn fallback_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.fallback_used).count() as f64 / self.rows.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub iterate: Iterate,
    pub trace: SolveTrace,
}

/// Default starting state: the problem's reference point, dual matrix `m I`,
/// one unit of multiplier mass per detected maximizer, zero equality
/// multipliers.
pub fn initial_point(problem: &SisdpProblem, cfg: &ReductionConfig) -> Result<Iterate, PathError> {
    let x = problem.default_x0.clone();
    if !problem.f_matrix(&x).is_pd() {
        return Err(PathError::BadInitialPoint(
            "cone matrix at the reference point is not positive definite".into(),
        ));
    }
    let reduced = detect_maximizers(problem, &x, cfg);
    let y = DVector::from_element(reduced.p(), 1.0);
    let z = DVector::zeros(problem.equalities.len());
    let v = SymMatrix::scaled_identity(problem.m, problem.m as f64);
    Ok(Iterate { x, reduced, y, z, v })
}

/// Moves a state along a direction with step `s`, re-detects the constraint
/// maximizers at the new point, and carries the multipliers across by
/// correspondence. Returns the new state plus the index map old -> new.
fn advance(
    problem: &SisdpProblem,
    it: &Iterate,
    d: &Direction,
    s: f64,
    cfg: &ReductionConfig,
) -> (Iterate, Vec<Option<usize>>) {
    let dx = &d.dx * s;
    let x = &it.x + &dx;
    let mut v = it.v.clone();
    v.axpy(s, &d.dv);
    let z = &it.z + &d.dz * s;
    let mut y_moved = &it.y + &d.dy * s;
    // A refinement row that zeroes a multiplier lands at minus the linear
    // solver's roundoff; snap that to the boundary it means. Genuinely
    // negative multipliers stay negative and fail the membership test.
    let snap = 1e-12 * (1.0 + y_moved.amax());
    y_moved.apply(|t| {
        if *t < 0.0 && *t > -snap {
            *t = 0.0;
        }
    });
    let reduced = detect_maximizers(problem, &x, cfg);
    let corr = track(&it.reduced, &reduced, &dx, y_moved.as_slice());
    debug_assert!(problem.f_matrix(&x).is_pd(), "interiority lost on the cone side");
    debug_assert!(v.is_pd(), "interiority lost on the dual side");
    let it = Iterate { x, reduced, y: DVector::from_vec(corr.y_new), z, v };
    (it, corr.map)
}

#[derive(Debug, Default)]
pub struct FallbackStats {
    pub iters: usize,
    pub qp_iters: usize,
    /// Residual after the start and each accepted damped step.
    pub r_history: Vec<f64>,
}

/// Damped one-direction iteration: backtrack each step until the residual
/// decreases, repeat until the state enters the neighborhood.
pub fn fallback_solve(
    problem: &SisdpProblem,
    mut w: Iterate,
    mu: f64,
    eps: f64,
    delta_step: f64,
    config: &PathConfig,
) -> Result<(Iterate, FallbackStats), PathError> {
    let mut stats = FallbackStats::default();
    let mut r = residual(problem, &w, mu, &config.reduction).norm();
    stats.r_history.push(r);
    for _ in 0..config.max_inner {
        if std::env::var("PATH_DEBUG").is_ok() {
            eprintln!(
                "[fb-entry] r={r:.4e} eps={eps:.4e} f_pd={} v_pd={} ymin={:.3e}",
                problem.f_matrix(&w.x).is_pd(),
                w.v.is_pd(),
                w.y.min()
            );
        }
        if r <= eps
            && problem.f_matrix(&w.x).is_pd()
            && w.v.is_pd()
            && w.y.iter().all(|&t| t >= 0.0)
        {
            return Ok((w, stats));
        }
        // The merit below is the unscaled residual, so the inner direction is
        // computed unscaled (P = I) no matter which scaling drives the outer
        // steps: that makes it a Newton direction for this exact merit, while
        // a scaled direction can point uphill in the unscaled norm far from
        // the path.
        let d = first_direction(
            problem, &w.reduced, &w.x, &w.y, &w.z, &w.v, mu, ScalingKind::Aho,
        )?;
        stats.qp_iters += d.qp_iterations;
        let f = problem.f_matrix(&w.x);
        let mut s = step_size(&f, &delta_f(problem, &d.dx), &w.v, &d.dv, delta_step)?;
        let debug = std::env::var("PATH_DEBUG").is_ok();
        if debug {
            eprintln!(
                "[fb] r={r:.4e} p={} y={:?} s0={s:.3e} dxn={:.2e} dvn={:.2e}",
                w.reduced.p(),
                w.y.as_slice(),
                d.dx.norm(),
                d.dv.norm_fro()
            );
        }
        let mut accepted = None;
        for _ in 0..=30 {
            let (trial, _) = advance(problem, &w, &d, s, &config.reduction);
            let rt = residual(problem, &trial, mu, &config.reduction).norm();
            if debug {
                eprintln!("[fb]   s={s:.3e} rt={rt:.6e} p={}", trial.reduced.p());
            }
            if rt <= (1.0 - 1e-4 * s) * r {
                accepted = Some((trial, rt));
                break;
            }
            s *= 0.5;
        }
        match accepted {
            Some((trial, rt)) => {
                w = trial;
                r = rt;
                stats.iters += 1;
                stats.r_history.push(r);
            }
            None => return Err(PathError::NoDecrease { halvings: 30, mu }),
        }
    }
    if r <= eps && problem.f_matrix(&w.x).is_pd() && w.v.is_pd() {
        Ok((w, stats))
    } else {
        Err(PathError::InnerExhausted(config.max_inner))
    }
}

const RESCUE_MAX_ITERS: usize = 400;
const RESCUE_MAX_BOOSTS: usize = 40;
/// Weight of the reduced-constraint barrier in the centering functional,
/// as a fraction of mu^2. Complementarity at a centered point equals this
/// much per maximizer, so it has to stay well inside the neighborhood
/// radius, which contracts like mu^2 along the standard schedule.
const RESCUE_SI_WEIGHT: f64 = 1e-2;
/// Restoration pulls a violated iterate back to this depth before the
/// barrier takes over. Only actual boundary contact triggers it: a centered
/// point can sit at slack sigma mu^2 / y, far closer to the boundary than
/// any fixed margin, and the barrier handles such points on its own.
const RESCUE_FEAS_MARGIN: f64 = 1e-3;
const RESCUE_BOUNDARY: f64 = 1e-10;
const RESCUE_ARMIJO: f64 = 1e-4;

/// Inner retry: recenters the state on the barrier path at this mu by
/// descent instead of root finding. The path point at mu is a constrained
/// minimizer of f - mu logdet F over the reduced feasible set, so the walk
/// minimizes that functional with a weak log barrier on the reduced
/// constraints, first restoring strict feasibility if the seed arrives
/// violated. The dual state follows analytically at any interior x:
/// V = mu F(x)^{-1} zeroes the cone complementarity, and the barrier
/// multipliers y_k = sigma / (-g_k) put each reduced complementarity at
/// sigma. The walk returns as soon as the true residual of that assembled
/// state certifies neighborhood membership. A Newton direction on the
/// functional exists at every interior point after at worst a diagonal
/// shift, so unlike a least-squares walk on the residual itself, the
/// descent cannot hang at a spurious stationary point with a large
/// residual and an exploding damping weight.
pub fn rescue_solve(
    problem: &SisdpProblem,
    seed: Iterate,
    mu: f64,
    eps: f64,
    delta_step: f64,
    config: &PathConfig,
) -> Result<(Iterate, FallbackStats), PathError> {
    let n = problem.n;
    let nq = problem.equalities.len();
    let sigma = RESCUE_SI_WEIGHT * mu * mu;
    let mut stats = FallbackStats::default();

    let assemble = |x: &DVector<f64>, z: &DVector<f64>, reduced: &ReducedModel| {
        let f_inv = problem.f_matrix(x).inv_pd().map_err(DirectionError::from)?;
        let y = DVector::from_iterator(
            reduced.p(),
            reduced
                .maximizers
                .iter()
                .map(|mx| if mx.value < 0.0 { sigma / -mx.value } else { 0.0 }),
        );
        Ok::<_, PathError>(Iterate {
            x: x.clone(),
            reduced: reduced.clone(),
            y,
            z: z.clone(),
            v: f_inv.scale(mu),
        })
    };

    let eye = SymMatrix::identity(problem.m);
    let zero_dv = SymMatrix::zeros(problem.m);
    let mut x = seed.x;
    let mut z = seed.z;
    let mut reduced = detect_maximizers(problem, &x, &config.reduction);

    for _ in 0..RESCUE_MAX_ITERS {
        let cand = assemble(&x, &z, &reduced)?;
        stats.r_history.push(residual(problem, &cand, mu, &config.reduction).norm());
        if in_neighborhood(problem, &cand, mu, eps, &config.reduction) {
            return Ok((cand, stats));
        }
        let f = problem.f_matrix(&x);
        let gmax =
            reduced.maximizers.iter().map(|mx| mx.value).fold(f64::NEG_INFINITY, f64::max);

        if gmax > -RESCUE_BOUNDARY {
            // Restoration: walk the worst constraint back to twice the
            // handover margin. The step aims exactly at that level along
            // the constraint gradient, which lands in one step when the
            // sheet is close to linear; halving covers the rest.
            let worst = reduced
                .maximizers
                .iter()
                .max_by(|a, b| a.value.total_cmp(&b.value))
                .expect("reduced model has a maximizer");
            let target = gmax + 2.0 * RESCUE_FEAS_MARGIN;
            let d = worst.grad.scale(-target / worst.grad.norm_squared().max(1e-12));
            let mut s =
                step_size(&f, &delta_f(problem, &d), &eye, &zero_dv, delta_step)?.min(1.0);
            let mut accepted = None;
            for _ in 0..RESCUE_MAX_BOOSTS {
                let xt = &x + &d * s;
                let rt = detect_maximizers(problem, &xt, &config.reduction);
                let gt =
                    rt.maximizers.iter().map(|mx| mx.value).fold(f64::NEG_INFINITY, f64::max);
                if gt <= gmax - 0.25 * s * target {
                    accepted = Some((xt, rt));
                    break;
                }
                s *= 0.5;
            }
            let Some((xt, rt)) = accepted else {
                return Err(PathError::NoDecrease { halvings: RESCUE_MAX_BOOSTS, mu });
            };
            if std::env::var("PATH_DEBUG").is_ok() {
                eprintln!("[rescue] restore gmax={gmax:.3e} s={s:.2e} mu={mu:.3e}");
            }
            x = xt;
            reduced = rt;
            stats.iters += 1;
            continue;
        }

        // Centering: one shifted Newton step on the barrier functional
        //   f(x) - mu logdet F(x) - sigma sum_k log(-g_k(x)),
        // keeping any equalities satisfied through the KKT system.
        let f_inv = f.inv_pd().map_err(DirectionError::from)?;
        let yb = DVector::from_iterator(
            reduced.p(),
            reduced.maximizers.iter().map(|mx| sigma / -mx.value),
        );
        let mut grad = problem.objective.gradient(&x);
        for (i, fi) in problem.fi.iter().enumerate() {
            grad[i] -= mu * fi.inner(&f_inv);
        }
        for (k, mx) in reduced.maximizers.iter().enumerate() {
            grad.axpy(yb[k], &mx.grad, 1.0);
        }
        let mut h = lagrangian_hessian(problem, &reduced, &x, &yb);
        let gs: Vec<SymMatrix> = problem.fi.iter().map(|fl| congruence(&f_inv, fl)).collect();
        for j in 0..n {
            for l in j..n {
                let b = mu * problem.fi[j].inner(&gs[l]);
                h[(j, l)] += b;
                if l != j {
                    h[(l, j)] += b;
                }
            }
        }
        for (k, mx) in reduced.maximizers.iter().enumerate() {
            let w1 = yb[k] / -mx.value;
            for j in 0..n {
                for l in 0..n {
                    h[(j, l)] += w1 * mx.grad[j] * mx.grad[l];
                }
            }
        }

        // Shift the Hessian block until it is positive definite, so the step
        // is a genuine minimization direction even where the objective
        // curvature turns the Lagrangian Hessian indefinite.
        let mut shift = 0.0;
        let mut unit = 1e-6 * (1.0 + h.diagonal().amax());
        let mut step = None;
        for _ in 0..RESCUE_MAX_BOOSTS {
            let mut hs = h.clone();
            for j in 0..n {
                hs[(j, j)] += shift;
            }
            if hs.clone().cholesky().is_none() {
                shift = if shift == 0.0 { unit } else { shift * 4.0 };
                unit *= 2.0;
                continue;
            }
            let mut kkt = DMatrix::zeros(n + nq, n + nq);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hs);
            for (t, eqc) in problem.equalities.iter().enumerate() {
                for i in 0..n {
                    kkt[(i, n + t)] = eqc.a[i];
                    kkt[(n + t, i)] = eqc.a[i];
                }
            }
            let mut rhs = DVector::zeros(n + nq);
            for i in 0..n {
                rhs[i] = -grad[i];
            }
            for (t, eqc) in problem.equalities.iter().enumerate() {
                rhs[n + t] = eqc.b - eqc.a.dot(&x);
            }
            let solved = kkt.lu().solve(&rhs);
            if let Some(sol) = solved {
                let d = sol.rows(0, n).into_owned();
                let slope = grad.dot(&d);
                if d.iter().all(|t| t.is_finite()) && slope < 0.0 {
                    step = Some((d, sol.rows(n, nq).into_owned(), slope));
                    break;
                }
            }
            shift = if shift == 0.0 { unit } else { shift * 4.0 };
            unit *= 2.0;
        }
        let Some((d, w, slope)) = step else {
            return Err(PathError::NoDecrease { halvings: RESCUE_MAX_BOOSTS, mu });
        };

        let logdet = |m: &SymMatrix| m.eigen().values.iter().map(|v| v.ln()).sum::<f64>();
        let psi0 = problem.objective.value(&x) - mu * logdet(&f)
            - reduced.maximizers.iter().map(|mx| sigma * (-mx.value).ln()).sum::<f64>();
        if std::env::var("PATH_DEBUG_FD").is_ok() {
            let hstep = 1e-6;
            let psi_at = |xx: &DVector<f64>| -> f64 {
                let ff = problem.f_matrix(xx);
                let rr = detect_maximizers(problem, xx, &config.reduction);
                problem.objective.value(xx)
                    - mu * ff.eigen().values.iter().map(|v| v.ln()).sum::<f64>()
                    - rr.maximizers.iter().map(|mx| sigma * (-mx.value).ln()).sum::<f64>()
            };
            for i in [0usize, 1, 7, 20, 33, 54] {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += hstep;
                xm[i] -= hstep;
                let fd = (psi_at(&xp) - psi_at(&xm)) / (2.0 * hstep);
                eprintln!("[fd] i={i} fd={fd:.6e} grad={:.6e} diff={:.3e}", grad[i], (fd - grad[i]).abs());
            }
            std::process::exit(0);
        }
        if std::env::var("PATH_DEBUG").is_ok() {
            let fmin = f.eigen().values.iter().cloned().fold(f64::INFINITY, f64::min);
            let he = h.clone().symmetric_eigen();
            let hmin = he.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let hmax = he.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            eprintln!(
                "[rescue] center psi={psi0:.6e} |grad|={:.3e} gmax={gmax:.3e} shift={shift:.1e} p={} lmF={fmin:.2e} mu={mu:.3e} |d|={:.2e} slope={slope:.3e} hmin={hmin:.2e} hmax={hmax:.2e}",
                grad.norm(),
                reduced.p(),
                d.norm()
            );
        }
        let mut s =
            step_size(&f, &delta_f(problem, &d), &eye, &zero_dv, delta_step)?.min(1.0);
        let mut accepted = None;
        for _ in 0..RESCUE_MAX_BOOSTS {
            let xt = &x + &d * s;
            let ft = problem.f_matrix(&xt);
            if ft.is_pd() {
                // Evaluate the indexed terms at the current maximizer indices
                // (shifted by their first-order prediction) instead of
                // re-detecting at the trial point: detection churn near the
                // band edge must not enter the comparison.
                let mut bar = Some(0.0);
                for mx in &reduced.maximizers {
                    let mut tau = mx.tau + s * mx.dtau_dx.dot(&d);
                    if let IndexSet::Interval { lo, hi } = problem.index_set {
                        tau = tau.clamp(lo, hi);
                    }
                    let vt = problem.constraint.value(&xt, tau);
                    match bar.as_mut() {
                        Some(acc) if vt < 0.0 => *acc += sigma * (-vt).ln(),
                        _ => bar = None,
                    }
                }
                if let Some(bar) = bar {
                    let psi_t = problem.objective.value(&xt) - mu * logdet(&ft) - bar;
                    if psi_t <= psi0 + RESCUE_ARMIJO * s * slope {
                        accepted = Some(xt);
                        break;
                    }
                }
            }
            s *= 0.5;
        }
        let Some(xt) = accepted else {
            return Err(PathError::NoDecrease { halvings: RESCUE_MAX_BOOSTS, mu });
        };
        reduced = detect_maximizers(problem, &xt, &config.reduction);
        x = xt;
        if nq > 0 {
            z.axpy(s, &(&w - &z), 1.0);
        }
        stats.iters += 1;
    }
    Err(PathError::InnerExhausted(RESCUE_MAX_ITERS))
}

/// What the two-correction step produced before any fallback.
struct StepAttempt {
    accepted: Option<Iterate>,
    half: Option<Iterate>,
    s_half: f64,
    s_one: f64,
    qp_iters: usize,
}

/// Tolerance for declaring a linearized reduced constraint active.
const ACTIVE_TOL: f64 = 1e-8;

fn two_step_candidate(
    problem: &SisdpProblem,
    w: &Iterate,
    mu: f64,
    eps: f64,
    sched: &Schedule,
    config: &PathConfig,
) -> Result<StepAttempt, PathError> {
    let mut attempt = StepAttempt {
        accepted: None,
        half: None,
        s_half: 0.0,
        s_one: 0.0,
        qp_iters: 0,
    };

    let d1 = first_direction(
        problem, &w.reduced, &w.x, &w.y, &w.z, &w.v, mu, config.scaling,
    )?;
    attempt.qp_iters += d1.qp_iterations;
    let f = problem.f_matrix(&w.x);
    let s_half = step_size(&f, &delta_f(problem, &d1.dx), &w.v, &d1.dv, sched.delta_step)?;
    attempt.s_half = s_half;
    let (w_half, map) = advance(problem, w, &d1, s_half, &config.reduction);
    if std::env::var("PATH_DEBUG").is_ok() {
        eprintln!(
            "[cand] mu={mu:.3e} s_half={s_half:.4} dxn={:.3e} dyn={:?} y_half={:?} r_half={:.4e}",
            d1.dx.norm(),
            d1.dy.as_slice(),
            w_half.y.as_slice(),
            residual(problem, &w_half, mu, &config.reduction).norm()
        );
    }

    // Estimated active set from the first direction's linearization, mapped
    // into the refreshed model; an unmapped active index aborts the
    // refinement.
    let mut active = Vec::new();
    for (i, m) in w.reduced.maximizers.iter().enumerate() {
        let lin = m.value + m.grad.dot(&d1.dx);
        if lin.abs() <= ACTIVE_TOL * (1.0 + m.value.abs()) {
            match map[i] {
                Some(j) => active.push(j),
                None => {
                    attempt.half = Some(w_half);
                    return Ok(attempt);
                }
            }
        }
    }
    active.sort_unstable();

    let d2 = second_direction(
        problem,
        &w_half.reduced,
        &w_half.x,
        &w_half.y,
        &w_half.z,
        &w_half.v,
        mu,
        config.scaling,
        &active,
    )?;
    let d2 = match d2 {
        Some(d) => d,
        None => {
            attempt.half = Some(w_half);
            return Ok(attempt);
        }
    };

    let f_half = problem.f_matrix(&w_half.x);
    let s_one = step_size(
        &f_half,
        &delta_f(problem, &d2.dx),
        &w_half.v,
        &d2.dv,
        sched.delta_step,
    )?;
    attempt.s_one = s_one;
    let (w_plus, _) = advance(problem, &w_half, &d2, s_one, &config.reduction);
    if in_neighborhood(problem, &w_plus, mu, eps, &config.reduction) {
        attempt.accepted = Some(w_plus);
    }
    attempt.half = Some(w_half);
    Ok(attempt)
}

enum Variant {
    OneStep,
    TwoStep,
}

fn flatten(it: &Iterate) -> DVector<f64> {
    let sv = it.v.svec();
    let mut out = DVector::zeros(it.x.len() + sv.len() + it.z.len());
    out.rows_mut(0, it.x.len()).copy_from(&it.x);
    out.rows_mut(it.x.len(), sv.len()).copy_from(&sv);
    out.rows_mut(it.x.len() + sv.len(), it.z.len()).copy_from(&it.z);
    out
}

/// Least-squares slope of log-error against previous log-error over the last
/// four usable consecutive pairs; the final snapshot is the reference point.
fn fit_exponent(snaps: &[DVector<f64>]) -> Option<f64> {
    let last = snaps.last()?;
    let errs: Vec<f64> = snaps[..snaps.len() - 1]
        .iter()
        .map(|s| (s - last).norm())
        .collect();
    let pairs: Vec<(f64, f64)> = errs
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| (w[0].ln(), w[1].ln()))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let tail = &pairs[pairs.len().saturating_sub(4)..];
    let n = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let var: f64 = tail.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if var == 0.0 {
        return None;
    }
    let cov: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(cov / var)
}

fn run_path(
    problem: &SisdpProblem,
    w0: Iterate,
    mut sched: Schedule,
    config: &PathConfig,
    variant: Variant,
) -> SolveOutcome {
    assert!(sched.validate().is_ok(), "invalid schedule: {:?}", sched.validate());
    let mut w = w0;
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut snapshots = vec![flatten(&w)];
    let mut failure = None;

    let status = loop {
        let r0 = residual(problem, &w, 0.0, &config.reduction).norm();
        if r0 <= config.tol_r0
            && problem.f_matrix(&w.x).is_psd()
            && w.v.is_psd()
            && w.y.iter().all(|&t| t >= 0.0)
        {
            break SolveStatus::Converged;
        }
        if sched.mu < config.mu_min {
            break SolveStatus::MuFloor;
        }
        if rows.len() >= config.max_outer {
            break SolveStatus::MaxIterations;
        }

        let timer = Instant::now();
        let (mu, eps) = (sched.mu, sched.eps);
        let mut row = TraceRow {
            k: rows.len(),
            mu,
            eps,
            r_mu: 0.0,
            r_0: 0.0,
            s_half: 0.0,
            s_one: 0.0,
            fallback_used: false,
            p_active: 0,
            qp_iters: 0,
            wall_ms: 0.0,
        };

        let mut next = None;
        let mut half = None;
        if let Variant::TwoStep = variant {
            match two_step_candidate(problem, &w, mu, eps, &sched, config) {
                Ok(attempt) => {
                    row.s_half = attempt.s_half;
                    row.s_one = attempt.s_one;
                    row.qp_iters += attempt.qp_iters;
                    next = attempt.accepted;
                    half = attempt.half;
                }
                Err(e) => failure = Some(e.to_string()),
            }
        }

        if next.is_none() {
            row.fallback_used = true;
            let seed = match half {
                Some(h)
                    if residual(problem, &h, mu, &config.reduction).norm()
                        < residual(problem, &w, mu, &config.reduction).norm() =>
                {
                    h
                }
                _ => w.clone(),
            };
            match fallback_solve(problem, seed.clone(), mu, eps, sched.delta_step, config) {
                Ok((it, stats)) => {
                    row.qp_iters += stats.qp_iters;
                    next = Some(it);
                }
                // Retry budget: one rescue walk on the exact residual before
                // the failure becomes final.
                Err(first) => match rescue_solve(problem, seed, mu, eps, sched.delta_step, config)
                {
                    Ok((it, stats)) => {
                        row.qp_iters += stats.qp_iters;
                        next = Some(it);
                    }
                    Err(_) => {
                        failure = Some(first.to_string());
                        break SolveStatus::FallbackFailed;
                    }
                },
            }
        }

        let next = next.unwrap();
        row.r_mu = residual(problem, &next, mu, &config.reduction).norm();
        row.r_0 = residual(problem, &next, 0.0, &config.reduction).norm();
        row.p_active = next.reduced.p();
        row.wall_ms = timer.elapsed().as_secs_f64() * 1e3;
        rows.push(row);
        snapshots.push(flatten(&next));
        w = next;
        match variant {
            Variant::OneStep => sched.tighten_geometric(),
            Variant::TwoStep => sched.tighten_superlinear(),
        }
    };

    let exponent_fit = fit_exponent(&snapshots);
    SolveOutcome {
        iterate: w,
        trace: SolveTrace { rows, status, failure, exponent_fit },
    }
}

/// Outer loop with a single corrected direction per iteration and geometric
/// parameter decay; each iteration hands the whole neighborhood search to the
/// damped inner solver.
pub fn solve_one_step(
    problem: &SisdpProblem,
    w0: Iterate,
    sched: Schedule,
    config: &PathConfig,
) -> SolveOutcome {
    run_path(problem, w0, sched, config, Variant::OneStep)
}

/// Outer loop with the two-correction step (predictor plus square refinement)
/// and the superlinear schedule; falls back to the damped solver whenever the
/// refined point misses the neighborhood.
pub fn solve_two_step(
    problem: &SisdpProblem,
    w0: Iterate,
    sched: Schedule,
    config: &PathConfig,
) -> SolveOutcome {
    run_path(problem, w0, sched, config, Variant::TwoStep)
}
