//! Scaled search directions.
//!
//! Implements the Monteiro-Zhang scaled quantities behind the path
//! follower's steps: the scaling triple (F_P, V_P, F_P^i), the barrier
//! gradient xi_P, the curvature blocks H_P and B_P, the first direction (a
//! convex QP whose KKT pair solves the scaled linearized barrier-KKT
//! system), the second direction (a square linear system that pins the
//! predicted active set), and the fraction-to-boundary step size.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::problem::SisdpProblem;
use crate::qp::{solve_qp, QpError, QpProblem};
use crate::reduction::ReducedModel;
use crate::symcone::{
    congruence, jordan, jordan_op_matrix, lyapunov_solve, min_eig_ratio, nt_scaling_point, smat,
    sqrt_inv_sqrt, svec_len, SymMatrix, SymconeError,
};

#[derive(Debug, Error)]
pub enum DirectionError {
    #[error(transparent)]
    Cone(#[from] SymconeError),
    #[error("step quadratic program failed: {0}")]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingKind {
    /// P = I (unscaled symmetrized linearization).
    Aho,
    /// P = F(x)^{-1/2}, so the scaled barrier matrix becomes the identity.
    Hkm,
    /// P = W^{-1/2} for the scaling point W with W V W = F(x), so the
    /// scaled pair coincides.
    Nt,
}

/// The scaled view of the cone variables at one point: P is symmetric for
/// all three supported choices, so `F_P = P F P` and `V_P = P^{-1} V P^{-1}`.
pub struct Scaling {
    pub kind: ScalingKind,
    pub p: SymMatrix,
    pub p_inv: SymMatrix,
    pub f: SymMatrix,
    pub f_inv: SymMatrix,
    pub f_p: SymMatrix,
    pub v_p: SymMatrix,
    pub f_p_i: Vec<SymMatrix>,
}

impl Scaling {
    pub fn new(
        kind: ScalingKind,
        problem: &SisdpProblem,
        x: &DVector<f64>,
        v: &SymMatrix,
    ) -> Result<Self, DirectionError> {
        let f = problem.f_matrix(x);
        let f_inv = f.inv_pd()?;
        let m = f.dim();
        let (p, p_inv) = match kind {
            ScalingKind::Aho => (SymMatrix::identity(m), SymMatrix::identity(m)),
            ScalingKind::Hkm => {
                let (f_sqrt, f_inv_sqrt) = sqrt_inv_sqrt(&f)?;
                (f_inv_sqrt, f_sqrt)
            }
            ScalingKind::Nt => {
                let w = nt_scaling_point(&f, v)?;
                let (w_sqrt, w_inv_sqrt) = sqrt_inv_sqrt(&w)?;
                (w_inv_sqrt, w_sqrt)
            }
        };
        let f_p = congruence(&p, &f);
        let v_p = congruence(&p_inv, v);
        let f_p_i = problem.fi.iter().map(|fi| congruence(&p, fi)).collect();
        Ok(Scaling { kind, p, p_inv, f, f_inv, f_p, v_p, f_p_i })
    }
}

/// Gradient of `log det F_P` at x: `xi_i = F_P^i . F_P(x)^{-1}`. Invariant
/// under the scaling choice (trace cyclicity), so it equals `F_i . F(x)^{-1}`.
pub fn xi_p(scaling: &Scaling) -> Result<DVector<f64>, DirectionError> {
    let f_p_inv = scaling.f_p.inv_pd()?;
    Ok(DVector::from_iterator(
        scaling.f_p_i.len(),
        scaling.f_p_i.iter().map(|fi| fi.inner(&f_p_inv)),
    ))
}

/// The scaled curvature block
/// `(H_P)_{ij} = 1/2 F_P^i . (L_{F_P}^{-1} L_{V_P} + L_{V_P} L_{F_P}^{-1}) F_P^j`,
/// evaluated with one Lyapunov solve per column and symmetric by
/// construction of the returned matrix.
pub fn assemble_hp(scaling: &Scaling) -> Result<DMatrix<f64>, DirectionError> {
    let n = scaling.f_p_i.len();
    let mut lyap = Vec::with_capacity(n);
    let mut mixed = Vec::with_capacity(n);
    for fi in &scaling.f_p_i {
        lyap.push(lyapunov_solve(&scaling.f_p, fi)?);
        mixed.push(jordan(&scaling.v_p, fi));
    }
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (lyap[i].inner(&mixed[j]) + mixed[i].inner(&lyap[j]));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// `hess f + sum_i y_i hess g_i`: the constraint part of the Lagrangian
/// Hessian (the semidefinite term is affine in x and contributes nothing).
pub fn lagrangian_hessian(
    problem: &SisdpProblem,
    reduced: &ReducedModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> DMatrix<f64> {
    assert_eq!(y.len(), reduced.p());
    let mut h = problem.objective.hessian(x);
    for (yi, m) in y.iter().zip(&reduced.maximizers) {
        h += &m.hess * *yi;
    }
    h
}

/// The QP curvature `B_P = lagrangian_hessian + H_P`, with eigenvalues below
/// 1e-8 lifted to 1 so the QP stays strongly convex. Returns the (possibly
/// lifted) matrix and whether lifting fired.
pub fn assemble_bp(
    problem: &SisdpProblem,
    reduced: &ReducedModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
    scaling: &Scaling,
) -> Result<(DMatrix<f64>, bool), DirectionError> {
    let b = lagrangian_hessian(problem, reduced, x, y) + assemble_hp(scaling)?;
    let sym = SymMatrix::from_dense_symmetrize(&b);
    let eig = sym.eigen();
    let lifted = eig.values.iter().any(|&d| d < 1e-8);
    if !lifted {
        return Ok((b, false));
    }
    let repaired = eig.recompose_with(|d| if d < 1e-8 { 1.0 } else { d });
    Ok((repaired.to_dense(), true))
}

/// A combined step in all primal-dual blocks. `dy` is aligned with the
/// reduced model the direction was computed against.
#[derive(Debug, Clone)]
pub struct Direction {
    pub dx: DVector<f64>,
    pub dy: DVector<f64>,
    pub dz: DVector<f64>,
    pub dv: SymMatrix,
    pub qp_iterations: usize,
    pub lifted: bool,
}

/// Recovers the dual cone step from the primal step:
///
/// ```text
///     dV = mu F^{-1} - V - sum_i dx_i P [1/2 (L_{F_P}^{-1} L_{V_P}
///                                            + L_{V_P} L_{F_P}^{-1}) F_P^i] P,
/// ```
///
/// specialized per scaling: the identity scaling keeps the Lyapunov solves,
/// the F^{-1/2} scaling collapses to `sym(F^{-1} dF V)`, and the NT scaling
/// to `W^{-1} dF W^{-1}`.
pub fn recover_dv(
    scaling: &Scaling,
    mu: f64,
    v: &SymMatrix,
    df: &SymMatrix,
) -> Result<SymMatrix, DirectionError> {
    let mut dv = scaling.f_inv.scale(mu);
    dv.axpy(-1.0, v);
    match scaling.kind {
        ScalingKind::Aho => {
            let a = lyapunov_solve(&scaling.f, &jordan(v, df))?;
            let b = jordan(v, &lyapunov_solve(&scaling.f, df)?);
            dv.axpy(-0.5, &a.add(&b));
        }
        ScalingKind::Hkm => {
            let prod = scaling.f_inv.to_dense() * df.to_dense() * v.to_dense();
            dv.axpy(-1.0, &SymMatrix::from_dense_symmetrize(&prod));
        }
        ScalingKind::Nt => {
            let w_inv = congruence(&scaling.p, &SymMatrix::identity(scaling.f.dim()));
            dv.axpy(-1.0, &congruence(&w_inv, df));
        }
    }
    Ok(dv)
}

pub fn delta_f(problem: &SisdpProblem, dx: &DVector<f64>) -> SymMatrix {
    let mut df = SymMatrix::zeros(problem.m);
    for (i, fi) in problem.fi.iter().enumerate() {
        df.axpy(dx[i], fi);
    }
    df
}

fn inequality_rows(reduced: &ReducedModel, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let p = reduced.p();
    let mut a = DMatrix::zeros(p, n);
    let mut b = DVector::zeros(p);
    for (i, m) in reduced.maximizers.iter().enumerate() {
        for j in 0..n {
            a[(i, j)] = m.grad[j];
        }
        b[i] = -m.value;
    }
    (a, b)
}

fn equality_rows(problem: &SisdpProblem, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let r = problem.equalities.len();
    let n = problem.n;
    let mut a = DMatrix::zeros(r, n);
    let mut b = DVector::zeros(r);
    for (t, eq) in problem.equalities.iter().enumerate() {
        for j in 0..n {
            a[(t, j)] = eq.a[j];
        }
        b[t] = eq.b - eq.a.dot(x);
    }
    (a, b)
}

/// First direction: solves the convex QP
///
/// ```text
///     min  grad f . dx + 1/2 dx' B_P dx - mu xi_P . dx
///     s.t. g_i + grad g_i . dx <= 0,    A dx = b - A x,
/// ```
///
/// whose KKT pair gives dx and the updated multipliers, then recovers dV so
/// the triple solves the scaled linearized barrier-KKT system.
pub fn first_direction(
    problem: &SisdpProblem,
    reduced: &ReducedModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
    v: &SymMatrix,
    mu: f64,
    kind: ScalingKind,
) -> Result<Direction, DirectionError> {
    let scaling = Scaling::new(kind, problem, x, v)?;
    let xi = xi_p(&scaling)?;
    let (bp, lifted) = assemble_bp(problem, reduced, x, y, &scaling)?;
    let (a_ineq, b_ineq) = inequality_rows(reduced, problem.n);
    let (a_eq, b_eq) = equality_rows(problem, x);
    let qp = QpProblem {
        h: bp,
        q: problem.objective.gradient(x) - xi * mu,
        a_ineq,
        b_ineq,
        a_eq,
        b_eq,
    };
    let sol = solve_qp(&qp)?;
    let dv = recover_dv(&scaling, mu, v, &delta_f(problem, &sol.x))?;
    Ok(Direction {
        dy: &sol.lambda - y,
        dz: &sol.nu - z,
        dx: sol.x,
        dv,
        qp_iterations: sol.iterations,
        lifted,
    })
}

/// The scaled-complementarity coefficient of dx_i in svec coordinates:
/// `1/2 (L_{V_P} + L_{F_P} L_{V_P} L_{F_P}^{-1}) F_P^i`.
fn complementarity_column(scaling: &Scaling, i: usize) -> Result<SymMatrix, DirectionError> {
    let fi = &scaling.f_p_i[i];
    let direct = jordan(&scaling.v_p, fi);
    let conjugated = jordan(&scaling.f_p, &jordan(&scaling.v_p, &lyapunov_solve(&scaling.f_p, fi)?));
    Ok(direct.add(&conjugated).scale(0.5))
}

/// Second direction at the half-step point: a square linear system that
/// keeps the stationarity and scaled-complementarity rows of the first
/// direction but replaces the complementarity inequalities with the active
/// set predicted there — `g_i + grad g_i . dx = 0` for `i` in `active`
/// (indices into `reduced`), `y_i + dy_i = 0` for the rest.
///
/// Returns `None` when the system is numerically singular (reciprocal
/// condition estimate below 1e-12); the caller treats that as a skip. The
/// other skip reason, a failed maximizer correspondence, is decided by the
/// caller before the active indices can be formed.
pub fn second_direction(
    problem: &SisdpProblem,
    reduced: &ReducedModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
    v: &SymMatrix,
    mu: f64,
    kind: ScalingKind,
    active: &[usize],
) -> Result<Option<Direction>, DirectionError> {
    let scaling = Scaling::new(kind, problem, x, v)?;
    let n = problem.n;
    let p = reduced.p();
    let r = problem.equalities.len();
    let nsv = svec_len(problem.m);
    debug_assert!(active.windows(2).all(|w| w[0] < w[1]));
    assert!(active.iter().all(|&i| i < p));

    // Unknown layout: [dx | dy | svec(dV_P) | dz].
    let dim = n + p + nsv + r;
    let mut mat = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let col_y = n;
    let col_v = n + p;
    let col_z = n + p + nsv;

    let hess_l = lagrangian_hessian(problem, reduced, x, y);
    let grad_f = problem.objective.gradient(x);
    for i in 0..n {
        for j in 0..n {
            mat[(i, j)] = hess_l[(i, j)];
        }
        for (k, m) in reduced.maximizers.iter().enumerate() {
            mat[(i, col_y + k)] = m.grad[i];
        }
        let fi_svec = scaling.f_p_i[i].svec();
        for l in 0..nsv {
            mat[(i, col_v + l)] = -fi_svec[l];
        }
        for (t, eq) in problem.equalities.iter().enumerate() {
            mat[(i, col_z + t)] = eq.a[i];
        }
        let mut resid = grad_f[i] - problem.fi[i].inner(v);
        for (k, m) in reduced.maximizers.iter().enumerate() {
            resid += y[k] * m.grad[i];
        }
        for (t, eq) in problem.equalities.iter().enumerate() {
            resid += z[t] * eq.a[i];
        }
        rhs[i] = -resid;
    }

    let row_c = n;
    let t_op = jordan_op_matrix(&scaling.f_p);
    for i in 0..n {
        let col = complementarity_column(&scaling, i)?.svec();
        for l in 0..nsv {
            mat[(row_c + l, i)] = col[l];
        }
    }
    for l in 0..nsv {
        for l2 in 0..nsv {
            mat[(row_c + l, col_v + l2)] = t_op[(l, l2)];
        }
    }
    let mut centering = jordan(&scaling.f_p, &scaling.v_p).scale(-1.0);
    centering.axpy(mu, &SymMatrix::identity(problem.m));
    let centering_svec = centering.svec();
    for l in 0..nsv {
        rhs[row_c + l] = centering_svec[l];
    }

    let mut row = n + nsv;
    for &i in active {
        let m = &reduced.maximizers[i];
        for j in 0..n {
            mat[(row, j)] = m.grad[j];
        }
        rhs[row] = -m.value;
        row += 1;
    }
    for k in 0..p {
        if active.binary_search(&k).is_err() {
            mat[(row, col_y + k)] = 1.0;
            rhs[row] = -y[k];
            row += 1;
        }
    }
    let (a_eq, b_eq) = equality_rows(problem, x);
    for t in 0..r {
        for j in 0..n {
            mat[(row, j)] = a_eq[(t, j)];
        }
        rhs[row] = b_eq[t];
        row += 1;
    }
    debug_assert_eq!(row, dim);

    let scale_back = crate::qp::equilibrate(&mut mat, &mut rhs);
    let lu = mat.clone().full_piv_lu();
    let u = lu.u();
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0_f64);
    for i in 0..dim {
        let d = u[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmax == 0.0 || dmin / dmax < 1e-12 {
        return Ok(None);
    }
    let Some(mut sol) = lu.solve(&rhs) else { return Ok(None) };
    if let Some(c) = lu.solve(&(&rhs - &mat * &sol)) {
        sol += c;
    }
    sol.component_mul_assign(&scale_back);

    let dv_p = smat(&sol.rows(col_v, nsv).into_owned(), problem.m);
    Ok(Some(Direction {
        dx: sol.rows(0, n).into_owned(),
        dy: sol.rows(col_y, p).into_owned(),
        dz: sol.rows(col_z, r).into_owned(),
        dv: congruence(&scaling.p, &dv_p),
        qp_iterations: 0,
        lifted: false,
    }))
}

fn boundary_fraction(x: &SymMatrix, d: &SymMatrix, delta: f64) -> Result<f64, DirectionError> {
    let lam = min_eig_ratio(x, d)?;
    Ok(if lam <= -1.0 { -delta / lam } else { 1.0 })
}

/// Fraction-to-boundary step: the largest s in (0, 1] of the form
/// `min(t, u)` with `t = -delta / lambda_min(F^{-1} dF)` when that
/// eigenvalue is at most -1 (else 1), and u likewise for (V, dV). The
/// result keeps both `F + s dF` and `V + s dV` positive definite.
pub fn step_size(
    f: &SymMatrix,
    df: &SymMatrix,
    v: &SymMatrix,
    dv: &SymMatrix,
    delta_step: f64,
) -> Result<f64, DirectionError> {
    assert!(delta_step > 0.0 && delta_step < 1.0);
    let t = boundary_fraction(f, df, delta_step)?;
    let u = boundary_fraction(v, dv, delta_step)?;
    Ok(t.min(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{IndexSet, IndexedConstraint, LinearEquality, Objective};
    use crate::reduction::{detect_maximizers, Maximizer, MaximizerKind, ReductionConfig};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    struct QuadObjective {
        m: DMatrix<f64>,
        c: DVector<f64>,
    }

    impl Objective for QuadObjective {
        fn value(&self, x: &DVector<f64>) -> f64 {
            0.5 * (&self.m * x).dot(x) + self.c.dot(x)
        }
        fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            &self.m * x + &self.c
        }
        fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            self.m.clone()
        }
    }

    /// g(x, tau) = x1 + x2 tau + x3 tau^2 + x4 tau^3 - (tau - 0.4)^2 - d0,
    /// strictly concave in tau for small x, linear in x.
    struct PolyConcave {
        d0: f64,
    }

    impl IndexedConstraint for PolyConcave {
        fn value(&self, x: &DVector<f64>, tau: f64) -> f64 {
            x[0] + x[1] * tau + x[2] * tau * tau + x[3] * tau.powi(3)
                - (tau - 0.4).powi(2)
                - self.d0
        }
        fn grad_x(&self, _x: &DVector<f64>, tau: f64) -> DVector<f64> {
            DVector::from_vec(vec![1.0, tau, tau * tau, tau.powi(3)])
        }
        fn hess_xx(&self, _x: &DVector<f64>, _tau: f64) -> DMatrix<f64> {
            DMatrix::zeros(4, 4)
        }
        fn dtau(&self, x: &DVector<f64>, tau: f64) -> f64 {
            x[1] + 2.0 * x[2] * tau + 3.0 * x[3] * tau * tau - 2.0 * (tau - 0.4)
        }
        fn dtau2(&self, x: &DVector<f64>, tau: f64) -> f64 {
            2.0 * x[2] + 6.0 * x[3] * tau - 2.0
        }
        fn grad_x_dtau(&self, _x: &DVector<f64>, tau: f64) -> DVector<f64> {
            DVector::from_vec(vec![0.0, 1.0, 2.0 * tau, 3.0 * tau * tau])
        }
    }

    fn rand_sym(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> SymMatrix {
        SymMatrix::from_fn(m, |_, _| rng.gen_range(-scale..scale))
    }

    fn rand_pd(rng: &mut ChaCha8Rng, m: usize) -> SymMatrix {
        let g = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let gg = &g * g.transpose();
        let mut out = SymMatrix::from_dense_symmetrize(&(gg / m as f64));
        out.axpy(0.3, &SymMatrix::identity(m));
        out
    }

    /// n = m = 1, f(x) = x, F(x) = x: the barrier-KKT system is x v = mu,
    /// 1 - v = 0, so the exact point is (x, v) = (mu, 1).
    fn scalar_problem() -> SisdpProblem {
        SisdpProblem {
            n: 1,
            m: 1,
            objective: Arc::new(QuadObjective {
                m: DMatrix::zeros(1, 1),
                c: DVector::from_vec(vec![1.0]),
            }),
            constraint: Arc::new(PolyConcave { d0: 0.0 }),
            f0: SymMatrix::zeros(1),
            fi: vec![SymMatrix::identity(1)],
            index_set: IndexSet::Empty,
            equalities: vec![],
            default_x0: DVector::from_vec(vec![1.0]),
        }
    }

    /// Convex four-variable problem over a 3x3 cone with the concave-in-tau
    /// constraint; optionally one linear equality.
    fn quartic_cone_problem(rng: &mut ChaCha8Rng, with_equality: bool) -> SisdpProblem {
        let n = 4;
        let m = 3;
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let obj = QuadObjective {
            m: &g * g.transpose() + DMatrix::identity(n, n) * 0.5,
            c: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
        };
        let mut f0 = rand_sym(rng, m, 0.2);
        f0.axpy(1.5, &SymMatrix::identity(m));
        let fi = (0..n).map(|_| rand_sym(rng, m, 0.5)).collect();
        let equalities = if with_equality {
            vec![LinearEquality {
                a: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
                b: rng.gen_range(-0.2..0.2),
            }]
        } else {
            vec![]
        };
        SisdpProblem {
            n,
            m,
            objective: Arc::new(obj),
            constraint: Arc::new(PolyConcave { d0: 0.3 }),
            f0,
            fi,
            index_set: IndexSet::Interval { lo: 0.0, hi: 1.0 },
            equalities,
            default_x0: DVector::zeros(n),
        }
    }

    fn interior_x(problem: &SisdpProblem, rng: &mut ChaCha8Rng) -> DVector<f64> {
        loop {
            let x = DVector::from_fn(problem.n, |_, _| rng.gen_range(-0.2..0.2));
            if problem.f_matrix(&x).is_pd() {
                return x;
            }
        }
    }

    const KINDS: [ScalingKind; 3] = [ScalingKind::Aho, ScalingKind::Hkm, ScalingKind::Nt];

    #[test]
    fn xi_is_the_scalar_log_derivative() {
        let p = scalar_problem();
        let x = DVector::from_vec(vec![2.0]);
        let v = SymMatrix::scaled_identity(1, 3.0);
        for kind in KINDS {
            let s = Scaling::new(kind, &p, &x, &v).unwrap();
            let xi = xi_p(&s).unwrap();
            assert_relative_eq!(xi[0], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn xi_reduces_to_traces_at_the_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = quartic_cone_problem(&mut rng, false);
        p.f0 = SymMatrix::identity(3);
        let x = DVector::zeros(4);
        let v = rand_pd(&mut rng, 3);
        let s = Scaling::new(ScalingKind::Aho, &p, &x, &v).unwrap();
        let xi = xi_p(&s).unwrap();
        for i in 0..4 {
            let trace: f64 = (0..3).map(|k| p.fi[i].get(k, k)).sum();
            assert_relative_eq!(xi[i], trace, epsilon = 1e-12);
        }
    }

    #[test]
    fn xi_is_invariant_under_the_scaling_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = quartic_cone_problem(&mut rng, false);
            let x = interior_x(&p, &mut rng);
            let v = rand_pd(&mut rng, 3);
            let xis: Vec<DVector<f64>> = KINDS
                .iter()
                .map(|&k| xi_p(&Scaling::new(k, &p, &x, &v).unwrap()).unwrap())
                .collect();
            let scale = 1.0 + xis[0].amax();
            for other in &xis[1..] {
                assert!((other - &xis[0]).amax() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn hp_is_the_gram_matrix_at_the_identity_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = quartic_cone_problem(&mut rng, false);
        p.f0 = SymMatrix::identity(3);
        let x = DVector::zeros(4);
        let v = SymMatrix::identity(3);
        let s = Scaling::new(ScalingKind::Aho, &p, &x, &v).unwrap();
        let h = assemble_hp(&s).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(h[(i, j)], p.fi[i].inner(&p.fi[j]), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn hp_scalar_closed_form() {
        let p = scalar_problem();
        let x = DVector::from_vec(vec![2.0]);
        let v = SymMatrix::scaled_identity(1, 3.0);
        let s = Scaling::new(ScalingKind::Aho, &p, &x, &v).unwrap();
        let h = assemble_hp(&s).unwrap();
        // f1^2 v / f(x) with f1 = 1.
        assert_relative_eq!(h[(0, 0)], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn hp_matches_the_unfactored_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for case in 0..30 {
            let p = quartic_cone_problem(&mut rng, false);
            let x = interior_x(&p, &mut rng);
            let v = rand_pd(&mut rng, 3);
            let kind = KINDS[case % 3];
            let s = Scaling::new(kind, &p, &x, &v).unwrap();
            let h = assemble_hp(&s).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let a = lyapunov_solve(&s.f_p, &jordan(&s.v_p, &s.f_p_i[j])).unwrap();
                    let b = jordan(&s.v_p, &lyapunov_solve(&s.f_p, &s.f_p_i[j]).unwrap());
                    let raw = 0.5 * s.f_p_i[i].inner(&a.add(&b));
                    assert!(
                        (h[(i, j)] - raw).abs() <= 1e-9 * (1.0 + raw.abs()),
                        "case {case} ({i},{j}): {} vs raw {raw}",
                        h[(i, j)]
                    );
                    assert_eq!(h[(i, j)], h[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn hp_positive_definite_near_the_central_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..200 {
            let p = quartic_cone_problem(&mut rng, false);
            let x = interior_x(&p, &mut rng);
            let f = p.f_matrix(&x);
            let mu = rng.gen_range(0.05..1.0_f64);
            // V = mu F^{-1} + small perturbation keeps |F o V - mu I| well
            // below mu.
            let mut v = f.inv_pd().unwrap().scale(mu);
            let e = rand_sym(&mut rng, 3, 1.0);
            let eps = 0.05 * mu / ((1.0 + e.norm_spectral()) * (1.0 + f.norm_spectral()));
            v.axpy(eps, &e);
            let dev = jordan(&f, &v).sub(&SymMatrix::scaled_identity(3, mu)).norm_fro();
            assert!(dev < mu, "case {case}: construction broke the hypothesis");
            let s = Scaling::new(ScalingKind::Aho, &p, &x, &v).unwrap();
            let h = assemble_hp(&s).unwrap();
            let lam = SymMatrix::from_dense_symmetrize(&h).min_eig();
            assert!(lam > 0.0, "case {case}: min eigenvalue {lam:.3e}");
        }
    }

    #[test]
    fn hp_positive_definite_when_the_scaled_pair_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for case in 0..200 {
            let p = quartic_cone_problem(&mut rng, false);
            let x = interior_x(&p, &mut rng);
            let v = rand_pd(&mut rng, 3);
            let kind = if case % 2 == 0 { ScalingKind::Hkm } else { ScalingKind::Nt };
            let s = Scaling::new(kind, &p, &x, &v).unwrap();
            let comm = {
                let a = s.f_p.to_dense() * s.v_p.to_dense();
                let c = &a - a.transpose();
                c.norm()
            };
            assert!(comm <= 1e-7 * (1.0 + s.f_p.norm_fro() * s.v_p.norm_fro()), "case {case}");
            let h = assemble_hp(&s).unwrap();
            let lam = SymMatrix::from_dense_symmetrize(&h).min_eig();
            assert!(lam > 0.0, "case {case}: min eigenvalue {lam:.3e}");
        }
    }

    #[test]
    fn scaling_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = quartic_cone_problem(&mut rng, false);
            let x = interior_x(&p, &mut rng);
            let v = rand_pd(&mut rng, 3);
            let hkm = Scaling::new(ScalingKind::Hkm, &p, &x, &v).unwrap();
            let dev = hkm.f_p.sub(&SymMatrix::identity(3)).norm_fro();
            assert!(dev <= 1e-10 * (1.0 + hkm.f.norm_fro()));
            let nt = Scaling::new(ScalingKind::Nt, &p, &x, &v).unwrap();
            let dev = nt.f_p.sub(&nt.v_p).norm_fro();
            assert!(dev <= 1e-8 * (1.0 + nt.v_p.norm_fro()));
        }
    }

    fn zero_cone_problem(hessian: DMatrix<f64>) -> SisdpProblem {
        let n = hessian.nrows();
        SisdpProblem {
            n,
            m: 1,
            objective: Arc::new(QuadObjective { m: hessian, c: DVector::zeros(n) }),
            constraint: Arc::new(PolyConcave { d0: 0.0 }),
            f0: SymMatrix::identity(1),
            fi: vec![SymMatrix::zeros(1); n],
            index_set: IndexSet::Empty,
            equalities: vec![],
            default_x0: DVector::zeros(n),
        }
    }

    #[test]
    fn bp_lifts_negative_curvature_to_one() {
        let p = zero_cone_problem(DMatrix::identity(2, 2) * -2.0);
        let x = DVector::zeros(2);
        let v = SymMatrix::identity(1);
        let s = Scaling::new(ScalingKind::Aho, &p, &x, &v).unwrap();
        let reduced = ReducedModel::empty();
        let (b, lifted) = assemble_bp(&p, &reduced, &x, &DVector::zeros(0), &s).unwrap();
        assert!(lifted);
        assert!((b - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn bp_lifting_keeps_the_untouched_spectrum() {
        let p = zero_cone_problem(DMatrix::from_diagonal(&DVector::from_vec(vec![-5.0, 3.0])));
        let x = DVector::zeros(2);
        let v = SymMatrix::identity(1);
        let s = Scaling::new(ScalingKind::Aho, &p, &x, &v).unwrap();
        let (b, lifted) = assemble_bp(&p, &ReducedModel::empty(), &x, &DVector::zeros(0), &s).unwrap();
        assert!(lifted);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        assert!((b - expected).norm() < 1e-12);
    }

    #[test]
    fn bp_needs_no_lift_on_a_convex_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let p = quartic_cone_problem(&mut rng, false);
            let x = interior_x(&p, &mut rng);
            let v = rand_pd(&mut rng, 3);
            let reduced = detect_maximizers(&p, &x, &ReductionConfig::default());
            let y = DVector::from_fn(reduced.p(), |_, _| rng.gen_range(0.0..0.5));
            let s = Scaling::new(ScalingKind::Nt, &p, &x, &v).unwrap();
            let (_, lifted) = assemble_bp(&p, &reduced, &x, &y, &s).unwrap();
            assert!(!lifted);
        }
    }

    #[test]
    fn first_direction_vanishes_at_a_barrier_kkt_point() {
        let p = scalar_problem();
        let mu = 0.3;
        let x = DVector::from_vec(vec![mu]);
        let v = SymMatrix::identity(1);
        for kind in KINDS {
            let d = first_direction(
                &p,
                &ReducedModel::empty(),
                &x,
                &DVector::zeros(0),
                &DVector::zeros(0),
                &v,
                mu,
                kind,
            )
            .unwrap();
            assert!(d.dx.amax() < 1e-9, "{kind:?}: dx = {}", d.dx);
            assert!(d.dv.norm_fro() < 1e-9, "{kind:?}");
            assert!(!d.lifted);
        }
    }

    #[test]
    fn first_direction_scalar_newton_step() {
        // From (x, v) = (1, 1) at mu = 1/2 the QP reads
        // min dx^2/2 + dx/2, so dx = -1/2 and the dual step vanishes; one
        // unit step lands exactly on the barrier-KKT point (1/2, 1).
        let p = scalar_problem();
        let x = DVector::from_vec(vec![1.0]);
        let v = SymMatrix::identity(1);
        for kind in KINDS {
            let d = first_direction(
                &p,
                &ReducedModel::empty(),
                &x,
                &DVector::zeros(0),
                &DVector::zeros(0),
                &v,
                0.5,
                kind,
            )
            .unwrap();
            assert_relative_eq!(d.dx[0], -0.5, epsilon = 1e-10);
            assert!(d.dv.norm_fro() < 1e-10, "{kind:?}");
        }
    }

    #[test]
    fn recovered_dual_step_matches_the_general_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for case in 0..100 {
            let p = quartic_cone_problem(&mut rng, false);
            let x = interior_x(&p, &mut rng);
            let v = rand_pd(&mut rng, 3);
            let df = rand_sym(&mut rng, 3, 0.5);
            let mu = rng.gen_range(0.01..1.0);
            let kind = KINDS[case % 3];
            let s = Scaling::new(kind, &p, &x, &v).unwrap();

            let closed = recover_dv(&s, mu, &v, &df).unwrap();

            let df_p = congruence(&s.p, &df);
            let a = lyapunov_solve(&s.f_p, &jordan(&s.v_p, &df_p)).unwrap();
            let b = jordan(&s.v_p, &lyapunov_solve(&s.f_p, &df_p).unwrap());
            let mut general = s.f_inv.scale(mu);
            general.axpy(-1.0, &v);
            general.axpy(-1.0, &congruence(&s.p, &a.add(&b).scale(0.5)));

            let dev = closed.sub(&general).norm_fro();
            assert!(
                dev <= 1e-9 * (1.0 + general.norm_fro()),
                "case {case} {kind:?}: deviation {dev:.3e}"
            );
        }
    }

    #[test]
    fn commuting_pair_collapses_the_substitute_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let f = rand_pd(&mut rng, 4);
            // V = F + F^2 shares the eigenbasis, hence commutes with F.
            let e = f.eigen();
            let v = e.recompose_with(|d| d + d * d);
            let df = rand_sym(&mut rng, 4, 1.0);
            let substitute = jordan(&v, &df)
                .add(&jordan(&f, &jordan(&v, &lyapunov_solve(&f, &df).unwrap())))
                .scale(0.5);
            let plain = jordan(&v, &df);
            let dev = substitute.sub(&plain).norm_fro();
            assert!(dev <= 1e-9 * (1.0 + plain.norm_fro()), "deviation {dev:.3e}");
        }
    }

    /// Substitution oracle for the first direction: the computed triple must
    /// satisfy the stationarity row, the scaled complementarity row, and
    /// mixed complementarity, all re-evaluated from raw oracles.
    #[test]
    fn first_direction_solves_the_scaled_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = ReductionConfig::default();
        for case in 0..50 {
            let p = quartic_cone_problem(&mut rng, case % 2 == 0);
            let x = interior_x(&p, &mut rng);
            let f = p.f_matrix(&x);
            let mu = rng.gen_range(0.1..0.6);
            let mut v = f.inv_pd().unwrap().scale(mu);
            let e = rand_sym(&mut rng, 3, 1.0);
            v.axpy(0.02 * mu / (1.0 + e.norm_spectral()), &e);
            let reduced = detect_maximizers(&p, &x, &cfg);
            let y = DVector::from_fn(reduced.p(), |_, _| rng.gen_range(0.05..0.3));
            let z = DVector::from_fn(p.equalities.len(), |_, _| rng.gen_range(-0.5..0.5));
            let kind = KINDS[case % 3];

            let d = first_direction(&p, &reduced, &x, &y, &z, &v, mu, kind).unwrap();
            assert!(!d.lifted, "case {case}: unexpected lifting");

            let grad_f = p.objective.gradient(&x);
            let scale = 1.0 + grad_f.amax() + mu;

            // Stationarity row.
            let mut station = grad_f + lagrangian_hessian(&p, &reduced, &x, &y) * &d.dx;
            let v_new = v.add(&d.dv);
            for (k, m) in reduced.maximizers.iter().enumerate() {
                station += &m.grad * (y[k] + d.dy[k]);
            }
            for (t, eq) in p.equalities.iter().enumerate() {
                station += &eq.a * (z[t] + d.dz[t]);
            }
            for i in 0..p.n {
                station[i] -= p.fi[i].inner(&v_new);
            }
            assert!(station.amax() <= 1e-8 * scale, "case {case}: stationarity {:.3e}", station.amax());

            // Scaled complementarity row.
            let s = Scaling::new(kind, &p, &x, &v).unwrap();
            let dv_p = congruence(&s.p_inv, &d.dv);
            let df_p = congruence(&s.p, &delta_f(&p, &d.dx));
            let mut comp = jordan(&s.f_p, &s.v_p.add(&dv_p));
            let substitute = jordan(&s.v_p, &df_p)
                .add(&jordan(&s.f_p, &jordan(&s.v_p, &lyapunov_solve(&s.f_p, &df_p).unwrap())))
                .scale(0.5);
            comp.axpy(1.0, &substitute);
            comp.axpy(-mu, &SymMatrix::identity(3));
            assert!(
                comp.norm_fro() <= 1e-8 * scale,
                "case {case} {kind:?}: complementarity {:.3e}",
                comp.norm_fro()
            );

            // Mixed complementarity of the multiplier update.
            for (k, m) in reduced.maximizers.iter().enumerate() {
                let lambda = y[k] + d.dy[k];
                let slack = m.value + m.grad.dot(&d.dx);
                assert!(lambda >= 0.0, "case {case}");
                assert!(slack <= 1e-8 * scale, "case {case}: slack {slack:.3e}");
                assert!(
                    (lambda * slack).abs() <= 1e-8 * scale,
                    "case {case}: product {:.3e}",
                    lambda * slack
                );
            }

            // Equality row.
            for eq in &p.equalities {
                let res = eq.a.dot(&(&x + &d.dx)) - eq.b;
                assert!(res.abs() <= 1e-8 * scale, "case {case}: equality {res:.3e}");
            }
        }
    }

    #[test]
    fn second_direction_vanishes_at_a_barrier_kkt_point() {
        let p = scalar_problem();
        let mu = 0.25;
        let x = DVector::from_vec(vec![mu]);
        let v = SymMatrix::identity(1);
        for kind in KINDS {
            let d = second_direction(
                &p,
                &ReducedModel::empty(),
                &x,
                &DVector::zeros(0),
                &DVector::zeros(0),
                &v,
                mu,
                kind,
                &[],
            )
            .unwrap()
            .expect("system is nonsingular at an interior point");
            assert!(d.dx.amax() < 1e-9, "{kind:?}");
            assert!(d.dv.norm_fro() < 1e-9, "{kind:?}");
        }
    }

    /// Substitution oracle for the second direction's four equation blocks.
    #[test]
    fn second_direction_solves_its_linear_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = ReductionConfig::default();
        for case in 0..50 {
            let p = quartic_cone_problem(&mut rng, case % 2 == 1);
            let x = interior_x(&p, &mut rng);
            let f = p.f_matrix(&x);
            let mu = rng.gen_range(0.1..0.6);
            let mut v = f.inv_pd().unwrap().scale(mu);
            let e = rand_sym(&mut rng, 3, 1.0);
            v.axpy(0.02 * mu / (1.0 + e.norm_spectral()), &e);
            let reduced = detect_maximizers(&p, &x, &cfg);
            let y = DVector::from_fn(reduced.p(), |_, _| rng.gen_range(0.05..0.3));
            let z = DVector::from_fn(p.equalities.len(), |_, _| rng.gen_range(-0.5..0.5));
            let kind = KINDS[case % 3];
            let active: Vec<usize> = if reduced.p() > 0 { vec![0] } else { vec![] };

            let d = second_direction(&p, &reduced, &x, &y, &z, &v, mu, kind, &active)
                .unwrap()
                .unwrap_or_else(|| panic!("case {case}: unexpected skip"));

            let grad_f = p.objective.gradient(&x);
            let scale = 1.0 + grad_f.amax() + mu;

            let mut station = grad_f + lagrangian_hessian(&p, &reduced, &x, &y) * &d.dx;
            let v_new = v.add(&d.dv);
            for (k, m) in reduced.maximizers.iter().enumerate() {
                station += &m.grad * (y[k] + d.dy[k]);
            }
            for (t, eq) in p.equalities.iter().enumerate() {
                station += &eq.a * (z[t] + d.dz[t]);
            }
            for i in 0..p.n {
                station[i] -= p.fi[i].inner(&v_new);
            }
            assert!(station.amax() <= 1e-8 * scale, "case {case}: stationarity {:.3e}", station.amax());

            let s = Scaling::new(kind, &p, &x, &v).unwrap();
            let dv_p = congruence(&s.p_inv, &d.dv);
            let df_p = congruence(&s.p, &delta_f(&p, &d.dx));
            let mut comp = jordan(&s.f_p, &s.v_p.add(&dv_p));
            let substitute = jordan(&s.v_p, &df_p)
                .add(&jordan(&s.f_p, &jordan(&s.v_p, &lyapunov_solve(&s.f_p, &df_p).unwrap())))
                .scale(0.5);
            comp.axpy(1.0, &substitute);
            comp.axpy(-mu, &SymMatrix::identity(3));
            assert!(
                comp.norm_fro() <= 1e-8 * scale,
                "case {case} {kind:?}: complementarity {:.3e}",
                comp.norm_fro()
            );

            for &i in &active {
                let m = &reduced.maximizers[i];
                let res = m.value + m.grad.dot(&d.dx);
                assert!(res.abs() <= 1e-8 * scale, "case {case}: active row {res:.3e}");
            }
            for k in 0..reduced.p() {
                if !active.contains(&k) {
                    assert!((y[k] + d.dy[k]).abs() <= 1e-10, "case {case}: inactive row {k}");
                }
            }
            for eq in &p.equalities {
                let res = eq.a.dot(&(&x + &d.dx)) - eq.b;
                assert!(res.abs() <= 1e-8 * scale, "case {case}: equality {res:.3e}");
            }
        }
    }

    #[test]
    fn second_direction_skips_a_rank_deficient_active_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut p = quartic_cone_problem(&mut rng, false);
        p.n = 2;
        p.fi = vec![
            SymMatrix::scaled_identity(3, 0.3),
            SymMatrix::scaled_identity(3, 0.2),
        ];
        p.objective = Arc::new(QuadObjective {
            m: DMatrix::identity(2, 2),
            c: DVector::zeros(2),
        });
        p.default_x0 = DVector::zeros(2);
        let x = DVector::zeros(2);
        let v = rand_pd(&mut rng, 3);
        let grad = DVector::from_vec(vec![1.0, 0.0]);
        let dup = Maximizer {
            tau: 0.2,
            kind: MaximizerKind::Fixed,
            value: -0.1,
            grad: grad.clone(),
            hess: DMatrix::zeros(2, 2),
            dtau_dx: DVector::zeros(2),
        };
        let reduced = ReducedModel {
            maximizers: vec![dup.clone(), Maximizer { tau: 0.7, ..dup }],
            global_max: -0.1,
        };
        let y = DVector::from_vec(vec![0.1, 0.1]);
        let z = DVector::zeros(0);

        // Duplicate active gradients make the system singular: skip.
        let skipped = second_direction(
            &p, &reduced, &x, &y, &z, &v, 0.3, ScalingKind::Aho, &[0, 1],
        )
        .unwrap();
        assert!(skipped.is_none());

        // Activating only one of them leaves the system solvable.
        let solved = second_direction(
            &p, &reduced, &x, &y, &z, &v, 0.3, ScalingKind::Aho, &[0],
        )
        .unwrap();
        assert!(solved.is_some());
    }

    #[test]
    fn step_size_examples() {
        let i2 = SymMatrix::identity(2);
        let zero = SymMatrix::zeros(2);
        assert_eq!(step_size(&i2, &zero, &i2, &zero, 0.9).unwrap(), 1.0);

        let df = SymMatrix::scaled_identity(2, -2.0);
        let s = step_size(&i2, &df, &i2, &zero, 0.9).unwrap();
        assert_relative_eq!(s, 0.45, epsilon = 1e-12);

        let df = SymMatrix::scaled_identity(2, -0.5);
        assert_eq!(step_size(&i2, &df, &i2, &zero, 0.9).unwrap(), 1.0);
    }

    #[test]
    fn step_size_preserves_definiteness() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for case in 0..500 {
            let m = rng.gen_range(2..=4);
            let f = rand_pd(&mut rng, m);
            let v = rand_pd(&mut rng, m);
            let df = rand_sym(&mut rng, m, 2.0);
            let dv = rand_sym(&mut rng, m, 2.0);
            let s = step_size(&f, &df, &v, &dv, 0.9).unwrap();
            assert!(s > 0.0 && s <= 1.0);
            let mut fs = f.clone();
            fs.axpy(s, &df);
            let mut vs = v.clone();
            vs.axpy(s, &dv);
            assert!(fs.is_pd(), "case {case}: F side lost definiteness at s = {s}");
            assert!(vs.is_pd(), "case {case}: V side lost definiteness at s = {s}");
        }
    }

    /// Paired block sequences where the perturbations live on disjoint
    /// eigenblocks: their Jordan product vanishes identically and the
    /// perturbed pair stays positive definite all the way down the central
    /// path.
    #[test]
    fn disjoint_block_perturbations_keep_definiteness() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let m1 = 2;
        let m2 = 2;
        let m = m1 + m2;
        // Random orthogonal basis from the QR factors of a random matrix.
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0_f64));
        let o = a.qr().q();
        let d_big: Vec<f64> = (0..m1).map(|_| rng.gen_range(0.5..2.0)).collect();
        let d_small: Vec<f64> = (0..m2).map(|_| rng.gen_range(0.5..2.0)).collect();
        let diag_in_basis = |entries: &[f64]| {
            let d = DMatrix::from_diagonal(&DVector::from_vec(entries.to_vec()));
            SymMatrix::from_dense_symmetrize(&(&o * d * o.transpose()))
        };

        for r in 5..=20 {
            let mu = 2.0_f64.powi(-r);
            let mu_hat = mu.powf(1.5);
            let x_entries: Vec<f64> = d_big
                .iter()
                .cloned()
                .chain(d_small.iter().map(|d| mu / d))
                .collect();
            let y_entries: Vec<f64> = d_big
                .iter()
                .map(|d| mu / d)
                .chain(d_small.iter().cloned())
                .collect();
            let x = diag_in_basis(&x_entries);
            let y = diag_in_basis(&y_entries);

            let dx_entries: Vec<f64> = std::iter::repeat(0.0)
                .take(m1)
                .chain(d_small.iter().map(|d| (mu_hat - mu) / d))
                .collect();
            let dy_entries: Vec<f64> = d_big
                .iter()
                .map(|d| (mu_hat - mu) / d)
                .chain(std::iter::repeat(0.0).take(m2))
                .collect();
            let dx = diag_in_basis(&dx_entries);
            let mut dy = diag_in_basis(&dy_entries);
            // Noise at the mu^2 scale keeps the product bound.
            dy.axpy(0.1 * mu * mu, &rand_sym(&mut rng, m, 1.0));

            let prod = jordan(&dx, &dy).norm_fro();
            assert!(
                prod <= 0.2 * mu * mu * (1.0 + dx.norm_fro()),
                "r = {r}: product norm {prod:.3e}"
            );
            assert!(x.add(&dx).is_pd(), "r = {r}: X side");
            assert!(y.add(&dy).is_pd(), "r = {r}: Y side");
        }
    }
}
