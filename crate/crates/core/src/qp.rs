//! Dense convex quadratic programming.
//!
//! Solves `min 0.5 x' H x + q' x` subject to `A x <= b` and `Aeq x = beq`
//! with H positive definite, at the small sizes the step computation
//! produces (n up to a few dozen, a handful of inequalities). An infeasible
//! start Mehrotra predictor-corrector drives the iterate close, then an
//! active-set polish solves the identified equality system exactly so that
//! inactive multipliers are literally zero and active constraints hold to
//! linear-solve accuracy.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("interior point iteration limit reached (primal may be infeasible)")]
    MaxIterations,
    #[error("QP solve did not reach the required accuracy: {0}")]
    Inaccurate(String),
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub q: DVector<f64>,
    /// Inequalities `a_ineq x <= b_ineq`; may have zero rows.
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    /// Equalities `a_eq x = b_eq`; may have zero rows.
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Inequality multipliers: nonnegative, exactly zero off the active set.
    /// Stationarity reads `H x + q + a_ineq' lambda + a_eq' nu = 0`.
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
    pub iterations: usize,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.h * x).dot(x) + self.q.dot(x)
    }

    fn scale(&self) -> f64 {
        1.0 + self.q.amax_or_zero() + self.b_ineq.amax_or_zero() + self.b_eq.amax_or_zero()
    }
}

trait AmaxOrZero {
    fn amax_or_zero(&self) -> f64;
}

impl AmaxOrZero for DVector<f64> {
    fn amax_or_zero(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.amax()
        }
    }
}

/// Solves the saddle system with the listed inequality rows treated as
/// equalities:
///
/// ```text
///     [ H     Aeq'  Aact' ] [x   ]   [-q  ]
///     [ Aeq   0     0     ] [nu  ] = [beq ]
///     [ Aact  0     0     ] [lact]   [bact]
/// ```
///
/// Falls back to a least-squares solve when the matrix is singular (for
/// instance when active rows are linearly dependent).
fn solve_active_kkt(
    qp: &QpProblem,
    active: &[usize],
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = qp.n();
    let r = qp.a_eq.nrows();
    let a = active.len();
    let dim = n + r + a;
    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    if r > 0 {
        m.view_mut((0, n), (n, r)).copy_from(&qp.a_eq.transpose());
        m.view_mut((n, 0), (r, n)).copy_from(&qp.a_eq);
    }
    for (k, &i) in active.iter().enumerate() {
        for j in 0..n {
            m[(j, n + r + k)] = qp.a_ineq[(i, j)];
            m[(n + r + k, j)] = qp.a_ineq[(i, j)];
        }
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&qp.q));
    rhs.rows_mut(n, r).copy_from(&qp.b_eq);
    for (k, &i) in active.iter().enumerate() {
        rhs[n + r + k] = qp.b_ineq[i];
    }

    // Equilibrate before factoring: near the boundary the condensed Hessian
    // block outweighs the constraint borders by many orders of magnitude,
    // and the unbalanced factorization loses the small solution components.
    let d = equilibrate(&mut m, &mut rhs);
    let lu = m.clone().full_piv_lu();
    let sol = match lu.solve(&rhs) {
        Some(mut s) => {
            if let Some(c) = lu.solve(&(&rhs - &m * &s)) {
                s += c;
            }
            s.component_mul_assign(&d);
            s
        }
        None => {
            let mut s = m.svd(true, true).solve(&rhs, 1e-13).ok()?;
            s.component_mul_assign(&d);
            s
        }
    };
    let x = sol.rows(0, n).into_owned();
    let nu = sol.rows(n, r).into_owned();
    let lact = sol.rows(n + r, a).into_owned();
    Some((x, nu, lact))
}

/// Two-sided Ruiz equilibration in place; rows are rescaled together with
/// `rhs`, and the returned diagonal maps the scaled solution back to the
/// original variables.
pub(crate) fn equilibrate(m: &mut DMatrix<f64>, rhs: &mut DVector<f64>) -> DVector<f64> {
    let dim = m.nrows();
    let mut c = DVector::from_element(dim, 1.0);
    for _ in 0..3 {
        for i in 0..dim {
            let norm = m.row(i).amax();
            if norm > 0.0 {
                let s = 1.0 / norm.sqrt();
                for j in 0..dim {
                    m[(i, j)] *= s;
                }
                rhs[i] *= s;
            }
        }
        for j in 0..dim {
            let norm = m.column(j).amax();
            if norm > 0.0 {
                let s = 1.0 / norm.sqrt();
                for i in 0..dim {
                    m[(i, j)] *= s;
                }
                c[j] *= s;
            }
        }
    }
    c
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a = 1.0_f64;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

fn kkt_residual(qp: &QpProblem, x: &DVector<f64>, lambda: &DVector<f64>, nu: &DVector<f64>) -> f64 {
    let mut stat = &qp.h * x + &qp.q;
    if qp.a_ineq.nrows() > 0 {
        stat += qp.a_ineq.transpose() * lambda;
    }
    if qp.a_eq.nrows() > 0 {
        stat += qp.a_eq.transpose() * nu;
    }
    let mut res = stat.amax_or_zero();
    if qp.a_eq.nrows() > 0 {
        res = res.max((&qp.a_eq * x - &qp.b_eq).amax_or_zero());
    }
    if qp.a_ineq.nrows() > 0 {
        let viol = &qp.a_ineq * x - &qp.b_ineq;
        for i in 0..viol.len() {
            res = res.max(viol[i].max(0.0));
            // Complementarity: active multipliers pair with tight rows.
            if lambda[i] > 0.0 {
                res = res.max(viol[i].abs());
            }
        }
    }
    res
}

/// Active-set clean-up: starting from a guessed active set, repeatedly solve
/// the corresponding equality system, dropping negative multipliers and
/// adding violated rows, until the KKT conditions hold combinatorially.
fn polish(qp: &QpProblem, mut active: Vec<usize>) -> Result<QpSolution, QpError> {
    let p = qp.a_ineq.nrows();
    let feas_tol = 1e-11 * qp.scale();
    for _ in 0..50 {
        let (x, nu, lact) = solve_active_kkt(qp, &active)
            .ok_or_else(|| QpError::Inaccurate("singular active-set system".into()))?;

        if let Some(k) = (0..active.len()).min_by(|&a, &b| lact[a].total_cmp(&lact[b])) {
            if lact[k] < -1e-12 {
                active.remove(k);
                continue;
            }
        }

        let mut worst: Option<(usize, f64)> = None;
        if p > 0 {
            let viol = &qp.a_ineq * &x - &qp.b_ineq;
            for i in 0..p {
                if !active.contains(&i) && viol[i] > feas_tol {
                    if worst.map_or(true, |(_, w)| viol[i] > w) {
                        worst = Some((i, viol[i]));
                    }
                }
            }
        }
        if let Some((i, _)) = worst {
            active.push(i);
            active.sort_unstable();
            continue;
        }

        let mut lambda = DVector::zeros(p);
        for (k, &i) in active.iter().enumerate() {
            lambda[i] = lact[k].max(0.0);
        }
        return Ok(QpSolution { x, lambda, nu, iterations: 0 });
    }
    Err(QpError::Inaccurate("active-set polish cycled".into()))
}

/// Solves the QP to KKT residual at most `1e-10 * (1 + |q| + |b|)`.
///
/// Errors on iteration exhaustion (e.g. infeasible constraints) or when the
/// polished point fails the residual check.
pub fn solve_qp(qp: &QpProblem) -> Result<QpSolution, QpError> {
    let n = qp.n();
    let p = qp.a_ineq.nrows();
    let r = qp.a_eq.nrows();
    assert_eq!(qp.h.nrows(), n);
    assert_eq!(qp.h.ncols(), n);
    assert_eq!(qp.b_ineq.len(), p);
    assert_eq!(qp.b_eq.len(), r);
    let scale = qp.scale();
    let tol = 1e-10 * scale;

    if p == 0 {
        let sol = polish(qp, vec![])?;
        let res = kkt_residual(qp, &sol.x, &sol.lambda, &sol.nu);
        if res > tol {
            return Err(QpError::Inaccurate(format!("residual {res:.3e} > {tol:.3e}")));
        }
        return Ok(sol);
    }

    // Infeasible-start interior point on the inequality slacks.
    let (mut x, mut nu) = match solve_active_kkt(qp, &[]) {
        Some((x, nu, _)) => (x, nu),
        None => (DVector::zeros(n), DVector::zeros(r)),
    };
    let mut s = {
        let slack = &qp.b_ineq - &qp.a_ineq * &x;
        DVector::from_fn(p, |i, _| slack[i].max(1.0))
    };
    let mut lambda = DVector::from_element(p, 1.0);

    let mut iterations = 0;
    let mut converged = false;
    for iter in 0..100 {
        iterations = iter + 1;
        let mut r_d = &qp.h * &x + &qp.q + qp.a_ineq.transpose() * &lambda;
        if r > 0 {
            r_d += qp.a_eq.transpose() * &nu;
        }
        let r_eq = if r > 0 { &qp.a_eq * &x - &qp.b_eq } else { DVector::zeros(0) };
        let r_p = &qp.a_ineq * &x + &s - &qp.b_ineq;
        let mu = s.dot(&lambda) / p as f64;

        if r_d.amax_or_zero().max(r_eq.amax_or_zero()).max(r_p.amax_or_zero()) <= 0.1 * tol
            && mu <= 1e-12 * scale
        {
            converged = true;
            break;
        }

        // Normal system in (dx, dnu, dlambda) after eliminating the slacks.
        let dim = n + r + p;
        let mut mmat = DMatrix::zeros(dim, dim);
        mmat.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        if r > 0 {
            mmat.view_mut((0, n), (n, r)).copy_from(&qp.a_eq.transpose());
            mmat.view_mut((n, 0), (r, n)).copy_from(&qp.a_eq);
        }
        mmat.view_mut((0, n + r), (n, p)).copy_from(&qp.a_ineq.transpose());
        mmat.view_mut((n + r, 0), (p, n)).copy_from(&qp.a_ineq);
        for i in 0..p {
            mmat[(n + r + i, n + r + i)] = -s[i] / lambda[i];
        }
        let lu = mmat.full_piv_lu();

        let solve_with = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, n).copy_from(&(-&r_d));
            if r > 0 {
                rhs.rows_mut(n, r).copy_from(&(-&r_eq));
            }
            for i in 0..p {
                rhs[n + r + i] = -r_p[i] + rc[i] / lambda[i];
            }
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dnu = sol.rows(n, r).into_owned();
            let dl = sol.rows(n + r, p).into_owned();
            let ds = DVector::from_fn(p, |i, _| -(rc[i] + s[i] * dl[i]) / lambda[i]);
            Some((dx, dnu, dl, ds))
        };

        let rc_aff = DVector::from_fn(p, |i, _| s[i] * lambda[i]);
        let Some((_, _, dl_aff, ds_aff)) = solve_with(&rc_aff) else { break };
        let alpha_aff = max_step(&s, &ds_aff).min(max_step(&lambda, &dl_aff));
        let mu_aff = (0..p)
            .map(|i| (s[i] + alpha_aff * ds_aff[i]) * (lambda[i] + alpha_aff * dl_aff[i]))
            .sum::<f64>()
            / p as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        let rc = DVector::from_fn(p, |i, _| {
            s[i] * lambda[i] - sigma * mu + ds_aff[i] * dl_aff[i]
        });
        let Some((dx, dnu, dl, ds)) = solve_with(&rc) else { break };
        let alpha = (0.99995 * max_step(&s, &ds).min(max_step(&lambda, &dl))).min(1.0);
        if alpha < 1e-13 {
            break;
        }
        x += alpha * &dx;
        nu += alpha * &dnu;
        lambda += alpha * &dl;
        s += alpha * &ds;
    }

    if !converged && iterations >= 100 {
        return Err(QpError::MaxIterations);
    }

    let active: Vec<usize> = (0..p).filter(|&i| lambda[i] > s[i]).collect();
    let mut sol = polish(qp, active)?;
    sol.iterations = iterations;
    let res = kkt_residual(qp, &sol.x, &sol.lambda, &sol.nu);
    if res > tol {
        return Err(QpError::Inaccurate(format!("residual {res:.3e} > {tol:.3e}")));
    }
    Ok(sol)
}
