//! Problem data for semi-infinite semidefinite programs and the two built-in
//! instance families used by the experiment harness.
//!
//! A problem bundles smooth oracles for the objective and the indexed
//! constraint with the affine semidefinite map `F(x) = F_0 + sum_i x_i F_i`,
//! the index set, and optional linear equalities. Symmetric matrix variables
//! are handled through `vectorize_sym`, which lists the upper triangle
//! row-wise; the matching basis matrices `E_kk` and `E_kl + E_lk` make
//! `X(x) = sum_i x_i B_i` reproduce the matrix exactly.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symcone::{svec_len, SymMatrix};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("matrix input is not symmetric: {0}")]
    AsymmetricInput(String),
    #[error("index interval is empty: [{0}, {1}]")]
    EmptyInterval(f64, f64),
    #[error("instance generator exhausted {0} candidates without passing the filter")]
    GeneratorExhausted(usize),
}

/// Smooth objective oracle: value, gradient, Hessian.
pub trait Objective: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Oracle for the indexed constraint g(x, tau), with the x- and
/// tau-derivatives the local-reduction machinery needs.
pub trait IndexedConstraint: Send + Sync {
    fn value(&self, x: &DVector<f64>, tau: f64) -> f64;
    fn grad_x(&self, x: &DVector<f64>, tau: f64) -> DVector<f64>;
    fn hess_xx(&self, x: &DVector<f64>, tau: f64) -> DMatrix<f64>;
    fn dtau(&self, x: &DVector<f64>, tau: f64) -> f64;
    fn dtau2(&self, x: &DVector<f64>, tau: f64) -> f64;
    fn grad_x_dtau(&self, x: &DVector<f64>, tau: f64) -> DVector<f64>;
}

/// The set the constraint index ranges over.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexSet {
    /// The compact interval [lo, hi].
    Interval { lo: f64, hi: f64 },
    /// A finite list of indices (the discretization baseline's relaxations).
    Finite(Vec<f64>),
    /// No indexed constraint at all (semidefinite-only relaxations).
    Empty,
}

/// One linear equality `a . x = b`.
#[derive(Debug, Clone)]
pub struct LinearEquality {
    pub a: DVector<f64>,
    pub b: f64,
}

/// A semi-infinite semidefinite program.
#[derive(Clone)]
pub struct SisdpProblem {
    pub n: usize,
    pub m: usize,
    pub objective: Arc<dyn Objective>,
    pub constraint: Arc<dyn IndexedConstraint>,
    pub f0: SymMatrix,
    pub fi: Vec<SymMatrix>,
    pub index_set: IndexSet,
    pub equalities: Vec<LinearEquality>,
    /// Canonical starting point for this problem.
    pub default_x0: DVector<f64>,
}

impl SisdpProblem {
    /// `F(x) = F_0 + sum_i x_i F_i`.
    pub fn f_matrix(&self, x: &DVector<f64>) -> SymMatrix {
        assert_eq!(x.len(), self.n);
        let mut out = self.f0.clone();
        for (i, fi) in self.fi.iter().enumerate() {
            out.axpy(x[i], fi);
        }
        out
    }

    /// The same problem with a different index set (used for semidefinite
    /// relaxations and for the finite-index subproblems of the
    /// discretization baseline).
    pub fn with_index_set(&self, index_set: IndexSet) -> SisdpProblem {
        let mut p = self.clone();
        p.index_set = index_set;
        p
    }

    /// Equality residual `A x - b`; empty vector when there are none.
    pub fn equality_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.equalities.len(), |j, _| {
            self.equalities[j].a.dot(x) - self.equalities[j].b
        })
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.fi.len() != self.n {
            return Err(ProblemError::BadDimension(format!(
                "expected {} semidefinite coefficient matrices, got {}",
                self.n,
                self.fi.len()
            )));
        }
        if self.f0.dim() != self.m || self.fi.iter().any(|f| f.dim() != self.m) {
            return Err(ProblemError::BadDimension(
                "semidefinite coefficient matrices must all be m x m".into(),
            ));
        }
        if self.default_x0.len() != self.n {
            return Err(ProblemError::BadDimension(
                "starting point length must equal n".into(),
            ));
        }
        for eq in &self.equalities {
            if eq.a.len() != self.n {
                return Err(ProblemError::BadDimension(
                    "equality coefficient length must equal n".into(),
                ));
            }
        }
        if let IndexSet::Interval { lo, hi } = self.index_set {
            if !(lo < hi) {
                return Err(ProblemError::EmptyInterval(lo, hi));
            }
        }
        Ok(())
    }
}

/// Lists the upper triangle of X row-wise: (x_11, x_12, .., x_1m, x_22, ..).
/// Unweighted, so the roundtrip with [`unvectorize_sym`] is exact.
pub fn vectorize_sym(x: &SymMatrix) -> DVector<f64> {
    DVector::from_column_slice(x.upper_triangle())
}

/// Inverse of [`vectorize_sym`].
pub fn unvectorize_sym(v: &DVector<f64>, m: usize) -> SymMatrix {
    SymMatrix::from_upper_triangle(m, v.as_slice().to_vec())
}

/// The basis matrices matching [`vectorize_sym`]: `E_kk` for diagonal slots
/// and `E_kl + E_lk` for off-diagonal ones, so `X = sum_i vectorize_sym(X)_i B_i`.
pub fn sym_basis(m: usize) -> Vec<SymMatrix> {
    let mut out = Vec::with_capacity(svec_len(m));
    for k in 0..m {
        for l in k..m {
            let mut b = SymMatrix::zeros(m);
            b.set(k, l, 1.0);
            out.push(b);
        }
    }
    out
}

/// `(A . B_i)_i` over the [`sym_basis`] matrices: the diagonal entries of A
/// on diagonal slots, twice the off-diagonal entries elsewhere.
pub fn inner_with_basis(a: &SymMatrix) -> DVector<f64> {
    let m = a.dim();
    let mut out = DVector::zeros(svec_len(m));
    let mut idx = 0;
    for k in 0..m {
        for l in k..m {
            out[idx] = if k == l { a.get(k, k) } else { 2.0 * a.get(k, l) };
            idx += 1;
        }
    }
    out
}

fn sym_from_rows(rows: &[Vec<f64>], what: &str) -> Result<SymMatrix, ProblemError> {
    let m = rows.len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(ProblemError::BadDimension(format!("{what} must be square")));
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if rows[i][j] != rows[j][i] {
                return Err(ProblemError::AsymmetricInput(format!(
                    "{what}[{i}][{j}] != {what}[{j}][{i}]"
                )));
            }
        }
    }
    Ok(SymMatrix::from_fn(m, |i, j| rows[i][j]))
}

// ---------------------------------------------------------------------------
// Linear eigenvalue family
// ---------------------------------------------------------------------------

/// Instance data for the linear family
///
/// ```text
///     maximize    A_0 . X
///     subject to  A(tau) . X >= 0  for all tau in T,
///                 I . X = 1,  X positive semidefinite,
/// ```
///
/// where `A(tau)_ij = sum_l coeffs[i][j][l] tau^l`. Solved in minimization
/// form over `x = vectorize_sym(X)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LinearEigInstance {
    pub m: usize,
    pub q: usize,
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<f64>>,
    pub coeffs: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "T")]
    pub t: [f64; 2],
}

/// Instance data for the nonlinear family
///
/// ```text
///     minimize    x^T M x / 2 + c . x + omega ||x||^4
///     subject to  sum_i tau^{i-1} x_i <= sum_i tau^{2i} + sin(9 pi tau) + 2,
///                 X(x) + kappa I positive semidefinite,
/// ```
///
/// with `X(x)` the symmetric matrix `x` vectorizes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NonlinearQuarticInstance {
    pub m: usize,
    #[serde(rename = "M")]
    pub mat: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub omega: f64,
    pub kappa: f64,
    #[serde(rename = "T")]
    pub t: [f64; 2],
}

/// A problem file: one of the two families, tagged by `family`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family")]
pub enum ProblemFile {
    #[serde(rename = "linear_eig")]
    LinearEig(LinearEigInstance),
    #[serde(rename = "nonlinear_quartic")]
    NonlinearQuartic(NonlinearQuarticInstance),
}

impl ProblemFile {
    pub fn build(&self) -> Result<SisdpProblem, ProblemError> {
        match self {
            ProblemFile::LinearEig(inst) => build_linear_eig(inst),
            ProblemFile::NonlinearQuartic(inst) => build_nonlinear_quartic(inst),
        }
    }
}

struct LinearObjective {
    coef: DVector<f64>,
}

impl Objective for LinearObjective {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.coef.dot(x)
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.coef.clone()
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
}

/// g(x, tau) = -A(tau) . X(x), stored through the per-degree coefficient
/// vectors w_l = (A_l . B_i)_i so evaluation is a Horner pass.
struct PolynomialEigConstraint {
    w: Vec<DVector<f64>>,
}

impl PolynomialEigConstraint {
    /// Horner evaluation of `sum_l tau^l w_l . x` and its first two
    /// tau-derivatives.
    fn polys(&self, x: &DVector<f64>, tau: f64) -> (f64, f64, f64) {
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for wl in self.w.iter().rev() {
            let c = wl.dot(x);
            d2 = d2 * tau + 2.0 * d1;
            d1 = d1 * tau + v;
            v = v * tau + c;
        }
        (v, d1, d2)
    }

    fn grad_poly(&self, tau: f64, derivative: bool) -> DVector<f64> {
        let n = self.w[0].len();
        let mut out = DVector::zeros(n);
        for (l, wl) in self.w.iter().enumerate() {
            let c = if derivative {
                if l == 0 {
                    continue;
                }
                l as f64 * tau.powi(l as i32 - 1)
            } else {
                tau.powi(l as i32)
            };
            out.axpy(c, wl, 1.0);
        }
        out
    }
}

impl IndexedConstraint for PolynomialEigConstraint {
    fn value(&self, x: &DVector<f64>, tau: f64) -> f64 {
        -self.polys(x, tau).0
    }
    fn grad_x(&self, _x: &DVector<f64>, tau: f64) -> DVector<f64> {
        -self.grad_poly(tau, false)
    }
    fn hess_xx(&self, x: &DVector<f64>, _tau: f64) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
    fn dtau(&self, x: &DVector<f64>, tau: f64) -> f64 {
        -self.polys(x, tau).1
    }
    fn dtau2(&self, x: &DVector<f64>, tau: f64) -> f64 {
        -self.polys(x, tau).2
    }
    fn grad_x_dtau(&self, _x: &DVector<f64>, tau: f64) -> DVector<f64> {
        -self.grad_poly(tau, true)
    }
}

/// Builds the linear family instance in minimization form.
pub fn build_linear_eig(inst: &LinearEigInstance) -> Result<SisdpProblem, ProblemError> {
    let m = inst.m;
    if m == 0 {
        return Err(ProblemError::BadDimension("m must be positive".into()));
    }
    let n = svec_len(m);
    let a0 = sym_from_rows(&inst.a0, "A0")?;
    if inst.coeffs.len() != m || inst.coeffs.iter().any(|r| r.len() != m) {
        return Err(ProblemError::BadDimension("coeffs must be m x m x (q+1)".into()));
    }
    let mut a_l = Vec::with_capacity(inst.q + 1);
    for l in 0..=inst.q {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        inst.coeffs[i][j]
                            .get(l)
                            .copied()
                            .ok_or(ProblemError::BadDimension(format!(
                                "coeffs[{i}][{j}] shorter than q+1"
                            )))
                    })
                    .collect::<Result<_, _>>()
            })
            .collect::<Result<_, _>>()?;
        a_l.push(sym_from_rows(&rows, "coeffs")?);
    }

    let objective = LinearObjective {
        coef: -inner_with_basis(&a0),
    };
    let constraint = PolynomialEigConstraint {
        w: a_l.iter().map(inner_with_basis).collect(),
    };
    let trace_row = inner_with_basis(&SymMatrix::identity(m));
    let mut diag_indicator = DVector::zeros(n);
    let mut idx = 0;
    for k in 0..m {
        for l in k..m {
            if k == l {
                diag_indicator[idx] = 1.0;
            }
            idx += 1;
        }
    }
    // I . X picks exactly the diagonal slots, with weight 1.
    debug_assert_eq!(trace_row, diag_indicator);

    let problem = SisdpProblem {
        n,
        m,
        objective: Arc::new(objective),
        constraint: Arc::new(constraint),
        f0: SymMatrix::zeros(m),
        fi: sym_basis(m),
        index_set: IndexSet::Interval { lo: inst.t[0], hi: inst.t[1] },
        equalities: vec![LinearEquality { a: diag_indicator, b: 1.0 }],
        default_x0: vectorize_sym(&SymMatrix::scaled_identity(m, 1.0 / m as f64)),
    };
    problem.validate()?;
    Ok(problem)
}

// ---------------------------------------------------------------------------
// Nonlinear quartic family
// ---------------------------------------------------------------------------

struct QuarticObjective {
    mat: DMatrix<f64>,
    c: DVector<f64>,
    omega: f64,
}

impl Objective for QuarticObjective {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let nx2 = x.norm_squared();
        0.5 * (&self.mat * x).dot(x) + self.c.dot(x) + self.omega * nx2 * nx2
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let nx2 = x.norm_squared();
        &self.mat * x + &self.c + x * (4.0 * self.omega * nx2)
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let nx2 = x.norm_squared();
        let mut h = self.mat.clone();
        for i in 0..n {
            h[(i, i)] += 4.0 * self.omega * nx2;
        }
        h + (x * x.transpose()) * (8.0 * self.omega)
    }
}

/// g(x, tau) = sum_i tau^{i-1} x_i - sum_i tau^{2i} - sin(9 pi tau) - 2.
struct PowerSineConstraint {
    n: usize,
}

const SINE_FREQ: f64 = 9.0 * std::f64::consts::PI;

impl PowerSineConstraint {
    /// sum_i tau^{2i} over i = 1..n and its first two derivatives.
    fn even_powers(&self, tau: f64) -> (f64, f64, f64) {
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        let t2 = tau * tau;
        let mut p = 1.0;
        for i in 1..=self.n {
            p *= t2;
            v += p;
            let e = (2 * i) as f64;
            d1 += e * powi_safe(tau, 2 * i as i64 - 1);
            d2 += e * (e - 1.0) * powi_safe(tau, 2 * i as i64 - 2);
        }
        (v, d1, d2)
    }
}

/// tau^k for k >= 0, with tau^0 = 1 even at tau = 0.
fn powi_safe(tau: f64, k: i64) -> f64 {
    debug_assert!(k >= 0);
    if k == 0 {
        1.0
    } else {
        tau.powi(k as i32)
    }
}

impl IndexedConstraint for PowerSineConstraint {
    fn value(&self, x: &DVector<f64>, tau: f64) -> f64 {
        let mut acc = 0.0;
        let mut p = 1.0;
        for i in 0..self.n {
            acc += p * x[i];
            p *= tau;
        }
        acc - self.even_powers(tau).0 - (SINE_FREQ * tau).sin() - 2.0
    }
    fn grad_x(&self, _x: &DVector<f64>, tau: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        let mut p = 1.0;
        for i in 0..self.n {
            out[i] = p;
            p *= tau;
        }
        out
    }
    fn hess_xx(&self, _x: &DVector<f64>, _tau: f64) -> DMatrix<f64> {
        DMatrix::zeros(self.n, self.n)
    }
    fn dtau(&self, x: &DVector<f64>, tau: f64) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.n {
            acc += i as f64 * powi_safe(tau, i as i64 - 1) * x[i];
        }
        acc - self.even_powers(tau).1 - SINE_FREQ * (SINE_FREQ * tau).cos()
    }
    fn dtau2(&self, x: &DVector<f64>, tau: f64) -> f64 {
        let mut acc = 0.0;
        for i in 2..self.n {
            acc += (i * (i - 1)) as f64 * powi_safe(tau, i as i64 - 2) * x[i];
        }
        acc - self.even_powers(tau).2 + SINE_FREQ * SINE_FREQ * (SINE_FREQ * tau).sin()
    }
    fn grad_x_dtau(&self, _x: &DVector<f64>, tau: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for i in 1..self.n {
            out[i] = i as f64 * powi_safe(tau, i as i64 - 1);
        }
        out
    }
}

/// Builds the nonlinear family instance.
pub fn build_nonlinear_quartic(
    inst: &NonlinearQuarticInstance,
) -> Result<SisdpProblem, ProblemError> {
    let m = inst.m;
    if m == 0 {
        return Err(ProblemError::BadDimension("m must be positive".into()));
    }
    let n = svec_len(m);
    let mat = sym_from_rows(&inst.mat, "M")?;
    if mat.dim() != n {
        return Err(ProblemError::BadDimension(format!(
            "M must be n x n with n = m(m+1)/2 = {n}"
        )));
    }
    if inst.c.len() != n {
        return Err(ProblemError::BadDimension(format!("c must have length {n}")));
    }

    let problem = SisdpProblem {
        n,
        m,
        objective: Arc::new(QuarticObjective {
            mat: mat.to_dense(),
            c: DVector::from_column_slice(&inst.c),
            omega: inst.omega,
        }),
        constraint: Arc::new(PowerSineConstraint { n }),
        f0: SymMatrix::scaled_identity(m, inst.kappa),
        fi: sym_basis(m),
        index_set: IndexSet::Interval { lo: inst.t[0], hi: inst.t[1] },
        equalities: vec![],
        default_x0: DVector::zeros(n),
    };
    problem.validate()?;
    Ok(problem)
}
