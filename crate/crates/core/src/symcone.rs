//! Dense symmetric matrices and the Jordan-algebra operations the
//! interior-point machinery is built on.
//!
//! Everything lives in S^m, the real symmetric m x m matrices, with the trace
//! inner product `X . Y = tr(XY)`. Three operations carry most of the solver:
//!
//! * `svec`, the isometry from S^m onto R^{m(m+1)/2} that scales off-diagonal
//!   entries by sqrt(2),
//! * the Jordan product `(XY + YX)/2`,
//! * the Lyapunov solve inverting `Z -> X o Z` for positive definite X,
//!   computed in the eigenbasis of X.
//!
//! Eigendecompositions are returned with eigenvalues in ascending order and
//! ties left in the order the backend produced them, so repeated runs on the
//! same input give identical factors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Coordinates of a symmetric matrix under `svec`.
pub type SvecVector = DVector<f64>;

#[derive(Debug, Error)]
pub enum SymconeError {
    #[error("matrix is not positive definite (min eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Length of the packed triangle of an m x m symmetric matrix.
pub fn svec_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Dense symmetric matrix storing only the upper triangle (row-major), so no
/// asymmetric state is representable.
///
/// The storage order (0,0), (0,1), .., (0,m-1), (1,1), .. coincides with the
/// order `svec` lists entries in, which keeps both maps allocation-friendly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(m: usize) -> Self {
        SymMatrix { dim: m, data: vec![0.0; svec_len(m)] }
    }

    pub fn identity(m: usize) -> Self {
        Self::scaled_identity(m, 1.0)
    }

    pub fn scaled_identity(m: usize, c: f64) -> Self {
        let mut out = Self::zeros(m);
        for i in 0..m {
            out.set(i, i, c);
        }
        out
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut out = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            out.set(i, i, v);
        }
        out
    }

    /// Builds from `f(i, j)`; only the upper triangle is sampled.
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(m);
        for i in 0..m {
            for j in i..m {
                out.set(i, j, f(i, j));
            }
        }
        out
    }

    /// Packs `(A + A^T)/2`.
    pub fn from_dense_symmetrize(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "matrix must be square");
        Self::from_fn(a.nrows(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
    }

    /// Packs an upper triangle listed row-major: (0,0), (0,1), .., (1,1), ..
    pub fn from_upper_triangle(m: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), svec_len(m), "wrong packed length");
        SymMatrix { dim: m, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        a * self.dim - a * (a + 1) / 2 + b
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// The packed upper triangle, row-major.
    pub fn upper_triangle(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn add(&self, o: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, o.dim);
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect();
        SymMatrix { dim: self.dim, data }
    }

    pub fn sub(&self, o: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, o.dim);
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect();
        SymMatrix { dim: self.dim, data }
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        let data = self.data.iter().map(|a| a * c).collect();
        SymMatrix { dim: self.dim, data }
    }

    /// `self += c * o`.
    pub fn axpy(&mut self, c: f64, o: &SymMatrix) {
        assert_eq!(self.dim, o.dim);
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += c * b;
        }
    }

    /// Trace inner product `tr(self * o)`.
    pub fn inner(&self, o: &SymMatrix) -> f64 {
        assert_eq!(self.dim, o.dim);
        let mut acc = 0.0;
        let mut k = 0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let w = if i == j { 1.0 } else { 2.0 };
                acc += w * self.data[k] * o.data[k];
                k += 1;
            }
        }
        acc
    }

    pub fn norm_fro(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Spectral norm, the largest absolute eigenvalue.
    pub fn norm_spectral(&self) -> f64 {
        let e = self.eigen();
        e.values[0].abs().max(e.values[self.dim - 1].abs())
    }

    pub fn min_eig(&self) -> f64 {
        self.eigen().values[0]
    }

    /// `svec(X) = (X_11, sqrt2 X_21, .., sqrt2 X_m1, X_22, sqrt2 X_32, ..)`,
    /// listing the lower triangle by columns. Satisfies
    /// `svec(X) . svec(Y) = X . Y`.
    ///
    /// ```
    /// use sisdp_core::symcone::SymMatrix;
    /// let x = SymMatrix::from_upper_triangle(2, vec![1.0, 2.0, 3.0]);
    /// let v = x.svec();
    /// assert_eq!(v[0], 1.0);
    /// assert_eq!(v[1], 2.0 * 2f64.sqrt());
    /// assert_eq!(v[2], 3.0);
    /// ```
    pub fn svec(&self) -> SvecVector {
        let s2 = 2f64.sqrt();
        let mut out = DVector::zeros(self.data.len());
        let mut k = 0;
        for i in 0..self.dim {
            for j in i..self.dim {
                out[k] = if i == j { self.data[k] } else { s2 * self.data[k] };
                k += 1;
            }
        }
        out
    }

    /// Positive definiteness with a norm-relative margin: requires
    /// `lambda_min > 1e-12 (1 + ||X||_2)`.
    pub fn is_pd(&self) -> bool {
        let e = self.eigen();
        let spectral = e.values[0].abs().max(e.values[self.dim - 1].abs());
        e.values[0] > 1e-12 * (1.0 + spectral)
    }

    /// Semidefiniteness with the mirrored margin of [`SymMatrix::is_pd`].
    pub fn is_psd(&self) -> bool {
        let e = self.eigen();
        let spectral = e.values[0].abs().max(e.values[self.dim - 1].abs());
        e.values[0] > -1e-12 * (1.0 + spectral)
    }

    /// Eigendecomposition with ascending eigenvalues.
    ///
    /// Computed by cyclic Jacobi rotations: unconditionally convergent and
    /// more accurate than QR iteration on the small matrices this solver
    /// works with (shifted QR can misconverge when small eigenvalues
    /// cluster). Sweep order is fixed, so repeated runs give identical
    /// factors; ties keep the order the sweeps produced.
    pub fn eigen(&self) -> Eigen {
        assert!(self.dim > 0, "empty matrix has no eigendecomposition");
        let m = self.dim;
        let mut b = self.to_dense();
        let mut v = DMatrix::<f64>::identity(m, m);
        let norm = b.norm().max(f64::MIN_POSITIVE);
        for _sweep in 0..50 {
            let mut off = 0.0;
            for p in 0..m {
                for q in (p + 1)..m {
                    off += 2.0 * b[(p, q)] * b[(p, q)];
                }
            }
            if off.sqrt() <= 1e-15 * norm {
                break;
            }
            for p in 0..m {
                for q in (p + 1)..m {
                    let apq = b[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (b[(q, q)] - b[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..m {
                        let bkp = b[(k, p)];
                        let bkq = b[(k, q)];
                        b[(k, p)] = c * bkp - s * bkq;
                        b[(k, q)] = s * bkp + c * bkq;
                    }
                    for k in 0..m {
                        let bpk = b[(p, k)];
                        let bqk = b[(q, k)];
                        b[(p, k)] = c * bpk - s * bqk;
                        b[(q, k)] = s * bpk + c * bqk;
                    }
                    for k in 0..m {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &bb| b[(a, a)].total_cmp(&b[(bb, bb)]));
        let values = DVector::from_fn(m, |i, _| b[(order[i], order[i])]);
        let vectors = DMatrix::from_fn(m, m, |i, j| v[(i, order[j])]);
        Eigen { values, vectors }
    }

    /// Inverse of a positive definite matrix, via its eigendecomposition so
    /// the result is exactly symmetric.
    pub fn inv_pd(&self) -> Result<SymMatrix, SymconeError> {
        let e = self.eigen_pd()?;
        Ok(e.recompose_with(|d| 1.0 / d))
    }

    fn eigen_pd(&self) -> Result<Eigen, SymconeError> {
        let e = self.eigen();
        let spectral = e.values[0].abs().max(e.values[self.dim - 1].abs());
        if e.values[0] <= 1e-12 * (1.0 + spectral) {
            return Err(SymconeError::NotPositiveDefinite(e.values[0]));
        }
        Ok(e)
    }
}

/// Eigendecomposition `X = Q diag(values) Q^T`, eigenvalues ascending.
pub struct Eigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    /// Rebuilds `Q diag(f(d_i)) Q^T`.
    pub fn recompose_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let m = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..m {
            let c = f(self.values[j]);
            for i in 0..m {
                scaled[(i, j)] *= c;
            }
        }
        let dense = &scaled * self.vectors.transpose();
        SymMatrix::from_dense_symmetrize(&dense)
    }

    /// `Q^T Y Q`, the matrix Y expressed in this eigenbasis.
    fn rotate_into(&self, y: &SymMatrix) -> DMatrix<f64> {
        let yd = y.to_dense();
        self.vectors.transpose() * yd * &self.vectors
    }
}

/// Inverse map of [`SymMatrix::svec`].
pub fn smat(v: &SvecVector, m: usize) -> SymMatrix {
    assert_eq!(v.len(), svec_len(m), "svec length does not match dimension");
    let s2 = 2f64.sqrt();
    let mut data = vec![0.0; v.len()];
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            data[k] = if i == j { v[k] } else { v[k] / s2 };
            k += 1;
        }
    }
    SymMatrix { dim: m, data }
}

/// Jordan product `(XY + YX)/2`.
pub fn jordan(x: &SymMatrix, y: &SymMatrix) -> SymMatrix {
    assert_eq!(x.dim, y.dim);
    let p = x.to_dense() * y.to_dense();
    SymMatrix::from_fn(x.dim, |i, j| 0.5 * (p[(i, j)] + p[(j, i)]))
}

/// Congruence `P X P` for symmetric P (the scaling maps only ever use
/// symmetric P, so no transpose argument is needed).
pub fn congruence(p: &SymMatrix, x: &SymMatrix) -> SymMatrix {
    assert_eq!(p.dim, x.dim);
    let pd = p.to_dense();
    let prod = &pd * x.to_dense() * &pd;
    SymMatrix::from_dense_symmetrize(&prod)
}

/// Solves `X o Z = Y` for positive definite X: in the eigenbasis of X the
/// solution is `Z~_ij = 2 Y~_ij / (d_i + d_j)`. One residual-correction pass
/// keeps `||X o Z - Y||` at machine level even near condition 1e6.
///
/// ```
/// use sisdp_core::symcone::{jordan, lyapunov_solve, SymMatrix};
/// let x = SymMatrix::from_diag(&[1.0, 2.0]);
/// let y = SymMatrix::from_upper_triangle(2, vec![2.0, 3.0, 8.0]);
/// let z = lyapunov_solve(&x, &y).unwrap();
/// assert!(jordan(&x, &z).sub(&y).norm_fro() < 1e-12);
/// ```
pub fn lyapunov_solve(x: &SymMatrix, y: &SymMatrix) -> Result<SymMatrix, SymconeError> {
    assert_eq!(x.dim, y.dim);
    let e = x.eigen_pd()?;
    let solve_in_basis = |rhs: &SymMatrix| -> SymMatrix {
        let r = e.rotate_into(rhs);
        let m = x.dim;
        let zt = DMatrix::from_fn(m, m, |i, j| {
            2.0 * 0.5 * (r[(i, j)] + r[(j, i)]) / (e.values[i] + e.values[j])
        });
        let back = &e.vectors * zt * e.vectors.transpose();
        SymMatrix::from_dense_symmetrize(&back)
    };
    let mut z = solve_in_basis(y);
    let residual = y.sub(&jordan(x, &z));
    z = z.add(&solve_in_basis(&residual));
    Ok(z)
}

/// `(X^{1/2}, X^{-1/2})` for positive definite X.
pub fn sqrt_inv_sqrt(x: &SymMatrix) -> Result<(SymMatrix, SymMatrix), SymconeError> {
    let e = x.eigen_pd()?;
    Ok((e.recompose_with(f64::sqrt), e.recompose_with(|d| 1.0 / d.sqrt())))
}

/// Smallest eigenvalue of `X^{-1/2} D X^{-1/2}` for positive definite X,
/// which equals the smallest eigenvalue of `X^{-1} D`. This is the quantity
/// the fraction-to-boundary step-size rule needs.
pub fn min_eig_ratio(x: &SymMatrix, d: &SymMatrix) -> Result<f64, SymconeError> {
    assert_eq!(x.dim, d.dim);
    let (_, xi) = sqrt_inv_sqrt(x)?;
    Ok(congruence(&xi, d).min_eig())
}

/// The Nesterov-Todd scaling point `W = X^{1/2} (X^{1/2} V X^{1/2})^{-1/2} X^{1/2}`,
/// the unique positive definite W with `W V W = X`.
pub fn nt_scaling_point(x: &SymMatrix, v: &SymMatrix) -> Result<SymMatrix, SymconeError> {
    assert_eq!(x.dim, v.dim);
    let (xs, _) = sqrt_inv_sqrt(x)?;
    let inner = congruence(&xs, v);
    let (_, inner_is) = sqrt_inv_sqrt(&inner)?;
    Ok(congruence(&xs, &inner_is))
}

/// Spectral norm of a general dense matrix, as the square root of the
/// largest eigenvalue of `A^T A` (computed by the Jacobi eigensolver, which
/// is trustworthy where iterative SVDs can misconverge).
pub fn spectral_norm_dense(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let ata = a.transpose() * a;
    let sym = SymMatrix::from_dense_symmetrize(&ata);
    let top = sym.eigen().values[sym.dim - 1];
    top.max(0.0).sqrt()
}

/// Matrix of `Z -> X o Z` in the svec basis (size m(m+1)/2 square,
/// symmetric). Used where the Jordan multiplication operator itself enters a
/// linear system, and by the commutator-bound tests.
pub fn jordan_op_matrix(x: &SymMatrix) -> DMatrix<f64> {
    let m = x.dim;
    let d = svec_len(m);
    let mut out = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut unit = DVector::zeros(d);
        unit[k] = 1.0;
        let col = jordan(x, &smat(&unit, m)).svec();
        out.set_column(k, &col);
    }
    out
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn sym_matrix(m: usize) -> impl Strategy<Value = SymMatrix> {
        proptest::collection::vec(-5.0f64..5.0, svec_len(m))
            .prop_map(move |data| SymMatrix::from_upper_triangle(m, data))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn svec_preserves_inner_products(x in sym_matrix(4), y in sym_matrix(4)) {
            let via_svec = x.svec().dot(&y.svec());
            let via_trace = x.inner(&y);
            prop_assert!((via_svec - via_trace).abs() <= 1e-11 * (1.0 + via_trace.abs()));
        }

        #[test]
        fn jordan_is_symmetric_bilinear(
            x in sym_matrix(4),
            y in sym_matrix(4),
            z in sym_matrix(4),
            a in -3.0f64..3.0,
        ) {
            let xy = jordan(&x, &y);
            let yx = jordan(&y, &x);
            prop_assert!(xy.sub(&yx).norm_fro() < 1e-12);
            let lhs = jordan(&x.scale(a).add(&z), &y);
            let rhs = jordan(&x, &y).scale(a).add(&jordan(&z, &y));
            prop_assert!(lhs.sub(&rhs).norm_fro() < 1e-10);
        }

        #[test]
        fn smat_inverts_svec(x in sym_matrix(5)) {
            let back = smat(&x.svec(), 5);
            for (a, b) in x.upper_triangle().iter().zip(back.upper_triangle()) {
                prop_assert!((a - b).abs() <= f64::EPSILON * a.abs());
            }
        }
    }
}
