//! Dense symmetric matrix foundation: spectral decompositions, matrix
//! functions, norms, Loewner-order checks, and the Fréchet derivative of the
//! matrix square root.
//!
//! Every matrix function here is computed through a single primitive, the
//! symmetric eigendecomposition, so all operations share one tolerance story.

use nalgebra::DMatrix;

use crate::error::{BwError, Result};

/// Relative tolerance below which negative eigenvalues are treated as
/// roundoff and clamped to zero at `PsdMatrix` construction.
pub const PSD_TOL: f64 = 1e-10;

/// Default relative rank tolerance: eigenvalues below `rank_tol * lambda_max`
/// count as null directions.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Relative symmetry tolerance accepted at `SymMatrix` construction.
pub const SYM_TOL: f64 = 1e-12;

/// Dense real symmetric matrix.
///
/// Construction symmetrizes the entries exactly via `(M + M^T)/2` after
/// checking that the asymmetry is within roundoff.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    mat: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(BwError::input(format!(
                "matrix is {}x{}, expected square",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.iter().any(|x| !x.is_finite()) {
            return Err(BwError::input("matrix has non-finite entries"));
        }
        let scale = mat.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        for i in 0..mat.nrows() {
            for j in (i + 1)..mat.ncols() {
                if (mat[(i, j)] - mat[(j, i)]).abs() > SYM_TOL * scale {
                    return Err(BwError::input(format!(
                        "matrix is not symmetric at ({i},{j}): {} vs {}",
                        mat[(i, j)],
                        mat[(j, i)]
                    )));
                }
            }
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        Ok(SymMatrix { mat: sym })
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            mat: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix {
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|x| !x.is_finite()) {
            return Err(BwError::input("diagonal has non-finite entries"));
        }
        Ok(SymMatrix {
            mat: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag)),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// Frobenius (Hilbert-Schmidt) norm, computed entrywise.
    pub fn hs_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn scaled(&self, factor: f64) -> SymMatrix {
        SymMatrix {
            mat: &self.mat * factor,
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(SymMatrix {
            mat: &self.mat + &other.mat,
        })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(SymMatrix {
            mat: &self.mat - &other.mat,
        })
    }

    /// Symmetrizes an arbitrary square matrix product, `(M + M^T)/2`.
    pub(crate) fn symmetrize(mat: DMatrix<f64>) -> SymMatrix {
        let sym = (&mat + mat.transpose()) * 0.5;
        SymMatrix { mat: sym }
    }
}

pub(crate) fn check_same_dim(left: usize, right: usize) -> Result<()> {
    if left != right {
        Err(BwError::DimensionMismatch { left, right })
    } else {
        Ok(())
    }
}

/// Symmetric positive-semidefinite matrix.
///
/// Construction clamps eigenvalues in `[-PSD_TOL * lambda_max, 0)` to zero and
/// rejects anything more negative.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    base: SymMatrix,
}

impl PsdMatrix {
    pub fn new(base: SymMatrix) -> Result<Self> {
        let decomp = spectral_decompose(&base);
        let lambda_max = decomp.eigenvalues.first().copied().unwrap_or(0.0);
        let lambda_min = decomp.eigenvalues.last().copied().unwrap_or(0.0);
        let floor = -PSD_TOL * lambda_max.max(0.0);
        if lambda_min < floor {
            return Err(BwError::input(format!(
                "matrix is not PSD: lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e}"
            )));
        }
        if lambda_min >= 0.0 {
            // already PSD, keep entries untouched
            return Ok(PsdMatrix { base });
        }
        Ok(Self::from_spectral(&decomp.eigenvectors, &decomp.eigenvalues, |x| x))
    }

    pub fn from_matrix(mat: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(mat)?)
    }

    pub fn zeros(dim: usize) -> Self {
        PsdMatrix {
            base: SymMatrix::zeros(dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        PsdMatrix {
            base: SymMatrix::identity(dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|&x| x < 0.0) {
            return Err(BwError::input("diagonal has negative entries"));
        }
        Ok(PsdMatrix {
            base: SymMatrix::from_diagonal(diag)?,
        })
    }

    /// Rebuilds `V f(max(lambda, 0)) V^T` from an eigendecomposition.
    pub(crate) fn from_spectral(
        eigenvectors: &DMatrix<f64>,
        eigenvalues: &[f64],
        f: impl Fn(f64) -> f64,
    ) -> PsdMatrix {
        let d = eigenvectors.nrows();
        let mut diag = DMatrix::zeros(d, d);
        for (i, &lambda) in eigenvalues.iter().enumerate() {
            diag[(i, i)] = f(lambda.max(0.0));
        }
        let mat = eigenvectors * diag * eigenvectors.transpose();
        PsdMatrix {
            base: SymMatrix::symmetrize(mat),
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.base.as_matrix()
    }

    pub fn trace(&self) -> f64 {
        self.base.trace()
    }
}

/// Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Descending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

/// Full symmetric eigendecomposition with eigenvalues sorted descending.
///
/// Uses cyclic Jacobi rotations rather than a QR iteration: the decomposition
/// is accurate to a small multiple of machine epsilon times `||M||`, which the
/// finite-difference oracles downstream rely on (a looser solver's eigenvalue
/// noise gets divided by the step size). Exactly diagonal matrices
/// short-circuit to a permutation of the axis vectors, so their eigenvalues
/// carry no solver roundoff even at extreme scale separation.
pub fn spectral_decompose(m: &SymMatrix) -> SpectralDecomposition {
    let d = m.dim();
    let mat = m.as_matrix();
    let is_diagonal = (0..d).all(|i| (0..d).all(|j| i == j || mat[(i, j)] == 0.0));
    let (raw_values, raw_vectors) = if is_diagonal {
        ((0..d).map(|i| mat[(i, i)]).collect(), DMatrix::identity(d, d))
    } else {
        jacobi_eigen(mat)
    };
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        raw_values[j]
            .partial_cmp(&raw_values[i])
            .expect("finite eigenvalues")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| raw_values[i]).collect();
    let mut eigenvectors = DMatrix::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        eigenvectors.set_column(col, &raw_vectors.column(i));
    }
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Converges
/// quadratically; a rotation is skipped once its off-diagonal entry is
/// negligible relative to its diagonal neighbours.
fn jacobi_eigen(mat: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let d = mat.nrows();
    let mut a = mat.clone();
    let mut v = DMatrix::identity(d, d);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                if apq.abs() <= f64::EPSILON * (a[(p, p)].abs() + a[(q, q)].abs()) * 0.5 {
                    continue;
                }
                rotated = true;
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                // the rotation annihilates this entry by construction
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    ((0..d).map(|i| a[(i, i)]).collect(), v)
}

/// Largest eigenvalue magnitude below which eigenvalues of a `dim`-dimensional
/// computed matrix are indistinguishable from roundoff.
pub(crate) fn spectral_noise_floor(eigenvalues: &[f64], dim: usize) -> f64 {
    eigenvalues.first().copied().unwrap_or(0.0).max(0.0) * dim as f64 * f64::EPSILON
}

/// Square root from an existing decomposition with eigenvalues below the
/// spectral noise floor treated as exact zeros. Taking the square root of
/// eigenvalue roundoff would turn eps-level noise into sqrt(eps)-level
/// entries, which stalls fixed-point iterations over singular samples; this
/// variant is used wherever the argument is a product that may be singular by
/// construction.
pub(crate) fn sqrt_denoised(dec: &SpectralDecomposition) -> PsdMatrix {
    let dim = dec.eigenvectors.nrows();
    let floor = spectral_noise_floor(&dec.eigenvalues, dim);
    PsdMatrix::from_spectral(&dec.eigenvectors, &dec.eigenvalues, |l| {
        if l > floor {
            l.sqrt()
        } else {
            0.0
        }
    })
}

/// Operator, Hilbert-Schmidt and trace norms of a symmetric matrix, all
/// computed from the same eigenvalue vector so the chain
/// `op <= hs <= trace` holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixNorms {
    /// Largest singular value.
    pub op: f64,
    /// Frobenius norm.
    pub hs: f64,
    /// Nuclear norm (sum of singular values).
    pub trace: f64,
}

pub fn norms(m: &SymMatrix) -> MatrixNorms {
    let decomp = spectral_decompose(m);
    let mut op = 0.0f64;
    let mut sq = 0.0f64;
    let mut tr = 0.0f64;
    for &lambda in &decomp.eigenvalues {
        let s = lambda.abs();
        op = op.max(s);
        sq += s * s;
        tr += s;
    }
    MatrixNorms {
        op,
        hs: sq.sqrt(),
        trace: tr,
    }
}

/// Trace norm of a symmetric matrix (sum of absolute eigenvalues).
pub fn trace_norm(m: &SymMatrix) -> f64 {
    norms(m).trace
}

/// Operator norm of a symmetric matrix.
pub fn op_norm(m: &SymMatrix) -> f64 {
    norms(m).op
}

/// Matrix square root of a PSD matrix via its eigendecomposition.
pub fn matrix_sqrt(f: &PsdMatrix) -> PsdMatrix {
    let decomp = spectral_decompose(f.as_sym());
    PsdMatrix::from_spectral(&decomp.eigenvectors, &decomp.eigenvalues, f64::sqrt)
}

/// Moore-Penrose inverse square root: `lambda^{-1/2}` on eigenvalues above
/// `rank_tol * lambda_max`, zero elsewhere. `pinv_sqrt(0) = 0` by convention.
pub fn pinv_sqrt(f: &PsdMatrix, rank_tol: f64) -> PsdMatrix {
    let decomp = spectral_decompose(f.as_sym());
    let lambda_max = decomp.eigenvalues.first().copied().unwrap_or(0.0);
    let cutoff = rank_tol * lambda_max;
    PsdMatrix::from_spectral(&decomp.eigenvectors, &decomp.eigenvalues, |lambda| {
        if lambda > cutoff && lambda > 0.0 {
            1.0 / lambda.sqrt()
        } else {
            0.0
        }
    })
}

/// Loewner order check: `A <= B` iff `lambda_min(B - A) >= -tol * max(1, ||B - A||_op)`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    let diff = b.sub(a)?;
    let decomp = spectral_decompose(&diff);
    let lambda_min = decomp.eigenvalues.last().copied().unwrap_or(0.0);
    let scale = decomp
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1.0);
    Ok(lambda_min >= -tol * scale)
}

/// Fréchet derivative `D` of the matrix square root at `F` in direction `H`,
/// i.e. the solution of the Sylvester equation `F^{1/2} D + D F^{1/2} = H`.
///
/// In the eigenbasis of `F` the solution is entrywise division by
/// `sqrt(lambda_i) + sqrt(lambda_j)`, which requires `F` to be positive
/// definite up to `rank_tol`.
pub fn sqrt_frechet_derivative(f: &PsdMatrix, h: &SymMatrix, rank_tol: f64) -> Result<SymMatrix> {
    check_same_dim(f.dim(), h.dim())?;
    let decomp = spectral_decompose(f.as_sym());
    let lambda_max = decomp.eigenvalues.first().copied().unwrap_or(0.0);
    let lambda_min = decomp.eigenvalues.last().copied().unwrap_or(0.0);
    if lambda_min <= rank_tol * lambda_max || lambda_max <= 0.0 {
        return Err(BwError::Singular(format!(
            "square-root derivative needs a positive definite base point \
             (lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e})"
        )));
    }
    let v = &decomp.eigenvectors;
    let h_tilde = v.transpose() * h.as_matrix() * v;
    let d = f.dim();
    let mut d_tilde = DMatrix::zeros(d, d);
    let roots: Vec<f64> = decomp.eigenvalues.iter().map(|x| x.sqrt()).collect();
    for i in 0..d {
        for j in 0..d {
            d_tilde[(i, j)] = h_tilde[(i, j)] / (roots[i] + roots[j]);
        }
    }
    Ok(SymMatrix::symmetrize(v * d_tilde * v.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn sym(m: DMatrix<f64>) -> SymMatrix {
        SymMatrix::new(m).unwrap()
    }

    fn psd(m: DMatrix<f64>) -> PsdMatrix {
        PsdMatrix::from_matrix(m).unwrap()
    }

    #[test]
    fn sym_rejects_asymmetric_and_non_finite() {
        assert!(SymMatrix::new(dmatrix![1.0, 2.0; 3.0, 1.0]).is_err());
        assert!(SymMatrix::new(dmatrix![1.0, f64::NAN; f64::NAN, 1.0]).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn psd_clamps_roundoff_and_rejects_indefinite() {
        // tiny negative eigenvalue is absorbed
        let eps = 1e-12;
        let m = dmatrix![1.0, 0.0; 0.0, -eps];
        let p = PsdMatrix::from_matrix(m).unwrap();
        let min = spectral_decompose(p.as_sym()).eigenvalues[1];
        assert!(min >= 0.0, "clamped eigenvalue is {min}");
        // a genuinely negative eigenvalue is an error
        assert!(PsdMatrix::from_matrix(dmatrix![1.0, 0.0; 0.0, -1e-3]).is_err());
    }

    #[test]
    fn spectral_identity_and_diagonal() {
        let id = spectral_decompose(&SymMatrix::identity(3));
        assert_eq!(id.eigenvalues, vec![1.0, 1.0, 1.0]);

        let d = spectral_decompose(&sym(dmatrix![4.0, 0.0; 0.0, 1.0]));
        assert_eq!(d.eigenvalues, vec![4.0, 1.0]);
        // axis vectors up to sign
        assert!((d.eigenvectors[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((d.eigenvectors[(1, 1)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_diagonal_is_exact_at_extreme_scales() {
        let diag: Vec<f64> = (1..=50).map(|j| 2.0f64.powi(-j)).collect();
        let m = SymMatrix::from_diagonal(&diag).unwrap();
        let d = spectral_decompose(&m);
        for (k, &lambda) in d.eigenvalues.iter().enumerate() {
            assert_eq!(lambda, diag[k]);
        }
        let recon = &d.eigenvectors
            * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d.eigenvalues))
            * d.eigenvectors.transpose();
        assert_eq!(&recon, m.as_matrix());
    }

    #[test]
    fn spectral_two_by_two() {
        // characteristic polynomial of [[2,1],[1,2]]: (2-l)^2 - 1 => l = 3, 1
        let d = spectral_decompose(&sym(dmatrix![2.0, 1.0; 1.0, 2.0]));
        assert!((d.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((d.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_invariants_reconstruct_and_orthonormal() {
        let m = sym(dmatrix![2.0, 1.0, 0.5; 1.0, 3.0, -0.25; 0.5, -0.25, 1.5]);
        let d = spectral_decompose(&m);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d.eigenvalues));
        let recon = &d.eigenvectors * diag * d.eigenvectors.transpose();
        assert!((recon - m.as_matrix()).norm() <= 1e-10 * m.hs_norm().max(1.0));
        let gram = d.eigenvectors.transpose() * &d.eigenvectors;
        assert!((gram - DMatrix::identity(3, 3)).norm() <= 1e-10);
    }

    #[test]
    fn sqrt_examples() {
        let s = matrix_sqrt(&psd(dmatrix![4.0, 0.0; 0.0, 9.0]));
        assert!((s.as_matrix() - dmatrix![2.0, 0.0; 0.0, 3.0]).norm() < 1e-12);

        let z = matrix_sqrt(&PsdMatrix::zeros(3));
        assert_eq!(z.as_matrix().norm(), 0.0);

        // sqrt of [[2,1],[1,2]] from its own spectral decomposition
        let f = psd(dmatrix![2.0, 1.0; 1.0, 2.0]);
        let d = spectral_decompose(f.as_sym());
        let oracle = PsdMatrix::from_spectral(&d.eigenvectors, &d.eigenvalues, f64::sqrt);
        let s = matrix_sqrt(&f);
        assert!((s.as_matrix() - oracle.as_matrix()).norm() < 1e-12);
        let sq = s.as_matrix() * s.as_matrix();
        assert!((sq - f.as_matrix()).norm() <= 1e-9 * f.as_sym().hs_norm());
    }

    #[test]
    fn pinv_sqrt_examples() {
        let p = pinv_sqrt(&psd(dmatrix![4.0, 0.0; 0.0, 0.0]), DEFAULT_RANK_TOL);
        assert!((p.as_matrix() - dmatrix![0.5, 0.0; 0.0, 0.0]).norm() < 1e-12);

        let p = pinv_sqrt(&PsdMatrix::identity(4), DEFAULT_RANK_TOL);
        assert!((p.as_matrix() - DMatrix::identity(4, 4)).norm() < 1e-12);

        // below-threshold eigenvalue treated as null
        let p = pinv_sqrt(&psd(dmatrix![9.0, 0.0; 0.0, 1e-20]), DEFAULT_RANK_TOL);
        assert!((p.as_matrix()[(0, 0)] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.as_matrix()[(1, 1)], 0.0);

        // pinv_sqrt(0) = 0
        let p = pinv_sqrt(&PsdMatrix::zeros(3), DEFAULT_RANK_TOL);
        assert_eq!(p.as_matrix().norm(), 0.0);
    }

    #[test]
    fn norm_examples() {
        let n = norms(&sym(dmatrix![3.0, 0.0; 0.0, -4.0]));
        assert!((n.op - 4.0).abs() < 1e-12);
        assert!((n.hs - 5.0).abs() < 1e-12);
        assert!((n.trace - 7.0).abs() < 1e-12);

        let n = norms(&SymMatrix::identity(4));
        assert!((n.op - 1.0).abs() < 1e-12);
        assert!((n.hs - 2.0).abs() < 1e-12);
        assert!((n.trace - 4.0).abs() < 1e-12);

        let n = norms(&SymMatrix::zeros(2));
        assert_eq!((n.op, n.hs, n.trace), (0.0, 0.0, 0.0));
    }

    #[test]
    fn loewner_examples() {
        let a = sym(dmatrix![1.0, 0.0; 0.0, 1.0]);
        let b = sym(dmatrix![2.0, 0.0; 0.0, 3.0]);
        assert!(loewner_leq(&a, &b, 1e-10).unwrap());

        let a = sym(dmatrix![2.0, 0.0; 0.0, 0.0]);
        let b = sym(dmatrix![1.0, 0.0; 0.0, 5.0]);
        assert!(!loewner_leq(&a, &b, 1e-10).unwrap());

        // reflexivity
        let a = sym(dmatrix![1.0, 0.5; 0.5, 2.0]);
        assert!(loewner_leq(&a, &a, 1e-10).unwrap());

        assert!(loewner_leq(&SymMatrix::identity(2), &SymMatrix::identity(3), 1e-10).is_err());
    }

    #[test]
    fn sqrt_derivative_equal_eigenvalues() {
        // F = lambda I gives D = H / (2 sqrt(lambda))
        let f = psd(dmatrix![4.0, 0.0; 0.0, 4.0]);
        let h = sym(dmatrix![1.0, 2.0; 2.0, -1.0]);
        let d = sqrt_frechet_derivative(&f, &h, DEFAULT_RANK_TOL).unwrap();
        assert!((d.as_matrix() - h.as_matrix() / 4.0).norm() < 1e-12);
    }

    #[test]
    fn sqrt_derivative_diagonal_case() {
        // divisor sqrt(4) + sqrt(1) = 3 on the off-diagonal
        let f = psd(dmatrix![4.0, 0.0; 0.0, 1.0]);
        let h = sym(dmatrix![0.0, 1.0; 1.0, 0.0]);
        let d = sqrt_frechet_derivative(&f, &h, DEFAULT_RANK_TOL).unwrap();
        let expected = dmatrix![0.0, 1.0 / 3.0; 1.0 / 3.0, 0.0];
        assert!((d.as_matrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn sqrt_derivative_matches_finite_difference() {
        let f = psd(dmatrix![2.0, 0.3, 0.1; 0.3, 1.5, -0.2; 0.1, -0.2, 1.0]);
        let h = sym(dmatrix![0.4, -0.1, 0.2; -0.1, 0.3, 0.0; 0.2, 0.0, -0.5]);
        let d = sqrt_frechet_derivative(&f, &h, DEFAULT_RANK_TOL).unwrap();

        let eps = 1e-6;
        let plus = matrix_sqrt(&PsdMatrix::from_matrix(f.as_matrix() + h.as_matrix() * eps).unwrap());
        let minus =
            matrix_sqrt(&PsdMatrix::from_matrix(f.as_matrix() - h.as_matrix() * eps).unwrap());
        let fd = (plus.as_matrix() - minus.as_matrix()) / (2.0 * eps);
        assert!((d.as_matrix() - &fd).norm() <= 1e-5 * fd.norm());

        // Sylvester residual
        let root = matrix_sqrt(&f);
        let resid = root.as_matrix() * d.as_matrix() + d.as_matrix() * root.as_matrix()
            - h.as_matrix();
        assert!(resid.norm() <= 1e-9 * h.hs_norm());
    }

    #[test]
    fn sqrt_derivative_rejects_singular_base() {
        let f = psd(dmatrix![1.0, 0.0; 0.0, 0.0]);
        let h = SymMatrix::identity(2);
        assert!(matches!(
            sqrt_frechet_derivative(&f, &h, DEFAULT_RANK_TOL),
            Err(BwError::Singular(_))
        ));
    }
}
