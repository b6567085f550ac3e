//! Random symmetric/PSD matrix generators for property suites and experiments.

use nalgebra::DMatrix;
use rand::Rng;

use crate::psd::{PsdMatrix, SymMatrix};

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| standard_normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // fix signs so the distribution is Haar and columns are reproducible
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Random symmetric matrix with entries of order `scale`.
pub fn random_sym(rng: &mut impl Rng, dim: usize, scale: f64) -> SymMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| scale * standard_normal(rng));
    SymMatrix::new((&g + g.transpose()) * 0.5).expect("symmetrized Gaussian matrix")
}

/// Random positive definite matrix with eigenvalues uniform in `[lo, hi]`.
pub fn random_pd(rng: &mut impl Rng, dim: usize, lo: f64, hi: f64) -> PsdMatrix {
    random_psd_rank(rng, dim, dim, lo, hi)
}

/// Random PSD matrix of the given rank, nonzero eigenvalues uniform in `[lo, hi]`.
pub fn random_psd_rank(rng: &mut impl Rng, dim: usize, rank: usize, lo: f64, hi: f64) -> PsdMatrix {
    assert!(rank <= dim);
    let q = random_orthogonal(rng, dim);
    let mut diag = DMatrix::zeros(dim, dim);
    for i in 0..rank {
        diag[(i, i)] = rng.gen_range(lo..hi);
    }
    let m = &q * diag * q.transpose();
    PsdMatrix::from_matrix((&m + m.transpose()) * 0.5).expect("constructed PSD matrix")
}

/// Pair of PSD matrices sharing the same kernel (possibly trivial), so the
/// optimal transport map between them exists in both directions.
pub fn random_shared_kernel_pair(
    rng: &mut impl Rng,
    dim: usize,
    rank: usize,
) -> (PsdMatrix, PsdMatrix) {
    assert!(rank <= dim && rank > 0);
    let q = random_orthogonal(rng, dim);
    let build = |rng: &mut dyn rand::RngCore| {
        let mut diag = DMatrix::zeros(dim, dim);
        for i in 0..rank {
            diag[(i, i)] = rng.gen_range(0.1..3.0);
        }
        let m = &q * diag * q.transpose();
        PsdMatrix::from_matrix((&m + m.transpose()) * 0.5).expect("constructed PSD matrix")
    };
    let f = build(rng);
    let g = build(rng);
    (f, g)
}

/// Standard normal draw via Box-Muller on the uniform stream.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    // rand_distr would work as well; an explicit Box-Muller keeps the stream
    // layout independent of distribution-crate internals.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
