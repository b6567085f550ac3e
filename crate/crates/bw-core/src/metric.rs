//! Bures-Wasserstein distance in its three equivalent closed forms, optimal
//! Gaussian transport maps, and the tangent-space log/exp machinery.

use nalgebra::DMatrix;

use crate::error::{BwError, Result};
use crate::psd::{
    check_same_dim, matrix_sqrt, op_norm, spectral_decompose, trace_norm, PsdMatrix,
    SymMatrix, DEFAULT_RANK_TOL,
};

/// Linear optimal map pushing `N(0, source)` to `N(0, target)`.
#[derive(Debug, Clone)]
pub struct TransportMap {
    pub source: PsdMatrix,
    pub target: PsdMatrix,
    /// The symmetric PSD map `T`.
    pub matrix: PsdMatrix,
}

/// Tangent vector `V = T - I` at a base point.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub base: PsdMatrix,
    pub value: SymMatrix,
}

/// `tr (G^{1/2} F G^{1/2})^{1/2}`, the cross term of the closed-form distance.
fn inner_sqrt_trace(f: &PsdMatrix, g: &PsdMatrix) -> f64 {
    let g_root = matrix_sqrt(g);
    let prod = g_root.as_matrix() * f.as_matrix() * g_root.as_matrix();
    // symmetrize before the square root to absorb roundoff
    let sym = SymMatrix::symmetrize(prod);
    let eigenvalues = spectral_decompose(&sym).eigenvalues;
    // the square root amplifies eigenvalue roundoff at zero (eps -> sqrt(eps)),
    // so null directions of the product are cut at the spectral noise floor
    let noise = eigenvalues[0].max(0.0) * f.dim() as f64 * f64::EPSILON;
    eigenvalues
        .iter()
        .map(|&l| if l > noise { l.sqrt() } else { 0.0 })
        .sum()
}

/// Bures-Wasserstein distance, closed form:
/// `sqrt(tr F + tr G - 2 tr (G^{1/2} F G^{1/2})^{1/2})`.
pub fn bw_distance(f: &PsdMatrix, g: &PsdMatrix) -> Result<f64> {
    check_same_dim(f.dim(), g.dim())?;
    let sq = f.trace() + g.trace() - 2.0 * inner_sqrt_trace(f, g);
    Ok(sq.max(0.0).sqrt())
}

/// Bures-Wasserstein distance via the Procrustes form: the orthogonal
/// alignment problem has closed-form value
/// `sqrt(tr F + tr G - 2 ||G^{1/2} F^{1/2}||_nuclear)`.
pub fn bw_distance_procrustes(f: &PsdMatrix, g: &PsdMatrix) -> Result<f64> {
    check_same_dim(f.dim(), g.dim())?;
    let prod = matrix_sqrt(g).as_matrix() * matrix_sqrt(f).as_matrix();
    let nuclear: f64 = prod.svd(false, false).singular_values.iter().sum();
    let sq = f.trace() + g.trace() - 2.0 * nuclear;
    Ok(sq.max(0.0).sqrt())
}

/// Optimal transport map `T = F^{-1/2} (F^{1/2} G F^{1/2})^{1/2} F^{-1/2}`,
/// with inverses taken in the Moore-Penrose sense on `range(F)`.
///
/// Existence requires `ker(F) ⊆ ker(G)` up to `rank_tol`; a violation is
/// reported as `KernelMismatch` rather than silently projected away.
pub fn optimal_map(f: &PsdMatrix, g: &PsdMatrix, rank_tol: f64) -> Result<TransportMap> {
    check_same_dim(f.dim(), g.dim())?;
    let decomp = spectral_decompose(f.as_sym());
    let lambda_max = decomp.eigenvalues.first().copied().unwrap_or(0.0);
    let cutoff = rank_tol * lambda_max;

    let kernel_cols: Vec<usize> = (0..f.dim())
        .filter(|&i| decomp.eigenvalues[i] <= cutoff)
        .collect();
    if !kernel_cols.is_empty() {
        // || P_ker(F) G P_ker(F) ||_op must vanish relative to ||G||_op
        let d = f.dim();
        let mut proj = DMatrix::zeros(d, d);
        for &i in &kernel_cols {
            let v = decomp.eigenvectors.column(i);
            proj += &v * v.transpose();
        }
        let pgp = SymMatrix::symmetrize(&proj * g.as_matrix() * &proj);
        let g_op = op_norm(g.as_sym());
        if op_norm(&pgp) > rank_tol * g_op && g_op > 0.0 {
            return Err(BwError::KernelMismatch(format!(
                "ker(F) not contained in ker(G): ||P G P||_op = {:e} vs rank_tol * ||G||_op = {:e}",
                op_norm(&pgp),
                rank_tol * g_op
            )));
        }
    }

    let root = PsdMatrix::from_spectral(&decomp.eigenvectors, &decomp.eigenvalues, f64::sqrt);
    let pinv = PsdMatrix::from_spectral(&decomp.eigenvectors, &decomp.eigenvalues, |l| {
        if l > cutoff && l > 0.0 {
            1.0 / l.sqrt()
        } else {
            0.0
        }
    });

    let inner = SymMatrix::symmetrize(root.as_matrix() * g.as_matrix() * root.as_matrix());
    let inner_dec = spectral_decompose(&inner);
    let mid = PsdMatrix::from_spectral(&inner_dec.eigenvectors, &inner_dec.eigenvalues, f64::sqrt);

    let t = SymMatrix::symmetrize(pinv.as_matrix() * mid.as_matrix() * pinv.as_matrix());
    let matrix = PsdMatrix::new(t)?;
    Ok(TransportMap {
        source: f.clone(),
        target: g.clone(),
        matrix,
    })
}

/// Distance through the transport map: `||(T - I) F^{1/2}||_HS`.
pub fn bw_distance_via_map(f: &PsdMatrix, g: &PsdMatrix) -> Result<f64> {
    let map = optimal_map(f, g, DEFAULT_RANK_TOL)?;
    let d = f.dim();
    let diff = map.matrix.as_matrix() - DMatrix::identity(d, d);
    Ok((diff * matrix_sqrt(f).as_matrix()).norm())
}

/// Log map: tangent vector `V = T_base^target - I` at `base`.
pub fn log_map(base: &PsdMatrix, target: &PsdMatrix) -> Result<TangentVector> {
    let map = optimal_map(base, target, DEFAULT_RANK_TOL)?;
    let value = map.matrix.as_sym().sub(&SymMatrix::identity(base.dim()))?;
    Ok(TangentVector {
        base: base.clone(),
        value,
    })
}

/// Exp map: push-forward `(I + V) base (I + V)`, requiring `I + V` PSD.
pub fn exp_map(base: &PsdMatrix, value: &SymMatrix) -> Result<PsdMatrix> {
    check_same_dim(base.dim(), value.dim())?;
    let t = PsdMatrix::new(value.add(&SymMatrix::identity(base.dim()))?)
        .map_err(|_| BwError::input("I + V is not positive semi-definite"))?;
    PsdMatrix::new(SymMatrix::symmetrize(
        t.as_matrix() * base.as_matrix() * t.as_matrix(),
    ))
}

/// Tangent-space norm at `base`: `||base^{1/2} V||_HS`.
pub fn tangent_norm(base: &PsdMatrix, value: &SymMatrix) -> Result<f64> {
    check_same_dim(base.dim(), value.dim())?;
    Ok((matrix_sqrt(base).as_matrix() * value.as_matrix()).norm())
}

/// The two inequality chains relating the Bures-Wasserstein distance to the
/// trace-norm and square-root Hilbert-Schmidt distances
/// (Powers-Stormer on one side, trace domination on the other).
#[derive(Debug, Clone, Copy)]
pub struct TopologyBounds {
    /// `||F^{1/2} - G^{1/2}||_HS^2`
    pub root_gap_sq: f64,
    /// `||F - G||_trace`
    pub trace_gap: f64,
    /// `(tr(F)^{1/2} + tr(G)^{1/2}) * distance`
    pub weighted_distance: f64,
    /// The Bures-Wasserstein distance itself.
    pub distance: f64,
}

/// Computes the bound quadruple; the guarantees are
/// `root_gap_sq <= trace_gap <= weighted_distance` and
/// `distance^2 <= root_gap_sq <= trace_gap`.
pub fn lemma1_bounds(f: &PsdMatrix, g: &PsdMatrix) -> Result<TopologyBounds> {
    check_same_dim(f.dim(), g.dim())?;
    let root_gap = matrix_sqrt(f).as_sym().sub(matrix_sqrt(g).as_sym())?;
    let root_gap_sq = {
        let n = root_gap.hs_norm();
        n * n
    };
    let trace_gap = trace_norm(&f.as_sym().sub(g.as_sym())?);
    let distance = bw_distance(f, g)?;
    let weighted_distance = (f.trace().max(0.0).sqrt() + g.trace().max(0.0).sqrt()) * distance;
    Ok(TopologyBounds {
        root_gap_sq,
        trace_gap,
        weighted_distance,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_pd, random_shared_kernel_pair};
    use crate::rng::stream_rng;
    use nalgebra::dmatrix;

    fn psd(m: DMatrix<f64>) -> PsdMatrix {
        PsdMatrix::from_matrix(m).unwrap()
    }

    #[test]
    fn distance_examples() {
        let f = psd(dmatrix![2.0, 0.5; 0.5, 1.0]);
        // the self-distance floor is sqrt of the trace roundoff, ~1e-8
        assert!(bw_distance(&f, &f).unwrap() < 1e-7);

        let z = PsdMatrix::zeros(2);
        assert!((bw_distance(&f, &z).unwrap() - f.trace().sqrt()).abs() < 1e-12);

        // commuting pair: distance is ||F^{1/2} - G^{1/2}||_HS = sqrt(5)
        let a = psd(dmatrix![1.0, 0.0; 0.0, 9.0]);
        let b = psd(dmatrix![4.0, 0.0; 0.0, 1.0]);
        assert!((bw_distance(&a, &b).unwrap() - 5.0f64.sqrt()).abs() < 1e-12);

        assert!(bw_distance(&f, &PsdMatrix::identity(3)).is_err());
    }

    #[test]
    fn procrustes_examples() {
        let f = psd(dmatrix![2.0, 0.5; 0.5, 1.0]);
        assert!(bw_distance_procrustes(&f, &f).unwrap() < 1e-7);

        let a = PsdMatrix::identity(2);
        let b = psd(dmatrix![4.0, 0.0; 0.0, 4.0]);
        assert!((bw_distance_procrustes(&a, &b).unwrap() - 2.0f64.sqrt()).abs() < 1e-12);

        let mut rng = stream_rng(11, 0, 0);
        let f = random_pd(&mut rng, 6, 0.1, 2.0);
        let g = random_pd(&mut rng, 6, 0.1, 2.0);
        let d1 = bw_distance(&f, &g).unwrap();
        let d2 = bw_distance_procrustes(&f, &g).unwrap();
        assert!((d1 - d2).abs() <= 1e-8 * (1.0 + d1));
    }

    #[test]
    fn optimal_map_examples() {
        let f = psd(dmatrix![2.0, 0.5; 0.5, 1.0]);
        let t = optimal_map(&f, &f, DEFAULT_RANK_TOL).unwrap();
        assert!((t.matrix.as_matrix() - DMatrix::identity(2, 2)).norm() < 1e-9);

        let f = psd(dmatrix![4.0]);
        let g = psd(dmatrix![9.0]);
        let t = optimal_map(&f, &g, DEFAULT_RANK_TOL).unwrap();
        assert!((t.matrix.as_matrix()[(0, 0)] - 1.5).abs() < 1e-12);

        // commuting: T = G^{1/2} F^{-1/2}
        let f = psd(dmatrix![1.0, 0.0; 0.0, 4.0]);
        let g = psd(dmatrix![9.0, 0.0; 0.0, 1.0]);
        let t = optimal_map(&f, &g, DEFAULT_RANK_TOL).unwrap();
        assert!((t.matrix.as_matrix() - dmatrix![3.0, 0.0; 0.0, 0.5]).norm() < 1e-12);
    }

    #[test]
    fn optimal_map_kernel_mismatch() {
        let f = psd(dmatrix![1.0, 0.0; 0.0, 0.0]);
        let g = PsdMatrix::identity(2);
        assert!(matches!(
            optimal_map(&f, &g, DEFAULT_RANK_TOL),
            Err(BwError::KernelMismatch(_))
        ));
        // reversed direction is fine: ker(G) = 0
        assert!(optimal_map(&g, &f, DEFAULT_RANK_TOL).is_ok());
    }

    #[test]
    fn map_push_forward_and_inverse() {
        let mut rng = stream_rng(12, 0, 0);
        let f = random_pd(&mut rng, 5, 0.1, 2.0);
        let g = random_pd(&mut rng, 5, 0.1, 2.0);
        let t = optimal_map(&f, &g, DEFAULT_RANK_TOL).unwrap();
        let push = t.matrix.as_matrix() * f.as_matrix() * t.matrix.as_matrix();
        assert!((push - g.as_matrix()).norm() <= 1e-7 * g.as_sym().hs_norm());

        let back = optimal_map(&g, &f, DEFAULT_RANK_TOL).unwrap();
        let comp = t.matrix.as_matrix() * back.matrix.as_matrix();
        assert!((comp - DMatrix::identity(5, 5)).norm() <= 1e-7);
    }

    #[test]
    fn via_map_examples() {
        let f = psd(dmatrix![2.0, 0.5; 0.5, 1.0]);
        assert!(bw_distance_via_map(&f, &f).unwrap() < 1e-9);

        let f = psd(dmatrix![4.0]);
        let g = psd(dmatrix![9.0]);
        assert!((bw_distance_via_map(&f, &g).unwrap() - 1.0).abs() < 1e-12);

        let mut rng = stream_rng(13, 0, 0);
        let f = random_pd(&mut rng, 5, 0.1, 2.0);
        let g = random_pd(&mut rng, 5, 0.1, 2.0);
        let d1 = bw_distance(&f, &g).unwrap();
        let d3 = bw_distance_via_map(&f, &g).unwrap();
        assert!((d1 - d3).abs() <= 1e-8 * (1.0 + d1));
    }

    #[test]
    fn log_exp_round_trip() {
        let f = psd(dmatrix![2.0, 0.5; 0.5, 1.0]);
        let v = log_map(&f, &f).unwrap();
        assert!(v.value.hs_norm() < 1e-9);

        let base = psd(dmatrix![4.0]);
        let target = psd(dmatrix![9.0]);
        let v = log_map(&base, &target).unwrap();
        assert!((v.value.as_matrix()[(0, 0)] - 0.5).abs() < 1e-12);
        let back = exp_map(&base, &v.value).unwrap();
        assert!((back.as_matrix()[(0, 0)] - 9.0).abs() < 1e-10);

        let mut rng = stream_rng(14, 0, 0);
        let f = random_pd(&mut rng, 5, 0.1, 2.0);
        let g = random_pd(&mut rng, 5, 0.1, 2.0);
        let v = log_map(&f, &g).unwrap();
        // tangent norm of the log equals the distance
        let dist = bw_distance(&f, &g).unwrap();
        assert!((tangent_norm(&f, &v.value).unwrap() - dist).abs() <= 1e-8 * (1.0 + dist));
        let back = exp_map(&f, &v.value).unwrap();
        assert!((back.as_matrix() - g.as_matrix()).norm() <= 1e-8 * g.as_sym().hs_norm());
    }

    #[test]
    fn exp_map_rejects_non_psd_step() {
        let base = PsdMatrix::identity(2);
        let v = SymMatrix::new(dmatrix![-2.0, 0.0; 0.0, 0.0]).unwrap();
        assert!(matches!(exp_map(&base, &v), Err(BwError::Input(_))));
    }

    #[test]
    fn tangent_norm_examples() {
        let base = psd(dmatrix![4.0, 0.0; 0.0, 1.0]);
        assert_eq!(tangent_norm(&base, &SymMatrix::zeros(2)).unwrap(), 0.0);

        let v = SymMatrix::new(dmatrix![1.0, 0.3; 0.3, -0.5]).unwrap();
        let n = tangent_norm(&PsdMatrix::identity(2), &v).unwrap();
        assert!((n - v.hs_norm()).abs() < 1e-12);

        let n = tangent_norm(&base, &SymMatrix::identity(2)).unwrap();
        assert!((n - 5.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lemma1_examples() {
        let f = psd(dmatrix![2.0, 0.5; 0.5, 1.0]);
        let b = lemma1_bounds(&f, &f).unwrap();
        assert!(b.root_gap_sq < 1e-9 && b.trace_gap < 1e-9 && b.distance < 1e-7);

        let b = lemma1_bounds(&psd(dmatrix![4.0]), &psd(dmatrix![1.0])).unwrap();
        assert!((b.root_gap_sq - 1.0).abs() < 1e-10);
        assert!((b.trace_gap - 3.0).abs() < 1e-10);
        assert!((b.weighted_distance - 3.0).abs() < 1e-10);
        assert!((b.distance - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lemma1_chains_on_rank_deficient_pairs() {
        let mut rng = stream_rng(15, 0, 0);
        for trial in 0..50 {
            let rank = 1 + trial % 4;
            let (f, g) = random_shared_kernel_pair(&mut rng, 5, rank);
            let b = lemma1_bounds(&f, &g).unwrap();
            let slack = 1e-10 * b.weighted_distance.max(1.0);
            assert!(b.root_gap_sq <= b.trace_gap + slack);
            assert!(b.trace_gap <= b.weighted_distance + slack);
            assert!(b.distance * b.distance <= b.root_gap_sq + slack);
        }
    }
}
