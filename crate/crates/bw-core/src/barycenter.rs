//! Empirical Fréchet mean computation by fixed-point iteration, with
//! residual, functional, and domination diagnostics, plus a commuting-family
//! oracle used to validate the solver.

use nalgebra::DMatrix;

use crate::error::{BwError, Result};
use crate::metric::bw_distance;
use crate::psd::{
    check_same_dim, loewner_leq, matrix_sqrt, spectral_decompose, sqrt_denoised, trace_norm,
    PsdMatrix, SymMatrix, DEFAULT_RANK_TOL,
};

/// Solver initialization.
#[derive(Debug, Clone)]
pub enum BarycenterInit {
    /// Start from the arithmetic mean of the samples (positive definite
    /// whenever any sample is, and an upper bound in the Loewner order).
    ArithmeticMean,
    Provided(PsdMatrix),
}

#[derive(Debug, Clone)]
pub struct BarycenterConfig {
    /// Relative tolerance on the successive-iterate trace distance.
    pub rtol: f64,
    pub max_iter: usize,
    pub rank_tol: f64,
    pub init: BarycenterInit,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        BarycenterConfig {
            rtol: 1e-10,
            max_iter: 500,
            rank_tol: DEFAULT_RANK_TOL,
            init: BarycenterInit::ArithmeticMean,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarycenterResult {
    pub barycenter: PsdMatrix,
    pub iterations: usize,
    /// Trace-norm residual of the empirical fixed-point equation.
    pub residual: f64,
    /// Value of the empirical Fréchet functional at the returned point.
    pub functional_value: f64,
    /// Functional value at each iterate, nonincreasing along the iteration.
    pub functional_trace: Vec<f64>,
    pub converged: bool,
    /// Set when no sample is positive definite, in which case the stationary
    /// point returned need not be the unique Fréchet mean.
    pub uniqueness_warning: bool,
}

fn check_samples(samples: &[PsdMatrix]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| BwError::input("empty sample list"))?;
    let d = first.dim();
    for s in samples {
        check_same_dim(d, s.dim())?;
    }
    Ok(d)
}

/// Weighted empirical Fréchet functional `sum_i w_i * distance(sample_i, f)^2`.
/// `weights = None` means uniform `1/n`.
pub fn frechet_functional(
    f: &PsdMatrix,
    samples: &[PsdMatrix],
    weights: Option<&[f64]>,
) -> Result<f64> {
    let d = check_samples(samples)?;
    check_same_dim(d, f.dim())?;
    let n = samples.len();
    if let Some(w) = weights {
        if w.len() != n {
            return Err(BwError::input("weights length does not match samples"));
        }
        if w.iter().any(|&x| x < 0.0) {
            return Err(BwError::input("weights must be non-negative"));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(BwError::input(format!("weights sum to {total}, expected 1")));
        }
    }
    let mut value = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let dist = bw_distance(s, f)?;
        let w = weights.map_or(1.0 / n as f64, |w| w[i]);
        value += w * dist * dist;
    }
    Ok(value)
}

/// Trace-norm residual `||Xi - (1/n) sum_i (Xi^{1/2} Sigma_i Xi^{1/2})^{1/2}||_1`
/// of the empirical fixed-point equation.
pub fn fixed_point_residual(xi: &PsdMatrix, samples: &[PsdMatrix]) -> Result<f64> {
    let d = check_samples(samples)?;
    check_same_dim(d, xi.dim())?;
    let root = matrix_sqrt(xi);
    let mut mean = DMatrix::zeros(d, d);
    for s in samples {
        let inner = SymMatrix::symmetrize(root.as_matrix() * s.as_matrix() * root.as_matrix());
        mean += sqrt_denoised(&spectral_decompose(&inner)).as_matrix();
    }
    mean /= samples.len() as f64;
    Ok(trace_norm(&SymMatrix::symmetrize(xi.as_matrix() - mean)))
}

/// Checks that the candidate barycentre sits below the arithmetic mean of the
/// samples in the Loewner order.
pub fn check_domination(xi_hat: &PsdMatrix, samples: &[PsdMatrix], tol: f64) -> Result<bool> {
    let d = check_samples(samples)?;
    check_same_dim(d, xi_hat.dim())?;
    let mean = arithmetic_mean(samples);
    loewner_leq(xi_hat.as_sym(), mean.as_sym(), tol)
}

fn arithmetic_mean(samples: &[PsdMatrix]) -> PsdMatrix {
    let d = samples[0].dim();
    let mut mean = DMatrix::zeros(d, d);
    for s in samples {
        mean += s.as_matrix();
    }
    mean /= samples.len() as f64;
    PsdMatrix::new(SymMatrix::symmetrize(mean)).expect("mean of PSD matrices is PSD")
}

/// Barycentre of a pairwise-commuting family: `((1/n) sum_i Sigma_i^{1/2})^2`,
/// the coordinatewise one-dimensional Fréchet mean in the common eigenbasis.
/// Independent of the fixed-point solver; used as its oracle.
pub fn commuting_barycenter_oracle(samples: &[PsdMatrix]) -> Result<PsdMatrix> {
    let d = check_samples(samples)?;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let a = samples[i].as_matrix();
            let b = samples[j].as_matrix();
            let comm = (a * b) - (b * a);
            let scale = (a.norm() * b.norm()).max(1.0);
            if comm.norm() > 1e-8 * scale {
                return Err(BwError::input(format!(
                    "samples {i} and {j} do not commute: ||[A,B]|| = {:e}",
                    comm.norm()
                )));
            }
        }
    }
    let mut mean_root = DMatrix::zeros(d, d);
    for s in samples {
        mean_root += matrix_sqrt(s).as_matrix();
    }
    mean_root /= samples.len() as f64;
    PsdMatrix::new(SymMatrix::symmetrize(&mean_root * &mean_root))
}

/// Central finite difference of `tr phi_n` at `xi_hat` in direction `h`, where
/// `phi_n(F) = (1/n) sum_i (F^{1/2} Sigma_i F^{1/2})^{1/2} - F`.
///
/// At a converged barycentre this equals `-tr(h)/2` up to `O(eps^2)`.
pub fn trace_derivative_check(
    xi_hat: &PsdMatrix,
    samples: &[PsdMatrix],
    h: &SymMatrix,
    eps: f64,
) -> Result<f64> {
    let d = check_samples(samples)?;
    check_same_dim(d, xi_hat.dim())?;
    check_same_dim(d, h.dim())?;
    let dec = spectral_decompose(xi_hat.as_sym());
    let lambda_max = dec.eigenvalues.first().copied().unwrap_or(0.0);
    let lambda_min = dec.eigenvalues.last().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 || lambda_min <= DEFAULT_RANK_TOL * lambda_max {
        return Err(BwError::input(
            "trace derivative check requires a positive definite base point",
        ));
    }
    let trace_phi = |f: &PsdMatrix| -> f64 {
        let root = matrix_sqrt(f);
        let mut total = 0.0;
        for s in samples {
            let inner = SymMatrix::symmetrize(root.as_matrix() * s.as_matrix() * root.as_matrix());
            total += sqrt_denoised(&spectral_decompose(&inner)).trace();
        }
        total / samples.len() as f64 - f.trace()
    };
    let plus = PsdMatrix::new(SymMatrix::symmetrize(
        xi_hat.as_matrix() + h.as_matrix() * eps,
    ))
    .map_err(|_| BwError::input("xi + eps*h is not PSD"))?;
    let minus = PsdMatrix::new(SymMatrix::symmetrize(
        xi_hat.as_matrix() - h.as_matrix() * eps,
    ))
    .map_err(|_| BwError::input("xi - eps*h is not PSD"))?;
    Ok((trace_phi(&plus) - trace_phi(&minus)) / (2.0 * eps))
}

/// Empirical barycentre by fixed-point iteration: push the current iterate
/// forward by the averaged optimal map, `Xi_{k+1} = Tbar Xi_k Tbar` with
/// `Tbar = (1/n) sum_i T_{Xi_k}^{Sigma_i}`.
///
/// Samples are first projected onto `range(S_n)` (the arithmetic mean's range)
/// since the barycentre's kernel contains `ker(S_n)`; the result is embedded
/// back with zeros on the null directions.
pub fn barycenter_fixed_point(
    samples: &[PsdMatrix],
    cfg: &BarycenterConfig,
) -> Result<BarycenterResult> {
    let dim = check_samples(samples)?;
    if cfg.rtol <= 0.0 {
        return Err(BwError::input("rtol must be positive"));
    }
    if cfg.max_iter == 0 {
        return Err(BwError::input("max_iter must be at least 1"));
    }

    let uniqueness_warning = !samples.iter().any(|s| {
        let eig = spectral_decompose(s.as_sym()).eigenvalues;
        let top = eig[0];
        top > 0.0 && eig[dim - 1] > cfg.rank_tol * top
    });

    let mean = arithmetic_mean(samples);
    let mean_dec = spectral_decompose(mean.as_sym());
    let lambda_max = mean_dec.eigenvalues[0];
    if lambda_max <= 0.0 {
        // all samples are zero
        return Ok(BarycenterResult {
            barycenter: PsdMatrix::zeros(dim),
            iterations: 0,
            residual: 0.0,
            functional_value: 0.0,
            functional_trace: vec![0.0],
            converged: true,
            uniqueness_warning,
        });
    }
    let rank = mean_dec
        .eigenvalues
        .iter()
        .filter(|&&l| l > cfg.rank_tol * lambda_max)
        .count();
    let basis = mean_dec.eigenvectors.columns(0, rank).into_owned();
    let reduce = |m: &PsdMatrix| -> Result<PsdMatrix> {
        if rank == dim {
            Ok(m.clone())
        } else {
            PsdMatrix::new(SymMatrix::symmetrize(
                basis.transpose() * m.as_matrix() * &basis,
            ))
        }
    };

    let red_samples: Vec<PsdMatrix> = samples.iter().map(&reduce).collect::<Result<_>>()?;
    let mut xi = match &cfg.init {
        BarycenterInit::ArithmeticMean => reduce(&mean)?,
        BarycenterInit::Provided(p) => {
            check_same_dim(dim, p.dim())?;
            reduce(p)?
        }
    };

    let n = red_samples.len() as f64;
    let mut functional_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for iter in 1..=cfg.max_iter {
        iterations = iter;
        let dec = spectral_decompose(xi.as_sym());
        let top = dec.eigenvalues[0].max(0.0);
        let cutoff = cfg.rank_tol * top;
        let root = PsdMatrix::from_spectral(&dec.eigenvectors, &dec.eigenvalues, f64::sqrt);
        let pinv = PsdMatrix::from_spectral(&dec.eigenvectors, &dec.eigenvalues, |l| {
            if l > cutoff && l > 0.0 {
                1.0 / l.sqrt()
            } else {
                0.0
            }
        });

        // mean of (Xi^{1/2} Sigma_i Xi^{1/2})^{1/2}, plus the functional value
        // at the current iterate from the same decompositions
        let mut mean_mid = DMatrix::zeros(rank, rank);
        let mut functional = 0.0;
        for s in &red_samples {
            let inner = SymMatrix::symmetrize(root.as_matrix() * s.as_matrix() * root.as_matrix());
            let mid = sqrt_denoised(&spectral_decompose(&inner));
            functional += (xi.trace() + s.trace() - 2.0 * mid.trace()).max(0.0);
            mean_mid += mid.as_matrix();
        }
        mean_mid /= n;
        functional /= n;
        functional_trace.push(functional);

        let residual = trace_norm(&SymMatrix::symmetrize(xi.as_matrix() - &mean_mid));

        let t_bar = SymMatrix::symmetrize(pinv.as_matrix() * mean_mid * pinv.as_matrix());
        let next_mat = SymMatrix::symmetrize(t_bar.as_matrix() * xi.as_matrix() * t_bar.as_matrix());
        if next_mat.as_matrix().iter().any(|x| !x.is_finite()) {
            return Err(BwError::Numerical(format!(
                "barycentre iteration {iter} produced non-finite entries"
            )));
        }
        let next = PsdMatrix::new(next_mat)
            .map_err(|e| BwError::Numerical(format!("iteration {iter} left the PSD cone: {e}")))?;

        let step = trace_norm(&SymMatrix::symmetrize(next.as_matrix() - xi.as_matrix()));
        let scale = trace_norm(xi.as_sym()).max(1.0);
        xi = next;
        if step < cfg.rtol * scale && residual <= 5.0 * cfg.rtol * xi.trace().max(1.0) {
            converged = true;
            break;
        }
    }

    // embed back into the full space
    let barycenter = if rank == dim {
        xi
    } else {
        PsdMatrix::new(SymMatrix::symmetrize(
            &basis * xi.as_matrix() * basis.transpose(),
        ))?
    };
    let residual = fixed_point_residual(&barycenter, samples)?;
    let functional_value = frechet_functional(&barycenter, samples, None)?;
    functional_trace.push(functional_value);

    Ok(BarycenterResult {
        barycenter,
        iterations,
        residual,
        functional_value,
        functional_trace,
        converged,
        uniqueness_warning,
    })
}
