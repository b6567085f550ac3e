//! Random covariance generators with known ground-truth barycentres: the
//! template deformation model, a Wishart sampler, the degenerate chi-squared
//! example, and the commuting family exhibiting instability of optimal maps.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{BwError, Result};
use crate::psd::{matrix_sqrt, op_norm, PsdMatrix, SymMatrix};
use crate::random::standard_normal;

/// Template deformation model: `Sigma = T Xi T` with
/// `T = I + sum_k u_k B_k`, `u_k ~ Uniform(-c_k, c_k)`.
///
/// The amplitude budget `sum_k c_k < 1` keeps every realisation of `T`
/// bounded below by `(1 - sum c_k) I`, so `T` is symmetric positive definite
/// and is itself the optimal map from `Xi` to `Sigma`. Since `E[u_k] = 0`,
/// `E[T] = I` and `Xi` is the true barycentre.
#[derive(Debug, Clone)]
pub struct DeformationSpec {
    xi: PsdMatrix,
    directions: Vec<SymMatrix>,
    amplitudes: Vec<f64>,
}

impl DeformationSpec {
    pub fn new(xi: PsdMatrix, directions: Vec<SymMatrix>, amplitudes: Vec<f64>) -> Result<Self> {
        if directions.len() != amplitudes.len() {
            return Err(BwError::input(format!(
                "{} directions but {} amplitudes",
                directions.len(),
                amplitudes.len()
            )));
        }
        for b in &directions {
            if b.dim() != xi.dim() {
                return Err(BwError::DimensionMismatch {
                    left: xi.dim(),
                    right: b.dim(),
                });
            }
            if op_norm(b) > 1.0 + 1e-12 {
                return Err(BwError::input("direction operator norm exceeds 1"));
            }
        }
        let total: f64 = amplitudes.iter().sum();
        if amplitudes.iter().any(|&c| !(0.0..1.0).contains(&c)) || total >= 1.0 {
            return Err(BwError::input(format!(
                "amplitudes must lie in [0,1) with sum < 1 (sum = {total})"
            )));
        }
        Ok(DeformationSpec {
            xi,
            directions,
            amplitudes,
        })
    }

    pub fn xi(&self) -> &PsdMatrix {
        &self.xi
    }

    pub fn directions(&self) -> &[SymMatrix] {
        &self.directions
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.xi.dim()
    }
}

/// Draws one `(Sigma, T)` pair from the deformation model. `T` is the exact
/// optimal map from the template to `Sigma`, usable as experiment ground truth.
pub fn sample_template_deformation(
    spec: &DeformationSpec,
    rng: &mut impl Rng,
) -> (PsdMatrix, SymMatrix) {
    let d = spec.dim();
    let mut t = DMatrix::identity(d, d);
    for (b, &c) in spec.directions.iter().zip(&spec.amplitudes) {
        if c > 0.0 {
            let u: f64 = rng.gen_range(-c..c);
            t += b.as_matrix() * u;
        }
    }
    let t = SymMatrix::symmetrize(t);
    let sigma = PsdMatrix::new(SymMatrix::symmetrize(
        t.as_matrix() * spec.xi.as_matrix() * t.as_matrix(),
    ))
    .expect("T Xi T is PSD for PSD T");
    (sigma, t)
}

/// Normalized Wishart draw `(1/dof) sum_j x_j x_j^T` with `x_j ~ N(0, scale)`.
pub fn sample_wishart(scale: &PsdMatrix, dof: usize, rng: &mut impl Rng) -> Result<PsdMatrix> {
    let d = scale.dim();
    if dof < d {
        return Err(BwError::input(format!(
            "dof = {dof} below dimension {d}: draws would be surely singular"
        )));
    }
    let root = matrix_sqrt(scale);
    let mut acc = DMatrix::zeros(d, d);
    for _ in 0..dof {
        let z = DVector::from_fn(d, |_, _| standard_normal(rng));
        let x = root.as_matrix() * z;
        acc += &x * x.transpose();
    }
    acc /= dof as f64;
    PsdMatrix::new(SymMatrix::symmetrize(acc))
}

/// The degenerate 2x2 example `Sigma = diag(W, 0)` with `W ~ chi^2_1`:
/// never positive definite, yet the population barycentre is unique,
/// `diag(2/pi, 0)`.
pub fn degenerate_chi2_example(rng: &mut impl Rng) -> PsdMatrix {
    let z = standard_normal(rng);
    PsdMatrix::from_diagonal(&[z * z, 0.0]).expect("chi-square draw is non-negative")
}

/// Population barycentre of the degenerate chi-squared example,
/// `diag((E sqrt(W))^2, 0) = diag(2/pi, 0)`.
pub fn chi2_population_barycenter() -> PsdMatrix {
    PsdMatrix::from_diagonal(&[2.0 / std::f64::consts::PI, 0.0]).expect("constant diagonal")
}

/// Commuting family on which optimal maps are unstable: `Xi = diag(lambda^2)`
/// and `Xi_n = a^2 E_n + b^2 Xi` with `E_n` the rank-`n` truncation and
/// `a^2 = 1 - b^2`. The maps `T_{Xi_n}^{Xi}` keep a constant operator-norm
/// gap `|1 - 1/b|` from the identity while `Xi_n -> Xi` in distance.
#[derive(Debug, Clone)]
pub struct InstabilityFamily {
    pub dim: usize,
    pub b: f64,
    pub lambda_sq: Vec<f64>,
    pub xi: PsdMatrix,
    /// `Xi_n` for `n = 1, ..., dim - 1`.
    pub xi_n: Vec<PsdMatrix>,
}

impl InstabilityFamily {
    /// The exact operator-norm gap `|1 - 1/b|`.
    pub fn expected_gap(&self) -> f64 {
        (1.0 - 1.0 / self.b).abs()
    }

    /// The exact distance `(1 - b) * sqrt(sum_{j>n} lambda_j^2)` for a given
    /// truncation level `n` (1-based).
    pub fn expected_distance(&self, n: usize) -> f64 {
        let tail: f64 = self.lambda_sq[n..].iter().sum();
        (1.0 - self.b) * tail.sqrt()
    }
}

/// Default eigenvalue profile `lambda_j^2 = 2^{-j}`. The last entry absorbs
/// the remaining dyadic tail (`2^{-(dim-1)}` instead of `2^{-dim}`), so every
/// truncated tail sum equals the infinite one, `sum_{j>n} lambda_j^2 = 2^{-n}`,
/// exactly — the distance curve then matches the closed form `2^{-n/2}` at
/// machine precision for every `n < dim`.
pub fn dyadic_lambda_profile(dim: usize) -> Vec<f64> {
    let mut profile: Vec<f64> = (1..=dim as i32).map(|j| 2.0f64.powi(-j)).collect();
    profile[dim - 1] = 2.0f64.powi(-(dim as i32 - 1));
    profile
}

pub fn instability_sequence(dim: usize, b: f64, lambda_sq: &[f64]) -> Result<InstabilityFamily> {
    if !(0.0 < b && b < 1.0) {
        return Err(BwError::input(format!("b = {b} must lie in (0, 1)")));
    }
    if lambda_sq.len() != dim {
        return Err(BwError::input(format!(
            "{} eigenvalues for dimension {dim}",
            lambda_sq.len()
        )));
    }
    if lambda_sq.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(BwError::input("eigenvalue profile must be positive"));
    }
    let a_sq = 1.0 - b * b;
    let b_sq = b * b;
    let xi = PsdMatrix::from_diagonal(lambda_sq)?;
    let mut xi_n = Vec::with_capacity(dim - 1);
    for n in 1..dim {
        let diag: Vec<f64> = lambda_sq
            .iter()
            .enumerate()
            .map(|(j, &l)| if j < n { a_sq * l + b_sq * l } else { b_sq * l })
            .collect();
        xi_n.push(PsdMatrix::from_diagonal(&diag)?);
    }
    Ok(InstabilityFamily {
        dim,
        b,
        lambda_sq: lambda_sq.to_vec(),
        xi,
        xi_n,
    })
}
