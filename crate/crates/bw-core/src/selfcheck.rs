//! Seeded property suites exercising the library's inequality and oracle
//! guarantees: distance cross-form agreement, the Powers-Stormer chains,
//! operator monotonicity, the Sylvester/derivative bounds, the trace identity
//! at converged barycentres, and solver descent/domination. The CLI `selfcheck`
//! command and the acceptance tests both run these with different scales.

use rand::Rng;

use crate::barycenter::{
    barycenter_fixed_point, check_domination, commuting_barycenter_oracle, trace_derivative_check,
    BarycenterConfig,
};
use crate::error::Result;
use crate::metric::{
    bw_distance, bw_distance_procrustes, bw_distance_via_map, lemma1_bounds,
};
use crate::models::sample_template_deformation;
use crate::psd::{
    loewner_leq, matrix_sqrt, sqrt_frechet_derivative, PsdMatrix, SymMatrix, DEFAULT_RANK_TOL,
};
use crate::random::{
    random_orthogonal, random_pd, random_psd_rank, random_shared_kernel_pair, random_sym,
    standard_normal,
};
use crate::rng::stream_rng;

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Diagnostic for the first failing case, if any.
    pub first_failure: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }
}

struct SuiteRecorder {
    result: SuiteResult,
}

impl SuiteRecorder {
    fn new(name: &str) -> Self {
        SuiteRecorder {
            result: SuiteResult {
                name: name.to_string(),
                cases: 0,
                failures: 0,
                first_failure: None,
            },
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.result.cases += 1;
        if !ok {
            self.result.failures += 1;
            if self.result.first_failure.is_none() {
                self.result.first_failure = Some(detail());
            }
        }
    }

    fn finish(self) -> SuiteResult {
        self.result
    }
}

/// Random PSD pair with existing optimal maps: full rank on even trials,
/// shared-kernel rank-deficient on odd ones.
fn random_pair(rng: &mut impl Rng, trial: usize, min_dim: usize, max_dim: usize) -> (PsdMatrix, PsdMatrix) {
    let dim = rng.gen_range(min_dim..=max_dim);
    if trial % 2 == 0 {
        let f = random_pd(rng, dim, 0.1, 3.0);
        let g = random_pd(rng, dim, 0.1, 3.0);
        (f, g)
    } else {
        let rank = rng.gen_range(1..=dim);
        random_shared_kernel_pair(rng, dim, rank)
    }
}

/// All three distance forms agree to `1e-8 * (1 + distance)` on seeded pairs,
/// rank-deficient ones included.
pub fn cross_form_suite(seed: u64, pairs: usize, min_dim: usize, max_dim: usize) -> Result<SuiteResult> {
    let mut rng = stream_rng(seed, 100, 0);
    let mut rec = SuiteRecorder::new("cross_form");
    for trial in 0..pairs {
        let (f, g) = random_pair(&mut rng, trial, min_dim, max_dim);
        let closed = bw_distance(&f, &g)?;
        let procrustes = bw_distance_procrustes(&f, &g)?;
        let via_map = bw_distance_via_map(&f, &g)?;
        let tol = 1e-8 * (1.0 + closed);
        let ok = (closed - procrustes).abs() <= tol && (closed - via_map).abs() <= tol;
        rec.record(ok, || {
            format!(
                "trial {trial}: closed={closed:e} procrustes={procrustes:e} map={via_map:e}"
            )
        });
    }
    Ok(rec.finish())
}

/// Both Lemma 1 chains with `1e-10` relative slack on the same pair family:
/// `distance^2 <= root_gap_sq <= trace_gap <= weighted_distance`.
pub fn lemma1_suite(seed: u64, pairs: usize, min_dim: usize, max_dim: usize) -> Result<SuiteResult> {
    let mut rng = stream_rng(seed, 100, 0);
    let mut rec = SuiteRecorder::new("lemma1");
    for trial in 0..pairs {
        let (f, g) = random_pair(&mut rng, trial, min_dim, max_dim);
        let b = lemma1_bounds(&f, &g)?;
        let slack = 1e-10 * b.weighted_distance.max(1.0);
        let ok = b.distance * b.distance <= b.root_gap_sq + slack
            && b.root_gap_sq <= b.trace_gap + slack
            && b.trace_gap <= b.weighted_distance + slack;
        rec.record(ok, || {
            format!(
                "trial {trial}: d^2={:e} root^2={:e} trace={:e} weighted={:e}",
                b.distance * b.distance,
                b.root_gap_sq,
                b.trace_gap,
                b.weighted_distance
            )
        });
    }
    Ok(rec.finish())
}

/// Lemma 4 monotonicity: `A <= B` implies `sqrt(A) <= sqrt(B)` and
/// `C^T A C <= C^T B C` for random `C`, at tolerance `1e-8`.
pub fn monotonicity_suite(seed: u64, pairs: usize, max_dim: usize) -> Result<SuiteResult> {
    let mut rng = stream_rng(seed, 101, 0);
    let mut rec = SuiteRecorder::new("monotonicity");
    for trial in 0..pairs {
        let dim = rng.gen_range(2..=max_dim);
        let a = random_pd(&mut rng, dim, 0.1, 2.0);
        let bump = random_psd_rank(&mut rng, dim, 1 + trial % dim, 0.0, 1.5);
        let b = PsdMatrix::new(a.as_sym().add(bump.as_sym())?)?;

        let sqrt_ok = loewner_leq(matrix_sqrt(&a).as_sym(), matrix_sqrt(&b).as_sym(), 1e-8)?;

        let c = nalgebra::DMatrix::from_fn(dim, dim, |_, _| standard_normal(&mut rng));
        let cac = SymMatrix::symmetrize(c.transpose() * a.as_matrix() * &c);
        let cbc = SymMatrix::symmetrize(c.transpose() * b.as_matrix() * &c);
        let conj_ok = loewner_leq(&cac, &cbc, 1e-8)?;

        rec.record(sqrt_ok && conj_ok, || {
            format!("trial {trial}: sqrt_ok={sqrt_ok} conj_ok={conj_ok} dim={dim}")
        });
    }
    Ok(rec.finish())
}

/// Lemma 3 bundle: Sylvester residual `<= 1e-9 ||H||`, central finite
/// difference agreement `<= 1e-5` relative, and the contraction bound
/// `||d_F g(F^{1/2} H)|| <= ||H||` with `1e-10` slack.
pub fn sylvester_suite(seed: u64, cases: usize, max_dim: usize) -> Result<SuiteResult> {
    let mut rng = stream_rng(seed, 102, 0);
    let mut rec = SuiteRecorder::new("sylvester");
    for trial in 0..cases {
        let dim = rng.gen_range(2..=max_dim);
        let f = random_pd(&mut rng, dim, 0.3, 2.0);
        let h = random_sym(&mut rng, dim, 1.0);
        let d = sqrt_frechet_derivative(&f, &h, DEFAULT_RANK_TOL)?;

        let root = matrix_sqrt(&f);
        let resid = (root.as_matrix() * d.as_matrix() + d.as_matrix() * root.as_matrix()
            - h.as_matrix())
        .norm();
        let resid_ok = resid <= 1e-9 * h.hs_norm().max(1e-300);

        let eps = 1e-6;
        let plus = matrix_sqrt(&PsdMatrix::new(SymMatrix::symmetrize(
            f.as_matrix() + h.as_matrix() * eps,
        ))?);
        let minus = matrix_sqrt(&PsdMatrix::new(SymMatrix::symmetrize(
            f.as_matrix() - h.as_matrix() * eps,
        ))?);
        let fd = (plus.as_matrix() - minus.as_matrix()) / (2.0 * eps);
        let fd_ok = (d.as_matrix() - &fd).norm() <= 1e-5 * fd.norm().max(1e-300);

        let rhs = SymMatrix::symmetrize(root.as_matrix() * h.as_matrix());
        let contraction = sqrt_frechet_derivative(&f, &rhs, DEFAULT_RANK_TOL)?;
        let contraction_ok = contraction.hs_norm() <= h.hs_norm() + 1e-10;

        rec.record(resid_ok && fd_ok && contraction_ok, || {
            format!(
                "trial {trial}: resid={resid:e} fd_gap={:e} contraction={:e} vs {:e}",
                (d.as_matrix() - &fd).norm(),
                contraction.hs_norm(),
                h.hs_norm()
            )
        });
    }
    Ok(rec.finish())
}

/// Trace identity at converged barycentres of deformation samples: the
/// finite-difference derivative of `tr phi_n` in direction `H` equals
/// `-tr(H)/2` within `1e-5`, for the identity and random symmetric directions.
pub fn trace_identity_suite(seed: u64, sets: usize, dim: usize, n: usize) -> Result<SuiteResult> {
    let mut rec = SuiteRecorder::new("trace_identity");
    let spec = crate::experiments::default_deformation_spec(dim);
    for set in 0..sets {
        let mut rng = stream_rng(seed, 103, set as u64);
        let samples: Vec<PsdMatrix> = (0..n)
            .map(|_| sample_template_deformation(&spec, &mut rng).0)
            .collect();
        let res = barycenter_fixed_point(&samples, &BarycenterConfig::default())?;
        if !res.converged {
            rec.record(false, || format!("set {set}: solver did not converge"));
            continue;
        }
        let mut directions = vec![SymMatrix::identity(dim)];
        for _ in 0..5 {
            directions.push(random_sym(&mut rng, dim, 0.5));
        }
        for (k, h) in directions.iter().enumerate() {
            let fd = trace_derivative_check(&res.barycenter, &samples, h, 1e-5)?;
            let expected = -h.trace() / 2.0;
            let ok = (fd - expected).abs() <= 1e-5 * expected.abs().max(1.0);
            rec.record(ok, || {
                format!("set {set} direction {k}: fd={fd:e} expected={expected:e}")
            });
        }
    }
    Ok(rec.finish())
}

/// Solver vs the commuting-family oracle: distance `<= 1e-7`, with functional
/// descent and arithmetic-mean domination in every run.
pub fn commuting_oracle_suite(
    seed: u64,
    sets: usize,
    max_dim: usize,
    max_n: usize,
) -> Result<SuiteResult> {
    let mut rec = SuiteRecorder::new("commuting_oracle");
    for set in 0..sets {
        let mut rng = stream_rng(seed, 104, set as u64);
        let dim = rng.gen_range(2..=max_dim);
        let n = rng.gen_range(2..=max_n);
        let q = random_orthogonal(&mut rng, dim);
        let samples: Vec<PsdMatrix> = (0..n)
            .map(|_| {
                let mut diag = nalgebra::DMatrix::zeros(dim, dim);
                for i in 0..dim {
                    diag[(i, i)] = rng.gen_range(0.1..3.0);
                }
                PsdMatrix::new(SymMatrix::symmetrize(&q * diag * q.transpose()))
                    .expect("similarity transform of a PSD diagonal")
            })
            .collect();
        let oracle = commuting_barycenter_oracle(&samples)?;
        // tighter than the default: near-singular eigenvalue profiles slow the
        // contraction, and the oracle comparison budget is 1e-7
        let solver = BarycenterConfig {
            rtol: 1e-12,
            max_iter: 2000,
            ..BarycenterConfig::default()
        };
        let res = barycenter_fixed_point(&samples, &solver)?;
        // the closed form cannot resolve distances below ~sqrt(eps * trace),
        // so pair it with the Procrustes upper bound ||A^1/2 - B^1/2||_HS,
        // which stays accurate for nearby matrices
        let sqrt_gap = matrix_sqrt(&res.barycenter)
            .as_sym()
            .sub(matrix_sqrt(&oracle).as_sym())?
            .hs_norm();
        let gap = bw_distance(&res.barycenter, &oracle)?.min(sqrt_gap);
        let descent = res
            .functional_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-9 * w[0].max(1.0));
        let dominated = check_domination(&res.barycenter, &samples, 1e-7)?;
        let ok = res.converged && gap <= 1e-7 && descent && dominated;
        rec.record(ok, || {
            format!(
                "set {set} (d={dim}, n={n}): converged={} gap={gap:e} descent={descent} dominated={dominated}",
                res.converged
            )
        });
    }
    Ok(rec.finish())
}

/// Descent and domination on general (non-commuting) random sample sets,
/// including singular shared-kernel sets.
pub fn descent_domination_suite(
    seed: u64,
    sets: usize,
    max_dim: usize,
    max_n: usize,
) -> Result<SuiteResult> {
    let mut rec = SuiteRecorder::new("descent_domination");
    for set in 0..sets {
        let mut rng = stream_rng(seed, 105, set as u64);
        let dim = rng.gen_range(2..=max_dim);
        let n = rng.gen_range(2..=max_n);
        let samples: Vec<PsdMatrix> = if set % 3 == 2 {
            // singular set with one kernel common to all samples, so the
            // range projection reduces the problem to a positive definite one
            let rank = rng.gen_range(1..dim.max(2));
            let q = random_orthogonal(&mut rng, dim);
            (0..n)
                .map(|_| {
                    let mut diag = nalgebra::DMatrix::zeros(dim, dim);
                    for i in 0..rank {
                        diag[(i, i)] = rng.gen_range(0.1..2.0);
                    }
                    PsdMatrix::new(SymMatrix::symmetrize(&q * diag * q.transpose()))
                        .expect("congruence of a PSD diagonal")
                })
                .collect()
        } else {
            (0..n).map(|_| random_pd(&mut rng, dim, 0.1, 2.0)).collect()
        };
        let res = barycenter_fixed_point(&samples, &BarycenterConfig::default())?;
        let descent = res
            .functional_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-9 * w[0].max(1.0));
        let dominated = check_domination(&res.barycenter, &samples, 1e-7)?;
        let residual_ok =
            !res.converged || res.residual <= 1e-8 * res.barycenter.trace().max(1.0);
        let ok = descent && dominated && residual_ok;
        rec.record(ok, || {
            format!(
                "set {set} (d={dim}, n={n}): descent={descent} dominated={dominated} residual={:e}",
                res.residual
            )
        });
    }
    Ok(rec.finish())
}

/// The full suite at desk scale (d <= 10), as run by the CLI `selfcheck`.
pub fn run_all(seed: u64) -> Result<Vec<SuiteResult>> {
    Ok(vec![
        cross_form_suite(seed, 400, 2, 10)?,
        lemma1_suite(seed, 400, 2, 10)?,
        monotonicity_suite(seed, 200, 10)?,
        sylvester_suite(seed, 100, 10)?,
        trace_identity_suite(seed, 10, 4, 20)?,
        commuting_oracle_suite(seed, 30, 8, 20)?,
        descent_domination_suite(seed, 20, 6, 12)?,
    ])
}
