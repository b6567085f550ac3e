//! Seeded Monte Carlo experiment runners: law of large numbers, CLT scaling,
//! transport-map convergence, and the exact instability construction, with
//! CSV/key=value reporting.
//!
//! Replications are independent work units; each one owns a private RNG
//! derived from the master seed, and results are assembled in a fixed order,
//! so reports are byte-identical regardless of the parallelism degree.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::barycenter::{barycenter_fixed_point, check_domination, BarycenterConfig};
use crate::error::{BwError, Result};
use crate::io::format_float;
use crate::metric::{bw_distance, optimal_map};
use crate::models::{
    degenerate_chi2_example, dyadic_lambda_profile, instability_sequence,
    sample_template_deformation, sample_wishart, DeformationSpec,
};
use crate::psd::{matrix_sqrt, op_norm, PsdMatrix, SymMatrix};
use crate::random::{random_pd, random_sym};
use crate::rng::{mix64, stream_rng, SeededRng};

pub const DEFAULT_SAMPLE_SIZES: [usize; 5] = [25, 50, 100, 200, 400];
pub const DEFAULT_REPLICATIONS: usize = 200;

/// Fixed stream tag for defaults that must not move with the master seed.
const DEFAULTS_SEED: u64 = 0x4257_4558_5045_5249;

/// The random covariance model an experiment draws from.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Deformation(DeformationSpec),
    Wishart { scale: PsdMatrix, dof: usize },
    Chi2,
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Deformation(spec) => spec.dim(),
            ModelSpec::Wishart { scale, .. } => scale.dim(),
            ModelSpec::Chi2 => 2,
        }
    }

    /// Population barycentre, when the model has one in closed form.
    pub fn ground_truth(&self) -> Option<PsdMatrix> {
        match self {
            ModelSpec::Deformation(spec) => Some(spec.xi().clone()),
            ModelSpec::Wishart { .. } => None,
            ModelSpec::Chi2 => Some(crate::models::chi2_population_barycenter()),
        }
    }

    /// One sample, plus the exact optimal map from the barycentre when the
    /// model provides it.
    fn draw(&self, rng: &mut SeededRng) -> Result<(PsdMatrix, Option<SymMatrix>)> {
        match self {
            ModelSpec::Deformation(spec) => {
                let (sigma, t) = sample_template_deformation(spec, rng);
                Ok((sigma, Some(t)))
            }
            ModelSpec::Wishart { scale, dof } => Ok((sample_wishart(scale, *dof, rng)?, None)),
            ModelSpec::Chi2 => Ok((degenerate_chi2_example(rng), None)),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ModelSpec::Deformation(_) => "deformation",
            ModelSpec::Wishart { .. } => "wishart",
            ModelSpec::Chi2 => "chi2",
        }
    }
}

/// Deformation model used by the default experiment configuration: a fixed
/// seeded template with three contraction directions.
pub fn default_deformation_spec(dim: usize) -> DeformationSpec {
    deformation_spec_with_amplitudes(dim, &[0.25, 0.15, 0.1]).expect("default amplitudes are valid")
}

/// Same fixed template and directions as the defaults, with the given
/// contraction amplitudes (one direction per amplitude).
pub fn deformation_spec_with_amplitudes(dim: usize, amplitudes: &[f64]) -> Result<DeformationSpec> {
    let mut rng = stream_rng(DEFAULTS_SEED, dim as u64, 0);
    let xi = random_pd(&mut rng, dim, 0.5, 2.0);
    let amplitudes = amplitudes.to_vec();
    let directions: Vec<SymMatrix> = (0..amplitudes.len())
        .map(|_| {
            let b = random_sym(&mut rng, dim, 1.0);
            b.scaled(1.0 / op_norm(&b))
        })
        .collect();
    DeformationSpec::new(xi, directions, amplitudes)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub solver: BarycenterConfig,
    /// Unit vectors `h` for pointwise map-convergence errors.
    pub test_vectors: Vec<DVector<f64>>,
    /// Symmetric matrices `A` the CLT fluctuation is projected onto.
    pub functionals: Vec<SymMatrix>,
}

impl ExperimentConfig {
    /// Defaults for a model: standard sample sizes and replication count,
    /// axis/diagonal test vectors, identity plus two seeded random functionals.
    pub fn new(model: ModelSpec, master_seed: u64) -> Self {
        let d = model.dim();
        let mut e1 = DVector::zeros(d);
        e1[0] = 1.0;
        let mut ed = DVector::zeros(d);
        ed[d - 1] = 1.0;
        let ones = DVector::from_element(d, 1.0 / (d as f64).sqrt());
        let mut rng = stream_rng(DEFAULTS_SEED, d as u64, 1);
        let mut functionals = vec![SymMatrix::identity(d)];
        for _ in 0..2 {
            functionals.push(random_sym(&mut rng, d, 1.0));
        }
        ExperimentConfig {
            model,
            sample_sizes: DEFAULT_SAMPLE_SIZES.to_vec(),
            replications: DEFAULT_REPLICATIONS,
            master_seed,
            solver: BarycenterConfig::default(),
            test_vectors: vec![e1, ed, ones],
            functionals,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() {
            return Err(BwError::input("sample_sizes must be non-empty"));
        }
        if self.sample_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(BwError::input("sample_sizes must be strictly increasing"));
        }
        if self.sample_sizes[0] == 0 {
            return Err(BwError::input("sample sizes must be positive"));
        }
        if self.replications == 0 {
            return Err(BwError::input("replications must be positive"));
        }
        Ok(())
    }

    /// Per-replication stream seed. One growing stream serves every sample
    /// size within the replication, so the n=25 sample set is a prefix of the
    /// n=50 set and so on.
    pub fn replication_seed(&self, replication: usize) -> u64 {
        mix64(self.master_seed, 0, replication as u64)
    }

    fn echo(&self, kind: &str) -> Vec<(String, String)> {
        let mut kv = vec![
            ("experiment".to_string(), kind.to_string()),
            ("model".to_string(), self.model.name().to_string()),
            ("dim".to_string(), self.model.dim().to_string()),
            (
                "sample_sizes".to_string(),
                self.sample_sizes
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("replications".to_string(), self.replications.to_string()),
            ("master_seed".to_string(), self.master_seed.to_string()),
            ("solver.rtol".to_string(), format_float(self.solver.rtol)),
            ("solver.max_iter".to_string(), self.solver.max_iter.to_string()),
            (
                "solver.rank_tol".to_string(),
                format_float(self.solver.rank_tol),
            ),
        ];
        if let ModelSpec::Deformation(spec) = &self.model {
            kv.push((
                "model.amplitudes".to_string(),
                spec.amplitudes()
                    .iter()
                    .map(|&c| format_float(c))
                    .collect::<Vec<_>>()
                    .join(","),
            ));
        }
        if let ModelSpec::Wishart { dof, .. } = &self.model {
            kv.push(("model.dof".to_string(), dof.to_string()));
        }
        kv.push((
            "test_vectors".to_string(),
            self.test_vectors.len().to_string(),
        ));
        kv.push(("functionals".to_string(), self.functionals.len().to_string()));
        kv
    }
}

/// One report row: a replication at one sample size.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    /// False when the solver failed to converge (or, in map convergence, the
    /// estimated map did not exist); such rows are excluded from aggregates.
    pub ok: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: String,
    pub config_echo: Vec<(String, String)>,
    /// Names of the value columns, aligned with `ReportRow::values`.
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<(String, String)>,
    /// Named acceptance bands; the run passes iff every check holds.
    pub checks: Vec<(String, bool)>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    /// CSV with the configuration echoed as `#` comment lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.config_echo {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str("n,replication,seed,ok");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                row.n,
                row.replication,
                row.seed,
                if row.ok { 1 } else { 0 }
            ));
            for v in &row.values {
                out.push(',');
                out.push_str(&format_float(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Flat key=value summary: aggregates followed by check outcomes.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.summary {
            out.push_str(&format!("{k}={v}\n"));
        }
        for (k, ok) in &self.checks {
            out.push_str(&format!("check.{k}={}\n", if *ok { "pass" } else { "fail" }));
        }
        out.push_str(&format!(
            "passed={}\n",
            if self.passed() { "true" } else { "false" }
        ));
        out
    }

    fn median_column(&self, n: usize, col: usize) -> f64 {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.n == n && r.ok)
            .map(|r| r.values[col])
            .collect();
        median(&values)
    }

    fn column_at(&self, n: usize, col: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.n == n && r.ok)
            .map(|r| r.values[col])
            .collect()
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    }
}

/// Tiny scale below which a median counts as numerically zero; degenerate
/// (e.g. zero-amplitude) models pass rate checks trivially at this scale.
const ZERO_MEDIAN: f64 = 1e-9;

fn decreasing_check(medians: &[f64]) -> bool {
    if medians.iter().all(|&m| m.abs() <= ZERO_MEDIAN) {
        return true;
    }
    medians.windows(2).all(|w| w[1] < w[0])
}

fn ratio_within(first: f64, last: f64, lo: f64, hi: f64) -> bool {
    if first.abs() <= ZERO_MEDIAN && last.abs() <= ZERO_MEDIAN {
        return true;
    }
    if first == 0.0 {
        return false;
    }
    let r = last / first;
    (lo..=hi).contains(&r)
}

/// Moment summary against a Gaussian null.
#[derive(Debug, Clone, Copy)]
pub struct GaussianitySummary {
    pub mean: f64,
    /// Bias-corrected standard deviation.
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Correlation of the order statistics with standard normal quantiles.
    pub qq_corr: f64,
    /// Set when the sample is constant; the moment ratios are then undefined
    /// and reported as zero.
    pub degenerate: bool,
}

pub fn gaussianity_summary(values: &[f64]) -> Result<GaussianitySummary> {
    let n = values.len();
    if n < 30 {
        return Err(BwError::input(format!(
            "normality summary needs at least 30 values, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let sd = (m2 * nf / (nf - 1.0)).sqrt();
    if m2 == 0.0 {
        return Ok(GaussianitySummary {
            mean,
            sd: 0.0,
            skewness: 0.0,
            excess_kurtosis: 0.0,
            qq_corr: 0.0,
            degenerate: true,
        });
    }
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let quantiles: Vec<f64> = (0..n)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / nf))
        .collect();
    let qmean = quantiles.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (v, q) in sorted.iter().zip(&quantiles) {
        sxy += (v - mean) * (q - qmean);
        sxx += (v - mean) * (v - mean);
        syy += (q - qmean) * (q - qmean);
    }
    let qq_corr = sxy / (sxx * syy).sqrt();

    Ok(GaussianitySummary {
        mean,
        sd,
        skewness,
        excess_kurtosis,
        qq_corr,
        degenerate: false,
    })
}

struct ReplicationOutcome {
    rows: Vec<ReportRow>,
    solver_failures: usize,
    map_failures: usize,
}

/// Runs one worker per replication in parallel and flattens the results in
/// replication order; rows are then sorted by (n, replication).
fn run_replications<F>(cfg: &ExperimentConfig, worker: F) -> Result<(Vec<ReportRow>, usize, usize)>
where
    F: Fn(usize) -> Result<ReplicationOutcome> + Sync,
{
    let outcomes: Vec<ReplicationOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(&worker)
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut solver_failures = 0;
    let mut map_failures = 0;
    for o in outcomes {
        rows.extend(o.rows);
        solver_failures += o.solver_failures;
        map_failures += o.map_failures;
    }
    rows.sort_by_key(|r| (r.n, r.replication));
    Ok((rows, solver_failures, map_failures))
}

fn check_failure_rates(
    cfg: &ExperimentConfig,
    solver_failures: usize,
    map_failures: usize,
) -> Result<()> {
    let total = (cfg.replications * cfg.sample_sizes.len()) as f64;
    let solver_rate = solver_failures as f64 / total;
    if solver_rate > 0.05 {
        return Err(BwError::Experiment(format!(
            "solver non-convergence rate {:.1}% exceeds 5% ({solver_failures} of {total} runs)",
            100.0 * solver_rate
        )));
    }
    let map_rate = map_failures as f64 / total;
    if map_rate > 0.01 {
        return Err(BwError::Experiment(format!(
            "map existence failure rate {:.1}% exceeds 1% ({map_failures} of {total} runs)",
            100.0 * map_rate
        )));
    }
    Ok(())
}

fn require_ground_truth(cfg: &ExperimentConfig) -> Result<PsdMatrix> {
    cfg.model.ground_truth().ok_or_else(|| {
        BwError::input(format!(
            "model '{}' has no known ground-truth barycentre",
            cfg.model.name()
        ))
    })
}

/// Law of large numbers: per replication, a growing sample stream with the
/// barycentre solved at each size; records the distance to the true
/// barycentre and the arithmetic-mean domination check.
pub fn run_lln(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let truth = require_ground_truth(cfg)?;

    let worker = |r: usize| -> Result<ReplicationOutcome> {
        let seed = cfg.replication_seed(r);
        let mut rng = stream_rng(cfg.master_seed, 0, r as u64);
        let mut samples: Vec<PsdMatrix> = Vec::with_capacity(*cfg.sample_sizes.last().unwrap());
        let mut rows = Vec::new();
        let mut solver_failures = 0;
        for &n in &cfg.sample_sizes {
            while samples.len() < n {
                samples.push(cfg.model.draw(&mut rng)?.0);
            }
            let (ok, error, dominated) = match barycenter_fixed_point(&samples, &cfg.solver) {
                Ok(res) if res.converged => {
                    let error = bw_distance(&truth, &res.barycenter)?;
                    let dom = check_domination(&res.barycenter, &samples, 1e-7)?;
                    (true, error, if dom { 1.0 } else { 0.0 })
                }
                _ => {
                    solver_failures += 1;
                    (false, f64::NAN, 0.0)
                }
            };
            rows.push(ReportRow {
                n,
                replication: r,
                seed,
                ok,
                values: vec![if ok { error } else { 0.0 }, dominated],
            });
        }
        Ok(ReplicationOutcome {
            rows,
            solver_failures,
            map_failures: 0,
        })
    };

    let (rows, solver_failures, _) = run_replications(cfg, worker)?;
    check_failure_rates(cfg, solver_failures, 0)?;

    let mut report = ExperimentReport {
        kind: "lln".to_string(),
        config_echo: cfg.echo("lln"),
        columns: vec!["error".to_string(), "dominated".to_string()],
        rows,
        summary: Vec::new(),
        checks: Vec::new(),
    };

    let medians: Vec<f64> = cfg
        .sample_sizes
        .iter()
        .map(|&n| report.median_column(n, 0))
        .collect();
    for (&n, &m) in cfg.sample_sizes.iter().zip(&medians) {
        report
            .summary
            .push((format!("median_error.n{n}"), format_float(m)));
    }
    report.summary.push((
        "solver_failures".to_string(),
        solver_failures.to_string(),
    ));
    let all_dominated = report.rows.iter().filter(|r| r.ok).all(|r| r.values[1] == 1.0);
    report
        .checks
        .push(("median_error_decreasing".to_string(), decreasing_check(&medians)));
    report.checks.push((
        "median_error_halved".to_string(),
        ratio_within(medians[0], *medians.last().unwrap(), 0.0, 0.5),
    ));
    report
        .checks
        .push(("domination_all".to_string(), all_dominated));
    Ok(report)
}

/// CLT scaling: records the sqrt(n)-scaled distance, square-root
/// Hilbert-Schmidt error, signed trace gap, and projections of the scaled
/// square-root fluctuation onto each functional.
pub fn run_clt(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.replications < 30 {
        return Err(BwError::input(
            "CLT normality summaries need at least 30 replications",
        ));
    }
    if !matches!(cfg.model, ModelSpec::Deformation(_)) {
        return Err(BwError::input(
            "CLT experiment requires the deformation model (positive definite samples)",
        ));
    }
    let truth = require_ground_truth(cfg)?;
    let truth_root = matrix_sqrt(&truth);
    let n_proj = cfg.functionals.len();

    let worker = |r: usize| -> Result<ReplicationOutcome> {
        let seed = cfg.replication_seed(r);
        let mut rng = stream_rng(cfg.master_seed, 0, r as u64);
        let mut samples: Vec<PsdMatrix> = Vec::with_capacity(*cfg.sample_sizes.last().unwrap());
        let mut rows = Vec::new();
        let mut solver_failures = 0;
        for &n in &cfg.sample_sizes {
            while samples.len() < n {
                samples.push(cfg.model.draw(&mut rng)?.0);
            }
            let root_n = (n as f64).sqrt();
            let mut ok = false;
            let mut values = vec![0.0; 3 + n_proj];
            match barycenter_fixed_point(&samples, &cfg.solver) {
                Ok(res) if res.converged => {
                    ok = true;
                    let bary = &res.barycenter;
                    let h_n = truth_root.as_sym().sub(matrix_sqrt(bary).as_sym())?;
                    values[0] = root_n * bw_distance(&truth, bary)?;
                    values[1] = root_n * h_n.hs_norm();
                    values[2] = root_n * (truth.trace() - bary.trace());
                    for (k, a) in cfg.functionals.iter().enumerate() {
                        values[3 + k] = root_n * h_n.as_matrix().dot(a.as_matrix());
                    }
                }
                _ => solver_failures += 1,
            }
            rows.push(ReportRow {
                n,
                replication: r,
                seed,
                ok,
                values,
            });
        }
        Ok(ReplicationOutcome {
            rows,
            solver_failures,
            map_failures: 0,
        })
    };

    let (rows, solver_failures, _) = run_replications(cfg, worker)?;
    check_failure_rates(cfg, solver_failures, 0)?;

    let mut columns = vec![
        "scaled_error".to_string(),
        "hs_half_error".to_string(),
        "trace_gap".to_string(),
    ];
    for k in 0..n_proj {
        columns.push(format!("proj_{k}"));
    }
    let mut report = ExperimentReport {
        kind: "clt".to_string(),
        config_echo: cfg.echo("clt"),
        columns,
        rows,
        summary: Vec::new(),
        checks: Vec::new(),
    };

    // the square-root HS error dominates the distance row by row (Lemma 1)
    let rowwise_bound = report
        .rows
        .iter()
        .filter(|r| r.ok)
        .all(|r| r.values[1] >= r.values[0] - 1e-9 * (r.n as f64).sqrt());

    let first_n = cfg.sample_sizes[0];
    let last_n = *cfg.sample_sizes.last().unwrap();
    for (col, name) in [(0usize, "scaled_error"), (1, "hs_half_error")] {
        let first = report.median_column(first_n, col);
        let last = report.median_column(last_n, col);
        report
            .summary
            .push((format!("median_{name}.n{first_n}"), format_float(first)));
        report
            .summary
            .push((format!("median_{name}.n{last_n}"), format_float(last)));
        report.checks.push((
            format!("ratio_{name}"),
            ratio_within(first, last, 0.5, 2.0),
        ));
    }
    // trace gap is signed; the tightness band applies to its magnitude
    let tg_first = median(
        &report
            .column_at(first_n, 2)
            .iter()
            .map(|v| v.abs())
            .collect::<Vec<_>>(),
    );
    let tg_last = median(
        &report
            .column_at(last_n, 2)
            .iter()
            .map(|v| v.abs())
            .collect::<Vec<_>>(),
    );
    report
        .summary
        .push((format!("median_abs_trace_gap.n{first_n}"), format_float(tg_first)));
    report
        .summary
        .push((format!("median_abs_trace_gap.n{last_n}"), format_float(tg_last)));
    report.checks.push((
        "ratio_trace_gap".to_string(),
        ratio_within(tg_first, tg_last, 0.5, 2.0),
    ));
    report
        .checks
        .push(("rowwise_root_bound".to_string(), rowwise_bound));

    for k in 0..n_proj {
        let values = report.column_at(last_n, 3 + k);
        let g = gaussianity_summary(&values)?;
        report
            .summary
            .push((format!("proj_{k}.skewness"), format_float(g.skewness)));
        report.summary.push((
            format!("proj_{k}.excess_kurtosis"),
            format_float(g.excess_kurtosis),
        ));
        report
            .summary
            .push((format!("proj_{k}.qq_corr"), format_float(g.qq_corr)));
        // samples at the solver noise floor (degenerate models) carry no
        // distributional signal; the Gaussian null is not testable there
        let normal_ok = g.degenerate
            || g.sd <= 1e-6
            || (g.skewness.abs() <= 0.5 && g.excess_kurtosis.abs() <= 1.0 && g.qq_corr >= 0.99);
        report
            .checks
            .push((format!("proj_{k}_gaussian"), normal_ok));
    }
    report
        .summary
        .push(("solver_failures".to_string(), solver_failures.to_string()));
    Ok(report)
}

/// Transport-map convergence: within each replication the first sample stays
/// fixed as the target while the stream grows; records pointwise errors on
/// each test vector and the tangent-space norm error of the estimated map.
pub fn run_map_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let spec = match &cfg.model {
        ModelSpec::Deformation(s) => s,
        _ => {
            return Err(BwError::input(
                "map convergence requires the deformation model (exact true maps)",
            ))
        }
    };
    if cfg.test_vectors.is_empty() {
        return Err(BwError::input("map convergence needs at least one test vector"));
    }
    let d = spec.dim();
    for h in &cfg.test_vectors {
        if h.len() != d {
            return Err(BwError::DimensionMismatch {
                left: d,
                right: h.len(),
            });
        }
    }
    let truth_root = matrix_sqrt(spec.xi());
    let n_vec = cfg.test_vectors.len();

    let worker = |r: usize| -> Result<ReplicationOutcome> {
        let seed = cfg.replication_seed(r);
        let mut rng = stream_rng(cfg.master_seed, 0, r as u64);
        let (sigma1, t1) = sample_template_deformation(spec, &mut rng);
        let mut samples = vec![sigma1.clone()];
        let mut rows = Vec::new();
        let mut solver_failures = 0;
        let mut map_failures = 0;
        for &n in &cfg.sample_sizes {
            while samples.len() < n {
                samples.push(sample_template_deformation(spec, &mut rng).0);
            }
            let mut ok = false;
            let mut values = vec![0.0; n_vec + 1];
            match barycenter_fixed_point(&samples, &cfg.solver) {
                Ok(res) if res.converged => {
                    match optimal_map(&res.barycenter, &sigma1, cfg.solver.rank_tol) {
                        Ok(map) => {
                            ok = true;
                            let diff = map.matrix.as_matrix() - t1.as_matrix();
                            for (k, h) in cfg.test_vectors.iter().enumerate() {
                                values[k] = (&diff * h).norm();
                            }
                            values[n_vec] = (&diff * truth_root.as_matrix()).norm();
                        }
                        Err(BwError::KernelMismatch(_)) => map_failures += 1,
                        Err(e) => return Err(e),
                    }
                }
                _ => solver_failures += 1,
            }
            rows.push(ReportRow {
                n,
                replication: r,
                seed,
                ok,
                values,
            });
        }
        Ok(ReplicationOutcome {
            rows,
            solver_failures,
            map_failures,
        })
    };

    let (rows, solver_failures, map_failures) = run_replications(cfg, worker)?;
    check_failure_rates(cfg, solver_failures, map_failures)?;

    let mut columns: Vec<String> = (0..n_vec).map(|k| format!("vec_err_{k}")).collect();
    columns.push("tangent_error".to_string());
    let mut report = ExperimentReport {
        kind: "maps-conv".to_string(),
        config_echo: cfg.echo("maps-conv"),
        columns,
        rows,
        summary: Vec::new(),
        checks: Vec::new(),
    };

    for col in 0..=n_vec {
        let name = if col < n_vec {
            format!("vec_err_{col}")
        } else {
            "tangent_error".to_string()
        };
        let medians: Vec<f64> = cfg
            .sample_sizes
            .iter()
            .map(|&n| report.median_column(n, col))
            .collect();
        for (&n, &m) in cfg.sample_sizes.iter().zip(&medians) {
            report
                .summary
                .push((format!("median_{name}.n{n}"), format_float(m)));
        }
        report
            .checks
            .push((format!("{name}_decreasing"), decreasing_check(&medians)));
        report.checks.push((
            format!("{name}_reduced"),
            ratio_within(medians[0], *medians.last().unwrap(), 0.0, 0.6),
        ));
    }
    report
        .summary
        .push(("solver_failures".to_string(), solver_failures.to_string()));
    report
        .summary
        .push(("map_failures".to_string(), map_failures.to_string()));
    Ok(report)
}

/// One truncation level of the instability study.
#[derive(Debug, Clone, Copy)]
pub struct InstabilityRow {
    pub n: usize,
    pub gap: f64,
    pub expected_gap: f64,
    pub distance: f64,
    pub expected_distance: f64,
}

#[derive(Debug, Clone)]
pub struct InstabilityReport {
    pub dim: usize,
    pub b: f64,
    pub tolerance: f64,
    pub rows: Vec<InstabilityRow>,
}

impl InstabilityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# experiment=instability\n# dim={}\n", self.dim));
        out.push_str(&format!("# b={}\n", format_float(self.b)));
        out.push_str(&format!("# tolerance={}\n", format_float(self.tolerance)));
        out.push_str("n,gap,expected_gap,distance,expected_distance\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.n,
                format_float(r.gap),
                format_float(r.expected_gap),
                format_float(r.distance),
                format_float(r.expected_distance)
            ));
        }
        out
    }
}

/// Exact instability verification on the dyadic profile: for every truncation
/// the optimal map keeps a constant operator-norm gap from the identity while
/// the distance to the limit decays geometrically. Both identities are checked
/// to 1e-10; a violation is a library bug, reported as an experiment error.
pub fn run_instability(dim: usize, b: f64) -> Result<InstabilityReport> {
    if dim < 3 {
        return Err(BwError::input(format!("dimension {dim} below 3")));
    }
    let family = instability_sequence(dim, b, &dyadic_lambda_profile(dim))?;
    let tolerance = 1e-10;
    let expected_gap = family.expected_gap();
    let identity = DMatrix::identity(dim, dim);
    let mut rows = Vec::with_capacity(dim - 1);
    for (idx, xi_n) in family.xi_n.iter().enumerate() {
        let n = idx + 1;
        // Xi_n is PD by construction, so no rank cutoff: rank_tol = 0 keeps
        // the 2^{-j} tail out of the pseudo-inverse's null space
        let map = optimal_map(xi_n, &family.xi, 0.0)?;
        let gap = op_norm(&SymMatrix::symmetrize(map.matrix.as_matrix() - &identity));
        // distance through the same map: ||(T - I) Xi_n^{1/2}||_HS, which is
        // free of the trace cancellation of the closed form at tiny gaps
        let distance =
            ((map.matrix.as_matrix() - &identity) * matrix_sqrt(xi_n).as_matrix()).norm();
        let expected_distance = family.expected_distance(n);
        if (gap - expected_gap).abs() > tolerance {
            return Err(BwError::Experiment(format!(
                "instability gap at n={n}: {gap:e} vs expected {expected_gap:e}"
            )));
        }
        if (distance - expected_distance).abs() > tolerance {
            return Err(BwError::Experiment(format!(
                "instability distance at n={n}: {distance:e} vs expected {expected_distance:e}"
            )));
        }
        rows.push(InstabilityRow {
            n,
            gap,
            expected_gap,
            distance,
            expected_distance,
        });
    }
    Ok(InstabilityReport {
        dim,
        b,
        tolerance,
        rows,
    })
}
