//! Release gate: the twelve acceptance criteria, each printed as a single
//! pass/fail line. Tolerances and scales are pinned here and must not drift.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the table on
//! a passing build (cargo shows the captured output automatically on failure).

use std::time::{Duration, Instant};

use bw_core::barycenter::{barycenter_fixed_point, BarycenterConfig};
use bw_core::experiments::{
    default_deformation_spec, run_clt, run_instability, run_lln, run_map_convergence,
    ExperimentConfig, ModelSpec,
};
use bw_core::metric::bw_distance;
use bw_core::models::{chi2_population_barycenter, degenerate_chi2_example};
use bw_core::psd::{spectral_decompose, PsdMatrix};
use bw_core::rng::stream_rng;
use bw_core::selfcheck::{
    commuting_oracle_suite, cross_form_suite, lemma1_suite, monotonicity_suite, sylvester_suite,
    trace_identity_suite, SuiteResult,
};

const SEED: u64 = 20260824;

struct Gate {
    lines: Vec<String>,
    all_ok: bool,
}

impl Gate {
    fn new() -> Self {
        Gate {
            lines: Vec::new(),
            all_ok: true,
        }
    }

    fn record(
        &mut self,
        index: usize,
        name: &str,
        budget: Option<Duration>,
        run: impl FnOnce() -> Result<bool, String>,
    ) {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(ok) => {
                let within_budget = budget.map_or(true, |b| elapsed <= b);
                (ok && within_budget, String::new())
            }
            Err(msg) => (false, format!(" [{msg}]")),
        };
        let status = if ok { "pass" } else { "FAIL" };
        let line = format!(
            "criterion {index:02} {name}: {status} ({:.2}s){detail}",
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.all_ok &= ok;
        self.lines.push(line);
    }

    fn suite(&mut self, index: usize, name: &str, budget: Option<Duration>, run: impl FnOnce() -> bw_core::Result<SuiteResult>) {
        self.record(index, name, budget, || match run() {
            Ok(suite) if suite.passed() => Ok(true),
            Ok(suite) => Err(format!(
                "{}/{} cases failed, first: {}",
                suite.failures,
                suite.cases,
                suite.first_failure.as_deref().unwrap_or("?")
            )),
            Err(e) => Err(e.to_string()),
        });
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

#[test]
fn acceptance_gate() {
    let mut gate = Gate::new();
    // start on a fresh line under the harness's "test ... " prefix
    println!();

    // 1. Distance cross-form agreement: 1000 pairs, d in 2..=20 including
    //    rank-deficient, |closed - procrustes| and |closed - map| within
    //    1e-8 * (1 + distance); under 10 s.
    gate.suite(1, "distance cross-form agreement (1000 pairs, d<=20)", secs(10), || {
        cross_form_suite(SEED, 1000, 2, 20)
    });

    // 2. Powers-Stormer chains with 1e-10 slack on the same ensemble.
    gate.suite(2, "trace-norm inequality chains (1000 pairs)", None, || {
        lemma1_suite(SEED, 1000, 2, 20)
    });

    // 3. Operator monotonicity of the square root and congruence, 500 pairs
    //    A <= B at tolerance 1e-8.
    gate.suite(3, "operator monotonicity (500 pairs)", None, || {
        monotonicity_suite(SEED, 500, 15)
    });

    // 4. Sylvester/derivative suite: residual <= 1e-9*||H||, finite-difference
    //    agreement <= 1e-5 relative, contraction with 1e-10 slack; 200 cases,
    //    d <= 15.
    gate.suite(4, "sqrt derivative and contraction (200 cases, d<=15)", None, || {
        sylvester_suite(SEED, 200, 15)
    });

    // 5. Trace identity at converged barycentres: finite-difference trace
    //    derivative equals -tr(H)/2 within 1e-5; 50 deformation sets, d=4,
    //    n=20, H in {identity, 5 random symmetric}.
    gate.suite(5, "trace identity at barycentres (50 sets, d=4, n=20)", None, || {
        trace_identity_suite(SEED, 50, 4, 20)
    });

    // 6. Solver vs commuting-family oracle within 1e-7, with functional
    //    descent and domination in every run; 100 sets, d <= 8, n <= 20.
    gate.suite(6, "barycentre vs commuting oracle (100 sets)", None, || {
        commuting_oracle_suite(SEED, 100, 8, 20)
    });

    // 7. Degenerate two-dimensional example: empirical barycentre of 1e4
    //    draws of diag(chi2_1, 0) within distance 0.02 of diag(2/pi, 0), with
    //    second eigenvalue <= 1e-8; under 30 s.
    gate.record(7, "degenerate chi-square barycentre (1e4 draws)", secs(30), || {
        let mut rng = stream_rng(SEED, 7, 0);
        let samples: Vec<PsdMatrix> = (0..10_000)
            .map(|_| degenerate_chi2_example(&mut rng))
            .collect();
        let res = barycenter_fixed_point(&samples, &BarycenterConfig::default())
            .map_err(|e| e.to_string())?;
        if !res.converged {
            return Err("solver did not converge".into());
        }
        let error = bw_distance(&res.barycenter, &chi2_population_barycenter())
            .map_err(|e| e.to_string())?;
        let second = spectral_decompose(res.barycenter.as_sym()).eigenvalues[1];
        if error > 0.02 {
            return Err(format!("distance to diag(2/pi, 0) is {error:e}"));
        }
        if second > 1e-8 {
            return Err(format!("second eigenvalue is {second:e}"));
        }
        Ok(true)
    });

    // 8.-10. share the deformation model at d=5 with default sample sizes
    // {25, 50, 100, 200, 400} and 200 replications.
    let config = ExperimentConfig::new(
        ModelSpec::Deformation(default_deformation_spec(5)),
        SEED,
    );

    // 8. Law of large numbers: median error strictly decreasing in n and at
    //    least halved between n=25 and n=400; domination in every run.
    let lln_config = config.clone();
    gate.record(8, "barycentre consistency (d=5, 200 replications)", secs(600), move || {
        let report = run_lln(&lln_config).map_err(|e| e.to_string())?;
        if report.passed() {
            Ok(true)
        } else {
            Err(failed_checks(&report.checks))
        }
    });

    // 9. Central limit regime: sqrt(n)-scaled error medians stay within a
    //    factor of 2 across n for the distance, the tangent norm, and the
    //    trace gap; projections at n=400 pass the Gaussianity bands
    //    (|skewness| <= 0.5, |excess kurtosis| <= 1.0, qq_corr >= 0.99).
    let clt_config = config.clone();
    gate.record(9, "sqrt(n) tightness and Gaussianity (d=5)", secs(600), move || {
        let report = run_clt(&clt_config).map_err(|e| e.to_string())?;
        if report.passed() {
            Ok(true)
        } else {
            Err(failed_checks(&report.checks))
        }
    });

    // 10. Transport-map convergence: median pointwise and tangent-norm errors
    //     decreasing in n, with the n=400 median at most 0.6 of the n=25 one.
    gate.record(10, "transport-map convergence (d=5)", secs(600), move || {
        let report = run_map_convergence(&config).map_err(|e| e.to_string())?;
        if report.passed() {
            Ok(true)
        } else {
            Err(failed_checks(&report.checks))
        }
    });

    // 11. Instability construction at d=50, b=0.8, dyadic eigenvalue profile:
    //     operator-norm gap constant at 0.25 and distance exactly
    //     0.2 * 2^(-n/2), both to 1e-10, for every truncation; under 5 s.
    gate.record(11, "exact map instability (d=50, b=0.8)", secs(5), || {
        let report = run_instability(50, 0.8).map_err(|e| e.to_string())?;
        if report.rows.len() != 49 {
            return Err(format!("expected 49 truncations, got {}", report.rows.len()));
        }
        for row in &report.rows {
            let expected = 0.2 * 0.5f64.powi(row.n as i32).sqrt();
            if (row.gap - 0.25).abs() > 1e-10 {
                return Err(format!("gap at n={} is {:e}", row.n, row.gap));
            }
            if (row.distance - expected).abs() > 1e-10 {
                return Err(format!("distance at n={} is {:e}", row.n, row.distance));
            }
        }
        Ok(true)
    });

    // 12. Determinism: the same experiment with the same seed produces
    //     byte-identical CSV under different thread counts.
    gate.record(12, "byte-identical reports across thread counts", None, || {
        let mut small = ExperimentConfig::new(
            ModelSpec::Deformation(default_deformation_spec(3)),
            SEED,
        );
        small.sample_sizes = vec![5, 10, 20];
        small.replications = 8;
        let mut csv = Vec::new();
        for threads in [1usize, 3] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| e.to_string())?;
            let report = pool
                .install(|| run_lln(&small))
                .map_err(|e| e.to_string())?;
            csv.push(report.to_csv());
        }
        if csv[0] == csv[1] {
            Ok(true)
        } else {
            Err("reports differ between 1 and 3 threads".into())
        }
    });

    assert!(
        gate.all_ok,
        "acceptance gate failed:\n{}",
        gate.lines.join("\n")
    );
}

fn failed_checks(checks: &[(String, bool)]) -> String {
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name.as_str())
        .collect();
    format!("failed checks: {}", failed.join(", "))
}
