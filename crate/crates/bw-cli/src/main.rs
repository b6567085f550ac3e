//! `bw`: Bures-Wasserstein distances, transport maps, barycentres, and
//! seeded Monte Carlo experiments from the command line.
//!
//! Stdout is machine-parsable (key=value lines, or CSV in report files);
//! stderr carries diagnostics only. Every command prints its resolved
//! configuration before any result.
//!
//! Exit codes:
//!   0  success
//!   1  invalid input or I/O failure
//!   2  parse failure (bwmat file, config file, or command line)
//!   3  dimension mismatch between operands
//!   4  transport map does not exist (kernel nesting violated)
//!   5  barycentre solver did not converge (matrix still written)
//!   6  experiment failed its acceptance bands or internal consistency checks
//!   7  selfcheck suite failure

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bw_core::barycenter::{
    barycenter_fixed_point, check_domination, fixed_point_residual, BarycenterConfig,
    BarycenterInit,
};
use bw_core::error::{BwError, Result};
use bw_core::experiments::{
    run_clt, run_instability, run_lln, run_map_convergence, ExperimentConfig, ExperimentReport,
};
use bw_core::io::{bwmat_to_string, format_float, parse_bwmat};
use bw_core::metric::{
    bw_distance, bw_distance_procrustes, bw_distance_via_map, log_map, optimal_map, tangent_norm,
};
use bw_core::psd::{op_norm, PsdMatrix, SymMatrix, DEFAULT_RANK_TOL};
use bw_core::selfcheck;

const EXIT_CODES_HELP: &str = "Exit codes:
  0  success
  1  invalid input or I/O failure
  2  parse failure (bwmat file, config file, or command line)
  3  dimension mismatch between operands
  4  transport map does not exist (kernel nesting violated)
  5  barycentre solver did not converge (matrix still written)
  6  experiment failed its acceptance bands or consistency checks
  7  selfcheck suite failure";

#[derive(Parser)]
#[command(
    name = "bw",
    version,
    about = "Bures-Wasserstein geometry of positive-semidefinite matrices",
    after_help = EXIT_CODES_HELP
)]
struct Cli {
    /// Cap on worker threads for experiments (default: all cores). Output is
    /// identical for every value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Form {
    /// Closed form: sqrt(tr F + tr G - 2 tr (G^1/2 F G^1/2)^1/2)
    Closed,
    /// Procrustes form: nuclear-norm alignment of the square roots
    Procrustes,
    /// Map form: ||(T - I) F^1/2|| for the optimal map T
    Map,
    /// All three forms plus their maximum pairwise discrepancy
    All,
}

impl Form {
    fn name(self) -> &'static str {
        match self {
            Form::Closed => "closed",
            Form::Procrustes => "procrustes",
            Form::Map => "map",
            Form::All => "all",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Distance between the matrices in two bwmat files
    Dist {
        file_f: PathBuf,
        file_g: PathBuf,
        #[arg(long, value_enum, default_value_t = Form::All)]
        form: Form,
    },
    /// Optimal transport map from the first matrix to the second
    Map {
        file_f: PathBuf,
        file_g: PathBuf,
        /// Relative eigenvalue cutoff below which directions count as kernel
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
        /// Output bwmat file for the map
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Tangent-space logarithm of the target matrix at the base point
    Logmap {
        base: PathBuf,
        target: PathBuf,
        /// Output bwmat file for the tangent vector
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Empirical barycentre of the input matrices by fixed-point iteration
    Bary {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 1e-10)]
        rtol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
        /// Output bwmat file for the barycentre
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fixed-point residual of a candidate barycentre against samples
    Residual {
        candidate: PathBuf,
        #[arg(required = true)]
        samples: Vec<PathBuf>,
    },
    /// Law-of-large-numbers experiment: barycentre consistency over n
    Lln(ExperimentArgs),
    /// Central-limit experiment: sqrt(n)-scaled errors and Gaussianity
    Clt(ExperimentArgs),
    /// Transport-map convergence experiment
    MapsConv(ExperimentArgs),
    /// Exact instability study of optimal maps under truncation
    Instability {
        #[arg(long, default_value_t = 50)]
        dim: usize,
        /// Scaling factor of the perturbed family, in (0, 1)
        #[arg(long, default_value_t = 0.8)]
        b: f64,
        /// Directory the CSV report is written into
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Seeded property suites at small dimension (release gate)
    Selfcheck {
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Master seed; all randomness derives from it
    #[arg(long)]
    seed: u64,
    /// key=value config file (see `bw lln --help` header for keys)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory the CSV report is written into
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn exit_code(err: &BwError) -> u8 {
    match err {
        BwError::Parse(_) => 2,
        BwError::DimensionMismatch { .. } => 3,
        BwError::KernelMismatch(_) => 4,
        BwError::Experiment(_) => 6,
        BwError::Input(_) | BwError::Singular(_) | BwError::Numerical(_) | BwError::Io(_) => 1,
    }
}

fn read_psd(path: &Path) -> Result<PsdMatrix> {
    let text = fs::read_to_string(path)?;
    PsdMatrix::new(parse_bwmat(&text)?)
}

fn print_kv(pairs: &[(String, String)]) {
    for (k, v) in pairs {
        println!("{k}={v}");
    }
}

fn kv(key: &str, value: impl Into<String>) -> (String, String) {
    (key.to_string(), value.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("bw: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("bw: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Dist {
            file_f,
            file_g,
            form,
        } => cmd_dist(&file_f, &file_g, form),
        Command::Map {
            file_f,
            file_g,
            rank_tol,
            out,
        } => cmd_map(&file_f, &file_g, rank_tol, &out),
        Command::Logmap { base, target, out } => cmd_logmap(&base, &target, &out),
        Command::Bary {
            files,
            rtol,
            max_iter,
            rank_tol,
            out,
        } => cmd_bary(&files, rtol, max_iter, rank_tol, &out),
        Command::Residual { candidate, samples } => cmd_residual(&candidate, &samples),
        Command::Lln(args) => cmd_experiment("lln", &args),
        Command::Clt(args) => cmd_experiment("clt", &args),
        Command::MapsConv(args) => cmd_experiment("maps-conv", &args),
        Command::Instability { dim, b, out } => cmd_instability(dim, b, &out),
        Command::Selfcheck { seed } => cmd_selfcheck(seed),
    }
}

fn cmd_dist(file_f: &Path, file_g: &Path, form: Form) -> Result<u8> {
    let f = read_psd(file_f)?;
    let g = read_psd(file_g)?;
    let mut out = vec![
        kv("command", "dist"),
        kv("input.f", file_f.display().to_string()),
        kv("input.g", file_g.display().to_string()),
        kv("form", form.name()),
        kv("dim", f.dim().to_string()),
    ];
    match form {
        Form::Closed => out.push(kv("distance.closed", format_float(bw_distance(&f, &g)?))),
        Form::Procrustes => out.push(kv(
            "distance.procrustes",
            format_float(bw_distance_procrustes(&f, &g)?),
        )),
        Form::Map => out.push(kv("distance.map", format_float(bw_distance_via_map(&f, &g)?))),
        Form::All => {
            let closed = bw_distance(&f, &g)?;
            let procrustes = bw_distance_procrustes(&f, &g)?;
            let via_map = bw_distance_via_map(&f, &g)?;
            let discrepancy = (closed - procrustes)
                .abs()
                .max((closed - via_map).abs())
                .max((procrustes - via_map).abs());
            out.push(kv("distance.closed", format_float(closed)));
            out.push(kv("distance.procrustes", format_float(procrustes)));
            out.push(kv("distance.map", format_float(via_map)));
            out.push(kv("discrepancy.max", format_float(discrepancy)));
        }
    }
    print_kv(&out);
    Ok(0)
}

fn cmd_map(file_f: &Path, file_g: &Path, rank_tol: f64, out_path: &Path) -> Result<u8> {
    let f = read_psd(file_f)?;
    let g = read_psd(file_g)?;
    let map = optimal_map(&f, &g, rank_tol)?;
    fs::write(out_path, bwmat_to_string(map.matrix.as_sym()))?;
    let gap = map
        .matrix
        .as_sym()
        .sub(&SymMatrix::identity(map.matrix.dim()))?;
    print_kv(&[
        kv("command", "map"),
        kv("input.f", file_f.display().to_string()),
        kv("input.g", file_g.display().to_string()),
        kv("rank_tol", format_float(rank_tol)),
        kv("out", out_path.display().to_string()),
        kv("dim", f.dim().to_string()),
        kv("map.trace", format_float(map.matrix.trace())),
        kv("map.op_gap", format_float(op_norm(&gap))),
    ]);
    Ok(0)
}

fn cmd_logmap(base_path: &Path, target_path: &Path, out_path: &Path) -> Result<u8> {
    let base = read_psd(base_path)?;
    let target = read_psd(target_path)?;
    let v = log_map(&base, &target)?;
    fs::write(out_path, bwmat_to_string(&v.value))?;
    let norm = tangent_norm(&base, &v.value)?;
    print_kv(&[
        kv("command", "logmap"),
        kv("input.base", base_path.display().to_string()),
        kv("input.target", target_path.display().to_string()),
        kv("out", out_path.display().to_string()),
        kv("dim", base.dim().to_string()),
        kv("tangent_norm", format_float(norm)),
    ]);
    Ok(0)
}

fn cmd_bary(
    files: &[PathBuf],
    rtol: f64,
    max_iter: usize,
    rank_tol: f64,
    out_path: &Path,
) -> Result<u8> {
    let samples: Vec<PsdMatrix> = files.iter().map(|p| read_psd(p)).collect::<Result<_>>()?;
    let cfg = BarycenterConfig {
        rtol,
        max_iter,
        rank_tol,
        init: BarycenterInit::ArithmeticMean,
    };
    let res = barycenter_fixed_point(&samples, &cfg)?;
    fs::write(out_path, bwmat_to_string(res.barycenter.as_sym()))?;
    let dominated = check_domination(&res.barycenter, &samples, 1e-8)?;
    print_kv(&[
        kv("command", "bary"),
        kv("inputs", files.len().to_string()),
        kv("dim", res.barycenter.dim().to_string()),
        kv("solver.rtol", format_float(rtol)),
        kv("solver.max_iter", max_iter.to_string()),
        kv("solver.rank_tol", format_float(rank_tol)),
        kv("out", out_path.display().to_string()),
        kv("iterations", res.iterations.to_string()),
        kv("converged", res.converged.to_string()),
        kv("residual", format_float(res.residual)),
        kv("functional_value", format_float(res.functional_value)),
        kv("dominated", dominated.to_string()),
        kv("uniqueness_warning", res.uniqueness_warning.to_string()),
    ]);
    if res.converged {
        Ok(0)
    } else {
        eprintln!("bw: solver did not converge in {max_iter} iterations");
        Ok(5)
    }
}

fn cmd_residual(candidate: &Path, sample_paths: &[PathBuf]) -> Result<u8> {
    let xi = read_psd(candidate)?;
    let samples: Vec<PsdMatrix> = sample_paths
        .iter()
        .map(|p| read_psd(p))
        .collect::<Result<_>>()?;
    let r = fixed_point_residual(&xi, &samples)?;
    print_kv(&[
        kv("command", "residual"),
        kv("candidate", candidate.display().to_string()),
        kv("samples", sample_paths.len().to_string()),
        kv("dim", xi.dim().to_string()),
        kv("residual", format_float(r)),
    ]);
    Ok(0)
}

fn cmd_experiment(kind: &str, args: &ExperimentArgs) -> Result<u8> {
    let cfg: ExperimentConfig = config::load(args.config.as_deref(), args.seed)?;
    let report: ExperimentReport = match kind {
        "lln" => run_lln(&cfg)?,
        "clt" => run_clt(&cfg)?,
        "maps-conv" => run_map_convergence(&cfg)?,
        _ => unreachable!("kinds are fixed by the dispatcher"),
    };
    let csv_path = args.out.join(format!("{kind}.csv"));
    fs::write(&csv_path, report.to_csv())?;
    print_kv(&report.config_echo);
    println!("csv={}", csv_path.display());
    print!("{}", report.summary_text());
    if report.passed() {
        Ok(0)
    } else {
        eprintln!("bw: experiment checks failed; see summary above");
        Ok(6)
    }
}

fn cmd_instability(dim: usize, b: f64, out_dir: &Path) -> Result<u8> {
    let report = run_instability(dim, b)?;
    let csv_path = out_dir.join("instability.csv");
    fs::write(&csv_path, report.to_csv())?;
    print_kv(&[
        kv("command", "instability"),
        kv("dim", dim.to_string()),
        kv("b", format_float(b)),
        kv("tolerance", format_float(report.tolerance)),
        kv("csv", csv_path.display().to_string()),
        kv("rows", report.rows.len().to_string()),
        kv("passed", "true".to_string()),
    ]);
    Ok(0)
}

fn cmd_selfcheck(seed: u64) -> Result<u8> {
    println!("command=selfcheck");
    println!("seed={seed}");
    let suites = selfcheck::run_all(seed)?;
    let mut all_ok = true;
    for suite in &suites {
        let status = if suite.passed() { "pass" } else { "fail" };
        println!("suite.{}.cases={}", suite.name, suite.cases);
        println!("suite.{}.failures={}", suite.name, suite.failures);
        println!("suite.{}.status={status}", suite.name);
        if !suite.passed() {
            all_ok = false;
            if let Some(detail) = &suite.first_failure {
                eprintln!("bw: suite {} first failure: {detail}", suite.name);
            }
        }
    }
    println!("passed={all_ok}");
    if all_ok {
        Ok(0)
    } else {
        Ok(7)
    }
}
