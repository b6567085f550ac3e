//! Experiment configuration files: flat key=value text with dotted keys.
//!
//! Recognized keys:
//!
//! ```text
//! model            deformation | wishart | chi2        (default: deformation)
//! dim              truncation dimension                 (default: 5; chi2 is fixed at 2)
//! model.amplitudes comma-separated contraction amplitudes (deformation)
//! model.dof        degrees of freedom                   (wishart; default 2*dim)
//! model.scale      path to a bwmat file                 (wishart; default identity)
//! sample_sizes     comma-separated, strictly increasing
//! replications     positive integer
//! solver.rtol      relative tolerance of the fixed-point solver
//! solver.max_iter  iteration cap
//! solver.rank_tol  relative eigenvalue cutoff for pseudo-inverses
//! ```
//!
//! The master seed always comes from the command line (`--seed`), never from
//! the file.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use bw_core::error::{BwError, Result};
use bw_core::experiments::{deformation_spec_with_amplitudes, ExperimentConfig, ModelSpec};
use bw_core::io::{parse_bwmat, parse_kv};
use bw_core::psd::PsdMatrix;

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| BwError::Parse(format!("bad value for {key}: {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|tok| parse_num(key, tok.trim()))
        .collect()
}

/// Loads an experiment configuration, starting from the model defaults and
/// applying overrides from the file (if any).
pub fn load(path: Option<&Path>, master_seed: u64) -> Result<ExperimentConfig> {
    let pairs = match path {
        Some(p) => parse_kv(&fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    // later occurrences of a key win
    let get = |key: &str| {
        pairs
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    };

    let model_name = get("model").unwrap_or("deformation");
    let dim: usize = match get("dim") {
        Some(v) => parse_num("dim", v)?,
        None => 5,
    };
    if dim == 0 {
        return Err(BwError::Parse("dim must be positive".into()));
    }
    let model = match model_name {
        "deformation" => {
            let amplitudes = match get("model.amplitudes") {
                Some(v) => parse_list("model.amplitudes", v)?,
                None => vec![0.25, 0.15, 0.1],
            };
            ModelSpec::Deformation(deformation_spec_with_amplitudes(dim, &amplitudes)?)
        }
        "wishart" => {
            let scale = match get("model.scale") {
                Some(p) => PsdMatrix::new(parse_bwmat(&fs::read_to_string(p)?)?)?,
                None => PsdMatrix::identity(dim),
            };
            let dof = match get("model.dof") {
                Some(v) => parse_num("model.dof", v)?,
                None => 2 * dim,
            };
            ModelSpec::Wishart { scale, dof }
        }
        "chi2" => {
            if get("dim").is_some() && dim != 2 {
                return Err(BwError::Parse("the chi2 model is two-dimensional".into()));
            }
            ModelSpec::Chi2
        }
        other => {
            return Err(BwError::Parse(format!("unknown model {other:?}")));
        }
    };

    let mut cfg = ExperimentConfig::new(model, master_seed);
    for (key, value) in &pairs {
        match key.as_str() {
            "model" | "dim" | "model.amplitudes" | "model.dof" | "model.scale" => {}
            "sample_sizes" => cfg.sample_sizes = parse_list(key, value)?,
            "replications" => cfg.replications = parse_num(key, value)?,
            "solver.rtol" => cfg.solver.rtol = parse_num(key, value)?,
            "solver.max_iter" => cfg.solver.max_iter = parse_num(key, value)?,
            "solver.rank_tol" => cfg.solver.rank_tol = parse_num(key, value)?,
            other => {
                return Err(BwError::Parse(format!("unknown config key {other:?}")));
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults_without_file() {
        let cfg = load(None, 42).unwrap();
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.model.dim(), 5);
        assert_eq!(cfg.sample_sizes, vec![25, 50, 100, 200, 400]);
        assert_eq!(cfg.replications, 200);
    }

    #[test]
    fn overrides_apply() {
        let f = write_tmp(
            "# tiny run\nmodel = deformation\ndim = 3\nmodel.amplitudes = 0.1, 0.2\n\
             sample_sizes = 5, 10\nreplications = 7\nsolver.rtol = 1e-8\nsolver.max_iter = 99\n",
        );
        let cfg = load(Some(f.path()), 1).unwrap();
        assert_eq!(cfg.model.dim(), 3);
        assert_eq!(cfg.sample_sizes, vec![5, 10]);
        assert_eq!(cfg.replications, 7);
        assert_eq!(cfg.solver.rtol, 1e-8);
        assert_eq!(cfg.solver.max_iter, 99);
    }

    #[test]
    fn wishart_and_chi2_models() {
        let f = write_tmp("model = wishart\ndim = 4\nmodel.dof = 12\n");
        let cfg = load(Some(f.path()), 1).unwrap();
        assert!(matches!(cfg.model, ModelSpec::Wishart { dof: 12, .. }));
        assert_eq!(cfg.model.dim(), 4);

        let f = write_tmp("model = chi2\n");
        let cfg = load(Some(f.path()), 1).unwrap();
        assert!(matches!(cfg.model, ModelSpec::Chi2));

        let f = write_tmp("model = chi2\ndim = 5\n");
        assert!(matches!(load(Some(f.path()), 1), Err(BwError::Parse(_))));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let f = write_tmp("modle = deformation\n");
        assert!(matches!(load(Some(f.path()), 1), Err(BwError::Parse(_))));
        let f = write_tmp("replications = many\n");
        assert!(matches!(load(Some(f.path()), 1), Err(BwError::Parse(_))));
        let f = write_tmp("model = cauchy\n");
        assert!(matches!(load(Some(f.path()), 1), Err(BwError::Parse(_))));
    }
}
