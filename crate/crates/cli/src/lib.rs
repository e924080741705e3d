//! Scenario runner for the `w2pt` correlator solver: TOML run configs, preset
//! experiments, sweeps, CSV output and run manifests.

use std::path::{Path, PathBuf};

use anyhow::Result;

pub mod config;
pub mod output;
pub mod pipeline;
pub mod scenarios;

use config::{CflError, ConfigError, Plan, RunConfig, SweepParam, SweepSection};
use output::{resolve_output_dir, Manifest, RunDir};
use pipeline::{compare_engines, EngineComparison};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_CFL: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Grid used by the `oracle` command.
pub const ORACLE_POINTS: usize = 8;
pub const ORACLE_LEVELS: usize = 8;
pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// Process exit status for an error raised by any command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_INVALID_CONFIG;
        }
        if cause.is::<CflError>() {
            return EXIT_CFL;
        }
        if let Some(e) = cause.downcast_ref::<w2pt::Error>() {
            return match e {
                w2pt::Error::CflViolation { .. } => EXIT_CFL,
                w2pt::Error::NumericalConsistency(_) | w2pt::Error::UndefinedOrder(_) => EXIT_NUMERICAL,
                w2pt::Error::Io(_) => EXIT_FAILURE,
                _ => EXIT_INVALID_CONFIG,
            };
        }
    }
    EXIT_FAILURE
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Validates, then runs `config` into its output directory. Nothing is
/// written unless validation and the CFL gate pass.
pub fn run(config: &RunConfig, config_path: Option<&Path>, command: &str, env_root: Option<PathBuf>) -> Result<RunOutcome> {
    let plan = check(config)?;
    let dir = resolve_output_dir(config, config_path, env_root);
    let run = RunDir::open(&dir)?;
    let out = scenarios::execute(&plan)?;
    let manifest = run.finish(command, config, config_path, &out.files, out.summary)?;
    Ok(RunOutcome { dir, manifest })
}

/// `config` with its sweep section replaced by `param` over `values`.
pub fn sweep_config(config: &RunConfig, param: &str, values: &[f64]) -> Result<RunConfig, ConfigError> {
    let param = SweepParam::parse(param)?;
    if values.is_empty() {
        return Err(ConfigError("sweep needs at least one value".into()));
    }
    Ok(RunConfig { sweep: Some(SweepSection { param, values: values.to_vec() }), ..config.clone() })
}

/// Comma-separated list of numbers; blanks are ignored, so `""` is empty.
pub fn parse_values(list: &str) -> Result<Vec<f64>, ConfigError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| ConfigError(format!("sweep value '{s}': {e}"))))
        .collect()
}

/// Full validation including the CFL gate, without running anything.
pub fn check(config: &RunConfig) -> Result<Plan> {
    let plan = config.resolve()?;
    plan.check_cfl()?;
    Ok(plan)
}

/// Band marcher against the two-pass engine on a tiny copy of the run.
pub fn oracle(config: &RunConfig) -> Result<EngineComparison> {
    let plan = config.resolve()?;
    let cmp = compare_engines(&plan.setup, ORACLE_POINTS, ORACLE_LEVELS)?;
    let bound = ORACLE_TOLERANCE * cmp.max_abs.max(1.0);
    if cmp.max_abs_diff > bound {
        return Err(w2pt::Error::NumericalConsistency(format!(
            "engines differ by {:e} (bound {bound:e})",
            cmp.max_abs_diff
        ))
        .into());
    }
    Ok(cmp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let cfg: anyhow::Error = ConfigError("x".into()).into();
        assert_eq!(exit_code(&cfg), EXIT_INVALID_CONFIG);
        let cfl: anyhow::Error = CflError(w2pt::Error::CflViolation { dt: 1.0, dt_max: 0.5, v_max: 1.0 }).into();
        assert_eq!(exit_code(&cfl), EXIT_CFL);
        let num: anyhow::Error = w2pt::Error::NumericalConsistency("x".into()).into();
        assert_eq!(exit_code(&num), EXIT_NUMERICAL);
        let wrapped: anyhow::Error =
            scenarios::ScenarioError::Solver(w2pt::Error::UndefinedOrder("x".into())).into();
        assert_eq!(exit_code(&wrapped), EXIT_NUMERICAL);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), EXIT_FAILURE);
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("1, 3,10").unwrap(), vec![1.0, 3.0, 10.0]);
        assert!(parse_values("").unwrap().is_empty());
        assert!(parse_values("1,x").is_err());
        let base = RunConfig::from_toml("scenario = \"purity-sweep\"").unwrap();
        assert!(sweep_config(&base, "ramp_time", &[]).is_err());
        assert!(sweep_config(&base, "beta", &[1.0]).is_err());
        let s = sweep_config(&base, "ramp_time", &[3.0, 1.0]).unwrap();
        assert_eq!(s.sweep.unwrap().values, vec![3.0, 1.0]);
    }
}
