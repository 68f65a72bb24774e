//! Batch driver behind the command-line tool: scenario generation, single
//! solves, budget sweeps and the oracle checks.

mod sweep;
mod verify;

use std::path::Path;

use thiserror::Error;

use crate::fisher::{FisherError, NetworkInfo};
use crate::model::{generate_deployment, homogeneous_network, DeploymentConfig, ModelError, Network, Prior, SensorParams};
use crate::solvers::{solve, Algorithm, Allocation, SolverError};

pub use sweep::{read_sweep_csv, run_sweep, SweepConfig, SweepResult, SweepRow, SWEEP_HEADER};
pub use verify::{run_suite, Check, Suite, VerifyOptions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read scenario: {0}")]
    Scenario(#[source] ModelError),
    #[error("scenario generation failed: {0}")]
    Generation(#[source] ModelError),
    #[error("solver error ({kind}): {0}", kind = .0.kind())]
    Solver(#[from] SolverError),
    #[error("{failed} of {total} verification checks failed")]
    Verification { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<FisherError> for HarnessError {
    fn from(e: FisherError) -> Self {
        HarnessError::Solver(SolverError::Fisher(e))
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Scenario(_) => 2,
            HarnessError::Generation(_) => 3,
            HarnessError::Solver(_) => 4,
            HarnessError::Verification { .. } => 5,
            HarnessError::Io(_) => 1,
        }
    }
}

/// Budgets 5, 10, ..., 50.
pub fn default_ptot_grid() -> Vec<f64> {
    ptot_grid(5.0, 50.0, 10).expect("default grid is valid")
}

/// `steps` evenly spaced budgets from `min` to `max` inclusive.
pub fn ptot_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>, HarnessError> {
    if !(min > 0.0 && max.is_finite() && max >= min) || steps == 0 || (steps == 1 && max != min) {
        return Err(HarnessError::Usage(format!("bad budget grid: min={min} max={max} steps={steps}")));
    }
    if steps == 1 {
        return Ok(vec![min]);
    }
    let grid: Vec<f64> = (0..steps).map(|i| min + i as f64 * (max - min) / (steps - 1) as f64).collect();
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::Usage("budget grid must be strictly ascending".into()));
    }
    Ok(grid)
}

/// What `gen` should build.
#[derive(Debug, Clone, PartialEq)]
pub enum GenSpec {
    Deployment { k: usize, seed: u64, d_min: f64, params: SensorParams },
    Homogeneous { k: usize, gain: Vec<f64>, params: SensorParams },
}

pub fn generate(spec: &GenSpec) -> Result<Network, HarnessError> {
    match spec {
        GenSpec::Deployment { k, seed, d_min, params } => {
            let mut cfg = DeploymentConfig::new(*k, *seed);
            cfg.d_min = *d_min;
            cfg.params = *params;
            generate_deployment(&cfg, Prior::reference()).map_err(HarnessError::Generation)
        }
        GenSpec::Homogeneous { k, gain, params } => {
            if *k == 0 {
                return Err(HarnessError::Usage("--k must be at least 1".into()));
            }
            homogeneous_network(*k, gain, *params, Prior::reference()).map_err(HarnessError::Generation)
        }
    }
}

/// File stem used to label sweep rows.
pub fn scenario_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub algorithm: Algorithm,
    pub p_tot: f64,
    pub grid_n: usize,
    pub eps0: f64,
}

pub fn solve_network(network: &Network, cfg: &SolveConfig) -> Result<Allocation, HarnessError> {
    if !(cfg.p_tot > 0.0 && cfg.p_tot.is_finite()) {
        return Err(HarnessError::Usage(format!("--ptot must be positive, got {}", cfg.p_tot)));
    }
    let info = NetworkInfo::new(network)?;
    let alloc = solve(cfg.algorithm, &info, cfg.p_tot, cfg.grid_n, cfg.eps0)?;
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_values() {
        assert_eq!(default_ptot_grid(), vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0]);
        assert_eq!(ptot_grid(2.0, 2.0, 1).unwrap(), vec![2.0]);
        assert!(ptot_grid(5.0, 1.0, 3).is_err());
        assert!(ptot_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::Usage(String::new()).exit_code(), 2);
        assert_eq!(HarnessError::Solver(SolverError::BadActiveSet).exit_code(), 4);
        assert_eq!(HarnessError::Verification { failed: 1, total: 2 }.exit_code(), 5);
        let e = HarnessError::Solver(SolverError::TooLarge { k: 20, n: 100, max_k: 6, max_n: 8 });
        assert!(e.to_string().contains("TooLarge"));
    }

    #[test]
    fn generation_specs() {
        let net = generate(&GenSpec::Homogeneous { k: 10, gain: vec![0.6, 0.8], params: SensorParams::default() }).unwrap();
        assert_eq!(net.len(), 10);
        assert!(net.sensors.iter().all(|s| s.gain == vec![0.6, 0.8]));
        let a = generate(&GenSpec::Deployment { k: 20, seed: 42, d_min: 0.1, params: SensorParams::default() }).unwrap();
        let b = generate(&GenSpec::Deployment { k: 20, seed: 42, d_min: 0.1, params: SensorParams::default() }).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            generate(&GenSpec::Homogeneous { k: 2, gain: vec![1.0], params: SensorParams::default() }),
            Err(HarnessError::Generation(_))
        ));
    }
}
