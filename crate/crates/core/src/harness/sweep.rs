use std::io::{BufRead, Write};
use std::time::Instant;

use log::warn;
use rayon::prelude::*;

use crate::fisher::NetworkInfo;
use crate::model::Network;
use crate::solvers::{solve, Algorithm};

use super::HarnessError;

pub const SWEEP_HEADER: &str = "ptot,algorithm,tr_j,num_selected,wall_time_ms,scenario_id,seed,diagnostic";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ptot_grid: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub grid_n: usize,
    pub eps0: f64,
}

impl SweepConfig {
    pub fn new(ptot_grid: Vec<f64>, algorithms: Vec<Algorithm>) -> Self {
        Self { ptot_grid, algorithms, grid_n: 100, eps0: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ptot: f64,
    pub algorithm: Algorithm,
    /// `NaN` when the solve failed.
    pub tr_j: f64,
    pub num_selected: usize,
    pub wall_time_ms: f64,
    pub scenario_id: String,
    pub seed: u64,
    /// Empty on success.
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.tr_j.is_nan()).count()
    }

    pub fn rows_for(&self, algorithm: Algorithm) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }

    pub fn get(&self, ptot: f64, algorithm: Algorithm) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.ptot == ptot && r.algorithm == algorithm)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SWEEP_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.ptot, r.algorithm, r.tr_j, r.num_selected, r.wall_time_ms, r.scenario_id, r.seed, r.diagnostic
            )?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

/// Solves every `(ptot, algorithm)` cell; rows come back sorted by budget,
/// then algorithm label.
pub fn run_sweep(network: &Network, scenario_id: &str, cfg: &SweepConfig) -> Result<SweepResult, HarnessError> {
    if cfg.ptot_grid.is_empty() || cfg.ptot_grid.windows(2).any(|w| w[1] <= w[0]) || cfg.ptot_grid[0] <= 0.0 {
        return Err(HarnessError::Usage("budget grid must be positive and strictly ascending".into()));
    }
    let info = NetworkInfo::new(network)?;
    let seed = network.seed().unwrap_or(0);
    let scenario_id = csv_field(scenario_id);
    let mut cells: Vec<(f64, Algorithm)> = Vec::new();
    for &p in &cfg.ptot_grid {
        let mut algs = cfg.algorithms.clone();
        algs.sort();
        algs.dedup();
        cells.extend(algs.into_iter().map(|a| (p, a)));
    }
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(ptot, algorithm)| {
            let start = Instant::now();
            let outcome = solve(algorithm, &info, ptot, cfg.grid_n, cfg.eps0);
            let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            let (tr_j, num_selected, diagnostic) = match outcome {
                Ok(a) => (a.objective, a.num_selected(), if a.fallback { "fallback".to_string() } else { String::new() }),
                Err(e) => {
                    warn!("sweep cell ptot={ptot} alg={algorithm} failed: {e}");
                    (f64::NAN, 0, csv_field(&format!("{}: {e}", e.kind())))
                }
            };
            SweepRow { ptot, algorithm, tr_j, num_selected, wall_time_ms, scenario_id: scenario_id.clone(), seed, diagnostic }
        })
        .collect();
    Ok(SweepResult { rows })
}

pub fn read_sweep_csv<R: BufRead>(input: R) -> Result<SweepResult, String> {
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h == SWEEP_HEADER => {}
        _ => return Err("missing sweep header".into()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let cols: Vec<&str> = line.splitn(8, ',').collect();
        if cols.len() != 8 {
            return Err(format!("row {}: expected 8 columns", i + 1));
        }
        let bad = |what: &str| format!("row {}: bad {what}", i + 1);
        rows.push(SweepRow {
            ptot: cols[0].parse().map_err(|_| bad("ptot"))?,
            algorithm: cols[1].parse().map_err(|_| bad("algorithm"))?,
            tr_j: cols[2].parse().map_err(|_| bad("tr_j"))?,
            num_selected: cols[3].parse().map_err(|_| bad("num_selected"))?,
            wall_time_ms: cols[4].parse().map_err(|_| bad("wall_time_ms"))?,
            scenario_id: cols[5].to_string(),
            seed: cols[6].parse().map_err(|_| bad("seed"))?,
            diagnostic: cols[7].to_string(),
        });
    }
    Ok(SweepResult { rows })
}
