use crate::fisher::NetworkInfo;

use super::{check_budget, Algorithm, Allocation, SolverError};

/// `N + 1` equally spaced powers `j * P_tot / N`, starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    pub samples: Vec<f64>,
    pub unit: f64,
}

impl PowerGrid {
    pub fn new(p_tot: f64, n: usize) -> Result<Self, SolverError> {
        check_budget(p_tot)?;
        if n == 0 {
            return Err(SolverError::GridMismatch("grid needs at least one nonzero sample".into()));
        }
        let samples = (0..=n).map(|j| j as f64 * p_tot / n as f64).collect();
        Ok(Self { samples, unit: p_tot / n as f64 })
    }

    /// Number of nonzero samples.
    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MckpSolution {
    /// Grid index chosen for each sensor.
    pub choices: Vec<usize>,
    /// Sum of the chosen table entries, accumulated in sensor order.
    pub value: f64,
}

/// Exact optimum of `max sum_k T[k][j_k]` subject to `sum_k j_k <= capacity`.
///
/// Ties go to the smaller grid index for the later sensor.
pub fn mckp_dp(table: &[Vec<f64>], capacity: usize) -> MckpSolution {
    let mut f = vec![0.0f64; capacity + 1];
    let mut choice = vec![vec![0usize; capacity + 1]; table.len()];
    for (k, row) in table.iter().enumerate() {
        let mut next = vec![f64::NEG_INFINITY; capacity + 1];
        for c in 0..=capacity {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (j, &v) in row.iter().enumerate().take(c + 1) {
                let total = f[c - j] + v;
                if total > best {
                    best = total;
                    arg = j;
                }
            }
            next[c] = best;
            choice[k][c] = arg;
        }
        f = next;
    }
    let mut choices = vec![0; table.len()];
    let mut c = capacity;
    for k in (0..table.len()).rev() {
        choices[k] = choice[k][c];
        c -= choices[k];
    }
    MckpSolution { choices, value: f[capacity] }
}

fn check_table(table: &[Vec<f64>], grid: &PowerGrid, k: usize) -> Result<(), SolverError> {
    if table.len() != k {
        return Err(SolverError::GridMismatch(format!("table has {} rows for {k} sensors", table.len())));
    }
    for (i, row) in table.iter().enumerate() {
        if row.len() != grid.samples.len() {
            return Err(SolverError::GridMismatch(format!(
                "row {i} has {} columns for {} grid samples",
                row.len(),
                grid.samples.len()
            )));
        }
        if row[0] != 0.0 {
            return Err(SolverError::GridMismatch(format!("row {i} has nonzero value {} at zero power", row[0])));
        }
    }
    Ok(())
}

/// Discretized selection and allocation from a precomputed `t_k` table whose
/// columns follow `grid`.
pub fn solve_mckp_table(info: &NetworkInfo, table: &[Vec<f64>], grid: &PowerGrid) -> Result<Allocation, SolverError> {
    check_table(table, grid, info.len())?;
    let sol = mckp_dp(table, grid.steps());
    let selection: Vec<bool> = sol.choices.iter().map(|&j| j > 0).collect();
    let powers = sol.choices.iter().map(|&j| grid.samples[j]).collect();
    let p_tot = grid.samples[grid.steps()];
    let mut alloc = Allocation::assemble(Algorithm::Mckp, info, p_tot, selection, powers)?;
    alloc.iterations = info.len();
    alloc.diagnostics.push((info.len(), alloc.objective));
    Ok(alloc)
}

pub fn solve_mckp(info: &NetworkInfo, p_tot: f64, n: usize) -> Result<Allocation, SolverError> {
    let grid = PowerGrid::new(p_tot, n)?;
    let table = info.tabulate(&grid.samples)?;
    let mut alloc = solve_mckp_table(info, &table, &grid)?;
    alloc.p_tot = p_tot;
    Ok(alloc)
}
