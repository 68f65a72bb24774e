use crate::fisher::NetworkInfo;

use super::mckp::{MckpSolution, PowerGrid};
use super::{Algorithm, Allocation, SolverError};

pub const BRUTE_MAX_SENSORS: usize = 6;
pub const BRUTE_MAX_GRID: usize = 8;

/// Exhaustive search over every assignment with `sum j_k <= capacity`.
/// Among equal values the first assignment in lexicographic order wins.
pub fn enumerate_table(table: &[Vec<f64>], capacity: usize) -> MckpSolution {
    let k = table.len();
    let mut current = vec![0usize; k];
    let mut best = MckpSolution { choices: current.clone(), value: f64::NEG_INFINITY };
    loop {
        if current.iter().sum::<usize>() <= capacity {
            let mut value = 0.0;
            for (row, &j) in table.iter().zip(&current) {
                value += row[j];
            }
            if value > best.value {
                best = MckpSolution { choices: current.clone(), value };
            }
        }
        let mut pos = k;
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < table[pos].len() {
                break;
            }
            current[pos] = 0;
        }
    }
}

/// Reference discretized optimum for tiny networks.
pub fn solve_bruteforce(info: &NetworkInfo, p_tot: f64, n_small: usize) -> Result<Allocation, SolverError> {
    if info.len() > BRUTE_MAX_SENSORS || n_small > BRUTE_MAX_GRID {
        return Err(SolverError::TooLarge { k: info.len(), n: n_small, max_k: BRUTE_MAX_SENSORS, max_n: BRUTE_MAX_GRID });
    }
    let grid = PowerGrid::new(p_tot, n_small)?;
    let table = info.tabulate(&grid.samples)?;
    let sol = enumerate_table(&table, grid.steps());
    let selection = sol.choices.iter().map(|&j| j > 0).collect();
    let powers = sol.choices.iter().map(|&j| grid.samples[j]).collect();
    let mut alloc = Allocation::assemble(Algorithm::Brute, info, p_tot, selection, powers)?;
    alloc.iterations = (n_small + 1).pow(info.len() as u32);
    Ok(alloc)
}
