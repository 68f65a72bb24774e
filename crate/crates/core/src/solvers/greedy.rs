use log::debug;
use rayon::prelude::*;

use crate::fisher::NetworkInfo;

use super::power::{solve_power_allocation, PowerOptions, PowerSolution};
use super::{check_budget, Algorithm, Allocation, SolverError};

/// Stand-in for an initial data information of zero in the relative
/// improvement test.
pub const GREEDY_T1: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyOptions {
    pub eps0: f64,
    pub power: PowerOptions,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self { eps0: 1e-3, power: PowerOptions::default() }
    }
}

/// Adds one sensor per round, re-splitting the budget optimally over the
/// enlarged set, until the relative gain of the data information
/// `sum t_k` drops to `eps0` or every sensor is active.
pub fn solve_greedy(info: &NetworkInfo, p_tot: f64, opts: &GreedyOptions) -> Result<Allocation, SolverError> {
    check_budget(p_tot)?;
    if !(opts.eps0 > 0.0) {
        return Err(SolverError::InvalidBudget(opts.eps0));
    }
    let k = info.len();
    let mut active: Vec<usize> = Vec::new();
    let mut accepted: Option<PowerSolution> = None;
    let mut previous = GREEDY_T1;
    let mut diagnostics = Vec::new();
    let mut fallback = false;
    let mut round = 0;

    while active.len() < k {
        round += 1;
        let candidates: Vec<usize> = (0..k).filter(|j| !active.contains(j)).collect();
        let solved: Vec<Result<(Vec<usize>, PowerSolution), SolverError>> = candidates
            .par_iter()
            .map(|&j| {
                let mut set = active.clone();
                set.push(j);
                set.sort_unstable();
                solve_power_allocation(info, &set, p_tot, &opts.power).map(|s| (set, s))
            })
            .collect();

        let mut best: Option<(Vec<usize>, PowerSolution)> = None;
        for result in solved {
            let (set, sol) = result?;
            if best.as_ref().is_none_or(|(_, b)| sol.value > b.value) {
                best = Some((set, sol));
            }
        }
        let (set, sol) = best.expect("at least one candidate");
        diagnostics.push((round, info.baseline() + sol.value));
        let gain = (sol.value - previous) / previous;
        debug!("greedy round {round}: |A|={} data={:e} gain={gain:e}", set.len(), sol.value);
        if gain <= opts.eps0 {
            break;
        }
        previous = sol.value;
        fallback |= sol.fallback;
        active = set;
        accepted = Some(sol);
    }

    let mut selection = vec![false; k];
    let mut powers = vec![0.0; k];
    if let Some(sol) = &accepted {
        for (&idx, &p) in active.iter().zip(&sol.powers) {
            selection[idx] = true;
            powers[idx] = p;
        }
    }
    let mut alloc = Allocation::assemble(Algorithm::Greedy, info, p_tot, selection, powers)?;
    alloc.iterations = round;
    alloc.diagnostics = diagnostics;
    alloc.fallback = fallback;
    Ok(alloc)
}
