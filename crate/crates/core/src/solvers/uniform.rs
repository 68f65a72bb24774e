use crate::fisher::NetworkInfo;

use super::{check_budget, Algorithm, Allocation, SolverError};

/// Every sensor on with `P_tot / K`.
pub fn solve_ufa(info: &NetworkInfo, p_tot: f64) -> Result<Allocation, SolverError> {
    check_budget(p_tot)?;
    let k = info.len();
    let mut alloc = Allocation::assemble(Algorithm::Ufa, info, p_tot, vec![true; k], vec![p_tot / k as f64; k])?;
    alloc.iterations = 1;
    alloc.diagnostics.push((1, alloc.objective));
    Ok(alloc)
}

/// Maximizer of `sum w_k t_k` over `{0 <= w <= 1, sum w = i}`.
///
/// The feasible set is a hypersimplex whose vertices are the 0/1 vectors with
/// exactly `i` ones, so the optimum puts weight one on the `i` largest values
/// (ties toward the lower index).
pub fn solve_boolean_relaxation(t_values: &[f64], i: usize) -> Result<Vec<f64>, SolverError> {
    let k = t_values.len();
    if i == 0 || i > k {
        return Err(SolverError::BadCardinality { i, k });
    }
    let mut order: Vec<usize> = (0..k).collect();
    // stable sort keeps lower indices first among equal values
    order.sort_by(|&a, &b| t_values[b].total_cmp(&t_values[a]));
    let mut w = vec![0.0; k];
    for &idx in &order[..i] {
        w[idx] = 1.0;
    }
    Ok(w)
}

/// Uniform-select-uniform: rank sensors once under uniform power, then
/// activate the best `i` with `P_tot / i` each for growing `i` until the
/// information stops increasing.
pub fn solve_usu(info: &NetworkInfo, p_tot: f64) -> Result<Allocation, SolverError> {
    check_budget(p_tot)?;
    let k = info.len();
    let ranking: Vec<f64> = (0..k).map(|j| info.t(j, p_tot / k as f64)).collect();

    let mut best_selection = vec![false; k];
    let mut best_power = 0.0;
    let mut previous = 0.0;
    let mut diagnostics = Vec::new();
    let mut iterations = 0;
    for i in 1..=k {
        iterations = i;
        let w = solve_boolean_relaxation(&ranking, i)?;
        let share = p_tot / i as f64;
        let data: f64 = (0..k).filter(|&j| w[j] == 1.0).map(|j| info.t(j, share)).sum();
        diagnostics.push((i, info.baseline() + data));
        if data <= previous {
            break;
        }
        previous = data;
        best_selection = w.iter().map(|&x| x == 1.0).collect();
        best_power = share;
    }

    let powers = best_selection.iter().map(|&s| if s { best_power } else { 0.0 }).collect();
    let mut alloc = Allocation::assemble(Algorithm::Usu, info, p_tot, best_selection, powers)?;
    alloc.iterations = iterations;
    alloc.diagnostics = diagnostics;
    Ok(alloc)
}
