//! Joint sensor selection and power allocation.
//!
//! Every solver works on a [`NetworkInfo`] (prebuilt per-sensor kernels) and
//! returns an [`Allocation`] whose objective is `tr(J)` recomputed from the
//! final powers and selection.

mod brute;
mod greedy;
mod mckp;
mod power;
mod uniform;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::fisher::{FisherError, NetworkInfo};

pub use brute::{enumerate_table, solve_bruteforce, BRUTE_MAX_GRID, BRUTE_MAX_SENSORS};
pub use greedy::{solve_greedy, GreedyOptions, GREEDY_T1};
pub use mckp::{mckp_dp, solve_mckp, solve_mckp_table, MckpSolution, PowerGrid};
pub use power::{solve_power_allocation, PowerOptions, PowerSolution};
pub use uniform::{solve_boolean_relaxation, solve_ufa, solve_usu};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("cardinality {i} is outside 1..={k}")]
    BadCardinality { i: usize, k: usize },
    #[error("t_k is not concave: {0}")]
    ConcavityViolation(String),
    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("instance too large for exhaustive search: K={k} (max {max_k}), N={n} (max {max_n})")]
    TooLarge { k: usize, n: usize, max_k: usize, max_n: usize },
    #[error("total power must be positive and finite, got {0}")]
    InvalidBudget(f64),
    #[error("active set is empty or contains an unknown sensor")]
    BadActiveSet,
    #[error(transparent)]
    Fisher(#[from] FisherError),
}

impl SolverError {
    /// Short name of the error case.
    pub fn kind(&self) -> &'static str {
        match self {
            SolverError::BadCardinality { .. } => "BadCardinality",
            SolverError::ConcavityViolation(_) => "ConcavityViolation",
            SolverError::NoConvergence { .. } => "NoConvergence",
            SolverError::GridMismatch(_) => "GridMismatch",
            SolverError::TooLarge { .. } => "TooLarge",
            SolverError::InvalidBudget(_) => "InvalidBudget",
            SolverError::BadActiveSet => "BadActiveSet",
            SolverError::Fisher(_) => "Fisher",
        }
    }
}

pub(crate) fn check_budget(p_tot: f64) -> Result<(), SolverError> {
    if p_tot.is_finite() && p_tot > 0.0 {
        Ok(())
    } else {
        Err(SolverError::InvalidBudget(p_tot))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Brute,
    Greedy,
    Mckp,
    Ufa,
    Usu,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Brute, Algorithm::Greedy, Algorithm::Mckp, Algorithm::Ufa, Algorithm::Usu];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Brute => "brute",
            Algorithm::Greedy => "greedy",
            Algorithm::Mckp => "mckp",
            Algorithm::Ufa => "ufa",
            Algorithm::Usu => "usu",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown algorithm '{s}' (expected one of ufa, usu, greedy, mckp, brute)"))
    }
}

/// Result of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub algorithm: Algorithm,
    pub p_tot: f64,
    pub selection: Vec<bool>,
    pub powers: Vec<f64>,
    /// Achieved `tr(J)`.
    pub objective: f64,
    pub iterations: usize,
    /// `(iteration, tr(J))` trace of the search.
    pub diagnostics: Vec<(usize, f64)>,
    /// Set when a continuous subproblem needed the non-concave fallback.
    pub fallback: bool,
}

/// Relative slack allowed on the power budget.
pub const BUDGET_SLACK: f64 = 1e-9;

impl Allocation {
    /// Builds an allocation, zeroing unselected powers and recomputing the
    /// objective.
    pub fn assemble(
        algorithm: Algorithm,
        info: &NetworkInfo,
        p_tot: f64,
        selection: Vec<bool>,
        mut powers: Vec<f64>,
    ) -> Result<Self, SolverError> {
        for (p, &w) in powers.iter_mut().zip(&selection) {
            if !w {
                *p = 0.0;
            }
        }
        let objective = info.trace_fim(&powers, &selection)?;
        Ok(Self { algorithm, p_tot, selection, powers, objective, iterations: 0, diagnostics: Vec::new(), fallback: false })
    }

    pub fn num_selected(&self) -> usize {
        self.selection.iter().filter(|&&w| w).count()
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    /// Independent feasibility and objective check.
    pub fn verify(&self, info: &NetworkInfo) -> Result<(), String> {
        let k = info.len();
        if self.selection.len() != k || self.powers.len() != k {
            return Err(format!("expected {k} entries, got {} selections and {} powers", self.selection.len(), self.powers.len()));
        }
        for (i, (&p, &w)) in self.powers.iter().zip(&self.selection).enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(format!("sensor {i} has invalid power {p}"));
            }
            if !w && p != 0.0 {
                return Err(format!("unselected sensor {i} has power {p}"));
            }
        }
        let total = self.total_power();
        if total > self.p_tot * (1.0 + BUDGET_SLACK) {
            return Err(format!("total power {total} exceeds budget {}", self.p_tot));
        }
        let mut recomputed = info.baseline();
        for i in 0..k {
            if self.selection[i] {
                recomputed += info.kernel(i).value(self.powers[i]);
            }
        }
        if (recomputed - self.objective).abs() > 1e-9 * recomputed.abs() {
            return Err(format!("objective {} differs from recomputed {recomputed}", self.objective));
        }
        Ok(())
    }

    /// CSV with a leading `# algorithm=... ptot=... objective=... iterations=...`
    /// comment line and `sensor_id,selected,power` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# algorithm={} ptot={} objective={} iterations={}",
            self.algorithm, self.p_tot, self.objective, self.iterations
        )?;
        writeln!(out, "sensor_id,selected,power")?;
        for (k, (&w, &p)) in self.selection.iter().zip(&self.powers).enumerate() {
            writeln!(out, "{k},{},{p}", u8::from(w))?;
        }
        Ok(())
    }
}

/// Fields recovered from an allocation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRecord {
    pub algorithm: Algorithm,
    pub p_tot: f64,
    pub objective: f64,
    pub iterations: usize,
    pub selection: Vec<bool>,
    pub powers: Vec<f64>,
}

pub fn read_allocation_csv<R: BufRead>(input: R) -> Result<AllocationRecord, String> {
    let mut lines = input.lines();
    let mut next = || lines.next().transpose().map_err(|e| e.to_string());
    let header = next()?.ok_or("empty allocation file")?;
    let meta = header.strip_prefix("# ").ok_or("missing '# ' metadata line")?;
    let mut algorithm = None;
    let mut p_tot = None;
    let mut objective = None;
    let mut iterations = None;
    for kv in meta.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("bad metadata entry '{kv}'"))?;
        match k {
            "algorithm" => algorithm = Some(v.parse::<Algorithm>()?),
            "ptot" => p_tot = Some(v.parse::<f64>().map_err(|e| e.to_string())?),
            "objective" => objective = Some(v.parse::<f64>().map_err(|e| e.to_string())?),
            "iterations" => iterations = Some(v.parse::<usize>().map_err(|e| e.to_string())?),
            other => return Err(format!("unknown metadata key '{other}'")),
        }
    }
    if next()?.as_deref() != Some("sensor_id,selected,power") {
        return Err("missing column header".into());
    }
    let mut selection = Vec::new();
    let mut powers = Vec::new();
    while let Some(line) = next()? {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(format!("bad row '{line}'"));
        }
        let id: usize = cols[0].parse().map_err(|e| format!("bad sensor id: {e}"))?;
        if id != selection.len() {
            return Err(format!("sensor ids out of order at '{line}'"));
        }
        selection.push(match cols[1] {
            "0" => false,
            "1" => true,
            other => return Err(format!("bad selected flag '{other}'")),
        });
        powers.push(cols[2].parse().map_err(|e| format!("bad power: {e}"))?);
    }
    Ok(AllocationRecord {
        algorithm: algorithm.ok_or("missing algorithm")?,
        p_tot: p_tot.ok_or("missing ptot")?,
        objective: objective.ok_or("missing objective")?,
        iterations: iterations.ok_or("missing iterations")?,
        selection,
        powers,
    })
}

/// Dispatches to the named solver with default settings.
pub fn solve(algorithm: Algorithm, info: &NetworkInfo, p_tot: f64, grid_n: usize, eps0: f64) -> Result<Allocation, SolverError> {
    match algorithm {
        Algorithm::Ufa => solve_ufa(info, p_tot),
        Algorithm::Usu => solve_usu(info, p_tot),
        Algorithm::Greedy => solve_greedy(info, p_tot, &GreedyOptions { eps0, ..GreedyOptions::default() }),
        Algorithm::Mckp => solve_mckp(info, p_tot, grid_n),
        Algorithm::Brute => solve_bruteforce(info, p_tot, grid_n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{homogeneous_network, Prior, SensorParams};

    #[test]
    fn algorithm_labels_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
        }
        assert!("simplex".parse::<Algorithm>().is_err());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let net = homogeneous_network(3, &[0.6, 0.8], SensorParams::default(), Prior::reference()).unwrap();
        let info = NetworkInfo::new(&net).unwrap();
        let mut a = Allocation::assemble(Algorithm::Greedy, &info, 10.0, vec![true, false, true], vec![3.3, 1.0, 6.7]).unwrap();
        a.iterations = 4;
        assert_eq!(a.powers[1], 0.0);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# algorithm=greedy ptot=10 objective="));
        let rec = read_allocation_csv(&buf[..]).unwrap();
        assert_eq!(rec.selection, a.selection);
        assert_eq!(rec.powers, a.powers);
        assert_eq!(rec.objective, a.objective);
        assert_eq!(rec.iterations, 4);
        assert_eq!(rec.algorithm, Algorithm::Greedy);
    }

    #[test]
    fn verify_catches_violations() {
        let net = homogeneous_network(2, &[0.6, 0.8], SensorParams::default(), Prior::reference()).unwrap();
        let info = NetworkInfo::new(&net).unwrap();
        let good = Allocation::assemble(Algorithm::Ufa, &info, 4.0, vec![true, true], vec![2.0, 2.0]).unwrap();
        assert!(good.verify(&info).is_ok());
        let mut over = good.clone();
        over.powers[0] = 2.1;
        assert!(over.verify(&info).is_err());
        let mut stray = good.clone();
        stray.selection[1] = false;
        assert!(stray.verify(&info).is_err());
        let mut wrong = good;
        wrong.objective += 1e-6;
        assert!(wrong.verify(&info).is_err());
    }
}
