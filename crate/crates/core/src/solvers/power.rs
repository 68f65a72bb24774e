//! Continuous power split over a fixed active set.
//!
//! Maximizes `sum t_k(P_k)` subject to `sum P_k = P_tot`, `P_k >= P_floor`
//! through the dual: every sensor answers a multiplier `lambda` with the
//! power where `t_k'(P) = lambda`, and `lambda` is searched until the answers
//! use the whole budget.

use log::{debug, warn};

use crate::fisher::{NetworkInfo, SensorKernel};

use super::{check_budget, SolverError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Relative tolerance on `|sum P - P_tot|`.
    pub budget_tol: f64,
    /// Stationarity residual allowed, relative to `lambda`.
    pub kkt_tol: f64,
    /// `P_floor = floor_rel * P_tot`.
    pub floor_rel: f64,
    /// Cap on derivative evaluations plus multiplier updates.
    pub max_iterations: usize,
    /// `t''` may exceed zero by this much (scaled by `t'/P`) before the
    /// curve counts as non-concave.
    pub concavity_tol: f64,
    pub allow_fallback: bool,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            budget_tol: 1e-8,
            kkt_tol: 1e-6,
            floor_rel: 1e-9,
            max_iterations: 10_000,
            concavity_tol: 1e-9,
            allow_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    /// Powers in the order of the active set.
    pub powers: Vec<f64>,
    /// `sum t_k(P_k)` over the active set.
    pub value: f64,
    pub multiplier: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Projected-gradient fallback was used.
    pub fallback: bool,
}

struct Budget {
    used: usize,
    cap: usize,
}

impl Budget {
    fn tick(&mut self) -> Result<(), SolverError> {
        self.used += 1;
        if self.used > self.cap {
            return Err(SolverError::NoConvergence { iterations: self.cap, detail: "power allocation".into() });
        }
        Ok(())
    }
}

enum Outcome {
    Done(PowerSolution),
    NotConcave(String),
}

struct Responder<'a> {
    kernel: &'a SensorKernel,
    slope_floor: f64,
    slope_top: f64,
    warm: f64,
}

impl Responder<'_> {
    /// Power answering `lambda` and its sensitivity `dP/dlambda`.
    fn respond(
        &mut self,
        lambda: f64,
        floor: f64,
        top: f64,
        opts: &PowerOptions,
        budget: &mut Budget,
    ) -> Result<Result<(f64, f64), String>, SolverError> {
        if self.slope_floor <= lambda {
            return Ok(Ok((floor, 0.0)));
        }
        if self.slope_top >= lambda {
            return Ok(Ok((top, 0.0)));
        }
        let (mut lo, mut hi) = (floor, top);
        let mut x = if self.warm > lo && self.warm < hi { self.warm } else { (lo * hi).sqrt() };
        loop {
            budget.tick()?;
            let e = self.kernel.eval(x);
            if e.second > opts.concavity_tol * e.first.abs() / x {
                return Ok(Err(format!("t'' = {:e} > 0 at P = {x}", e.second)));
            }
            let g = e.first - lambda;
            if g > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let sens = if e.second < 0.0 { 1.0 / e.second } else { 0.0 };
            if g.abs() <= 1e-11 * lambda || hi - lo <= 4.0 * f64::EPSILON * hi {
                self.warm = x;
                return Ok(Ok((x, sens)));
            }
            let newton = if e.second < 0.0 { x - g / e.second } else { f64::NAN };
            x = if newton > lo && newton < hi {
                newton
            } else if hi > 4.0 * lo {
                (lo * hi).sqrt()
            } else {
                0.5 * (lo + hi)
            };
        }
    }
}

/// Optimal split of `p_tot` over the sensors in `active` (indices into
/// `info`).
pub fn solve_power_allocation(
    info: &NetworkInfo,
    active: &[usize],
    p_tot: f64,
    opts: &PowerOptions,
) -> Result<PowerSolution, SolverError> {
    check_budget(p_tot)?;
    if active.is_empty() || active.iter().any(|&k| k >= info.len()) {
        return Err(SolverError::BadActiveSet);
    }
    let mut sorted = active.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(SolverError::BadActiveSet);
    }
    let kernels: Vec<&SensorKernel> = active.iter().map(|&k| info.kernel(k)).collect();
    let n = kernels.len();
    let value_of = |powers: &[f64]| kernels.iter().zip(powers).map(|(k, &p)| k.value(p)).sum::<f64>();

    if n == 1 {
        let multiplier = if kernels[0].prefactor() > 0.0 { kernels[0].eval(p_tot).first } else { 0.0 };
        return Ok(PowerSolution {
            value: value_of(&[p_tot]),
            powers: vec![p_tot],
            multiplier,
            kkt_residual: 0.0,
            iterations: 1,
            fallback: false,
        });
    }

    match dual_search(&kernels, p_tot, opts)? {
        Outcome::Done(mut sol) => {
            sol.value = value_of(&sol.powers);
            Ok(sol)
        }
        Outcome::NotConcave(detail) => {
            if !opts.allow_fallback {
                return Err(SolverError::ConcavityViolation(detail));
            }
            warn!("power allocation falling back to projected gradient: {detail}");
            let mut sol = projected_gradient(&kernels, p_tot, opts);
            sol.value = value_of(&sol.powers);
            Ok(sol)
        }
    }
}

fn dual_search(kernels: &[&SensorKernel], p_tot: f64, opts: &PowerOptions) -> Result<Outcome, SolverError> {
    let n = kernels.len();
    let floor = opts.floor_rel * p_tot;
    let top = p_tot - (n - 1) as f64 * floor;
    let mut budget = Budget { used: 0, cap: opts.max_iterations };

    let mut responders: Vec<Option<Responder>> = Vec::with_capacity(n);
    for k in kernels {
        if k.prefactor() == 0.0 {
            responders.push(None);
            continue;
        }
        budget.tick()?;
        budget.tick()?;
        let slope_floor = k.eval(floor).first;
        let slope_top = k.eval(top).first;
        if slope_top > slope_floor {
            return Ok(Outcome::NotConcave(format!("t' rises from {slope_floor:e} to {slope_top:e}")));
        }
        responders.push(Some(Responder { kernel: k, slope_floor, slope_top, warm: p_tot / n as f64 }));
    }

    let informative: Vec<&Responder> = responders.iter().flatten().collect();
    if informative.is_empty() {
        return Ok(Outcome::Done(PowerSolution {
            powers: vec![p_tot / n as f64; n],
            value: 0.0,
            multiplier: 0.0,
            kkt_residual: 0.0,
            iterations: budget.used,
            fallback: false,
        }));
    }
    let mut lo = informative.iter().map(|r| r.slope_top).fold(f64::INFINITY, f64::min);
    let mut hi = informative.iter().map(|r| r.slope_floor).fold(0.0, f64::max);
    if lo > hi {
        return Ok(Outcome::NotConcave("empty multiplier bracket".into()));
    }

    let tol = opts.budget_tol * p_tot;
    let mut lambda = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
    let mut powers = vec![floor; n];
    loop {
        budget.tick()?;
        let mut slope = 0.0;
        for (i, r) in responders.iter_mut().enumerate() {
            if let Some(r) = r {
                match r.respond(lambda, floor, top, opts, &mut budget)? {
                    Ok((p, s)) => {
                        powers[i] = p;
                        slope += s;
                    }
                    Err(detail) => return Ok(Outcome::NotConcave(detail)),
                }
            }
        }
        let excess = powers.iter().sum::<f64>() - p_tot;
        if excess.abs() <= tol {
            break;
        }
        if excess > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(Outcome::NotConcave(format!("response jumps at lambda = {lambda:e} (budget gap {excess:e})")));
        }
        let newton = if slope < 0.0 { lambda - excess / slope } else { f64::NAN };
        lambda = if newton > lo && newton < hi {
            newton
        } else if lo > 0.0 && hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
    }

    let total: f64 = powers.iter().sum();
    if total > p_tot {
        let scale = p_tot / total;
        for p in &mut powers {
            *p *= scale;
        }
    }
    let kkt_residual = kkt_residual(kernels, &powers, lambda, floor, top, tol);
    debug!("power allocation: lambda={lambda:e} kkt={kkt_residual:e} evals={}", budget.used);
    if kkt_residual > opts.kkt_tol {
        return Err(SolverError::NoConvergence {
            iterations: budget.used,
            detail: format!("KKT residual {kkt_residual:e} above {:e}", opts.kkt_tol),
        });
    }
    Ok(Outcome::Done(PowerSolution { powers, value: 0.0, multiplier: lambda, kkt_residual, iterations: budget.used, fallback: false }))
}

/// Largest stationarity violation relative to `lambda`; bound coordinates
/// only count when their slope points out of the feasible box.
fn kkt_residual(kernels: &[&SensorKernel], powers: &[f64], lambda: f64, floor: f64, top: f64, slack: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for (k, &p) in kernels.iter().zip(powers) {
        if k.prefactor() == 0.0 {
            continue;
        }
        let d = k.eval(p.max(floor)).first;
        let r = if p <= floor + slack {
            (d - lambda).max(0.0)
        } else if p >= top - slack {
            (lambda - d).max(0.0)
        } else {
            (d - lambda).abs()
        };
        worst = worst.max(r / lambda);
    }
    worst
}

/// Euclidean projection onto `{x >= floor, sum x = total}`.
fn project(x: &mut [f64], floor: f64, total: f64) {
    let budget = total - floor * x.len() as f64;
    let y: Vec<f64> = x.iter().map(|&v| v - floor).collect();
    let mut sorted = y.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - budget) / (i + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    for (xi, yi) in x.iter_mut().zip(&y) {
        *xi = (*yi - shift).max(0.0) + floor;
    }
}

fn projected_gradient(kernels: &[&SensorKernel], p_tot: f64, opts: &PowerOptions) -> PowerSolution {
    let n = kernels.len();
    let floor = opts.floor_rel * p_tot;
    let mut x = vec![p_tot / n as f64; n];
    let objective = |x: &[f64]| kernels.iter().zip(x).map(|(k, &p)| k.value(p)).sum::<f64>();
    let mut best = x.clone();
    let mut best_value = objective(&x);
    let mut step0 = 0.0;
    let mut iterations = 0;
    for j in 0..opts.max_iterations {
        iterations = j + 1;
        let grad: Vec<f64> = kernels.iter().zip(&x).map(|(k, &p)| k.eval(p.max(floor)).first).collect();
        if j == 0 {
            let g = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if g == 0.0 {
                break;
            }
            step0 = 0.1 * p_tot / g;
        }
        let step = step0 / ((j + 1) as f64).sqrt();
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi += step * gi;
        }
        project(&mut x, floor, p_tot);
        let v = objective(&x);
        if v > best_value {
            best_value = v;
            best.clone_from(&x);
        }
    }
    let interior: Vec<f64> = kernels
        .iter()
        .zip(&best)
        .filter(|(k, &p)| k.prefactor() > 0.0 && p > floor * (1.0 + 1e-12))
        .map(|(k, &p)| k.eval(p).first)
        .collect();
    let multiplier = if interior.is_empty() { 0.0 } else { interior.iter().sum::<f64>() / interior.len() as f64 };
    let top = p_tot - (n - 1) as f64 * floor;
    let kkt_residual = kkt_residual(kernels, &best, multiplier, floor, top, opts.budget_tol * p_tot);
    PowerSolution { powers: best, value: best_value, multiplier, kkt_residual, iterations, fallback: true }
}
