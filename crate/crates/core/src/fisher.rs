//! Per-sensor Fisher information `t_k(P)` and the trace of the Bayesian FIM.
//!
//! `t_k(P) = |a|^2 / (2 pi sigma_n^2) * E_s[G(s, P)]` where `s = a^T theta`
//! is Gaussian with variance `a^T C a`, so the expectation over the prior is
//! one-dimensional. `G` depends on the transmit power only through the bit
//! error probability `p(P)`, and every transition probability depends only on
//! the Hamming distance between codewords. [`SensorKernel`] exploits both: it
//! stores, per quadrature node, the `beta` and `beta_dot` sums grouped by
//! Hamming distance, after which `t`, `dt/dP` and `d2t/dP2` cost
//! `O(nodes * M * (L + 1))` per power.

use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{ModelError, Network, Prior, Sensor};
use crate::quadrature::{gauss_hermite, gauss_legendre};
use crate::quantcomm::{beta, beta_dot, normal_pdf, q_func, CommError, QuantizerSpec, TransitionMatrix};

#[derive(Debug, Error)]
pub enum FisherError {
    #[error("quadrature did not converge: {rule} changed the result by {rel_change:e} relative")]
    QuadratureNotConverged { rule: String, rel_change: f64 },
    #[error("power {power:e} is below the derivative floor {floor:e}")]
    BelowFloor { power: f64, floor: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid power {0}")]
    InvalidPower(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Comm(#[from] CommError),
}

/// Terms of `G` whose denominator falls below this are dropped.
pub const DEN_FLOOR: f64 = 1e-300;

/// Relative floor (times the sensor's unit-SNR power) below which the power
/// derivative is not evaluated.
pub const DERIVATIVE_FLOOR_REL: f64 = 1e-9;

/// `G(s) = sum_t (sum_l alpha_tl beta_dot_l)^2 / (sum_l alpha_tl beta_l)`,
/// evaluated directly from the full transition matrix.
pub fn g_kernel(s: f64, transition: &TransitionMatrix, quantizer: &QuantizerSpec, sigma_n: f64) -> f64 {
    let m = quantizer.num_levels();
    assert_eq!(transition.size(), m, "transition matrix and quantizer disagree on M");
    let b = beta(s, quantizer, sigma_n);
    let bd = beta_dot(s, quantizer, sigma_n);
    let mut g = 0.0;
    for t in 0..m {
        let mut num = 0.0;
        let mut den = 0.0;
        for l in 0..m {
            let a = transition.entry(t, l);
            num += a * bd[l];
            den += a * b[l];
        }
        if den >= DEN_FLOOR {
            g += num * num / den;
        }
    }
    g
}

/// How the expectation over `s` is discretized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadRule {
    /// Gauss–Hermite with the given number of nodes.
    Hermite(usize),
    /// Composite Gauss–Legendre on windows around the quantizer boundaries.
    Composite { panel_width: f64, window: f64, order: usize },
}

impl std::fmt::Display for QuadRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuadRule::Hermite(n) => write!(f, "gauss-hermite({n})"),
            QuadRule::Composite { panel_width, window, order } => {
                write!(f, "composite-legendre(h={panel_width:.3e}, window={window:.3e}, order={order})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    /// Half-width of each boundary window, in units of `sigma_n`.
    pub window_sigmas: f64,
    /// Composite panel width, in units of `min(sigma_n, sigma_s)`.
    pub panel_sigmas: f64,
    pub panel_order: usize,
    pub max_refinements: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            window_sigmas: 8.0,
            panel_sigmas: 2.0,
            panel_order: 12,
            max_refinements: 3,
        }
    }
}

/// `t`, `dt/dP` and `d2t/dP2` at one power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoPoint {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// Precomputed quadrature data for one sensor.
#[derive(Debug, Clone)]
pub struct SensorKernel {
    prefactor: f64,
    bits: u32,
    levels: usize,
    kappa: f64,
    reference_power: f64,
    rule: QuadRule,
    weights: Vec<f64>,
    // node-major, then level t, then Hamming distance d
    dot_sums: Vec<f64>,
    beta_sums: Vec<f64>,
}

/// Symmetric node set on `s >= 0` with weights doubled off the origin
/// (`G` is even in `s` for a symmetric quantizer).
fn fold_symmetric(nodes: &[(f64, f64)]) -> Vec<(f64, f64)> {
    nodes
        .iter()
        .filter(|(s, _)| *s >= 0.0)
        .map(|&(s, w)| if s == 0.0 { (s, w) } else { (s, 2.0 * w) })
        .collect()
}

fn hermite_nodes(n: usize, sigma_s: f64) -> Vec<(f64, f64)> {
    let rule = gauss_hermite(n);
    let norm = std::f64::consts::PI.sqrt();
    let pts: Vec<(f64, f64)> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(x, w)| (sigma_s * std::f64::consts::SQRT_2 * x, w / norm))
        .collect();
    fold_symmetric(&pts)
}

/// Composite Gauss–Legendre over `[0, 10 sigma_s]` intersected with windows
/// of half-width `window` around every interior boundary, weighted by the
/// (doubled) density of `s`.
fn composite_nodes(quantizer: &QuantizerSpec, sigma_s: f64, window: f64, panel_width: f64, order: usize) -> Vec<(f64, f64)> {
    let reach = 10.0 * sigma_s;
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for &b in &quantizer.boundaries[1..quantizer.boundaries.len() - 1] {
        let lo = (b - window).max(0.0);
        let hi = (b + window).min(reach);
        if lo < hi {
            intervals.push((lo, hi));
        }
    }
    intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in intervals {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let rule = gauss_legendre(order);
    let mut pts = Vec::new();
    for (lo, hi) in merged {
        let panels = ((hi - lo) / panel_width).ceil().max(1.0) as usize;
        let h = (hi - lo) / panels as f64;
        for p in 0..panels {
            let mid = lo + (p as f64 + 0.5) * h;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let s = mid + 0.5 * h * x;
                let density = normal_pdf(s / sigma_s) / sigma_s;
                pts.push((s, 2.0 * 0.5 * h * w * density));
            }
        }
    }
    pts
}

impl SensorKernel {
    /// Builds the kernel on the default composite rule, halving the panel
    /// width until a refinement changes `E_s[G]` by at most `rel_tol`.
    pub fn new(sensor: &Sensor, prior: &Prior) -> Result<Self, FisherError> {
        Self::with_options(sensor, prior, &QuadratureOptions::default())
    }

    pub fn with_options(sensor: &Sensor, prior: &Prior, opts: &QuadratureOptions) -> Result<Self, FisherError> {
        sensor.validate()?;
        let sigma_s = prior.projected_variance(&sensor.gain)?.sqrt();
        let window = opts.window_sigmas * sensor.sigma_n;
        let composite = |w: f64| QuadRule::Composite { panel_width: w, window, order: opts.panel_order };
        let mut width = opts.panel_sigmas * sensor.sigma_n.min(sigma_s);
        if sigma_s == 0.0 {
            return Self::with_rule(sensor, prior, composite(opts.panel_sigmas * sensor.sigma_n));
        }
        // p = 0 gives the sharpest integrand; the second probe covers the
        // regime where the channel-error floor shapes the tails.
        let probes = [0.0, 0.05];
        let change = |a: &SensorKernel, b: &SensorKernel| -> f64 {
            probes
                .iter()
                .map(|&p| {
                    let (x, y) = (a.ber_moments(p).0, b.ber_moments(p).0);
                    (x - y).abs() / x.abs().max(y.abs()).max(DEN_FLOOR)
                })
                .fold(0.0, f64::max)
        };

        let mut last_change = f64::INFINITY;
        let mut current = Self::with_rule(sensor, prior, composite(width))?;
        for _ in 0..=opts.max_refinements {
            let finer = Self::with_rule(sensor, prior, composite(width / 2.0))?;
            last_change = change(&current, &finer);
            if last_change <= opts.rel_tol {
                return Ok(current);
            }
            width /= 2.0;
            current = finer;
        }
        Err(FisherError::QuadratureNotConverged { rule: composite(width).to_string(), rel_change: last_change })
    }

    /// Builds the kernel on an explicit rule without any convergence check.
    pub fn with_rule(sensor: &Sensor, prior: &Prior, rule: QuadRule) -> Result<Self, FisherError> {
        sensor.validate()?;
        let quantizer = QuantizerSpec::for_sensor(sensor)?;
        let sigma_s = prior.projected_variance(&sensor.gain)?.sqrt();
        let norm2: f64 = sensor.gain.iter().map(|a| a * a).sum();
        let prefactor = norm2 / (2.0 * std::f64::consts::PI * sensor.sigma_n * sensor.sigma_n);
        let bits = sensor.bits;
        let m = sensor.levels();
        let nd = bits as usize + 1;

        let pts = if sigma_s == 0.0 {
            vec![(0.0, 1.0)]
        } else {
            match rule {
                QuadRule::Hermite(n) => hermite_nodes(n, sigma_s),
                QuadRule::Composite { panel_width, window, order } => {
                    composite_nodes(&quantizer, sigma_s, window, panel_width, order)
                }
            }
        };

        let mut weights = Vec::with_capacity(pts.len());
        let mut dot_sums = vec![0.0; pts.len() * m * nd];
        let mut beta_sums = vec![0.0; pts.len() * m * nd];
        for (i, &(s, w)) in pts.iter().enumerate() {
            weights.push(w);
            let b = beta(s, &quantizer, sensor.sigma_n);
            let bd = beta_dot(s, &quantizer, sensor.sigma_n);
            let base = i * m * nd;
            for t in 0..m {
                for l in 0..m {
                    let d = (t ^ l).count_ones() as usize;
                    dot_sums[base + t * nd + d] += bd[l];
                    beta_sums[base + t * nd + d] += b[l];
                }
            }
        }

        Ok(Self {
            prefactor,
            bits,
            levels: m,
            kappa: sensor.h_mag / (sensor.sigma_nu * (bits as f64).sqrt()),
            reference_power: sensor.reference_power(),
            rule,
            weights,
            dot_sums,
            beta_sums,
        })
    }

    pub fn rule(&self) -> QuadRule {
        self.rule
    }

    pub fn num_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    /// Smallest power at which [`SensorKernel::derivative`] is defined.
    pub fn derivative_floor(&self) -> f64 {
        DERIVATIVE_FLOOR_REL * self.reference_power
    }

    /// `E_s[G]` and its first two derivatives with respect to the bit error
    /// probability.
    pub fn ber_moments(&self, p: f64) -> (f64, f64, f64) {
        let l = self.bits as i32;
        let nd = self.bits as usize + 1;
        let q = 1.0 - p;
        let pw = |x: f64, e: i32| if e < 0 { 0.0 } else { x.powi(e) };
        let mut c = vec![0.0; nd];
        let mut c1 = vec![0.0; nd];
        let mut c2 = vec![0.0; nd];
        for d in 0..nd {
            let di = d as i32;
            let r = l - di;
            let (df, rf) = (di as f64, r as f64);
            c[d] = pw(p, di) * pw(q, r);
            c1[d] = if di > 0 { df * pw(p, di - 1) * pw(q, r) } else { 0.0 }
                - if r > 0 { rf * pw(p, di) * pw(q, r - 1) } else { 0.0 };
            c2[d] = if di > 1 { df * (df - 1.0) * pw(p, di - 2) * pw(q, r) } else { 0.0 }
                - if di > 0 && r > 0 { 2.0 * df * rf * pw(p, di - 1) * pw(q, r - 1) } else { 0.0 }
                + if r > 1 { rf * (rf - 1.0) * pw(p, di) * pw(q, r - 2) } else { 0.0 };
        }

        let m = self.levels;
        let (mut f, mut f1, mut f2) = (0.0, 0.0, 0.0);
        let mut skipped = 0usize;
        for (i, &w) in self.weights.iter().enumerate() {
            let base = i * m * nd;
            let (mut gi, mut gi1, mut gi2) = (0.0, 0.0, 0.0);
            for t in 0..m {
                let dots = &self.dot_sums[base + t * nd..base + (t + 1) * nd];
                let bets = &self.beta_sums[base + t * nd..base + (t + 1) * nd];
                let (mut n0, mut n1, mut n2, mut d0, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for d in 0..nd {
                    n0 += c[d] * dots[d];
                    n1 += c1[d] * dots[d];
                    n2 += c2[d] * dots[d];
                    d0 += c[d] * bets[d];
                    d1 += c1[d] * bets[d];
                    d2 += c2[d] * bets[d];
                }
                if d0 < DEN_FLOOR {
                    skipped += 1;
                    continue;
                }
                let inv = 1.0 / d0;
                let r = n0 * inv;
                gi += n0 * r;
                gi1 += 2.0 * n1 * r - r * r * d1;
                gi2 += 2.0 * n1 * n1 * inv + 2.0 * n2 * r - 4.0 * n1 * r * d1 * inv - r * r * d2 + 2.0 * r * r * d1 * d1 * inv;
            }
            f += w * gi;
            f1 += w * gi1;
            f2 += w * gi2;
        }
        if skipped > 0 {
            log::debug!("skipped {skipped} G terms with denominator below {DEN_FLOOR:e} at p={p:e}");
        }
        (f, f1, f2)
    }

    /// Bit error probability and its first two power derivatives.
    fn ber_curve(&self, power: f64) -> (f64, f64, f64) {
        let z = self.kappa * power.sqrt();
        let p = q_func(z);
        if power <= 0.0 {
            return (p, f64::INFINITY, f64::NEG_INFINITY);
        }
        let pdf = normal_pdf(z);
        let dz = self.kappa / (2.0 * power.sqrt());
        let d2z = -self.kappa / (4.0 * power * power.sqrt());
        (p, -pdf * dz, z * pdf * dz * dz - pdf * d2z)
    }

    pub fn value(&self, power: f64) -> f64 {
        if power == 0.0 || self.prefactor == 0.0 {
            return 0.0;
        }
        let (p, _, _) = self.ber_curve(power);
        self.prefactor * self.ber_moments(p).0
    }

    /// `t`, `dt/dP`, `d2t/dP2`; requires `power > 0`.
    pub fn eval(&self, power: f64) -> InfoPoint {
        debug_assert!(power > 0.0);
        if self.prefactor == 0.0 {
            return InfoPoint { value: 0.0, first: 0.0, second: 0.0 };
        }
        let (p, p1, p2) = self.ber_curve(power);
        let (f, f1, f2) = self.ber_moments(p);
        InfoPoint {
            value: self.prefactor * f,
            first: self.prefactor * f1 * p1,
            second: self.prefactor * (f2 * p1 * p1 + f1 * p2),
        }
    }

    pub fn derivative(&self, power: f64) -> Result<f64, FisherError> {
        let floor = self.derivative_floor();
        if !(power >= floor) {
            return Err(FisherError::BelowFloor { power, floor });
        }
        Ok(self.eval(power).first)
    }
}

/// `t_k(P)` for a single sensor.
pub fn t_k(power: f64, sensor: &Sensor, prior: &Prior) -> Result<f64, FisherError> {
    if !(power >= 0.0 && power.is_finite()) {
        return Err(FisherError::InvalidPower(power));
    }
    Ok(SensorKernel::new(sensor, prior)?.value(power))
}

/// `dt_k/dP` by the chain rule through the bit error probability.
pub fn t_k_derivative(power: f64, sensor: &Sensor, prior: &Prior) -> Result<f64, FisherError> {
    SensorKernel::new(sensor, prior)?.derivative(power)
}

/// Kernels for every sensor of a network; identical sensors share one
/// kernel.
#[derive(Debug, Clone)]
pub struct NetworkInfo {
    kernels: Vec<Arc<SensorKernel>>,
    baseline: f64,
}

impl NetworkInfo {
    pub fn new(network: &Network) -> Result<Self, FisherError> {
        let mut built: Vec<(&Sensor, Arc<SensorKernel>)> = Vec::new();
        let mut kernels = Vec::with_capacity(network.len());
        for sensor in &network.sensors {
            if let Some((_, k)) = built.iter().find(|(s, _)| *s == sensor) {
                kernels.push(Arc::clone(k));
                continue;
            }
            let k = Arc::new(SensorKernel::new(sensor, &network.prior)?);
            built.push((sensor, Arc::clone(&k)));
            kernels.push(k);
        }
        Ok(Self { kernels, baseline: network.prior.inverse_trace() })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernel(&self, k: usize) -> &SensorKernel {
        &self.kernels[k]
    }

    /// `tr(C^{-1})`.
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn t(&self, k: usize, power: f64) -> f64 {
        self.kernels[k].value(power)
    }

    /// `tr(C^{-1}) + sum_k w_k t_k(P_k)`.
    pub fn trace_fim(&self, powers: &[f64], selection: &[bool]) -> Result<f64, FisherError> {
        if powers.len() != self.len() || selection.len() != self.len() {
            return Err(FisherError::DimensionMismatch(format!(
                "expected {} powers and selections, got {} and {}",
                self.len(),
                powers.len(),
                selection.len()
            )));
        }
        let mut total = self.baseline;
        for (k, (&p, &w)) in powers.iter().zip(selection).enumerate() {
            if !w {
                continue;
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(FisherError::InvalidPower(p));
            }
            total += self.t(k, p);
        }
        Ok(total)
    }

    /// Row `k` holds `t_k` at every grid power.
    pub fn tabulate(&self, grid: &[f64]) -> Result<Vec<Vec<f64>>, FisherError> {
        use rayon::prelude::*;
        if grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|&p| !(p >= 0.0)) {
            return Err(FisherError::DimensionMismatch("power grid must be ascending and nonnegative".into()));
        }
        Ok(self.kernels.par_iter().map(|k| grid.iter().map(|&p| k.value(p)).collect()).collect())
    }
}

pub fn trace_fim(powers: &[f64], selection: &[bool], network: &Network) -> Result<f64, FisherError> {
    NetworkInfo::new(network)?.trace_fim(powers, selection)
}

pub fn tabulate_t(network: &Network, grid: &[f64]) -> Result<Vec<Vec<f64>>, FisherError> {
    NetworkInfo::new(network)?.tabulate(grid)
}

/// Sampled `t_k` curve with cached derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorInfoCurve {
    pub sensor_id: usize,
    pub powers: Vec<f64>,
    pub values: Vec<f64>,
    pub derivative_cache: Vec<f64>,
}

impl SensorInfoCurve {
    /// Derivatives at powers below the floor are recorded as NaN.
    pub fn sample(sensor_id: usize, kernel: &SensorKernel, powers: &[f64]) -> Result<Self, FisherError> {
        if powers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FisherError::DimensionMismatch("curve powers must be strictly ascending".into()));
        }
        let values = powers.iter().map(|&p| kernel.value(p)).collect();
        let derivative_cache = powers.iter().map(|&p| kernel.derivative(p).unwrap_or(f64::NAN)).collect();
        Ok(Self { sensor_id, powers: powers.to_vec(), values, derivative_cache })
    }

    /// Largest second difference of the values on the sample grid, normalized
    /// by the spacing; positive values indicate local convexity.
    pub fn max_second_difference(&self) -> f64 {
        let v = &self.values;
        let x = &self.powers;
        (1..v.len().saturating_sub(1))
            .map(|j| {
                let s1 = (v[j] - v[j - 1]) / (x[j] - x[j - 1]);
                let s2 = (v[j + 1] - v[j]) / (x[j + 1] - x[j]);
                s2 - s1
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_concave(&self, tol: f64) -> bool {
        self.max_second_difference() <= tol
    }
}

pub fn write_curves_csv<W: Write>(curves: &[SensorInfoCurve], mut out: W) -> std::io::Result<()> {
    writeln!(out, "sensor_id,power,t_value,dt_dP")?;
    for c in curves {
        for ((p, v), d) in c.powers.iter().zip(&c.values).zip(&c.derivative_cache) {
            writeln!(out, "{},{p},{v},{d}", c.sensor_id)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SensorParams;
    use crate::quantcomm::{alpha_matrix, make_quantizer};

    fn reference_sensor() -> Sensor {
        SensorParams::default().sensor(vec![0.6, 0.8], &Prior::reference()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn g_two_cell_hand_value() {
        let q = make_quantizer(1, 1.0).unwrap();
        let a = TransitionMatrix::from_bit_error(1, 0.0);
        assert!((g_kernel(0.0, &a, &q, 1.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn g_vanishes_for_fair_coin_channel() {
        let q = make_quantizer(3, 5.0).unwrap();
        let a = TransitionMatrix::from_bit_error(3, 0.5);
        for s in [-3.0, 0.0, 0.7, 4.0] {
            assert!(g_kernel(s, &a, &q, 1.0).abs() < 1e-28);
        }
    }

    #[test]
    fn g_error_free_is_quantized_information() {
        let q = make_quantizer(3, 5.0).unwrap();
        let a = TransitionMatrix::from_bit_error(3, 0.0);
        for s in [-2.0, 0.3, 1.9] {
            let b = beta(s, &q, 1.2);
            let bd = beta_dot(s, &q, 1.2);
            let direct: f64 = bd.iter().zip(&b).map(|(d, p)| d * d / p).sum();
            assert!(rel(g_kernel(s, &a, &q, 1.2), direct) < 1e-13);
        }
    }

    #[test]
    fn g_is_even_in_s() {
        let s = reference_sensor();
        let q = QuantizerSpec::for_sensor(&s).unwrap();
        let a = alpha_matrix(4.0, &s);
        for x in [0.1, 0.9, 2.5, 6.0] {
            assert!(rel(g_kernel(x, &a, &q, 1.0), g_kernel(-x, &a, &q, 1.0)) < 1e-12);
        }
    }

    #[test]
    fn kernel_matches_direct_quadrature() {
        // Bucketed kernel vs. plain Gauss-Hermite sum of g_kernel.
        let s = reference_sensor();
        let prior = Prior::reference();
        let k = SensorKernel::with_rule(&s, &prior, QuadRule::Hermite(81)).unwrap();
        let q = QuantizerSpec::for_sensor(&s).unwrap();
        let sigma_s = prior.projected_variance(&s.gain).unwrap().sqrt();
        let rule = gauss_hermite(81);
        for power in [0.5, 10.0, 60.0] {
            let a = alpha_matrix(power, &s);
            let e: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * g_kernel(sigma_s * std::f64::consts::SQRT_2 * x, &a, &q, s.sigma_n))
                .sum::<f64>()
                / std::f64::consts::PI.sqrt();
            assert!(rel(k.value(power), k.prefactor() * e) < 1e-12, "P={power}");
        }
    }

    #[test]
    fn zero_power_and_zero_gain() {
        let s = reference_sensor();
        let prior = Prior::reference();
        assert_eq!(t_k(0.0, &s, &prior).unwrap(), 0.0);
        let k = SensorKernel::with_rule(&s, &prior, QuadRule::Hermite(81)).unwrap();
        // through the p = 1/2 path rather than the shortcut
        assert!(k.prefactor() * k.ber_moments(0.5).0 < 1e-12);
        let mut z = s.clone();
        z.gain = vec![0.0, 0.0];
        for p in [0.0, 1.0, 50.0] {
            assert_eq!(t_k(p, &z, &prior).unwrap(), 0.0);
        }
    }

    fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..=n).map(move |i| lo * (hi / lo).powf(i as f64 / n as f64))
    }

    #[test]
    fn default_rule_is_converged_on_reference_sensor() {
        let s = reference_sensor();
        let prior = Prior::reference();
        let k = SensorKernel::new(&s, &prior).unwrap();
        let QuadRule::Composite { panel_width, window, order } = k.rule() else { panic!("{:?}", k.rule()) };
        let finer = SensorKernel::with_rule(&s, &prior, QuadRule::Composite { panel_width: panel_width / 2.0, window, order }).unwrap();
        for p in log_grid(0.1, 100.0, 30) {
            assert!(rel(k.value(p), finer.value(p)) < 1e-8, "P={p}");
        }
    }

    #[test]
    fn hermite_rules_converge_to_default_rule() {
        // Gauss-Hermite converges slowly here (the far-cell denominators switch
        // from the Gaussian tail to the channel-error floor), so it is kept as
        // an explicit alternative only.
        let s = reference_sensor();
        let prior = Prior::reference();
        let k = SensorKernel::new(&s, &prior).unwrap();
        let k81 = SensorKernel::with_rule(&s, &prior, QuadRule::Hermite(81)).unwrap();
        let k321 = SensorKernel::with_rule(&s, &prior, QuadRule::Hermite(321)).unwrap();
        let (mut e81, mut e321) = (0.0f64, 0.0f64);
        for p in log_grid(0.1, 100.0, 30) {
            e81 = e81.max(rel(k81.value(p), k.value(p)));
            e321 = e321.max(rel(k321.value(p), k.value(p)));
        }
        assert!(e81 < 1e-5, "{e81}");
        assert!(e321 < 1e-8, "{e321}");
        assert!(e321 < e81);
    }

    #[test]
    fn near_source_sensor_is_resolved() {
        let prior = Prior::reference();
        let s = SensorParams::default().sensor(vec![80.0, 3.0], &prior).unwrap();
        let k = SensorKernel::new(&s, &prior).unwrap();
        let fine = SensorKernel::with_rule(&s, &prior, QuadRule::Composite { panel_width: 0.25, window: 10.0, order: 16 }).unwrap();
        for p in [0.5, 5.0, 40.0] {
            assert!(rel(k.value(p), fine.value(p)) < 1e-8, "P={p}");
        }
        // 321 Gauss-Hermite nodes cannot resolve unit-width features under a
        // standard deviation of ~160
        let gh = SensorKernel::with_rule(&s, &prior, QuadRule::Hermite(321)).unwrap();
        assert!(rel(gh.value(5.0), fine.value(5.0)) > 1e-6);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let prior = Prior::reference();
        for gain in [vec![0.6, 0.8], vec![4.0, 0.444], vec![30.0, 0.2]] {
            let s = SensorParams::default().sensor(gain, &prior).unwrap();
            let k = SensorKernel::new(&s, &prior).unwrap();
            for p in [0.3, 1.0, 5.0, 20.0] {
                let h = 1e-4 * p;
                let pt = k.eval(p);
                let fd1 = (k.value(p + h) - k.value(p - h)) / (2.0 * h);
                assert!(rel(pt.first, fd1) < 1e-6, "first P={p}: {} vs {fd1}", pt.first);
                let fd2 = (k.eval(p + h).first - k.eval(p - h).first) / (2.0 * h);
                assert!((pt.second - fd2).abs() < 1e-5 * pt.second.abs().max(pt.first.abs() / p), "second P={p}");
            }
        }
    }

    #[test]
    fn derivative_floor() {
        let s = reference_sensor();
        let prior = Prior::reference();
        assert!(matches!(t_k_derivative(1e-12, &s, &prior), Err(FisherError::BelowFloor { .. })));
        assert!(t_k_derivative(1e6, &s, &prior).unwrap().abs() < 1e-12);
    }

    #[test]
    fn trace_fim_baseline_and_additivity() {
        let prior = Prior::reference();
        let s = reference_sensor();
        let net = Network::new(vec![s.clone(), s.clone()], prior.clone(), None).unwrap();
        let info = NetworkInfo::new(&net).unwrap();
        assert!((info.trace_fim(&[3.0, 4.0], &[false, false]).unwrap() - 17.0 / 3.0).abs() < 1e-12);
        let one = info.trace_fim(&[5.0, 0.0], &[true, false]).unwrap();
        assert!(rel(one, 17.0 / 3.0 + t_k(5.0, &s, &prior).unwrap()) < 1e-14);
        assert_eq!(info.trace_fim(&[5.0, 0.0], &[true, true]).unwrap(), one);
        assert!(matches!(info.trace_fim(&[1.0], &[true]), Err(FisherError::DimensionMismatch(_))));
    }

    #[test]
    fn tabulation_rows() {
        let prior = Prior::reference();
        let s = reference_sensor();
        let net = Network::new(vec![s.clone(), s], prior, None).unwrap();
        let table = tabulate_t(&net, &[0.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!(table[0], table[1]);
        assert_eq!(table[0][0], 0.0);
        assert!(table[0].windows(2).all(|w| w[1] > w[0]));
        assert!(tabulate_t(&net, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn curve_csv_and_concavity() {
        let prior = Prior::reference();
        let k = SensorKernel::new(&reference_sensor(), &prior).unwrap();
        let powers: Vec<f64> = (0..=40).map(|i| 0.1 * 1000f64.powf(i as f64 / 40.0)).collect();
        let curve = SensorInfoCurve::sample(3, &k, &powers).unwrap();
        assert!(curve.is_concave(1e-9));
        assert!(curve.derivative_cache.windows(2).all(|w| w[1] < w[0]));
        let mut buf = Vec::new();
        write_curves_csv(&[curve], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sensor_id,power,t_value,dt_dP\n3,0.1,"));
        assert_eq!(text.lines().count(), 42);
    }
}
