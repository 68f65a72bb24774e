use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::fisher::{g_kernel, SensorKernel};
use crate::model::{Prior, Sensor, SensorParams};
use crate::quantcomm::{alpha_matrix, beta, binomial_sigma, mc_alpha_oracle, mc_beta_oracle, QuantizerSpec};
use crate::solvers::{enumerate_table, mckp_dp, solve_boolean_relaxation};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Alpha,
    Beta,
    Tk,
    Grad,
    Mckp,
    Lp,
    All,
}

impl Suite {
    const EACH: [Suite; 6] = [Suite::Alpha, Suite::Beta, Suite::Tk, Suite::Grad, Suite::Mckp, Suite::Lp];

    pub fn label(self) -> &'static str {
        match self {
            Suite::Alpha => "alpha",
            Suite::Beta => "beta",
            Suite::Tk => "tk",
            Suite::Grad => "grad",
            Suite::Mckp => "mckp",
            Suite::Lp => "lp",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.label() == s)
            .ok_or_else(|| format!("unknown suite '{s}' (expected alpha, beta, tk, grad, mckp, lp or all)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Overrides the Monte Carlo sample count of the alpha, beta and tk suites.
    pub trials: Option<usize>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { trials: None, seed: 7 }
    }
}

/// Outcome of one check: `measured` must not exceed `limit`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn new(suite: &'static str, name: String, measured: f64, limit: f64) -> Self {
        Self { suite, name, measured, limit, passed: measured <= limit }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<5} {} measured={:.3e} limit={:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.limit
        )
    }
}

fn reference_sensor() -> Sensor {
    SensorParams::default().sensor(vec![0.6, 0.8], &Prior::reference()).expect("reference sensor is valid")
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<Check>, HarnessError> {
    Ok(match suite {
        Suite::Alpha => alpha_checks(opts.trials.unwrap_or(100_000), opts.seed),
        Suite::Beta => beta_checks(opts.trials.unwrap_or(1_000_000), opts.seed),
        Suite::Tk => tk_checks(opts.trials.unwrap_or(100_000), opts.seed)?,
        Suite::Grad => grad_checks(opts.seed)?,
        Suite::Mckp => mckp_checks(opts.seed),
        Suite::Lp => lp_checks(opts.seed)?,
        Suite::All => {
            let mut all = Vec::new();
            for s in Suite::EACH {
                all.extend(run_suite(s, opts)?);
            }
            all
        }
    })
}

/// Largest `|analytic - empirical| / sigma` over all transition entries.
fn alpha_checks(trials: usize, seed: u64) -> Vec<Check> {
    let sensor = reference_sensor();
    [1.0, 5.0, 20.0]
        .iter()
        .enumerate()
        .map(|(i, &power)| {
            let analytic = alpha_matrix(power, &sensor);
            let empirical = mc_alpha_oracle(power, &sensor, trials, seed.wrapping_add(i as u64));
            let mut worst: f64 = 0.0;
            for t in 0..analytic.size() {
                for l in 0..analytic.size() {
                    let p = analytic.entry(t, l);
                    let sigma = binomial_sigma(p, trials).max(1.0 / trials as f64);
                    worst = worst.max((p - empirical[(t, l)]).abs() / sigma);
                }
            }
            Check::new("alpha", format!("P={power} trials={trials}"), worst, 4.0)
        })
        .collect()
}

fn beta_checks(trials: usize, seed: u64) -> Vec<Check> {
    let sensor = reference_sensor();
    let quantizer = QuantizerSpec::for_sensor(&sensor).expect("valid quantizer");
    [0.0, 1.3, -3.7]
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let analytic = beta(s, &quantizer, sensor.sigma_n);
            let empirical = mc_beta_oracle(s, &sensor, trials, seed.wrapping_add(100 + i as u64));
            let worst = analytic
                .iter()
                .zip(&empirical)
                .map(|(&p, &e)| (p - e).abs() / binomial_sigma(p, trials).max(1.0 / trials as f64))
                .fold(0.0, f64::max);
            Check::new("beta", format!("s={s} draws={trials}"), worst, 4.0)
        })
        .collect()
}

/// `t_k` by sampling the full parameter vector from its prior and averaging
/// the channel-aware score kernel at `s = a^T theta`.
pub(crate) fn mc_tk(power: f64, sensor: &Sensor, prior: &Prior, samples: usize, seed: u64) -> f64 {
    let chol = prior.covariance().clone().cholesky().expect("prior is positive definite");
    let l = chol.l();
    let q = prior.dim();
    let a = DVector::from_column_slice(&sensor.gain);
    let transition = alpha_matrix(power, sensor);
    let quantizer = QuantizerSpec::for_sensor(sensor).expect("valid quantizer");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..samples {
        let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = &l * z;
        sum += g_kernel(a.dot(&theta), &transition, &quantizer, sensor.sigma_n);
    }
    let prefactor = a.norm_squared() / (2.0 * std::f64::consts::PI * sensor.sigma_n * sensor.sigma_n);
    prefactor * sum / samples as f64
}

fn tk_checks(samples: usize, seed: u64) -> Result<Vec<Check>, HarnessError> {
    let prior = Prior::reference();
    let sensor = reference_sensor();
    let kernel = SensorKernel::new(&sensor, &prior)?;
    Ok([1.0, 10.0, 30.0]
        .iter()
        .enumerate()
        .map(|(i, &power)| {
            let quad = kernel.value(power);
            let mc = mc_tk(power, &sensor, &prior, samples, seed.wrapping_add(200 + i as u64));
            Check::new("tk", format!("P={power} samples={samples}"), ((quad - mc) / mc).abs(), 0.02)
        })
        .collect())
}

fn grad_checks(seed: u64) -> Result<Vec<Check>, HarnessError> {
    let prior = Prior::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(300));
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for _ in 0..20 {
        let gain = vec![rng.random_range(0.1..5.0), rng.random_range(0.1..5.0)];
        let power = 10f64.powf(rng.random_range(-1.0..1.7));
        let sensor = SensorParams::default().sensor(gain, &prior).map_err(HarnessError::Scenario)?;
        let kernel = SensorKernel::new(&sensor, &prior)?;
        let h = 1e-4 * power;
        let fd = (kernel.value(power + h) - kernel.value(power - h)) / (2.0 * h);
        let analytic = kernel.derivative(power)?;
        let rel = ((analytic - fd) / fd).abs();
        if rel > worst {
            worst = rel;
            worst_at = format!("gain={:?} P={power:.4}", sensor.gain);
        }
    }
    Ok(vec![Check::new("grad", format!("20 random points (worst at {worst_at})"), worst, 1e-4)])
}

fn mckp_checks(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(400));
    let mut mismatches = 0;
    for _ in 0..50 {
        let k = rng.random_range(1..=5);
        let n = rng.random_range(1..=6);
        let table: Vec<Vec<f64>> = (0..k)
            .map(|_| std::iter::once(0.0).chain((0..n).map(|_| rng.random_range(0.0..10.0))).collect())
            .collect();
        if mckp_dp(&table, n).value != enumerate_table(&table, n).value {
            mismatches += 1;
        }
    }
    vec![Check::new("mckp", "DP vs enumeration on 50 random tables (mismatches)".into(), mismatches as f64, 0.0)]
}

fn lp_checks(seed: u64) -> Result<Vec<Check>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(500));
    let mut mismatches = 0;
    let mut cases = 0;
    for _ in 0..100 {
        let k = rng.random_range(1..=10usize);
        let t: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        for i in 1..=k {
            cases += 1;
            let w = solve_boolean_relaxation(&t, i)?;
            let got: f64 = (0..k).filter(|&j| w[j] == 1.0).map(|j| t[j]).sum();
            let best = (0u32..1 << k)
                .filter(|m| m.count_ones() as usize == i)
                .map(|m| (0..k).filter(|&j| m >> j & 1 == 1).map(|j| t[j]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            if got != best {
                mismatches += 1;
            }
        }
    }
    Ok(vec![Check::new("lp", format!("top-i vs best subset over {cases} cases (mismatches)"), mismatches as f64, 0.0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for s in Suite::EACH {
            assert_eq!(s.label().parse::<Suite>().unwrap(), s);
        }
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("gamma".parse::<Suite>().is_err());
    }

    #[test]
    fn combinatorial_suites_pass() {
        let opts = VerifyOptions::default();
        for s in [Suite::Mckp, Suite::Lp, Suite::Grad] {
            for c in run_suite(s, &opts).unwrap() {
                assert!(c.passed, "{c}");
            }
        }
    }

    #[test]
    fn small_monte_carlo_runs() {
        let opts = VerifyOptions { trials: Some(20_000), seed: 3 };
        let checks = run_suite(Suite::Tk, &opts).unwrap();
        assert_eq!(checks.len(), 3);
        assert!(checks.iter().all(|c| c.measured < 0.05), "{checks:?}");
    }
}
