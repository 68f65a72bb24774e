//! Quantizer, natural-binary BPSK link and the probability kernels built on
//! them.
//!
//! The cell probabilities `beta`, their scaled derivatives `beta_dot` and the
//! symbol transition matrix `alpha` are reconstructed from the observation
//! and channel model (uniform midpoint quantizer, natural binary codewords,
//! coherent BPSK with independent bit errors). They are checked against the
//! Monte Carlo simulators in this module rather than taken from a closed-form
//! reference.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{Sensor, MAX_BITS};

#[derive(Debug, Error)]
pub enum CommError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn phi_cdf(x: f64) -> f64 {
    q_func(-x)
}

pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `P(a < Z <= b)` for a standard normal, evaluated on whichever tail keeps
/// full relative precision.
fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        (q_func(a) - q_func(b)).max(0.0)
    } else if b <= 0.0 {
        (q_func(-b) - q_func(-a)).max(0.0)
    } else {
        (1.0 - q_func(b) - q_func(-a)).max(0.0)
    }
}

/// Uniform midpoint quantizer with `2^bits` levels spanning `[-tau, tau]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    pub bits: u32,
    pub levels: Vec<f64>,
    pub step: f64,
    /// `M + 1` boundaries, the outer two infinite.
    pub boundaries: Vec<f64>,
}

pub fn make_quantizer(bits: u32, tau: f64) -> Result<QuantizerSpec, CommError> {
    if bits == 0 || bits > MAX_BITS {
        return Err(CommError::InvalidParameter(format!("bits must be in 1..={MAX_BITS}, got {bits}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CommError::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let m = 1usize << bits;
    let mf = m as f64;
    let step = 2.0 * tau / (mf - 1.0);
    let levels = (1..=m).map(|l| (2.0 * l as f64 - 1.0 - mf) * step / 2.0).collect();
    let mut boundaries = Vec::with_capacity(m + 1);
    boundaries.push(f64::NEG_INFINITY);
    boundaries.extend((1..m).map(|l| (l as f64 - mf / 2.0) * step));
    boundaries.push(f64::INFINITY);
    Ok(QuantizerSpec { bits, levels, step, boundaries })
}

impl QuantizerSpec {
    pub fn for_sensor(sensor: &Sensor) -> Result<Self, CommError> {
        make_quantizer(sensor.bits, sensor.tau)
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Zero-based index of the nearest level; exact midpoints go up.
    pub fn quantize(&self, x: f64) -> usize {
        let m = self.num_levels();
        let pos = x / self.step + (m as f64 - 1.0) / 2.0;
        let idx = (pos + 0.5).floor();
        idx.clamp(0.0, (m - 1) as f64) as usize
    }

    /// Zero-based index of the cell `[b_{l-1}, b_l)` containing `x`.
    pub fn cell_index(&self, x: f64) -> usize {
        let interior = &self.boundaries[1..self.boundaries.len() - 1];
        interior.partition_point(|&b| b <= x)
    }
}

/// Cell probabilities of `x = s + n`, `n ~ N(0, sigma_n^2)`.
pub fn beta(s: f64, quantizer: &QuantizerSpec, sigma_n: f64) -> Vec<f64> {
    quantizer
        .boundaries
        .windows(2)
        .map(|w| normal_interval((w[0] - s) / sigma_n, (w[1] - s) / sigma_n))
        .collect()
}

/// `sigma_n * sqrt(2 pi) * d beta_l / ds`, i.e. the difference of the two
/// unnormalized Gaussian kernels at the cell edges.
pub fn beta_dot(s: f64, quantizer: &QuantizerSpec, sigma_n: f64) -> Vec<f64> {
    let edge = |b: f64| {
        if b.is_infinite() {
            0.0
        } else {
            let u = (b - s) / sigma_n;
            (-0.5 * u * u).exp()
        }
    };
    quantizer.boundaries.windows(2).map(|w| edge(w[0]) - edge(w[1])).collect()
}

/// Per-symbol argument of the coherent BPSK error probability,
/// `|h| sqrt(P / L) / sigma_nu`.
pub fn snr_argument(power: f64, sensor: &Sensor) -> f64 {
    sensor.h_mag * (power / sensor.bits as f64).sqrt() / sensor.sigma_nu
}

/// Bit error probability `Q(|h| sqrt(P/L) / sigma_nu)`.
pub fn bit_error_prob(power: f64, sensor: &Sensor) -> f64 {
    assert!(power >= 0.0, "transmit power must be nonnegative, got {power}");
    q_func(snr_argument(power, sensor))
}

/// Probability that an `L`-bit codeword arrives with a given set of `d`
/// flipped bits: `p^d (1 - p)^(L - d)`.
pub fn codeword_flip_prob(p: f64, bits: u32, d: u32) -> f64 {
    p.powi(d as i32) * (1.0 - p).powi((bits - d) as i32)
}

/// Level-to-level confusion matrix. `entry(t, l)` is the probability of
/// decoding level `t` when level `l` was sent (both zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub bits: u32,
    pub p_bit: f64,
    pub entries: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn from_bit_error(bits: u32, p_bit: f64) -> Self {
        let m = 1usize << bits;
        let by_distance: Vec<f64> = (0..=bits).map(|d| codeword_flip_prob(p_bit, bits, d)).collect();
        let entries = DMatrix::from_fn(m, m, |t, l| by_distance[(t ^ l).count_ones() as usize]);
        Self { bits, p_bit, entries }
    }

    pub fn entry(&self, t: usize, l: usize) -> f64 {
        self.entries[(t, l)]
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }
}

pub fn alpha_matrix(power: f64, sensor: &Sensor) -> TransitionMatrix {
    TransitionMatrix::from_bit_error(sensor.bits, bit_error_prob(power, sensor))
}

/// Simulates the link symbol by symbol: natural binary codeword (MSB first),
/// antipodal amplitude `sqrt(P/L)` scaled by `|h|`, real Gaussian noise of
/// standard deviation `sigma_nu`, sign detection. Column `l` holds the
/// decoded-level frequencies for sent level `l`.
pub fn mc_alpha_oracle(power: f64, sensor: &Sensor, trials: usize, seed: u64) -> DMatrix<f64> {
    assert!(trials >= 1);
    let bits = sensor.bits;
    let m = sensor.levels();
    let amp = sensor.h_mag * (power / bits as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = DMatrix::<f64>::zeros(m, m);
    for sent in 0..m {
        for _ in 0..trials {
            let mut decoded = 0usize;
            for i in (0..bits).rev() {
                let bit = (sent >> i) & 1;
                let symbol = if bit == 1 { amp } else { -amp };
                let noise: f64 = rng.sample(StandardNormal);
                let y = symbol + sensor.sigma_nu * noise;
                decoded = (decoded << 1) | usize::from(y >= 0.0);
            }
            counts[(decoded, sent)] += 1.0;
        }
    }
    counts / trials as f64
}

/// Empirical cell frequencies of `x = s + n` under nearest-level
/// quantization.
pub fn mc_beta_oracle(s: f64, sensor: &Sensor, trials: usize, seed: u64) -> Vec<f64> {
    assert!(trials >= 1);
    let quantizer = QuantizerSpec::for_sensor(sensor).expect("sensor has a valid quantizer");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; quantizer.num_levels()];
    for _ in 0..trials {
        let n: f64 = rng.sample(StandardNormal);
        counts[quantizer.quantize(s + sensor.sigma_n * n)] += 1;
    }
    counts.into_iter().map(|c| c as f64 / trials as f64).collect()
}

/// Binomial standard deviation of an empirical frequency.
pub fn binomial_sigma(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Writes a confusion matrix as CSV: one row per decoded level, one column
/// per transmitted level.
pub fn write_matrix_csv<W: Write>(matrix: &DMatrix<f64>, mut out: W) -> std::io::Result<()> {
    let header: Vec<String> = (0..matrix.ncols()).map(|l| format!("sent_{l}")).collect();
    writeln!(out, "decoded,{}", header.join(","))?;
    for t in 0..matrix.nrows() {
        let row: Vec<String> = matrix.row(t).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{t},{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Prior, SensorParams};

    fn reference_sensor() -> Sensor {
        SensorParams::default().sensor(vec![0.6, 0.8], &Prior::reference()).unwrap()
    }

    #[test]
    fn quantizer_examples() {
        let q = make_quantizer(3, 5.26498).unwrap();
        assert!((q.step - 2.0 * 5.26498 / 7.0).abs() < 1e-14);
        assert!((q.step - 1.50428).abs() < 1e-5);
        assert!((q.levels[0] + 5.26498).abs() < 1e-12 * 5.26498);
        assert!((q.levels[7] - 5.26498).abs() < 1e-12 * 5.26498);

        let q = make_quantizer(1, 1.0).unwrap();
        assert_eq!(q.levels, vec![-1.0, 1.0]);
        assert_eq!(q.step, 2.0);
        assert_eq!(&q.boundaries[1..2], &[0.0]);

        let q = make_quantizer(2, 3.0).unwrap();
        assert_eq!(q.step, 2.0);
        assert_eq!(q.levels, vec![-3.0, -1.0, 1.0, 3.0]);
        assert_eq!(&q.boundaries[1..4], &[-2.0, 0.0, 2.0]);
        assert!(q.boundaries[0].is_infinite() && q.boundaries[4].is_infinite());

        assert!(make_quantizer(0, 1.0).is_err());
        assert!(make_quantizer(2, 0.0).is_err());
    }

    #[test]
    fn quantize_ties_go_up() {
        let q = make_quantizer(2, 3.0).unwrap();
        assert_eq!(q.quantize(0.0), 2);
        assert_eq!(q.cell_index(0.0), 2);
        assert_eq!(q.quantize(-2.0), 1);
        assert_eq!(q.quantize(-100.0), 0);
        assert_eq!(q.quantize(100.0), 3);
    }

    #[test]
    fn beta_symmetry_and_median_split() {
        let q = make_quantizer(3, 5.0).unwrap();
        let b = beta(0.0, &q, 1.3);
        for l in 0..8 {
            assert!((b[l] - b[7 - l]).abs() < 1e-15);
        }
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let q1 = make_quantizer(1, 7.0).unwrap();
        assert_eq!(beta(0.0, &q1, 2.0), vec![0.5, 0.5]);
    }

    #[test]
    fn beta_dot_telescopes_and_is_odd() {
        let q = make_quantizer(3, 5.0).unwrap();
        let d = beta_dot(0.0, &q, 1.0);
        for l in 0..8 {
            assert!((d[l] + d[7 - l]).abs() < 1e-15);
        }
        for s in [-7.0, -0.3, 0.0, 2.2, 40.0] {
            assert!(beta_dot(s, &q, 0.7).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn beta_dot_matches_finite_difference() {
        let q = make_quantizer(2, 3.0).unwrap();
        let (s, sn) = (0.5, 1.0);
        let h = 1e-5 * sn;
        let hi = beta(s + h, &q, sn);
        let lo = beta(s - h, &q, sn);
        let d = beta_dot(s, &q, sn);
        let scale = sn * (2.0 * std::f64::consts::PI).sqrt();
        for l in 0..4 {
            let fd = scale * (hi[l] - lo[l]) / (2.0 * h);
            assert!((fd - d[l]).abs() < 1e-6, "l={l} fd={fd} d={}", d[l]);
        }
    }

    #[test]
    fn bit_error_examples() {
        let s = reference_sensor();
        assert_eq!(bit_error_prob(0.0, &s), 0.5);
        let p1 = bit_error_prob(3.0 / 0.49, &s);
        assert!((p1 - 0.158_655_253_931_457_05).abs() < 1e-12);
        assert!(bit_error_prob(1e6, &s) < 1e-12);
    }

    #[test]
    fn alpha_limits() {
        let s = reference_sensor();
        let a = alpha_matrix(0.0, &s);
        assert!(a.entries.iter().all(|&v| v == 0.125));
        let a = alpha_matrix(1e9, &s);
        for t in 0..8 {
            for l in 0..8 {
                let e = if t == l { 1.0 } else { 0.0 };
                assert!((a.entry(t, l) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mc_alpha_limits() {
        let mut s = reference_sensor();
        s.bits = 1;
        let e = mc_alpha_oracle(0.0, &s, 1_000_000, 5);
        for v in e.iter() {
            assert!((v - 0.5).abs() < 0.002);
        }
        let s = reference_sensor();
        let e = mc_alpha_oracle(1e30, &s, 1000, 1);
        assert_eq!(e, DMatrix::identity(8, 8));
        let e = mc_alpha_oracle(6.1224, &s, 1000, 2);
        for l in 0..8 {
            assert_eq!(e.column(l).sum(), 1.0);
        }
    }

    #[test]
    fn mc_beta_saturates() {
        let s = reference_sensor();
        let f = mc_beta_oracle(10.0 * s.tau, &s, 10_000, 3);
        assert_eq!(f[7], 1.0);
        let mut s1 = s.clone();
        s1.bits = 1;
        let f = mc_beta_oracle(0.0, &s1, 100_000, 4);
        let sig = binomial_sigma(0.5, 100_000);
        assert!((f[0] - 0.5).abs() < 4.0 * sig);
    }

    #[test]
    fn matrix_csv_layout() {
        let mut buf = Vec::new();
        write_matrix_csv(&DMatrix::identity(2, 2), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "decoded,sent_0,sent_1\n0,1,0\n1,0,1\n");
    }
}
