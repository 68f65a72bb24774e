//! Statistical scenario: Gaussian prior, sensor parameters and random
//! deployments in a square field.

mod scenario;

pub use scenario::{load_scenario, save_scenario, scenario_from_str, scenario_to_string, SCHEMA_VERSION};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("covariance matrix is not symmetric (entry ({row}, {col}) differs by {diff:e})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("covariance matrix is not positive definite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64, max_eigenvalue: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("geometry infeasible: re-draw budget of {budget} exhausted after placing {placed} of {k} sensors")]
    InfeasibleGeometry { budget: usize, placed: usize, k: usize },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("scenario schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Relative eigenvalue tolerance for the SPD check.
const SPD_REL_TOL: f64 = 1e-12;

/// Zero-mean Gaussian prior on the unknown vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    covariance: DMatrix<f64>,
    inverse: DMatrix<f64>,
    inverse_trace: f64,
}

impl Prior {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self, ModelError> {
        let q = covariance.nrows();
        if q == 0 || covariance.ncols() != q {
            return Err(ModelError::DimensionMismatch(format!(
                "covariance must be square and nonempty, got {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter("covariance has non-finite entries".into()));
        }
        let scale = covariance.amax();
        for i in 0..q {
            for j in (i + 1)..q {
                let diff = (covariance[(i, j)] - covariance[(j, i)]).abs();
                if diff > 1e-12 * scale {
                    return Err(ModelError::NotSymmetric { row: i, col: j, diff });
                }
            }
        }
        let eig = SymmetricEigen::new(covariance.clone());
        let max_eigenvalue = eig.eigenvalues.max();
        let min_eigenvalue = eig.eigenvalues.min();
        if max_eigenvalue <= 0.0 || min_eigenvalue <= SPD_REL_TOL * max_eigenvalue {
            return Err(ModelError::NotPositiveDefinite { min_eigenvalue, max_eigenvalue });
        }
        let inverse = covariance
            .clone()
            .cholesky()
            .ok_or(ModelError::NotPositiveDefinite { min_eigenvalue, max_eigenvalue })?
            .inverse();
        let inverse_trace = inverse.trace();
        Ok(Self { covariance, inverse, inverse_trace })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let q = rows.len();
        if rows.iter().any(|r| r.len() != q) {
            return Err(ModelError::DimensionMismatch("covariance rows must all have length q".into()));
        }
        Self::new(DMatrix::from_fn(q, q, |i, j| rows[i][j]))
    }

    /// The 2x2 prior used throughout the reference experiments.
    pub fn reference() -> Self {
        Self::from_rows(&[vec![4.0, 0.5], vec![0.5, 0.25]]).expect("reference prior is SPD")
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `tr(C^{-1})`, the information carried by the prior alone.
    pub fn inverse_trace(&self) -> f64 {
        self.inverse_trace
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.covariance.row(i).iter().copied().collect()).collect()
    }

    /// Variance of the projection `a^T theta`.
    pub fn projected_variance(&self, gain: &[f64]) -> Result<f64, ModelError> {
        if gain.len() != self.dim() {
            return Err(ModelError::DimensionMismatch(format!(
                "gain has length {}, prior dimension is {}",
                gain.len(),
                self.dim()
            )));
        }
        let a = DVector::from_column_slice(gain);
        Ok(a.dot(&(&self.covariance * &a)).max(0.0))
    }
}

/// One sensor: linear observation gain, observation noise, fading channel
/// and uniform quantizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    pub gain: Vec<f64>,
    pub sigma_n: f64,
    pub h_mag: f64,
    pub sigma_nu: f64,
    pub bits: u32,
    pub tau: f64,
}

/// Largest supported bit budget per sensor.
pub const MAX_BITS: u32 = 16;

impl Sensor {
    pub fn levels(&self) -> usize {
        1usize << self.bits
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("sigma_n", self.sigma_n)?;
        positive("h_mag", self.h_mag)?;
        positive("sigma_nu", self.sigma_nu)?;
        positive("tau", self.tau)?;
        if self.bits == 0 || self.bits > MAX_BITS {
            return Err(ModelError::InvalidParameter(format!(
                "bits must be in 1..={MAX_BITS}, got {}",
                self.bits
            )));
        }
        if self.gain.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::InvalidParameter("gain has non-finite entries".into()));
        }
        Ok(())
    }

    /// Power at which the per-bit detection SNR argument equals one:
    /// `L * sigma_nu^2 / |h|^2`.
    pub fn reference_power(&self) -> f64 {
        self.bits as f64 * self.sigma_nu * self.sigma_nu / (self.h_mag * self.h_mag)
    }
}

/// Quantizer half-range covering three standard deviations of the
/// observation: `3 * sqrt(sigma_n^2 + a^T C a)`.
pub fn make_tau(gain: &[f64], sigma_n: f64, prior: &Prior) -> Result<f64, ModelError> {
    let var = prior.projected_variance(gain)?;
    Ok(3.0 * (sigma_n * sigma_n + var).sqrt())
}

/// Per-sensor channel and quantizer settings shared by generated sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorParams {
    pub sigma_n: f64,
    pub sigma_nu: f64,
    pub h_mag: f64,
    pub bits: u32,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self { sigma_n: 1.0, sigma_nu: 1.0, h_mag: 0.7, bits: 3 }
    }
}

impl SensorParams {
    pub fn sensor(&self, gain: Vec<f64>, prior: &Prior) -> Result<Sensor, ModelError> {
        let tau = make_tau(&gain, self.sigma_n, prior)?;
        let sensor = Sensor {
            gain,
            sigma_n: self.sigma_n,
            h_mag: self.h_mag,
            sigma_nu: self.sigma_nu,
            bits: self.bits,
            tau,
        };
        sensor.validate()?;
        Ok(sensor)
    }
}

/// Placement metadata recorded for generated networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub seed: u64,
    pub field_half_width: f64,
    pub source_positions: Vec<[f64; 2]>,
    pub sensor_positions: Vec<[f64; 2]>,
    pub decay_exponent: f64,
    pub d_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub sensors: Vec<Sensor>,
    pub prior: Prior,
    pub geometry: Option<Geometry>,
}

impl Network {
    pub fn new(sensors: Vec<Sensor>, prior: Prior, geometry: Option<Geometry>) -> Result<Self, ModelError> {
        if sensors.is_empty() {
            return Err(ModelError::InvalidParameter("network needs at least one sensor".into()));
        }
        for (k, s) in sensors.iter().enumerate() {
            if s.gain.len() != prior.dim() {
                return Err(ModelError::DimensionMismatch(format!(
                    "sensor {k} gain has length {}, prior dimension is {}",
                    s.gain.len(),
                    prior.dim()
                )));
            }
            s.validate()?;
        }
        if let Some(g) = &geometry {
            if g.sensor_positions.len() != sensors.len() {
                return Err(ModelError::DimensionMismatch(format!(
                    "geometry lists {} sensor positions for {} sensors",
                    g.sensor_positions.len(),
                    sensors.len()
                )));
            }
        }
        Ok(Self { sensors, prior, geometry })
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.geometry.as_ref().map(|g| g.seed)
    }
}

/// `K` identical sensors sharing one gain vector.
pub fn homogeneous_network(k: usize, gain: &[f64], params: SensorParams, prior: Prior) -> Result<Network, ModelError> {
    let sensor = params.sensor(gain.to_vec(), &prior)?;
    Network::new(vec![sensor; k], prior, None)
}

/// Random deployment settings. Defaults: 2 m x 2 m field centered at the
/// origin, sources on the unit circle at 45 and 225 degrees, decay exponent 2,
/// minimum sensor-source distance 0.1 m.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentConfig {
    pub seed: u64,
    pub k: usize,
    pub field_half_width: f64,
    pub source_positions: Vec<[f64; 2]>,
    pub decay_exponent: f64,
    pub d_min: f64,
    pub params: SensorParams,
}

impl DeploymentConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            seed,
            k,
            field_half_width: 1.0,
            source_positions: vec![[c, c], [-c, -c]],
            decay_exponent: 2.0,
            d_min: 0.1,
            params: SensorParams::default(),
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Gain vector of a sensor at `pos`: component `i` is `(d_0i / d_ki)^n`.
pub fn path_loss_gain(pos: [f64; 2], sources: &[[f64; 2]], decay_exponent: f64) -> Vec<f64> {
    sources
        .iter()
        .map(|&src| (dist(src, [0.0, 0.0]) / dist(pos, src)).powf(decay_exponent))
        .collect()
}

/// Uniform random placement (ChaCha8 seeded from `seed`), re-drawing any
/// sensor that lands closer than `d_min` to a source.
pub fn generate_deployment(cfg: &DeploymentConfig, prior: Prior) -> Result<Network, ModelError> {
    if cfg.k == 0 {
        return Err(ModelError::InvalidParameter("k must be at least 1".into()));
    }
    if !(cfg.d_min > 0.0) || !(cfg.field_half_width > 0.0) {
        return Err(ModelError::InvalidParameter("d_min and field_half_width must be positive".into()));
    }
    if cfg.source_positions.len() != prior.dim() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} sources for a prior of dimension {}",
            cfg.source_positions.len(),
            prior.dim()
        )));
    }
    let hw = cfg.field_half_width;
    if cfg.source_positions.iter().any(|s| s[0].abs() > hw || s[1].abs() > hw) {
        return Err(ModelError::InvalidParameter("sources must lie inside the field".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = 10 * cfg.k;
    let mut redraws = 0usize;
    let mut positions = Vec::with_capacity(cfg.k);
    while positions.len() < cfg.k {
        let pos = [rng.random_range(-hw..=hw), rng.random_range(-hw..=hw)];
        if cfg.source_positions.iter().any(|&s| dist(pos, s) < cfg.d_min) {
            redraws += 1;
            if redraws > budget {
                return Err(ModelError::InfeasibleGeometry { budget, placed: positions.len(), k: cfg.k });
            }
            continue;
        }
        positions.push(pos);
    }

    let sensors = positions
        .iter()
        .map(|&p| cfg.params.sensor(path_loss_gain(p, &cfg.source_positions, cfg.decay_exponent), &prior))
        .collect::<Result<Vec<_>, _>>()?;
    let geometry = Geometry {
        seed: cfg.seed,
        field_half_width: hw,
        source_positions: cfg.source_positions.clone(),
        sensor_positions: positions,
        decay_exponent: cfg.decay_exponent,
        d_min: cfg.d_min,
    };
    Network::new(sensors, prior, Some(geometry))
}
