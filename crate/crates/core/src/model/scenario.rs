//! JSON scenario files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Geometry, ModelError, Network, Prior, Sensor};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u64,
    prior: PriorFile,
    sensors: Vec<SensorFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geometry: Option<GeometryFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorFile {
    covariance: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorFile {
    gain: Vec<f64>,
    sigma_n: f64,
    h_mag: f64,
    sigma_nu: f64,
    bits: u32,
    tau: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryFile {
    seed: u64,
    field_half_width: f64,
    source_positions: Vec<[f64; 2]>,
    sensor_positions: Vec<[f64; 2]>,
    decay_exponent: f64,
    d_min: f64,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

fn parse_error(e: serde_json::Error) -> ModelError {
    ModelError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

pub fn scenario_to_string(network: &Network) -> String {
    let file = ScenarioFile {
        version: SCHEMA_VERSION,
        prior: PriorFile { covariance: network.prior.rows() },
        sensors: network
            .sensors
            .iter()
            .map(|s| SensorFile {
                gain: s.gain.clone(),
                sigma_n: s.sigma_n,
                h_mag: s.h_mag,
                sigma_nu: s.sigma_nu,
                bits: s.bits,
                tau: s.tau,
            })
            .collect(),
        geometry: network.geometry.as_ref().map(|g| GeometryFile {
            seed: g.seed,
            field_half_width: g.field_half_width,
            source_positions: g.source_positions.clone(),
            sensor_positions: g.sensor_positions.clone(),
            decay_exponent: g.decay_exponent,
            d_min: g.d_min,
        }),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("scenario serialization cannot fail");
    out.push('\n');
    out
}

pub fn scenario_from_str(text: &str) -> Result<Network, ModelError> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(parse_error)?;
    if probe.version != SCHEMA_VERSION {
        return Err(ModelError::SchemaVersionMismatch { found: probe.version, expected: SCHEMA_VERSION });
    }
    let file: ScenarioFile = serde_json::from_str(text).map_err(parse_error)?;
    let prior = Prior::from_rows(&file.prior.covariance)?;
    let sensors = file
        .sensors
        .into_iter()
        .map(|s| Sensor {
            gain: s.gain,
            sigma_n: s.sigma_n,
            h_mag: s.h_mag,
            sigma_nu: s.sigma_nu,
            bits: s.bits,
            tau: s.tau,
        })
        .collect();
    let geometry = file.geometry.map(|g| Geometry {
        seed: g.seed,
        field_half_width: g.field_half_width,
        source_positions: g.source_positions,
        sensor_positions: g.sensor_positions,
        decay_exponent: g.decay_exponent,
        d_min: g.d_min,
    });
    Network::new(sensors, prior, geometry)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Network, ModelError> {
    scenario_from_str(&fs::read_to_string(path)?)
}

pub fn save_scenario(network: &Network, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, scenario_to_string(network))?;
    Ok(())
}
