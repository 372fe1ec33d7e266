//! Scenario files: JSON with decibel-valued channel constants.
//!
//! Every field except `users` has a default taken from the reference
//! evaluation scenario. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{db_to_linear, dbm_per_hz_to_watts, ChannelParams, Position3, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    #[serde(default = "d::beta_db")]
    pub beta_db: f64,
    #[serde(default = "d::iota_g")]
    pub iota_g: f64,
    #[serde(default = "d::iota_a")]
    pub iota_a: f64,
    #[serde(default = "d::omega_g")]
    pub omega_g: f64,
    #[serde(default = "d::omega_a")]
    pub omega_a: f64,
    #[serde(default = "d::eps_out")]
    pub eps_out: f64,
    #[serde(default = "d::n0_dbm_per_hz")]
    pub n0_dbm_per_hz: f64,
    #[serde(default = "d::b_comm")]
    pub b_comm: f64,
    #[serde(default = "d::b_pos")]
    pub b_pos: f64,
    #[serde(default = "d::psi")]
    pub psi: f64,
    #[serde(default = "d::sigma_nlos2")]
    pub sigma_nlos2: f64,
}

impl Default for ChannelFile {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all channel fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "d::bs")]
    pub bs: [[f64; 3]; 3],
    pub users: Vec<[f64; 3]>,
    #[serde(default)]
    pub channel: ChannelFile,
    #[serde(default = "d::p_max")]
    pub p_max: f64,
    #[serde(default = "d::r_th")]
    pub r_th: f64,
    #[serde(default = "d::uav_pos_power")]
    pub uav_pos_power: f64,
    #[serde(default = "d::zeta")]
    pub zeta: f64,
    #[serde(default)]
    pub accuracy_overrides: Option<Vec<f64>>,
    #[serde(default = "d::altitude_bounds")]
    pub altitude_bounds: [f64; 2],
    #[serde(default = "d::seed")]
    pub seed: u64,
}

mod d {
    pub fn beta_db() -> f64 {
        -38.89
    }
    pub fn iota_g() -> f64 {
        2.3
    }
    pub fn iota_a() -> f64 {
        2.0
    }
    pub fn omega_g() -> f64 {
        1.0
    }
    pub fn omega_a() -> f64 {
        0.2
    }
    pub fn eps_out() -> f64 {
        0.1
    }
    pub fn n0_dbm_per_hz() -> f64 {
        -157.0
    }
    pub fn b_comm() -> f64 {
        1e6
    }
    pub fn b_pos() -> f64 {
        1.8e5
    }
    pub fn psi() -> f64 {
        5.8e-16
    }
    pub fn sigma_nlos2() -> f64 {
        6e-18
    }
    pub fn bs() -> [[f64; 3]; 3] {
        [[-400.0, -350.0, 10.0], [-450.0, 400.0, 10.0], [350.0, 250.0, 10.0]]
    }
    pub fn p_max() -> f64 {
        1.0
    }
    pub fn r_th() -> f64 {
        2.5e6
    }
    pub fn uav_pos_power() -> f64 {
        0.2
    }
    pub fn zeta() -> f64 {
        0.7
    }
    pub fn altitude_bounds() -> [f64; 2] {
        [100.0, 1000.0]
    }
    pub fn seed() -> u64 {
        1
    }
}

impl ScenarioFile {
    pub fn to_config(&self) -> ScenarioConfig {
        let c = &self.channel;
        ScenarioConfig {
            bs: self.bs.map(Position3::from),
            users: self.users.iter().map(|&p| Position3::from(p)).collect(),
            channel: ChannelParams {
                beta: db_to_linear(c.beta_db),
                iota_g: c.iota_g,
                iota_a: c.iota_a,
                omega_g: c.omega_g,
                omega_a: c.omega_a,
                eps_out: c.eps_out,
                n0: dbm_per_hz_to_watts(c.n0_dbm_per_hz),
                b_comm: c.b_comm,
                b_pos: c.b_pos,
                psi: c.psi,
                sigma_nlos2: c.sigma_nlos2,
            },
            p_max: self.p_max,
            r_th: self.r_th,
            uav_pos_power: self.uav_pos_power,
            zeta: self.zeta,
            accuracy_overrides: self.accuracy_overrides.clone(),
            altitude_bounds: self.altitude_bounds,
            seed: self.seed,
        }
    }
}

/// Internal field names that differ from the file's.
fn file_path(internal: &str) -> String {
    match internal {
        "channel.beta" => "channel.beta_db".into(),
        "channel.n0" => "channel.n0_dbm_per_hz".into(),
        p => p.into(),
    }
}

/// Sets `key` (dotted path) to `raw`, read as JSON if it parses and as a
/// string otherwise.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(Error::Config { path: parts[..i].join("."), msg: "not an object".into() });
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config { path: key.into(), msg: "empty key".into() })
}

/// Parses and validates a scenario document, applying `overrides` first.
pub fn parse_scenario(text: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Config { path: "$".into(), msg: e.to_string() })?;
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    let file: ScenarioFile = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        Error::Config { path: if path == "." { "$".into() } else { path }, msg: e.into_inner().to_string() }
    })?;
    let cfg = file.to_config();
    cfg.validate().map_err(|e| match e {
        Error::Config { path, msg } => Error::Config { path: file_path(&path), msg },
        e => e,
    })?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    load_scenario_with(path, &[])
}

pub fn load_scenario_with(path: &Path, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, overrides)
}

/// Scenario file describing the reference evaluation scenario.
pub fn reference_scenario_file() -> ScenarioFile {
    let cfg = ScenarioConfig::reference();
    ScenarioFile {
        bs: d::bs(),
        users: cfg.users.iter().map(|&p| p.into()).collect(),
        channel: ChannelFile::default(),
        p_max: d::p_max(),
        r_th: d::r_th(),
        uav_pos_power: d::uav_pos_power(),
        zeta: d::zeta(),
        accuracy_overrides: None,
        altitude_bounds: d::altitude_bounds(),
        seed: d::seed(),
    }
}
