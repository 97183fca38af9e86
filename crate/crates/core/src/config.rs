//! Top-level configuration, loadable from TOML or JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alg1::Alg1Config;
use crate::alg2::Alg2Config;
use crate::attributable::AttributableConfig;
use crate::dynamics::DynamicsConfig;
use crate::error::Result;
use crate::harness::HarnessConfig;
use crate::mdf::MdfConfig;
use crate::radar::RadarStation;
use crate::ukf::orbit::OrbitFilterConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub dynamics: DynamicsConfig,
    /// Station used when tracks are read from files.
    pub radar: RadarStation,
    pub attributable: AttributableConfig,
    pub filter: OrbitFilterConfig,
    pub alg1: Alg1Config,
    pub alg2: Alg2Config,
    pub mdf: MdfConfig,
    pub harness: HarnessConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 20240101,
            dynamics: DynamicsConfig::default(),
            radar: RadarStation::default(),
            attributable: AttributableConfig::default(),
            filter: OrbitFilterConfig::default(),
            alg1: Alg1Config::default(),
            alg2: Alg2Config::default(),
            mdf: MdfConfig::default(),
            harness: HarnessConfig::default(),
        }
    }
}

impl Config {
    /// Reads `.json` files as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
