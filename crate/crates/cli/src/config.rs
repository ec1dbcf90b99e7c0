//! Run configuration: JSON with strict unknown-key rejection, benchmark
//! defaults everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use ahst_core::error::{Error, Result};
use ahst_core::imaging::NoiseModel;
use ahst_core::modes::BeamGeometry;
use ahst_core::states::StateSpec;

/// Photon budget: a positive number, the string "infinite", or null.
#[derive(Debug, Clone, Copy, Serialize)]
#[derive(Default)]
pub struct Budget(pub Option<f64>);


impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(de)?;
        match v {
            serde_json::Value::Null => Ok(Budget(None)),
            serde_json::Value::String(s) if s == "infinite" => Ok(Budget(None)),
            serde_json::Value::Number(n) => {
                let x = n.as_f64().unwrap_or(f64::NAN);
                if x.is_finite() && x > 0.0 {
                    Ok(Budget(Some(x)))
                } else {
                    Err(serde::de::Error::custom("photon_budget must be positive"))
                }
            }
            other => Err(serde::de::Error::custom(format!(
                "photon_budget must be a number, \"infinite\" or null, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub photon_budget: Budget,
    pub dark_level: f64,
    pub bit_depth: u8,
    pub waist_error: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { photon_budget: Budget(None), dark_level: 0.0, bit_depth: 0, waist_error: 0.0 }
    }
}

impl NoiseConfig {
    pub fn model(&self) -> NoiseModel<f64> {
        NoiseModel {
            photon_budget: self.photon_budget.0,
            dark_level: self.dark_level,
            bit_depth: self.bit_depth,
            waist_error: self.waist_error,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub sigma_mm: f64,
    pub n_pixels: usize,
    pub window_sigmas: f64,
    pub l_max: u32,
    /// Tomography space size; defaults to l_max + 1.
    pub dim: Option<usize>,
    /// Inline state specification (same schema as a state file).
    pub state: Option<serde_json::Value>,
    /// Path to a state specification file; exclusive with `state`.
    pub state_path: Option<PathBuf>,
    pub noise: NoiseConfig,
    pub seed: u64,
    pub repetitions: usize,
    /// Radial frequency cutoff override, cycles/mm.
    pub r_cut: Option<f64>,
    pub out_dir: PathBuf,
    pub gouy_rotate_90: bool,
    /// Subtract the configured dark level before reconstruction.
    pub subtract_dark: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sigma_mm: 0.114,
            n_pixels: 256,
            window_sigmas: 12.0,
            l_max: ahst_core::modes::DEFAULT_L_MAX,
            dim: None,
            state: None,
            state_path: None,
            noise: NoiseConfig::default(),
            seed: 1,
            repetitions: 10,
            r_cut: None,
            out_dir: PathBuf::from("ahst-out"),
            gouy_rotate_90: false,
            subtract_dark: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str::<RunConfig>(&text)?
            }
            None => RunConfig::default(),
        };
        if config.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        if config.state.is_some() && config.state_path.is_some() {
            return Err(Error::InvalidParameter(
                "config sets both `state` and `state_path`".into(),
            ));
        }
        // geometry invariants enforced at load
        config.geometry()?;
        if let Some(d) = config.dim {
            if d == 0 || d > (config.l_max + 1) as usize {
                return Err(Error::InvalidParameter(format!(
                    "dim {d} outside 1..={}",
                    config.l_max + 1
                )));
            }
        }
        Ok(config)
    }

    pub fn geometry(&self) -> Result<BeamGeometry<f64>> {
        BeamGeometry::with_window(self.sigma_mm, self.n_pixels, self.window_sigmas)
    }

    pub fn dim(&self) -> usize {
        self.dim.unwrap_or((self.l_max + 1) as usize)
    }

    /// Resolve the state specification, if any.
    pub fn state_spec(&self) -> Result<Option<StateSpec>> {
        if let Some(v) = &self.state {
            return StateSpec::from_json(&serde_json::to_string(v)?).map(Some);
        }
        if let Some(p) = &self.state_path {
            return StateSpec::from_json(&std::fs::read_to_string(p)?).map(Some);
        }
        Ok(None)
    }
}
