use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MachineError {
    #[error("machine config parse error: {0}")]
    Parse(String),
    #[error("invalid machine parameter {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Hypercube machine description. Times are in microseconds.
///
/// Defaults model an iPSC/2-class machine: 45 µs per multiply-equivalent, 230 µs message
/// startup, 0.5 µs per byte per link, no process, setup or buffering overhead, up to
/// 1024 processors, at least 256 multiplies per process, 4-byte table entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineParams {
    /// Cost of one multiply, folding in indexing and additions.
    pub alpha: f64,
    /// Communication startup per hypercube dimension.
    pub c_st: f64,
    /// Transfer cost per byte per link.
    pub c_b: f64,
    /// Process initialisation (P).
    pub p_init: f64,
    /// Problem setup (S).
    pub s_setup: f64,
    /// Buffer construction (B).
    pub b_buffer: f64,
    /// Processors available; a power of two.
    pub n_a: u64,
    /// Minimum multiplies per process.
    pub g_min: u64,
    pub bytes_per_entry: u64,
}

impl Default for MachineParams {
    fn default() -> Self {
        MachineParams {
            alpha: 45.0,
            c_st: 230.0,
            c_b: 0.5,
            p_init: 0.0,
            s_setup: 0.0,
            b_buffer: 0.0,
            n_a: 1024,
            g_min: 256,
            bytes_per_entry: 4,
        }
    }
}

impl MachineParams {
    /// All overhead and communication terms zeroed; only work remains.
    pub fn zero_overhead() -> Self {
        MachineParams {
            c_st: 0.0,
            c_b: 0.0,
            p_init: 0.0,
            s_setup: 0.0,
            b_buffer: 0.0,
            ..MachineParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        let reals = [
            ("alpha", self.alpha),
            ("c_st", self.c_st),
            ("c_b", self.c_b),
            ("p_init", self.p_init),
            ("s_setup", self.s_setup),
            ("b_buffer", self.b_buffer),
        ];
        for (field, v) in reals {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MachineError::Invalid {
                    field,
                    reason: format!("{v} is not a finite non-negative number"),
                });
            }
        }
        if !self.n_a.is_power_of_two() {
            return Err(MachineError::Invalid {
                field: "n_a",
                reason: format!("{} is not a power of two", self.n_a),
            });
        }
        if self.bytes_per_entry == 0 {
            return Err(MachineError::Invalid {
                field: "bytes_per_entry",
                reason: "must be positive".to_string(),
            });
        }
        Ok(())
    }

    /// Parses a TOML config; missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, MachineError> {
        let m: MachineParams = toml::from_str(text).map_err(|e| MachineError::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("machine params serialize")
    }

    pub fn load(path: &Path) -> Result<Self, MachineError> {
        let text = std::fs::read_to_string(path).map_err(|source| MachineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}
