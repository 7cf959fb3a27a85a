//! End-to-end run configuration.
//!
//! A [`ScenarioConfig`] is one declarative description of a run — modulus
//! size, residue width, window shape, processor count, hardware operating
//! point, interconnect — shared by every front-end command.  Configurations
//! load from TOML (primary) or JSON (alternative) and are validated against
//! the compiler and distributor preconditions before anything executes, so
//! an infeasible request fails up front with a description of the violated
//! bound instead of deep inside a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compile::WindowConfig;
use crate::cost::{HardwareModel, ProductionParams};
use crate::distribute::max_qpus;
use crate::error::{Error, Result};
use crate::motion::{MotionProfile, SweepPlan};

/// Widest residue prime supported by the window accumulators.
pub const MAX_PRIME_BITS: u32 = 30;

/// How processing modules exchange entanglement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interconnect {
    /// Static modules joined by photonic Bell-pair generation at a fixed
    /// machine-wide rate.
    Photonic,
    /// A shuttled atom array physically carries entanglement between the
    /// static modules.
    Dynamic {
        #[serde(default = "MotionProfile::production")]
        profile: MotionProfile,
        #[serde(default = "SweepPlan::production")]
        sweep: SweepPlan,
    },
}

impl Default for Interconnect {
    fn default() -> Self {
        Interconnect::Photonic
    }
}

impl Interconnect {
    pub fn is_dynamic(&self) -> bool {
        matches!(self, Interconnect::Dynamic { .. })
    }
}

/// Declarative description of one run.
///
/// All fields have production defaults, so a config file only needs to name
/// what it changes.  Unknown keys are rejected to catch typos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Modulus width of the number being factored, bits.
    pub rsa_bits: u64,
    /// Width of each residue prime, bits.
    pub prime_bits: u32,
    /// Lookup window shape (`w1` loading, `we` exponent, `wm` product).
    pub windows: WindowConfig,
    /// Shot/length trade-off parameter: the exponent register holds
    /// `rsa_bits/2 + ceil(rsa_bits/s)` bits and `s + 1` shots suffice.
    pub s: u32,
    /// Processing modules the residue registers are striped across.
    /// `1` selects the monolithic reference layout.
    pub n_qpu: u32,
    /// Error-corrected hardware operating point.
    pub hardware: HardwareModel,
    /// Inter-module entanglement transport.
    pub interconnect: Interconnect,
    /// Random trajectories per verification run, in addition to any
    /// deterministic ones requested on the command line.
    pub trajectories: u32,
    /// Seed for every pseudo-random choice (trajectory sampling, table
    /// shuffling); equal seeds give byte-identical outputs.
    pub seed: u64,
    /// Loading gadgets simulated before rescaling to the full exponent
    /// length in shot estimates.
    pub sim_loading_windows: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            rsa_bits: 2048,
            prime_bits: 24,
            windows: WindowConfig::production(),
            s: 8,
            n_qpu: 6,
            hardware: HardwareModel::new(25),
            interconnect: Interconnect::Photonic,
            trajectories: 32,
            seed: 7,
            sim_loading_windows: 40,
        }
    }
}

impl ScenarioConfig {
    /// Exponent length per prime iteration, bits.
    pub fn exponent_bits(&self) -> u64 {
        self.rsa_bits / 2 + self.rsa_bits.div_ceil(self.s as u64)
    }

    /// Check every cross-field feasibility constraint.
    pub fn validate(&self) -> Result<()> {
        if self.rsa_bits < 6 {
            return Err(Error::Config(format!(
                "rsa_bits = {} is below the minimum of 6",
                self.rsa_bits
            )));
        }
        if self.prime_bits < 2 || self.prime_bits > MAX_PRIME_BITS {
            return Err(Error::Config(format!(
                "prime_bits = {} is outside the supported range 2..={MAX_PRIME_BITS}",
                self.prime_bits
            )));
        }
        if self.s == 0 {
            return Err(Error::Config("s must be at least 1".into()));
        }
        self.windows.validate()?;
        self.hardware.validate()?;
        if let Interconnect::Dynamic { profile, sweep } = &self.interconnect {
            profile.validate()?;
            sweep.validate()?;
        }
        if self.n_qpu == 0 {
            return Err(Error::Config("n_qpu must be at least 1".into()));
        }
        let bound = max_qpus(self.prime_bits);
        if self.n_qpu > bound {
            return Err(Error::Config(format!(
                "n_qpu = {} exceeds the {bound}-QPU bound for {}-bit primes: \
                 striping leaves a module with fewer than two bits of the \
                 accumulator, so its wrap test would span no local carry",
                self.n_qpu, self.prime_bits
            )));
        }
        if self.sim_loading_windows == 0 {
            return Err(Error::Config("sim_loading_windows must be at least 1".into()));
        }
        Ok(())
    }

    /// Estimator parameters for this scenario.
    pub fn production_params(&self) -> ProductionParams {
        ProductionParams {
            n: self.rsa_bits,
            m: self.exponent_bits(),
            prime_bits: self.prime_bits,
            cfg: self.windows,
            n_qpu: self.n_qpu,
            sim_loading_windows: self.sim_loading_windows,
            seed: self.seed,
        }
    }

    /// Parse from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad TOML config: {e}")))
    }

    /// Parse from JSON text.
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad JSON config: {e}")))
    }

    /// Load from a file, picking the format from the extension
    /// (`.json` is JSON, everything else TOML).
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("json"))
            .unwrap_or(false);
        if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    /// Serialize to canonical TOML.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }
}
