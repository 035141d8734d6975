//! Run configuration: one JSON document, unknown keys rejected, flags applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tpgate::basis::MaterialParams;
use tpgate::control::{Gate, SynthesisConfig};
use tpgate::effective::Encoding;
use tpgate::fewbody::FewBodyConfig;
use tpgate::pulse::Pulse;
use tpgate::response::FieldGrid;

use crate::error::CliError;

/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "TPGATE_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub material: MaterialParams,
    pub fewbody: FewBodyConfig,
    /// Field grid of the response table feeding the effective model.
    pub field_grid: FieldGrid,
    pub coulomb: CoulombSettings,
    pub spectrum: SpectrumSettings,
    pub effective: EffectiveSettings,
    pub synthesis: SynthesisConfig,
    pub gate: Option<Gate>,
    pub encoding: Option<Encoding>,
    pub scan: ScanSettings,
    pub evolve: EvolveSettings,
    pub output_dir: PathBuf,
    /// Overrides the optimizer seed.
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            material: MaterialParams::default(),
            fewbody: FewBodyConfig::default(),
            field_grid: FieldGrid::default(),
            coulomb: CoulombSettings::default(),
            spectrum: SpectrumSettings::default(),
            effective: EffectiveSettings::default(),
            synthesis: SynthesisConfig::default(),
            gate: None,
            encoding: None,
            scan: ScanSettings::default(),
            evolve: EvolveSettings::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            cache_dir: None,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoulombSettings {
    /// Confinement ratios of the form-factor columns.
    pub alphas: Vec<f64>,
    pub q_max: f64,
    pub q_points: usize,
    pub fields: FieldGrid,
    /// Number of lowest orbitals whose diagonal element is tabulated.
    pub states: usize,
    pub tolerance: f64,
}

impl Default for CoulombSettings {
    fn default() -> Self {
        CoulombSettings {
            alphas: vec![0.5, 1.0, 2.0],
            q_max: 10.0,
            q_points: 101,
            fields: FieldGrid { start: 0.5, stop: 10.0, step: 0.5 },
            states: 6,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSettings {
    pub fields: FieldGrid,
    /// Polynomial degree of the high-field extrapolation.
    pub crossing_degree: usize,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        SpectrumSettings { fields: FieldGrid { start: 1.0, stop: 10.0, step: 0.5 }, crossing_degree: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectiveSettings {
    /// Cavity energy, meV; by default resonant with ω_X at `resonance_field`.
    pub omega_cavity: Option<f64>,
    pub resonance_field: f64,
    /// Added to the resolved cavity energy, meV.
    pub cavity_offset: f64,
    /// Drive carrier, meV; defaults to the cavity energy.
    pub omega_l: Option<f64>,
    pub n_ph: usize,
}

impl Default for EffectiveSettings {
    fn default() -> Self {
        EffectiveSettings { omega_cavity: None, resonance_field: 2.51, cavity_offset: 0.0, omega_l: None, n_ph: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSettings {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings { start: 0.5, stop: 10.0, step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSettings {
    /// Encoded initial amplitudes as `[re, im]`; empty picks the reference state.
    pub initial: Vec<[f64; 2]>,
    pub pulses: Vec<Pulse>,
    pub field: f64,
    pub gate_time: f64,
    /// Synthesis result whose controls replace `pulses`, `field` and `gate_time`.
    pub result: Option<PathBuf>,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        EvolveSettings { initial: Vec::new(), pulses: Vec::new(), field: 2.51, gate_time: 10.0, result: None }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        self.material.validate()?;
        self.field_grid.points()?;
        self.spectrum.fields.points()?;
        self.coulomb.fields.points()?;
        if self.coulomb.alphas.is_empty() {
            return Err(CliError::Usage("coulomb.alphas must list at least one α".into()));
        }
        if self.coulomb.alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(CliError::Usage("every α must be positive and finite".into()));
        }
        if self.coulomb.q_points < 2 || !(self.coulomb.q_max > 0.0) {
            return Err(CliError::Usage("coulomb needs q_points >= 2 and q_max > 0".into()));
        }
        if self.effective.n_ph == 0 {
            return Err(CliError::Usage("effective.n_ph must be at least 1".into()));
        }
        if !(self.scan.step > 0.0) || !(self.scan.stop >= self.scan.start) {
            return Err(CliError::Usage("scan needs step > 0 and stop >= start".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// Flag > config file > environment.
    pub fn resolved_cache_dir(&self) -> Option<PathBuf> {
        self.cache_dir.clone().or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
    }
}
