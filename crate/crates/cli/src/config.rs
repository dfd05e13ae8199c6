//! Run configuration read from TOML.
//!
//! Units are SI: rates in s⁻¹ (angular), times in s, frequencies in Hz.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use micromaser_core::trajectory::DEFAULT_BURN_IN;
use micromaser_core::{Mode, SnapshotTiming, SystemParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

fn default_format_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub system: SystemConfig,
    #[serde(default)]
    pub steady: SteadyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub trap: TrapSection,
}

/// Cavity given by its quality factor instead of `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub q: f64,
    pub frequency_hz: f64,
}

impl CavityConfig {
    /// `κ = ω / 2Q`: the field energy decays at `ω/Q = 2κ`.
    pub fn kappa(&self) -> f64 {
        2.0 * PI * self.frequency_hz / (2.0 * self.q)
    }
}

fn default_n_max() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub g: f64,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavityConfig>,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub n_th: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<f64>,
    /// `N = R / 2κ`; alternative to `flux`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_lifetime: Option<f64>,
    /// Marks a flux that was fitted rather than measured.
    #[serde(default)]
    pub flux_inferred: bool,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Analytic,
    #[default]
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Eq1,
    #[default]
    Eq6,
}

impl ModeName {
    pub fn mode(self) -> Mode {
        match self {
            ModeName::Eq1 => Mode::AtomFieldEq1,
            ModeName::Eq6 => Mode::AtomFieldEq6,
        }
    }
}

fn default_max_iterations() -> u64 {
    micromaser_core::steady::DEFAULT_MAX_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyConfig {
    #[serde(default)]
    pub method: MethodName,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        Self { method: MethodName::default(), mode: ModeName::default(), max_iterations: default_max_iterations() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Fixed `N`; defaults to the system's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fixed: Option<f64>,
    pub d_grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimingName {
    #[default]
    AtAtomExit,
    AfterGap,
}

impl TimingName {
    pub fn timing(self) -> SnapshotTiming {
        match self {
            TimingName::AtAtomExit => SnapshotTiming::AtomExit,
            TimingName::AfterGap => SnapshotTiming::AfterGap,
        }
    }
}

fn default_n_atoms() -> usize {
    10_000
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    #[serde(default = "default_n_atoms")]
    pub n_atoms: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub snapshots: Vec<usize>,
    #[serde(default)]
    pub snapshot_timing: TimingName,
    #[serde(default)]
    pub atomic_decay: bool,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            n_atoms: default_n_atoms(),
            seed: 0,
            snapshots: Vec::new(),
            snapshot_timing: TimingName::default(),
            atomic_decay: false,
            burn_in: default_burn_in(),
        }
    }
}

fn default_trap_n_hi() -> usize {
    30
}

fn default_loose_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    #[serde(default)]
    pub n_lo: usize,
    #[serde(default = "default_trap_n_hi")]
    pub n_hi: usize,
    #[serde(default = "default_loose_tolerance")]
    pub loose_tolerance: f64,
}

impl Default for TrapSection {
    fn default() -> Self {
        Self { n_lo: 0, n_hi: default_trap_n_hi(), loose_tolerance: default_loose_tolerance() }
    }
}

/// Validated physical parameters plus where `kappa` and `R` came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedSystem {
    pub params: SystemParams,
    pub kappa_from_q: bool,
    pub flux_inferred: bool,
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("`{field}`: {reason}"))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse { path: "<string>".into(), message: e.to_string() })
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Read { path: path.display().to_string(), message: e.to_string() })?;
        toml::from_str(&text).map_err(|e| CliError::Parse { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn resolve(&self) -> Result<ResolvedSystem, CliError> {
        if self.format_version != FORMAT_VERSION {
            return Err(invalid("format_version", format!("unsupported version {}", self.format_version)));
        }
        let s = &self.system;
        let (kappa, kappa_from_q) = match (s.kappa, s.cavity) {
            (Some(k), None) => (k, false),
            (None, Some(c)) => {
                if !(c.q > 0.0) || !(c.frequency_hz > 0.0) {
                    return Err(invalid("system.cavity", "q and frequency_hz must be > 0"));
                }
                (c.kappa(), true)
            }
            (Some(_), Some(_)) => return Err(invalid("system.kappa", "give either kappa or [system.cavity], not both")),
            (None, None) => return Err(invalid("system.kappa", "missing; give kappa or [system.cavity]")),
        };
        if !(kappa >= 0.0) {
            return Err(invalid("system.kappa", format!("must be >= 0, got {kappa}")));
        }
        let flux = match (s.flux, s.n_per_lifetime) {
            (Some(r), None) => r,
            (None, Some(n)) => {
                if !(n > 0.0) {
                    return Err(invalid("system.n_per_lifetime", format!("must be > 0, got {n}")));
                }
                SystemParams::flux_for(kappa, n)
            }
            (Some(_), Some(_)) => return Err(invalid("system.flux", "give either flux or n_per_lifetime, not both")),
            (None, None) => return Err(invalid("system.flux", "missing; give flux or n_per_lifetime")),
        };
        let params =
            SystemParams { g: s.g, tau: s.tau, kappa, gamma: s.gamma, n_th: s.n_th, flux, n_max: s.n_max };
        params.validate().map_err(|e| match e {
            micromaser_core::Error::InvalidParameter { field, reason } => invalid(&format!("system.{field}"), reason),
            other => CliError::Invalid(other.to_string()),
        })?;
        Ok(ResolvedSystem { params, kappa_from_q, flux_inferred: s.flux_inferred })
    }

    pub fn sweep_section(&self) -> Result<&SweepConfig, CliError> {
        let sweep = self.sweep.as_ref().ok_or_else(|| invalid("sweep", "missing [sweep] section"))?;
        if sweep.d_grid.is_empty() {
            return Err(invalid("sweep.d_grid", "must not be empty"));
        }
        if sweep.d_grid.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(invalid("sweep.d_grid", "values must be finite and > 0"));
        }
        if sweep.d_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("sweep.d_grid", "must be strictly increasing"));
        }
        if let Some(n) = sweep.n_fixed {
            if !(n > 0.0) || !n.is_finite() {
                return Err(invalid("sweep.n_fixed", format!("must be finite and > 0, got {n}")));
            }
        }
        Ok(sweep)
    }

    pub fn validate_trajectory(&self) -> Result<(), CliError> {
        let t = &self.trajectory;
        if t.n_atoms == 0 {
            return Err(invalid("trajectory.n_atoms", "must be >= 1"));
        }
        if let Some(k) = t.snapshots.iter().find(|&&k| k == 0 || k > t.n_atoms) {
            return Err(invalid("trajectory.snapshots", format!("index {k} outside 1..={}", t.n_atoms)));
        }
        Ok(())
    }

    pub fn validate_trap(&self) -> Result<(), CliError> {
        if self.trap.n_hi < self.trap.n_lo {
            return Err(invalid("trap.n_hi", "must be >= n_lo"));
        }
        if !(self.trap.loose_tolerance >= 0.0) {
            return Err(invalid("trap.loose_tolerance", "must be >= 0"));
        }
        Ok(())
    }
}
