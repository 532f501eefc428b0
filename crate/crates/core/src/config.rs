//! Experiment configuration, loaded from TOML.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{BimodalityCriteria, DEFAULT_HIGH_THRESHOLD, DEFAULT_LOW_THRESHOLD, DEFAULT_T_REF};
use crate::dynamics::{IntegratorConfig, Scheme, SteadyStateConfig};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::models::{CavityParams, PaperDefaults};
use crate::trajectories::TrajectoryConfig;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "KERRFB_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Reduced truncation and horizons.
    Desk,
    /// Truncation `(25, 25)` throughout.
    Full,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::Config(format!("unknown profile '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub n_low: f64,
    pub n_high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            n_low: DEFAULT_LOW_THRESHOLD,
            n_high: DEFAULT_HIGH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Number of equally spaced loop phases on `[0, 2π)`.
    pub points: usize,
    pub criteria: BimodalityCriteria,
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            points: 64,
            criteria: BimodalityCriteria::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionSection {
    /// Loop phases of the closed-loop cases; the open loop is always included.
    pub phis: Vec<f64>,
    /// Plant Fock states the relaxation starts from.
    pub initial_photons: Vec<usize>,
    pub t_ref: f64,
    pub integrator: IntegratorConfig,
}

impl Default for RegressionSection {
    fn default() -> Self {
        Self {
            phis: vec![PaperDefaults::PHI_SUPPRESS, PaperDefaults::PHI_ENHANCE],
            initial_photons: vec![0, 9],
            t_ref: DEFAULT_T_REF,
            integrator: IntegratorConfig {
                scheme: Scheme::Sdirk2,
                dt: Some(0.05),
                t_max: 40.0,
                sample_every: 1,
                ..IntegratorConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseCurveSection {
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub points: usize,
    /// Fock truncation of the controller alone.
    pub dim: usize,
    /// Controller drive per unit of grid amplitude. `None` uses
    /// `sqrt(κ_b2)` of the plant, so grid values read as `|⟨b⟩|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_scale: Option<f64>,
}

impl Default for PhaseCurveSection {
    fn default() -> Self {
        Self {
            amplitude_min: 0.0,
            amplitude_max: 3.2,
            points: 33,
            dim: 25,
            field_scale: None,
        }
    }
}

impl PhaseCurveSection {
    pub fn resolved_field_scale(&self, plant: &CavityParams) -> f64 {
        self.field_scale
            .unwrap_or_else(|| plant.kappa_parts.get(1).copied().unwrap_or(plant.kappa_total).sqrt())
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.amplitude_min];
        }
        let step = (self.amplitude_max - self.amplitude_min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|k| self.amplitude_min + step * k as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackPhaseSection {
    /// Low-pass time constant in units of the trajectory sampling interval.
    pub lowpass_samples: f64,
}

impl Default for FeedbackPhaseSection {
    fn default() -> Self {
        Self {
            lowpass_samples: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Loop phase for single-φ closed-loop runs.
    pub phi: f64,
    /// `(controller_dim, plant_dim)`; open-loop runs use `plant_dim`.
    pub dims: (usize, usize),
    pub output_dir: PathBuf,
    pub include_controller_drive: bool,
    pub plant: CavityParams,
    pub controller: CavityParams,
    pub integrator: IntegratorConfig,
    pub trajectory: TrajectoryConfig,
    pub steady: SteadyStateConfig,
    pub thresholds: Thresholds,
    pub sweep: SweepSection,
    pub regression: RegressionSection,
    pub phase_curve: PhaseCurveSection,
    pub feedback_phase: FeedbackPhaseSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Full)
    }
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut out = Self {
            profile: Profile::Full,
            phi: PaperDefaults::PHI_SUPPRESS,
            dims: PaperDefaults::DIMS,
            output_dir: PathBuf::from("out"),
            include_controller_drive: false,
            plant: PaperDefaults::plant(),
            controller: PaperDefaults::controller(),
            integrator: IntegratorConfig::default(),
            trajectory: TrajectoryConfig::default(),
            steady: SteadyStateConfig::default(),
            thresholds: Thresholds::default(),
            sweep: SweepSection::default(),
            regression: RegressionSection::default(),
            phase_curve: PhaseCurveSection::default(),
            feedback_phase: FeedbackPhaseSection::default(),
        };
        out.apply_profile(profile);
        out
    }

    /// Overwrites truncation and horizons with the profile's values.
    pub fn apply_profile(&mut self, profile: Profile) {
        self.profile = profile;
        match profile {
            Profile::Full => {
                self.dims = PaperDefaults::DIMS;
                self.regression.integrator.t_max = 40.0;
                self.phase_curve.dim = 25;
            }
            Profile::Desk => {
                self.dims = (8, 20);
                self.regression.integrator.t_max = 40.0;
                self.phase_curve.dim = 20;
            }
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// `output_dir`, unless overridden by [`OUTPUT_DIR_ENV`].
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.plant.validate().map_err(cfg)?;
        self.controller.validate().map_err(cfg)?;
        if self.plant.kappa_parts.len() != 3 {
            return Err(Error::Config("plant needs exactly three partial rates".into()));
        }
        if !(0.0..TAU).contains(&self.phi) {
            return Err(Error::Config(format!("phi = {} outside [0, 2π)", self.phi)));
        }
        if self.dims.0 < 2 || self.dims.1 < 2 {
            return Err(Error::Config(format!("dims {:?} must be at least 2", self.dims)));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir is empty".into()));
        }
        self.integrator.validate().map_err(cfg)?;
        self.trajectory.validate().map_err(cfg)?;
        self.steady.validate().map_err(cfg)?;
        if !(self.thresholds.n_low < self.thresholds.n_high) {
            return Err(Error::Config("thresholds.n_low must lie below n_high".into()));
        }
        let c = &self.sweep.criteria;
        if self.sweep.points == 0
            || !(c.min_contrast >= 1.0)
            || !(0.0..0.5).contains(&c.min_occupation)
        {
            return Err(Error::Config(
                "sweep needs points ≥ 1, min_contrast ≥ 1, min_occupation in [0, 0.5)".into(),
            ));
        }
        let r = &self.regression;
        if r.initial_photons.is_empty() || r.initial_photons.iter().any(|&n| n >= self.dims.1) {
            return Err(Error::Config(format!(
                "regression.initial_photons must be non-empty and below plant dim {}",
                self.dims.1
            )));
        }
        if let Some(p) = r.phis.iter().find(|p| !(0.0..TAU).contains(*p)) {
            return Err(Error::Config(format!("regression phi {p} outside [0, 2π)")));
        }
        if !(r.t_ref >= 0.0 && r.t_ref < r.integrator.t_max) {
            return Err(Error::Config("regression.t_ref must lie in [0, t_max)".into()));
        }
        r.integrator.validate().map_err(cfg)?;
        let pc = &self.phase_curve;
        if pc.points == 0 || pc.dim < 2 || !(0.0 <= pc.amplitude_min && pc.amplitude_min <= pc.amplitude_max)
        {
            return Err(Error::Config("phase_curve grid is empty or inverted".into()));
        }
        if let Some(f) = pc.field_scale {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::Config(format!("phase_curve.field_scale must be positive, got {f}")));
            }
        }
        let lp = self.feedback_phase.lowpass_samples;
        if !(lp.is_finite() && lp > 0.0) {
            return Err(Error::Config(format!(
                "feedback_phase.lowpass_samples must be positive, got {lp}"
            )));
        }
        Ok(())
    }
}
