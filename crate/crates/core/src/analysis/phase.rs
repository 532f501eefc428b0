use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::switching::{Level, SwitchingStats};
use crate::dynamics::{steady_state, SteadyStateConfig};
use crate::error::{Error, Result};
use crate::models::{build_open_loop, CavityParams};
use crate::ops::expectation;

/// Field magnitude below which a phase is undefined.
pub const PHASE_MAGNITUDE_FLOOR: f64 = 1e-12;

/// Removes jumps larger than π between consecutive samples.
pub fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(phases.len());
    let mut offset = 0.0f64;
    for (k, &p) in phases.iter().enumerate() {
        if k > 0 {
            let d = p + offset - out[k - 1];
            offset -= (2.0 * PI) * (d / (2.0 * PI)).round();
        }
        out.push(p + offset);
    }
    out
}

/// Maps an angle to `(-π, π]`.
pub fn wrap_to_pi(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Steady-state phase response of a driven single Kerr cavity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurve {
    pub drive_amplitudes: Vec<f64>,
    /// Unwrapped `arg⟨a⟩`.
    pub phases: Vec<f64>,
    /// Unwrapped phase of the outgoing field `ε + sqrt(κ)⟨a⟩`.
    pub reflected_phases: Vec<f64>,
    pub mean_photons: Vec<f64>,
    /// Samples where `⟨a⟩` vanishes and the phase is set by convention.
    pub degenerate: Vec<bool>,
}

/// Sweeps a real drive amplitude into `controller` and records the
/// steady-state phase. Each grid value `x` drives the cavity as
/// `i sqrt(κ)(ε* a - ε a†)` with `ε = field_scale · x`; with
/// `field_scale = sqrt(κ_b2)` the grid reads as plant amplitudes `|⟨b⟩|`.
pub fn phase_curve(
    controller: &CavityParams,
    amplitude_grid: &[f64],
    field_scale: f64,
    dim: usize,
    steady: &SteadyStateConfig,
) -> Result<PhaseCurve> {
    if let Some(bad) = amplitude_grid.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "drive amplitudes must be non-negative, got {bad}"
        )));
    }
    if !(field_scale.is_finite() && field_scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "field scale must be positive, got {field_scale}"
        )));
    }
    let kappa = controller.kappa_total;
    let mut raw = Vec::with_capacity(amplitude_grid.len());
    let mut raw_reflected = Vec::with_capacity(amplitude_grid.len());
    let mut photons = Vec::with_capacity(amplitude_grid.len());
    let mut degenerate = Vec::with_capacity(amplitude_grid.len());
    for &x in amplitude_grid {
        let eps = field_scale * x;
        let params = CavityParams {
            kappa_parts: vec![kappa],
            beta: C64::new(eps, 0.0),
            ..controller.clone()
        };
        let model = build_open_loop(&params, dim)?;
        let rho = steady_state(&model, steady)?;
        let a = expectation(&rho, model.observable("b")?)?;
        let n = expectation(&rho, model.observable("n_b")?)?.re;
        let reflected = C64::new(eps, 0.0) + kappa.sqrt() * a;
        let flat = a.norm() < PHASE_MAGNITUDE_FLOOR;
        raw.push(if flat { 0.0 } else { a.arg() });
        raw_reflected.push(if reflected.norm() < PHASE_MAGNITUDE_FLOOR {
            0.0
        } else {
            reflected.arg()
        });
        photons.push(n);
        degenerate.push(flat);
    }
    Ok(PhaseCurve {
        drive_amplitudes: amplitude_grid.to_vec(),
        phases: unwrap(&raw),
        reflected_phases: unwrap(&raw_reflected),
        mean_photons: photons,
        degenerate,
    })
}

/// Phases of the loop fields along a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPhase {
    /// Unwrapped `arg(sqrt(κ_a)⟨a⟩ + e^{iφ} sqrt(κ_b2)⟨b⟩)`.
    pub feedback: Vec<f64>,
    /// Unwrapped `arg⟨b⟩`.
    pub plant: Vec<f64>,
    /// Unwrapped difference `feedback - plant`.
    pub loop_shift: Vec<f64>,
    /// Samples where the feedback field magnitude fell below the floor; the
    /// previous value is carried forward.
    pub flagged: Vec<bool>,
    /// Same for `⟨b⟩`.
    pub plant_flagged: Vec<bool>,
}

/// Field phases from controller and plant amplitude series.
pub fn feedback_phase(
    a: &[C64],
    b: &[C64],
    kappa_a: f64,
    kappa_b2: f64,
    phi: f64,
) -> Result<FeedbackPhase> {
    if a.len() != b.len() {
        return Err(Error::InvalidDimension(format!(
            "controller series has {} samples, plant series {}",
            a.len(),
            b.len()
        )));
    }
    let rot = C64::from_polar(kappa_b2.sqrt(), phi);
    let (mut fb, mut pl, mut diff) = (vec![], vec![], vec![]);
    let (mut flagged, mut plant_flagged) = (vec![], vec![]);
    let (mut last_fb, mut last_pl) = (0.0, 0.0);
    for (&ak, &bk) in a.iter().zip(b) {
        let field = kappa_a.sqrt() * ak + rot * bk;
        let fb_ok = field.norm() >= PHASE_MAGNITUDE_FLOOR;
        let pl_ok = bk.norm() >= PHASE_MAGNITUDE_FLOOR;
        if fb_ok {
            last_fb = field.arg();
        }
        if pl_ok {
            last_pl = bk.arg();
        }
        fb.push(last_fb);
        pl.push(last_pl);
        diff.push(wrap_to_pi(last_fb - last_pl));
        flagged.push(!fb_ok);
        plant_flagged.push(!pl_ok);
    }
    Ok(FeedbackPhase {
        feedback: unwrap(&fb),
        plant: unwrap(&pl),
        loop_shift: unwrap(&diff),
        flagged,
        plant_flagged,
    })
}

/// Single-pole exponential moving average, started at the first sample.
/// Each update uses `1 - exp(-Δt/τ)` for the local sample spacing.
pub fn lowpass(times: &[f64], series: &[f64], time_constant: f64) -> Result<Vec<f64>> {
    if !(time_constant.is_finite() && time_constant > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time constant must be positive, got {time_constant}"
        )));
    }
    if times.len() != series.len() {
        return Err(Error::InvalidDimension(format!(
            "{} times for {} samples",
            times.len(),
            series.len()
        )));
    }
    let mut out = Vec::with_capacity(series.len());
    for (k, &x) in series.iter().enumerate() {
        if k == 0 {
            out.push(x);
            continue;
        }
        let alpha = 1.0 - (-(times[k] - times[k - 1]) / time_constant).exp();
        let prev = out[k - 1];
        out.push(prev + alpha * (x - prev));
    }
    Ok(out)
}

/// Circular mean of a set of angles.
pub fn circular_mean(angles: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        s += a.sin();
        c += a.cos();
        n += 1;
    }
    (n > 0 && (s != 0.0 || c != 0.0)).then(|| s.atan2(c))
}

/// Circular means of a phase series over the samples assigned to each level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePlateaus {
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub low_samples: usize,
    pub high_samples: usize,
}

pub fn phase_plateaus(phases: &[f64], stats: &SwitchingStats) -> Result<PhasePlateaus> {
    if phases.len() != stats.levels.len() {
        return Err(Error::InvalidDimension(format!(
            "{} phases for {} classified samples",
            phases.len(),
            stats.levels.len()
        )));
    }
    let pick = |level: Level| {
        let v: Vec<f64> = phases
            .iter()
            .zip(&stats.levels)
            .filter(|(_, l)| **l == Some(level))
            .map(|(p, _)| *p)
            .collect();
        (circular_mean(v.iter().copied()), v.len())
    };
    let (low, low_samples) = pick(Level::Low);
    let (high, high_samples) = pick(Level::High);
    Ok(PhasePlateaus {
        low,
        high,
        low_samples,
        high_samples,
    })
}
