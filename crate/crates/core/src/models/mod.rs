//! Lindblad models of the driven Kerr plant, its static feedback loop and
//! the two-cavity coherent feedback network.

mod slh;

pub use slh::{slh_check_model, slh_series_check, SlhComponent, SlhReport};

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ops::{destroy, embed, HilbertSpec, Operator, CONTROLLER_MODE, I, PLANT_MODE};

/// Physical constants of one Kerr cavity. Rates are in inverse time units
/// (ħ = 1). The last partial rate is the port that carries the coherent
/// drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub kappa_total: f64,
    pub kappa_parts: Vec<f64>,
    pub delta: f64,
    pub chi: f64,
    pub beta: C64,
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.kappa_total, self.delta, self.chi, self.beta.re, self.beta.im]
            .iter()
            .chain(&self.kappa_parts)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite cavity parameter".into()));
        }
        if self.kappa_parts.is_empty() {
            return Err(Error::InvalidParameter("cavity needs at least one port".into()));
        }
        if let Some(k) = self.kappa_parts.iter().find(|&&k| k < 0.0) {
            return Err(Error::InvalidParameter(format!("negative partial decay rate {k}")));
        }
        let sum: f64 = self.kappa_parts.iter().sum();
        if (sum - self.kappa_total).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "partial rates sum to {sum}, expected kappa_total = {}",
                self.kappa_total
            )));
        }
        Ok(())
    }

    /// Rate of the port the coherent drive `beta` enters through.
    pub fn drive_rate(&self) -> f64 {
        *self.kappa_parts.last().expect("validated cavity has a port")
    }

    fn loop_rates(&self) -> Result<(f64, f64, f64)> {
        match self.kappa_parts.as_slice() {
            &[k1, k2, k3] => Ok((k1, k2, k3)),
            parts => Err(Error::InvalidParameter(format!(
                "feedback plant needs three partial rates, got {}",
                parts.len()
            ))),
        }
    }
}

/// Parameter set of the reference operating point.
pub struct PaperDefaults;

impl PaperDefaults {
    pub const PLANT_KAPPA: f64 = 150.0;
    pub const PLANT_PORT_KAPPA: f64 = 50.0;
    pub const PLANT_DELTA: f64 = 5.0 * Self::PLANT_KAPPA;
    /// Bare drive amplitude; the drive enters as `beta · sqrt(kappa_b3)`
    /// so the Hamiltonian drive strength is `10.4934 · 50`.
    pub const BETA_SCALE: f64 = 10.4934;
    pub const CONTROLLER_KAPPA: f64 = 50.0;
    pub const CONTROLLER_DELTA: f64 = 3.0 * Self::CONTROLLER_KAPPA;
    pub const CONTROLLER_CHI: f64 = -Self::CONTROLLER_DELTA / 8.0;
    pub const DIMS: (usize, usize) = (25, 25);
    /// Loop phase that suppresses switching.
    pub const PHI_SUPPRESS: f64 = 2.3681;
    /// Loop phase that enhances switching.
    pub const PHI_ENHANCE: f64 = 5.2277;

    pub fn plant_chi() -> f64 {
        -Self::PLANT_DELTA / (10.0 * SQRT_2)
    }

    pub fn beta() -> C64 {
        C64::new(Self::BETA_SCALE * Self::PLANT_PORT_KAPPA.sqrt(), 0.0)
    }

    pub fn plant() -> CavityParams {
        CavityParams {
            kappa_total: Self::PLANT_KAPPA,
            kappa_parts: vec![Self::PLANT_PORT_KAPPA; 3],
            delta: Self::PLANT_DELTA,
            chi: Self::plant_chi(),
            beta: Self::beta(),
        }
    }

    pub fn controller() -> CavityParams {
        CavityParams {
            kappa_total: Self::CONTROLLER_KAPPA,
            kappa_parts: vec![Self::CONTROLLER_KAPPA],
            delta: Self::CONTROLLER_DELTA,
            chi: Self::CONTROLLER_CHI,
            beta: C64::new(0.0, 0.0),
        }
    }
}

/// Loop phase of the feedback path, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    pub phi: f64,
}

impl FeedbackConfig {
    pub fn new(phi: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::InvalidParameter(format!("loop phase {phi} not finite")));
        }
        Ok(Self { phi })
    }

    /// The phase folded into `[0, 2π)`.
    pub fn wrapped(&self) -> f64 {
        self.phi.rem_euclid(std::f64::consts::TAU)
    }
}

/// `e^{iφ}`, exact at multiples of π/2: a phase within a few ulps of
/// `k·FRAC_PI_2` (after folding) is taken to be that quarter turn.
pub fn loop_phase_factor(phi: f64) -> C64 {
    use std::f64::consts::{FRAC_PI_2, TAU};
    let folded = phi.rem_euclid(TAU);
    let quarter = (folded / FRAC_PI_2).round();
    if (folded - quarter * FRAC_PI_2).abs() <= 4.0 * f64::EPSILON * folded.max(1.0) {
        return match quarter as i64 % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
    }
    C64::from_polar(1.0, phi)
}

/// A master equation `(H, {L_j})` with named observables.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub space: HilbertSpec,
    pub hamiltonian: Operator,
    pub collapse_ops: Vec<Operator>,
    pub observables: BTreeMap<String, Operator>,
    /// Largest total cavity decay rate; sets default step sizes.
    pub kappa_max: f64,
}

impl LindbladModel {
    pub fn new(hamiltonian: Operator, collapse_ops: Vec<Operator>) -> Result<Self> {
        let space = hamiltonian.space().clone();
        for l in &collapse_ops {
            space.ensure_same(l.space())?;
        }
        let herm = hamiltonian.hermiticity_error();
        let scale = hamiltonian.max_abs().max(1.0);
        if herm > 1e-10 * scale {
            return Err(Error::InvalidParameter(format!(
                "Hamiltonian not Hermitian (deviation {herm:.3e})"
            )));
        }
        let kappa_max = collapse_ops
            .iter()
            .map(|l| l.max_abs().powi(2))
            .fold(0.0, f64::max);
        Ok(Self {
            space,
            hamiltonian,
            collapse_ops,
            observables: BTreeMap::new(),
            kappa_max,
        })
    }

    pub fn with_observable(mut self, name: &str, op: Operator) -> Result<Self> {
        self.space.ensure_same(op.space())?;
        self.observables.insert(name.to_string(), op);
        Ok(self)
    }

    pub fn with_kappa_max(mut self, kappa: f64) -> Self {
        self.kappa_max = kappa;
        self
    }

    pub fn observable(&self, name: &str) -> Result<&Operator> {
        self.observables
            .get(name)
            .ok_or_else(|| Error::InvalidParameter(format!("model has no observable {name:?}")))
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    /// Non-Hermitian Hamiltonian `H - (i/2) Σ L†L`.
    pub fn effective_hamiltonian(&self) -> Operator {
        let mut h = self.hamiltonian.clone();
        for l in &self.collapse_ops {
            let ldl = &l.adjoint() * l;
            h = &h + &ldl.scale(C64::new(0.0, -0.5));
        }
        h
    }

    /// Upper bound on the spectral radius of the Liouvillian, from
    /// `‖𝓛‖ ≤ 2‖H_eff‖ + Σ‖L_j‖²` with `‖A‖₂ ≤ sqrt(‖A‖₁‖A‖∞)`.
    pub fn spectral_bound(&self) -> f64 {
        let norm2 = |op: &Operator| (op.matrix().norm_one() * op.matrix().norm_inf()).sqrt();
        2.0 * norm2(&self.effective_hamiltonian())
            + self.collapse_ops.iter().map(|l| norm2(l).powi(2)).sum::<f64>()
    }

    /// SHA-256 over the model's operators, hex encoded.
    pub fn model_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for d in self.space.mode_dims() {
            hasher.update((*d as u64).to_le_bytes());
        }
        hasher.update(self.hamiltonian.matrix().hash_bytes());
        for l in &self.collapse_ops {
            hasher.update(l.matrix().hash_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Kerr cavity Hamiltonian `Δ n + χ a†a†aa + i sqrt(κ_d)(β* a - β a†)` on the
/// given (already embedded) annihilation operator.
fn kerr_hamiltonian(mode: &Operator, delta: f64, chi: f64, drive: C64) -> Operator {
    let ad = mode.adjoint();
    let n = &ad * mode;
    let kerr = &(&ad * &ad) * &(mode * mode);
    let mut h = &(delta * &n) + &(chi * &kerr);
    if drive != C64::new(0.0, 0.0) {
        let pump = &(drive.conj() * mode) - &(drive * &ad);
        h = &h + &(I * &pump);
    }
    h
}

/// Open-loop driven Kerr cavity with a single collapse channel `sqrt(κ) b`.
pub fn build_open_loop(plant: &CavityParams, dim: usize) -> Result<LindbladModel> {
    plant.validate()?;
    let b = destroy(dim)?;
    let drive = plant.beta * plant.drive_rate().sqrt();
    let h = kerr_hamiltonian(&b, plant.delta, plant.chi, drive);
    let l = plant.kappa_total.sqrt() * &b;
    let n = &b.adjoint() * &b;
    LindbladModel::new(h, vec![l])?
        .with_observable("b", b)?
        .with_observable("n_b", n)
        .map(|m| m.with_kappa_max(plant.kappa_total))
}

/// Effective decay rate of the plant inside a unit-gain static loop of phase
/// `phi`: `κ_b3 + |sqrt(κ_b1) + e^{iφ} sqrt(κ_b2)|²`.
pub fn effective_kappa(plant: &CavityParams, phi: f64) -> Result<f64> {
    plant.validate()?;
    let (k1, k2, k3) = plant.loop_rates()?;
    // |sqrt(k1) + e^{iφ} sqrt(k2)|² expanded, so φ = 0, π give exact sums
    Ok(k3 + k1 + k2 + 2.0 * (k1 * k2).sqrt() * loop_phase_factor(phi).re)
}

/// Frequency pulling of the plant detuning inside a static loop:
/// `sin(φ) sqrt(κ_b1 κ_b2)`.
pub fn effective_detuning_shift(plant: &CavityParams, phi: f64) -> Result<f64> {
    plant.validate()?;
    let (k1, k2, _) = plant.loop_rates()?;
    Ok(loop_phase_factor(phi).im * (k1 * k2).sqrt())
}

/// Plant inside a static linear loop of unit gain and phase `phi`.
pub fn build_static_feedback(plant: &CavityParams, phi: f64, dim: usize) -> Result<LindbladModel> {
    let phi = FeedbackConfig::new(phi)?.phi;
    let kappa = effective_kappa(plant, phi)?;
    let shift = effective_detuning_shift(plant, phi)?;
    let b = destroy(dim)?;
    let drive = plant.beta * plant.drive_rate().sqrt();
    let h = kerr_hamiltonian(&b, plant.delta + shift, plant.chi, drive);
    let l = kappa.sqrt() * &b;
    let n = &b.adjoint() * &b;
    LindbladModel::new(h, vec![l])?
        .with_observable("b", b)?
        .with_observable("n_b", n)
        .map(|m| m.with_kappa_max(kappa.max(plant.kappa_total)))
}

/// Options for [`build_closed_loop`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopOptions {
    /// Add `i sqrt(κ_a)(β_a* a - β_a a†)` to the controller Hamiltonian, using
    /// the controller's own `beta`.
    pub include_controller_drive: bool,
}

/// Plant and controller cavities connected in the coherent feedback loop.
/// `dims` is `(controller_dim, plant_dim)`.
pub fn build_closed_loop(
    controller: &CavityParams,
    plant: &CavityParams,
    phi: f64,
    dims: (usize, usize),
    options: ClosedLoopOptions,
) -> Result<LindbladModel> {
    controller.validate()?;
    plant.validate()?;
    let phi = FeedbackConfig::new(phi)?.phi;
    let (k1, k2, k3) = plant.loop_rates()?;
    let ka = controller.kappa_total;
    let space = HilbertSpec::two_mode(dims.0, dims.1)?;
    let a = embed(&destroy(dims.0)?, CONTROLLER_MODE, &space)?;
    let b = embed(&destroy(dims.1)?, PLANT_MODE, &space)?;
    let ad = a.adjoint();
    let bd = b.adjoint();

    let ctrl_drive = if options.include_controller_drive {
        controller.beta * controller.drive_rate().sqrt()
    } else {
        C64::new(0.0, 0.0)
    };
    let h_a = kerr_hamiltonian(&a, controller.delta, controller.chi, ctrl_drive);
    let e = loop_phase_factor(phi);
    let shift = (k1 * k2).sqrt() * e.im;
    let h_b = kerr_hamiltonian(
        &b,
        plant.delta + shift,
        plant.chi,
        plant.beta * plant.drive_rate().sqrt(),
    );

    let half_over_i = C64::new(0.0, -0.5);
    let adb = &ad * &b;
    let abd = &a * &bd;
    let forward = &(e * &adb) - &(e.conj() * &abd);
    let backward = &abd - &adb;
    let h = &(&h_a + &h_b)
        + &(&(half_over_i * (ka * k2).sqrt() * &forward)
            + &(half_over_i * (ka * k1).sqrt() * &backward));

    let l1 = &(ka.sqrt() * &a) + &((e * k2.sqrt() + k1.sqrt()) * &b);
    let l2 = k3.sqrt() * &b;
    let n_a = &ad * &a;
    let n_b = &bd * &b;
    LindbladModel::new(h, vec![l1, l2])?
        .with_observable("a", a)?
        .with_observable("b", b)?
        .with_observable("n_a", n_a)?
        .with_observable("n_b", n_b)
        .map(|m| m.with_kappa_max(ka.max(plant.kappa_total)))
}
