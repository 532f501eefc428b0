//! SLH network composition, used to cross-check the closed-loop model.

use num_complex::Complex64 as C64;

use super::{build_closed_loop, kerr_hamiltonian, CavityParams, ClosedLoopOptions, LindbladModel};
use crate::error::{Error, Result};
use crate::ops::{destroy, embed, HilbertSpec, Operator, CONTROLLER_MODE, PLANT_MODE};

/// An `(S, L, H)` triple with a scalar scattering matrix.
#[derive(Debug, Clone)]
pub struct SlhComponent {
    pub scattering: Vec<Vec<C64>>,
    pub coupling: Vec<Operator>,
    pub hamiltonian: Operator,
}

impl SlhComponent {
    /// Single-channel component `(1, L, H)`.
    pub fn cavity_port(coupling: Operator, hamiltonian: Operator) -> Self {
        Self {
            scattering: vec![vec![C64::new(1.0, 0.0)]],
            coupling: vec![coupling],
            hamiltonian,
        }
    }

    /// Static phase shifter `(e^{iφ}, 0, 0)`.
    pub fn phase_shifter(space: &HilbertSpec, phi: f64) -> Self {
        Self {
            scattering: vec![vec![super::loop_phase_factor(phi)]],
            coupling: vec![Operator::zeros(space)],
            hamiltonian: Operator::zeros(space),
        }
    }

    pub fn channels(&self) -> usize {
        self.coupling.len()
    }

    /// Series product `self ◁ first`: the output of `first` feeds `self`.
    ///
    /// `S = S₂S₁`, `L = L₂ + S₂L₁`, `H = H₁ + H₂ + Im(L₂†S₂L₁)`.
    pub fn series_after(&self, first: &SlhComponent) -> SlhComponent {
        let n = self.channels();
        assert_eq!(n, first.channels(), "series product needs equal channel counts");
        let s2 = &self.scattering;
        let scattering = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| s2[i][k] * first.scattering[k][j]).sum())
                    .collect()
            })
            .collect();
        let s2_l1: Vec<Operator> = (0..n)
            .map(|i| {
                (0..n).fold(Operator::zeros(first.hamiltonian.space()), |acc, k| {
                    &acc + &first.coupling[k].scale(s2[i][k])
                })
            })
            .collect();
        let coupling = self
            .coupling
            .iter()
            .zip(&s2_l1)
            .map(|(l2, sl1)| l2 + sl1)
            .collect();
        let cross = self
            .coupling
            .iter()
            .zip(&s2_l1)
            .fold(Operator::zeros(first.hamiltonian.space()), |acc, (l2, sl1)| {
                &acc + &(&l2.adjoint() * sl1)
            });
        // Im(X) = (X - X†) / 2i
        let im = (&cross - &cross.adjoint()).scale(C64::new(0.0, -0.5));
        SlhComponent {
            scattering,
            coupling,
            hamiltonian: &(&first.hamiltonian + &self.hamiltonian) + &im,
        }
    }

    /// Concatenation `self ⊞ other` (independent parallel channels).
    pub fn concat(&self, other: &SlhComponent) -> SlhComponent {
        let (n, m) = (self.channels(), other.channels());
        let zero = C64::new(0.0, 0.0);
        let mut scattering = vec![vec![zero; n + m]; n + m];
        for i in 0..n {
            scattering[i][..n].copy_from_slice(&self.scattering[i]);
        }
        for i in 0..m {
            scattering[n + i][n..].copy_from_slice(&other.scattering[i]);
        }
        let mut coupling = self.coupling.clone();
        coupling.extend(other.coupling.iter().cloned());
        SlhComponent {
            scattering,
            coupling,
            hamiltonian: &self.hamiltonian + &other.hamiltonian,
        }
    }
}

/// Outcome of comparing the series-composed network with the closed-loop
/// builder.
#[derive(Debug, Clone, PartialEq)]
pub struct SlhReport {
    pub matches: bool,
    pub hamiltonian_deviation: f64,
    pub coupling_deviation: Vec<f64>,
    pub max_deviation: f64,
}

/// Smallest `max|a - e^{iθ} b|` over a global phase `θ`.
fn phase_aligned_deviation(a: &Operator, b: &Operator) -> f64 {
    let mut overlap = C64::new(0.0, 0.0);
    for (i, j, v) in b.matrix().triplets() {
        overlap += v.conj() * a.get(i, j);
    }
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    a.max_abs_diff(&b.scale(phase))
}

/// Builds the feedback network by SLH composition
/// `(G_b1 ◁ G_a ◁ G_φ ◁ G_b2) ⊞ G_b3` and compares it with
/// [`build_closed_loop`] at tolerance 1e-9 (coupling operators compared up
/// to a global phase).
pub fn slh_series_check(
    controller: &CavityParams,
    plant: &CavityParams,
    phi: f64,
    dims: (usize, usize),
) -> Result<SlhReport> {
    let reference = build_closed_loop(controller, plant, phi, dims, ClosedLoopOptions::default())?;
    slh_check_model(&reference, controller, plant, phi)
}

/// Compares an existing two-mode model against the SLH composition built
/// from `controller`, `plant` and `phi`.
pub fn slh_check_model(
    reference: &LindbladModel,
    controller: &CavityParams,
    plant: &CavityParams,
    phi: f64,
) -> Result<SlhReport> {
    let dims = reference.space.mode_dims();
    if dims.len() != 2 {
        return Err(Error::InvalidDimension(format!(
            "SLH check needs a two-mode model, got {dims:?}"
        )));
    }
    let composed = compose_network(controller, plant, phi, (dims[0], dims[1]))?;
    let hamiltonian_deviation = composed.hamiltonian.max_abs_diff(&reference.hamiltonian);
    let coupling_deviation: Vec<f64> = composed
        .coupling
        .iter()
        .zip(&reference.collapse_ops)
        .map(|(x, y)| phase_aligned_deviation(x, y))
        .collect();
    let max_deviation = coupling_deviation
        .iter()
        .copied()
        .fold(hamiltonian_deviation, f64::max);
    let count_ok = composed.coupling.len() == reference.collapse_ops.len();
    Ok(SlhReport {
        matches: count_ok && max_deviation <= 1e-9,
        hamiltonian_deviation,
        coupling_deviation,
        max_deviation,
    })
}

/// Series composition of the loop components on their own, independent of
/// the closed-loop builder.
pub(crate) fn compose_network(
    controller: &CavityParams,
    plant: &CavityParams,
    phi: f64,
    dims: (usize, usize),
) -> Result<SlhComponent> {
    controller.validate()?;
    plant.validate()?;
    let space = HilbertSpec::two_mode(dims.0, dims.1)?;
    let a = embed(&destroy(dims.0)?, CONTROLLER_MODE, &space)?;
    let b = embed(&destroy(dims.1)?, PLANT_MODE, &space)?;
    let (k1, k2, k3) = plant.loop_rates()?;
    let zero = Operator::zeros(&space);

    let h_plant = kerr_hamiltonian(&b, plant.delta, plant.chi, plant.beta * k3.sqrt());
    let h_ctrl = kerr_hamiltonian(&a, controller.delta, controller.chi, C64::new(0.0, 0.0));

    let plant_out = SlhComponent::cavity_port(k2.sqrt() * &b, h_plant);
    let shifter = SlhComponent::phase_shifter(&space, phi);
    let ctrl = SlhComponent::cavity_port(controller.kappa_total.sqrt() * &a, h_ctrl);
    let plant_in = SlhComponent::cavity_port(k1.sqrt() * &b, zero.clone());
    let bias = SlhComponent::cavity_port(k3.sqrt() * &b, zero);

    let loop_path = plant_in.series_after(&ctrl.series_after(&shifter.series_after(&plant_out)));
    Ok(loop_path.concat(&bias))
}
