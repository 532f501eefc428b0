use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{liouvillian_matrix, renormalize, Generator, IntegratorConfig, Scheme, ShiftedLu, Stepper};
use crate::error::{Error, Result};
use crate::models::LindbladModel;
use crate::ops::{fock_state, DensityMatrix, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyStateMethod {
    /// Shifted inverse iteration on the sparse Liouvillian.
    NullSpace,
    /// Time integration until the master-equation residual is small.
    LongTime,
    /// Null space up to `null_space_dim_limit`, long-time above.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadyStateConfig {
    pub method: SteadyStateMethod,
    /// Inverse-iteration shift relative to the Liouvillian spectral bound.
    pub shift: f64,
    pub max_iterations: usize,
    /// Convergence when `‖𝓛ρ‖_F < residual_tol · ‖ρ‖_F`.
    pub residual_tol: f64,
    pub null_space_dim_limit: usize,
    /// Stepping for the long-time method. `t_max` caps the integrated time
    /// and the residual is checked every `sample_every` steps.
    pub long_time: IntegratorConfig,
}

impl Default for SteadyStateConfig {
    fn default() -> Self {
        Self {
            method: SteadyStateMethod::Auto,
            shift: 1e-8,
            max_iterations: 50,
            residual_tol: 1e-8,
            null_space_dim_limit: 256,
            long_time: IntegratorConfig {
                t_max: 1e4,
                sample_every: 2000,
                ..IntegratorConfig::default()
            },
        }
    }
}

impl SteadyStateConfig {
    pub fn with_method(method: SteadyStateMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shift.is_finite() && self.shift > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inverse-iteration shift must be positive, got {}",
                self.shift
            )));
        }
        if !(self.residual_tol.is_finite() && self.residual_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "residual tolerance must be positive, got {}",
                self.residual_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        self.long_time.validate()
    }

    pub fn resolve(&self, model: &LindbladModel) -> SteadyStateMethod {
        match self.method {
            SteadyStateMethod::Auto if model.dim() <= self.null_space_dim_limit => {
                SteadyStateMethod::NullSpace
            }
            SteadyStateMethod::Auto => SteadyStateMethod::LongTime,
            m => m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub state: DensityMatrix,
    pub method: SteadyStateMethod,
    /// Inverse iterations, or integration steps for the long-time method.
    pub iterations: usize,
    /// Final `‖𝓛ρ‖_F / ‖ρ‖_F`.
    pub residual: f64,
}

pub fn steady_state(model: &LindbladModel, config: &SteadyStateConfig) -> Result<DensityMatrix> {
    Ok(steady_state_report(model, config)?.state)
}

pub fn steady_state_report(
    model: &LindbladModel,
    config: &SteadyStateConfig,
) -> Result<SteadyStateReport> {
    config.validate()?;
    match config.resolve(model) {
        SteadyStateMethod::LongTime => long_time(model, config),
        _ => null_space(model, config),
    }
}

fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn finish(mut state: DensityMatrix) -> Result<DensityMatrix> {
    state.hermitize();
    let tr = state.trace().re;
    state.scale_in_place(1.0 / tr);
    state.validate()?;
    Ok(state)
}

fn null_space(model: &LindbladModel, config: &SteadyStateConfig) -> Result<SteadyStateReport> {
    let n = model.dim();
    let l = liouvillian_matrix(model)?;
    let sigma = config.shift * model.spectral_bound().max(1.0);
    let lu = ShiftedLu::new(&l, C64::new(-sigma, 0.0), C64::new(1.0, 0.0))?;
    let mut x = vec![ZERO; n * n];
    for k in 0..n {
        x[k * n + k] = C64::new(1.0 / n as f64, 0.0);
    }
    let mut residual = f64::INFINITY;
    for it in 1..=config.max_iterations {
        lu.solve(&mut x);
        let tr: C64 = (0..n).map(|k| x[k * n + k]).sum();
        if !(tr.norm() > 0.0 && tr.norm().is_finite()) {
            return Err(Error::Solver(format!("inverse iteration produced trace {tr}")));
        }
        x.iter_mut().for_each(|v| *v /= tr);
        residual = vec_norm(&l.matvec(&x)) / vec_norm(&x);
        if residual < config.residual_tol {
            let state = finish(DensityMatrix::from_vec_col(&model.space, &x)?)?;
            return Ok(SteadyStateReport {
                state,
                method: SteadyStateMethod::NullSpace,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        iterations: config.max_iterations,
        residual,
    })
}

fn long_time(model: &LindbladModel, config: &SteadyStateConfig) -> Result<SteadyStateReport> {
    let lt = &config.long_time;
    let scheme = match lt.scheme {
        Scheme::AdaptiveRk4 => Scheme::Rk4,
        s => s,
    };
    let h = lt.dt.unwrap_or_else(|| super::default_dt(model, scheme));
    let gen = Generator::new(model);
    let mut stepper = Stepper::new(model, scheme, h)?;
    let vacuum = vec![0; model.space.n_modes()];
    let mut ys = vec![DensityMatrix::from_pure(&fock_state(&model.space, &vacuum)?).into_data()];
    let n = model.dim();
    let mut deriv = Array2::<C64>::zeros((n, n));
    let mut scratch = Array2::<C64>::zeros((n, n));
    let (mut steps, mut residual) = (0usize, f64::INFINITY);
    while (steps as f64) * h < lt.t_max {
        for _ in 0..lt.sample_every {
            stepper.step(&mut ys, h);
            steps += 1;
            renormalize(&mut ys[0], steps as f64 * h)?;
        }
        gen.apply_into(ys[0].view(), deriv.view_mut(), &mut scratch);
        let norm = |m: &Array2<C64>| m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        residual = norm(&deriv) / norm(&ys[0]);
        if residual < config.residual_tol {
            let state = DensityMatrix::from_matrix(model.space.clone(), ys.remove(0))?;
            return Ok(SteadyStateReport {
                state: finish(state)?,
                method: SteadyStateMethod::LongTime,
                iterations: steps,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        iterations: steps,
        residual,
    })
}
