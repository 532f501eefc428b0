//! Master-equation time evolution and steady states.
//!
//! Density matrices are vectorised by column stacking, `vec[col * n + row]`,
//! wherever a superoperator is involved.

mod generator;
mod liouvillian;
mod steady;

pub use generator::{lindblad_rhs, Generator};
pub use liouvillian::{
    liouvillian_dense, liouvillian_matrix, liouvillian_spectrum, ShiftedLu, DENSE_DIM_LIMIT,
    SPARSE_DIM_LIMIT,
};
pub use steady::{
    steady_state, steady_state_report, SteadyStateConfig, SteadyStateMethod, SteadyStateReport,
};

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::LindbladModel;
use crate::ops::{CsrMatrix, DensityMatrix, ZERO};

/// Largest trace change tolerated in a single step before renormalisation.
pub const MAX_STEP_TRACE_DRIFT: f64 = 1e-6;

/// Diagonal coefficient of the two-stage L-stable SDIRK scheme.
const SDIRK_GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Classical fixed-step fourth-order Runge-Kutta.
    #[default]
    Rk4,
    /// RK4 with step-doubling error control.
    AdaptiveRk4,
    /// Two-stage, second-order, L-stable singly diagonally implicit
    /// Runge-Kutta with one sparse LU factorisation shared by all steps.
    Sdirk2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Step size. `None` selects [`default_dt`] for the model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_max: f64,
    /// Record every `sample_every`-th step (and the final one).
    pub sample_every: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            dt: None,
            t_max: 10.0,
            sample_every: 100,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        positive("t_max", self.t_max)?;
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn step_size(&self, model: &LindbladModel) -> f64 {
        self.dt.unwrap_or_else(|| default_dt(model, self.scheme))
    }
}

/// `0.1/κ_max`, capped for explicit schemes so that `dt` times the
/// Liouvillian spectral bound stays inside the RK4 stability region.
pub fn default_dt(model: &LindbladModel, scheme: Scheme) -> f64 {
    let kappa = if model.kappa_max > 0.0 { model.kappa_max } else { 1.0 };
    let base = 0.1 / kappa;
    match scheme {
        Scheme::Sdirk2 => base,
        Scheme::Rk4 | Scheme::AdaptiveRk4 => {
            let bound = model.spectral_bound();
            if bound > 0.0 {
                base.min(2.5 / bound)
            } else {
                base
            }
        }
    }
}

/// Sampled expectation values of every registered observable.
#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    pub observables: BTreeMap<String, Vec<C64>>,
    pub final_state: DensityMatrix,
    pub steps: usize,
    pub max_trace_drift: f64,
    pub cumulative_trace_drift: f64,
}

impl EvolutionRecord {
    pub fn series(&self, name: &str) -> Result<&[C64]> {
        self.observables
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidParameter(format!("record has no observable {name:?}")))
    }

    pub fn real_series(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.series(name)?.iter().map(|v| v.re).collect())
    }
}

struct Recorder {
    names: Vec<String>,
    ops: Vec<CsrMatrix>,
    times: Vec<f64>,
    series: Vec<Vec<C64>>,
}

impl Recorder {
    fn new(model: &LindbladModel) -> Self {
        let names: Vec<String> = model.observables.keys().cloned().collect();
        let ops = model.observables.values().map(|o| o.matrix().clone()).collect();
        let series = vec![Vec::new(); names.len()];
        Self {
            names,
            ops,
            times: Vec::new(),
            series,
        }
    }

    fn record(&mut self, t: f64, rho: &Array2<C64>) {
        self.times.push(t);
        for (op, out) in self.ops.iter().zip(&mut self.series) {
            let mut acc = ZERO;
            for (i, j, v) in op.triplets() {
                acc += v * rho[[j, i]];
            }
            out.push(acc);
        }
    }

    fn finish(self, final_state: DensityMatrix, steps: usize, drift: (f64, f64)) -> EvolutionRecord {
        EvolutionRecord {
            times: self.times,
            observables: self.names.into_iter().zip(self.series).collect(),
            final_state,
            steps,
            max_trace_drift: drift.0,
            cumulative_trace_drift: drift.1,
        }
    }
}

pub(crate) struct Rk4Workspace {
    k: [Array2<C64>; 4],
    tmp: Array2<C64>,
    scratch: Array2<C64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        let z = || Array2::zeros((n, n));
        Self {
            k: [z(), z(), z(), z()],
            tmp: z(),
            scratch: z(),
        }
    }
}

fn rk4_step(gen: &Generator, y: &mut Array2<C64>, h: f64, ws: &mut Rk4Workspace) {
    let [k1, k2, k3, k4] = &mut ws.k;
    gen.apply_into(y.view(), k1.view_mut(), &mut ws.scratch);
    ws.tmp.assign(y);
    ws.tmp.scaled_add(C64::new(0.5 * h, 0.0), k1);
    gen.apply_into(ws.tmp.view(), k2.view_mut(), &mut ws.scratch);
    ws.tmp.assign(y);
    ws.tmp.scaled_add(C64::new(0.5 * h, 0.0), k2);
    gen.apply_into(ws.tmp.view(), k3.view_mut(), &mut ws.scratch);
    ws.tmp.assign(y);
    ws.tmp.scaled_add(C64::new(h, 0.0), k3);
    gen.apply_into(ws.tmp.view(), k4.view_mut(), &mut ws.scratch);
    let (a, b) = (C64::new(h / 6.0, 0.0), C64::new(h / 3.0, 0.0));
    y.scaled_add(a, k1);
    y.scaled_add(b, k2);
    y.scaled_add(b, k3);
    y.scaled_add(a, k4);
}

/// Fixed-step propagator shared by [`integrate_batch`] and the long-time
/// steady-state search.
pub(crate) enum Stepper {
    Explicit { gen: Generator, ws: Box<Rk4Workspace> },
    Implicit { lu: ShiftedLu, h: f64 },
}

impl Stepper {
    pub(crate) fn new(model: &LindbladModel, scheme: Scheme, h: f64) -> Result<Self> {
        match scheme {
            Scheme::Rk4 | Scheme::AdaptiveRk4 => Ok(Self::Explicit {
                gen: Generator::new(model),
                ws: Box::new(Rk4Workspace::new(model.dim())),
            }),
            Scheme::Sdirk2 => {
                let l = liouvillian_matrix(model)?;
                let lu = ShiftedLu::new(&l, C64::new(1.0, 0.0), C64::new(-SDIRK_GAMMA * h, 0.0))?;
                Ok(Self::Implicit { lu, h })
            }
        }
    }

    /// Advances every state by one step of size `h`. Implicit steppers use
    /// the step size they were factorised for.
    pub(crate) fn step(&mut self, ys: &mut [Array2<C64>], h: f64) {
        match self {
            Self::Explicit { gen, ws } => {
                for y in ys.iter_mut() {
                    rk4_step(gen, y, h, ws);
                }
            }
            Self::Implicit { lu, h } => {
                let gh = SDIRK_GAMMA * *h;
                let n = ys.first().map_or(0, |y| y.nrows());
                let starts: Vec<Vec<C64>> = ys.iter().map(|y| to_vec_col(y)).collect();
                let mut stage = starts.clone();
                lu.solve_columns(&mut stage);
                // Y2 = y + (1-γ) h f(Y1) with f(Y1) = (Y1 - y)/(γh)
                let c = (1.0 - SDIRK_GAMMA) * *h / gh;
                for (s, y0) in stage.iter_mut().zip(&starts) {
                    for (v, &v0) in s.iter_mut().zip(y0) {
                        *v = v0 + c * (*v - v0);
                    }
                }
                lu.solve_columns(&mut stage);
                for (y, s) in ys.iter_mut().zip(&stage) {
                    for ((i, j), v) in y.indexed_iter_mut() {
                        *v = s[j * n + i];
                    }
                }
            }
        }
    }
}

fn to_vec_col(y: &Array2<C64>) -> Vec<C64> {
    let n = y.nrows();
    let mut out = vec![ZERO; n * n];
    for ((i, j), &v) in y.indexed_iter() {
        out[j * n + i] = v;
    }
    out
}

fn trace(y: &Array2<C64>) -> C64 {
    y.diag().iter().copied().fold(ZERO, |a, b| a + b)
}

/// Rescales `y` to unit trace and returns the drift that was removed.
fn renormalize(y: &mut Array2<C64>, t: f64) -> Result<f64> {
    let tr = trace(y);
    let drift = (tr - C64::new(1.0, 0.0)).norm();
    if !drift.is_finite() || drift > MAX_STEP_TRACE_DRIFT {
        return Err(Error::StepSize {
            time: t,
            reason: format!(
                "trace drift {drift:.3e} in one step exceeds {MAX_STEP_TRACE_DRIFT:e}; reduce dt"
            ),
        });
    }
    let s = C64::new(1.0 / tr.re, 0.0);
    y.mapv_inplace(|v| v * s);
    Ok(drift)
}

fn step_count(t_max: f64, dt: f64) -> usize {
    let ratio = t_max / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        (rounded as usize).max(1)
    } else {
        (ratio.ceil() as usize).max(1)
    }
}

/// Integrates the master equation from `rho0` over `[0, t_max]`.
pub fn integrate(
    rho0: &DensityMatrix,
    model: &LindbladModel,
    config: &IntegratorConfig,
) -> Result<EvolutionRecord> {
    let mut out = integrate_batch(std::slice::from_ref(rho0), model, config)?;
    Ok(out.remove(0))
}

/// Integrates several initial states on the same time grid. The implicit
/// scheme factorises once for the whole batch.
pub fn integrate_batch(
    rho0s: &[DensityMatrix],
    model: &LindbladModel,
    config: &IntegratorConfig,
) -> Result<Vec<EvolutionRecord>> {
    config.validate()?;
    for rho in rho0s {
        rho.space().ensure_same(&model.space)?;
        rho.validate()?;
    }
    if rho0s.is_empty() {
        return Ok(Vec::new());
    }
    if config.scheme == Scheme::AdaptiveRk4 {
        return rho0s.iter().map(|r| integrate_adaptive(r, model, config)).collect();
    }
    let n_steps = step_count(config.t_max, config.step_size(model));
    let h = config.t_max / n_steps as f64;
    let mut stepper = Stepper::new(model, config.scheme, h)?;
    let mut ys: Vec<Array2<C64>> = rho0s.iter().map(|r| r.data().clone()).collect();
    let mut recorders: Vec<Recorder> = rho0s.iter().map(|_| Recorder::new(model)).collect();
    let mut drift = vec![(0.0f64, 0.0f64); ys.len()];
    for (rec, y) in recorders.iter_mut().zip(&ys) {
        rec.record(0.0, y);
    }
    for step in 1..=n_steps {
        stepper.step(&mut ys, h);
        let t = step as f64 * h;
        for (y, d) in ys.iter_mut().zip(&mut drift) {
            let e = renormalize(y, t)?;
            d.0 = d.0.max(e);
            d.1 += e;
        }
        if step % config.sample_every == 0 || step == n_steps {
            for (rec, y) in recorders.iter_mut().zip(&ys) {
                rec.record(t, y);
            }
        }
    }
    recorders
        .into_iter()
        .zip(ys)
        .zip(drift)
        .map(|((rec, y), d)| {
            let state = DensityMatrix::from_matrix(model.space.clone(), y)?;
            Ok(rec.finish(state, n_steps, d))
        })
        .collect()
}

fn integrate_adaptive(
    rho0: &DensityMatrix,
    model: &LindbladModel,
    config: &IntegratorConfig,
) -> Result<EvolutionRecord> {
    let gen = Generator::new(model);
    let n = model.dim();
    let mut ws = Rk4Workspace::new(n);
    let mut rec = Recorder::new(model);
    let mut y = rho0.data().clone();
    rec.record(0.0, &y);
    let sample_dt = config.step_size(model) * config.sample_every as f64;
    let n_samples = step_count(config.t_max, sample_dt);
    let mut h = config.step_size(model);
    let h_min = 1e-14 * config.t_max;
    let (mut t, mut steps, mut max_drift, mut total_drift) = (0.0f64, 0usize, 0.0f64, 0.0f64);
    let mut full = Array2::<C64>::zeros((n, n));
    let mut half = Array2::<C64>::zeros((n, n));
    for k in 1..=n_samples {
        let target = if k == n_samples {
            config.t_max
        } else {
            k as f64 * sample_dt
        };
        while target - t > 1e-12 * target {
            let h_try = h.min(target - t);
            full.assign(&y);
            rk4_step(&gen, &mut full, h_try, &mut ws);
            half.assign(&y);
            rk4_step(&gen, &mut half, 0.5 * h_try, &mut ws);
            rk4_step(&gen, &mut half, 0.5 * h_try, &mut ws);
            let scale = half.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let diff = full
                .iter()
                .zip(half.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            let err = diff / 15.0 / (config.abs_tol + config.rel_tol * scale);
            if !err.is_finite() {
                return Err(Error::StepSize {
                    time: t,
                    reason: "non-finite error estimate".into(),
                });
            }
            if err <= 1.0 {
                t = if h_try == target - t { target } else { t + h_try };
                y.assign(&half);
                let e = renormalize(&mut y, t)?;
                max_drift = max_drift.max(e);
                total_drift += e;
                steps += 1;
            }
            let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
            h = h_try * factor.clamp(0.2, 5.0);
            if h < h_min {
                return Err(Error::StepSize {
                    time: t,
                    reason: format!("adaptive step fell below {h_min:.3e}"),
                });
            }
        }
        rec.record(target, &y);
    }
    let state = DensityMatrix::from_matrix(model.space.clone(), y)?;
    Ok(rec.finish(state, steps, (max_drift, total_drift)))
}
