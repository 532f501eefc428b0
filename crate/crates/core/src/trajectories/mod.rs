//! Quantum-jump (Monte-Carlo wave-function) unravelings of a Lindblad model.

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::EvolutionRecord;
use crate::error::{Error, Result};
use crate::models::LindbladModel;
use crate::ops::{CsrMatrix, DensityMatrix, StateVector, ZERO};

/// Identifier of the random stream written to run metadata.
pub const RNG_ID: &str = "chacha20/seed_from_u64";

/// Relative norm growth over one step that counts as an unstable step.
const NORM_GROWTH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub seed: u64,
    /// `None` selects [`default_trajectory_dt`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_max: f64,
    pub sample_every: usize,
    /// Bisection tolerance on `‖ψ‖²` when locating a jump.
    pub norm_floor: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dt: None,
            t_max: 10.0,
            sample_every: 50,
            norm_floor: 1e-6,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        if !(self.norm_floor > 0.0 && self.norm_floor < 1e-3) {
            return Err(Error::InvalidParameter(format!(
                "norm_floor must lie in (0, 1e-3), got {}",
                self.norm_floor
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn step_size(&self, model: &LindbladModel) -> f64 {
        self.dt.unwrap_or_else(|| default_trajectory_dt(model))
    }

    /// Number of steps and the step length that divides `t_max` evenly.
    pub fn grid(&self, model: &LindbladModel) -> (usize, f64) {
        let dt = self.step_size(model);
        let ratio = self.t_max / dt;
        let n = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
            ratio.round()
        } else {
            ratio.ceil()
        };
        let n = (n as usize).max(1);
        (n, self.t_max / n as f64)
    }
}

/// `0.02/κ_max`, capped at `2.5/‖H_eff‖` for RK4 stability.
pub fn default_trajectory_dt(model: &LindbladModel) -> f64 {
    let kappa = if model.kappa_max > 0.0 { model.kappa_max } else { 1.0 };
    let h = model.effective_hamiltonian();
    let bound = (h.matrix().norm_one() * h.matrix().norm_inf()).sqrt();
    let base = 0.02 / kappa;
    if bound > 0.0 {
        base.min(2.5 / bound)
    } else {
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Conditional expectations on the normalised state.
    pub observables: BTreeMap<String, Vec<C64>>,
    pub jumps: Vec<JumpEvent>,
    pub seed: u64,
    pub dt: f64,
    pub final_state: StateVector,
}

impl TrajectoryRecord {
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

/// Non-unitary drift `-i H_eff` and jump operators, shared read-only by all
/// trajectories of an ensemble.
struct Unraveling {
    drift: CsrMatrix,
    jumps: Vec<CsrMatrix>,
    names: Vec<String>,
    observables: Vec<CsrMatrix>,
}

impl Unraveling {
    fn new(model: &LindbladModel) -> Self {
        Self {
            drift: model.effective_hamiltonian().matrix().scale(C64::new(0.0, -1.0)),
            jumps: model.collapse_ops.iter().map(|l| l.matrix().clone()).collect(),
            names: model.observables.keys().cloned().collect(),
            observables: model.observables.values().map(|o| o.matrix().clone()).collect(),
        }
    }
}

struct Workspace {
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = || vec![ZERO; n];
        Self {
            k: [z(), z(), z(), z()],
            tmp: z(),
        }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

/// One RK4 step of `dψ/dt = M ψ` from `psi` into `out`.
fn rk4(m: &CsrMatrix, psi: &[C64], h: f64, out: &mut [C64], ws: &mut Workspace) {
    let [k1, k2, k3, k4] = &mut ws.k;
    let tmp = &mut ws.tmp;
    m.matvec_into(psi, k1);
    for ((t, &p), &k) in tmp.iter_mut().zip(psi).zip(k1.iter()) {
        *t = p + 0.5 * h * k;
    }
    m.matvec_into(tmp, k2);
    for ((t, &p), &k) in tmp.iter_mut().zip(psi).zip(k2.iter()) {
        *t = p + 0.5 * h * k;
    }
    m.matvec_into(tmp, k3);
    for ((t, &p), &k) in tmp.iter_mut().zip(psi).zip(k3.iter()) {
        *t = p + h * k;
    }
    m.matvec_into(tmp, k4);
    for i in 0..psi.len() {
        out[i] = psi[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn conditional_expectation(op: &CsrMatrix, psi: &[C64], norm2: f64) -> C64 {
    let mut acc = ZERO;
    for (i, j, v) in op.triplets() {
        acc += psi[i].conj() * v * psi[j];
    }
    acc / norm2
}

/// Runs one quantum-jump trajectory from `psi0`.
pub fn run_trajectory(
    psi0: &StateVector,
    model: &LindbladModel,
    config: &TrajectoryConfig,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    psi0.space().ensure_same(&model.space)?;
    if !psi0.is_normalized() {
        return Err(Error::InvalidParameter(format!(
            "initial state has norm {}",
            psi0.norm()
        )));
    }
    let unravel = Unraveling::new(model);
    simulate(psi0, model, &unravel, config, config.seed)
}

fn simulate(
    psi0: &StateVector,
    model: &LindbladModel,
    unravel: &Unraveling,
    config: &TrajectoryConfig,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let n = model.dim();
    let (n_steps, h) = config.grid(model);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut ws = Workspace::new(n);
    let mut psi: Vec<C64> = psi0.amplitudes().to_vec();
    let mut next = vec![ZERO; n];
    let mut threshold: f64 = rng.random();
    let mut jumps = Vec::new();
    let mut times = Vec::with_capacity(n_steps / config.sample_every + 2);
    let mut series: Vec<Vec<C64>> = vec![Vec::with_capacity(times.capacity()); unravel.names.len()];

    let record = |t: f64, psi: &[C64], times: &mut Vec<f64>, series: &mut Vec<Vec<C64>>| {
        let norm2 = norm_sqr(psi);
        times.push(t);
        for (op, out) in unravel.observables.iter().zip(series.iter_mut()) {
            out.push(conditional_expectation(op, psi, norm2));
        }
    };
    record(0.0, &psi, &mut times, &mut series);

    for step in 0..n_steps {
        let t_end = (step + 1) as f64 * h;
        let mut t = step as f64 * h;
        loop {
            let remaining = t_end - t;
            if remaining <= 1e-15 * t_end {
                break;
            }
            let before = norm_sqr(&psi);
            rk4(&unravel.drift, &psi, remaining, &mut next, &mut ws);
            let after = norm_sqr(&next);
            if !after.is_finite() || after > before * (1.0 + NORM_GROWTH_TOL) {
                return Err(Error::StepSize {
                    time: t,
                    reason: format!(
                        "state norm grew from {before:.12} to {after:.12} in one step; reduce dt"
                    ),
                });
            }
            if after > threshold {
                std::mem::swap(&mut psi, &mut next);
                break;
            }
            // the norm crossed the threshold inside this step
            let (mut lo, mut hi) = (0.0, remaining);
            let mut tau = remaining;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                rk4(&unravel.drift, &psi, mid, &mut next, &mut ws);
                let nm = norm_sqr(&next);
                if (nm - threshold).abs() < config.norm_floor {
                    tau = mid;
                    break;
                }
                if nm > threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
                tau = hi;
            }
            rk4(&unravel.drift, &psi, tau, &mut next, &mut ws);
            std::mem::swap(&mut psi, &mut next);
            t += tau;
            let channel = pick_channel(&unravel.jumps, &psi, &mut next, &mut rng);
            let Some(channel) = channel else {
                return Err(Error::Degenerate(format!(
                    "jump at t = {t} with vanishing jump rates"
                )));
            };
            unravel.jumps[channel].matvec_into(&psi, &mut next);
            let nn = norm_sqr(&next).sqrt();
            for (p, v) in psi.iter_mut().zip(&next) {
                *p = v / nn;
            }
            let time = match jumps.last() {
                Some(JumpEvent { time, .. }) if t <= *time => time + f64::EPSILON * time.abs().max(1.0),
                _ => t,
            };
            jumps.push(JumpEvent { time, channel });
            threshold = rng.random();
        }
        let done = step + 1;
        if done % config.sample_every == 0 || done == n_steps {
            record(t_end, &psi, &mut times, &mut series);
        }
    }

    let norm = norm_sqr(&psi).sqrt();
    let final_amps: Vec<C64> = psi.iter().map(|v| v / norm).collect();
    let final_state = StateVector::from_amplitudes(model.space.clone(), final_amps.into())?;
    Ok(TrajectoryRecord {
        times,
        observables: unravel.names.iter().cloned().zip(series).collect(),
        jumps,
        seed,
        dt: h,
        final_state,
    })
}

fn pick_channel(
    jumps: &[CsrMatrix],
    psi: &[C64],
    buf: &mut [C64],
    rng: &mut ChaCha20Rng,
) -> Option<usize> {
    let weights: Vec<f64> = jumps
        .iter()
        .map(|l| {
            l.matvec_into(psi, buf);
            norm_sqr(buf)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Some(j);
        }
    }
    weights.iter().rposition(|&w| w > 0.0)
}

/// Pointwise ensemble average with per-sample standard errors (real and
/// imaginary parts separately).
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub record: EvolutionRecord,
    pub standard_errors: BTreeMap<String, Vec<C64>>,
    pub n_traj: usize,
    pub total_jumps: usize,
}

/// Runs `n_traj` trajectories with seeds `seed, seed + 1, ...` on a pool of
/// `worker_count` threads and averages them in seed order.
pub fn run_ensemble(
    psi0: &StateVector,
    model: &LindbladModel,
    config: &TrajectoryConfig,
    n_traj: usize,
    worker_count: usize,
) -> Result<EnsembleResult> {
    config.validate()?;
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    psi0.space().ensure_same(&model.space)?;
    if !psi0.is_normalized() {
        return Err(Error::InvalidParameter(format!(
            "initial state has norm {}",
            psi0.norm()
        )));
    }
    let unravel = Unraveling::new(model);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count.max(1))
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
    let runs: Vec<TrajectoryRecord> = pool.install(|| {
        (0..n_traj)
            .into_par_iter()
            .map(|i| {
                simulate(
                    psi0,
                    model,
                    &unravel,
                    config,
                    config.seed.wrapping_add(i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let first = &runs[0];
    let len = first.times.len();
    let count = n_traj as f64;
    let mut mean = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for name in first.observables.keys() {
        let mut sum = vec![ZERO; len];
        let mut sum_sq = vec![(0.0f64, 0.0f64); len];
        for run in &runs {
            for (k, v) in run.observables[name].iter().enumerate() {
                sum[k] += v;
                sum_sq[k].0 += v.re * v.re;
                sum_sq[k].1 += v.im * v.im;
            }
        }
        let m: Vec<C64> = sum.iter().map(|s| s / count).collect();
        let se: Vec<C64> = m
            .iter()
            .zip(&sum_sq)
            .map(|(mu, &(sr, si))| {
                if n_traj < 2 {
                    return ZERO;
                }
                let var = |s2: f64, mu: f64| ((s2 - count * mu * mu) / (count - 1.0)).max(0.0);
                C64::new(
                    (var(sr, mu.re) / count).sqrt(),
                    (var(si, mu.im) / count).sqrt(),
                )
            })
            .collect();
        mean.insert(name.clone(), m);
        errors.insert(name.clone(), se);
    }

    let n = model.dim();
    let mut rho = Array2::<C64>::zeros((n, n));
    for run in &runs {
        let a = run.final_state.amplitudes();
        for ((i, j), v) in rho.indexed_iter_mut() {
            *v += a[i] * a[j].conj() / count;
        }
    }
    let n_steps = config.grid(model).0;
    Ok(EnsembleResult {
        record: EvolutionRecord {
            times: first.times.clone(),
            observables: mean,
            final_state: DensityMatrix::from_matrix(model.space.clone(), rho)?,
            steps: n_steps,
            max_trace_drift: 0.0,
            cumulative_trace_drift: 0.0,
        },
        standard_errors: errors,
        n_traj,
        total_jumps: runs.iter().map(|r| r.jumps.len()).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{destroy, fock_state, HilbertSpec, Operator};

    fn decay(kappa: f64) -> LindbladModel {
        let space = HilbertSpec::single(2).unwrap();
        let a = destroy(2).unwrap();
        LindbladModel::new(Operator::zeros(&space), vec![kappa.sqrt() * &a])
            .unwrap()
            .with_observable("n", &a.adjoint() * &a)
            .unwrap()
    }

    #[test]
    fn single_jump_for_two_level_decay() {
        let model = decay(1.0);
        let psi = fock_state(&model.space, &[1]).unwrap();
        let config = TrajectoryConfig {
            dt: Some(0.01),
            t_max: 40.0,
            ..Default::default()
        };
        let rec = run_trajectory(&psi, &model, &config).unwrap();
        assert_eq!(rec.jumps.len(), 1);
        let n = rec.real_series("n").unwrap();
        assert_eq!(*n.last().unwrap(), 0.0);
    }

    #[test]
    fn no_jumps_without_dissipation() {
        let space = HilbertSpec::single(3).unwrap();
        let a = destroy(3).unwrap();
        let h = &(&a + &a.adjoint()) * &a;
        let h = &h + &h.adjoint();
        let model = LindbladModel::new(h, vec![Operator::zeros(&space)])
            .unwrap()
            .with_observable("n", &a.adjoint() * &a)
            .unwrap()
            .with_kappa_max(1.0);
        let psi = fock_state(&space, &[1]).unwrap();
        let rec = run_trajectory(
            &psi,
            &model,
            &TrajectoryConfig {
                dt: Some(1e-3),
                t_max: 2.0,
                sample_every: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(rec.jumps.is_empty());
        assert!((rec.final_state.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let model = decay(1.0);
        let psi = fock_state(&model.space, &[1]).unwrap();
        let config = TrajectoryConfig {
            dt: Some(0.01),
            t_max: 5.0,
            seed: 7,
            ..Default::default()
        };
        let a = run_trajectory(&psi, &model, &config).unwrap();
        let b = run_trajectory(&psi, &model, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ensemble_of_one_equals_trajectory() {
        let model = decay(1.0);
        let psi = fock_state(&model.space, &[1]).unwrap();
        let config = TrajectoryConfig {
            dt: Some(0.01),
            t_max: 3.0,
            ..Default::default()
        };
        let single = run_trajectory(&psi, &model, &config).unwrap();
        let ens = run_ensemble(&psi, &model, &config, 1, 2).unwrap();
        assert_eq!(ens.record.times, single.times);
        assert_eq!(ens.record.observables["n"], single.observables["n"]);
    }

    #[test]
    fn rejects_invalid_config() {
        let model = decay(1.0);
        let psi = fock_state(&model.space, &[1]).unwrap();
        for config in [
            TrajectoryConfig {
                norm_floor: 1e-3,
                ..Default::default()
            },
            TrajectoryConfig {
                t_max: 0.0,
                ..Default::default()
            },
        ] {
            assert!(run_trajectory(&psi, &model, &config).is_err());
        }
        let unnormalised =
            StateVector::from_amplitudes(model.space.clone(), vec![ZERO, C64::new(2.0, 0.0)].into())
                .unwrap();
        assert!(run_trajectory(&unnormalised, &model, &TrajectoryConfig::default()).is_err());
    }
}
