use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_batch, steady_state, EvolutionRecord, IntegratorConfig, SteadyStateConfig};
use crate::error::{Error, Result};
use crate::models::LindbladModel;
use crate::ops::{expectation, fock_state, DensityMatrix, PLANT_MODE};

pub const DEFAULT_T_REF: f64 = 0.25;

/// Normalised curves below this value are excluded from the fit.
pub const FIT_FLOOR: f64 = 1e-6;

/// Decay of `|⟨n⟩(t) - ⟨n⟩(∞)|` toward the steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub t_ref: f64,
    pub times: Vec<f64>,
    /// One curve per initial condition, equal to 1 at `t_ref`.
    pub normalized_curves: Vec<Vec<f64>>,
    /// Timescale fitted to each curve separately.
    pub curve_taus: Vec<f64>,
    /// Timescale fitted to all curves jointly.
    pub tau: f64,
    pub tau_ratio_vs_reference: Option<f64>,
}

impl RegressionResult {
    pub fn with_reference(mut self, reference_tau: f64) -> Self {
        self.tau_ratio_vs_reference = Some(self.tau / reference_tau);
        self
    }

    /// Largest symmetric relative difference `2|x - y|/(x + y)` between two
    /// normalised curves over samples after `t_ref` where both stay above
    /// [`FIT_FLOOR`].
    pub fn max_curve_deviation(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.normalized_curves[i], &self.normalized_curves[j]);
        self.times
            .iter()
            .zip(a.iter().zip(b))
            .filter(|(t, (x, y))| **t > self.t_ref && **x > FIT_FLOOR && **y > FIT_FLOOR)
            .map(|(_, (x, y))| 2.0 * (x - y).abs() / (x + y))
            .fold(0.0, f64::max)
    }

    /// Linear interpolation of curve `i` at time `t`.
    pub fn evaluate(&self, i: usize, t: f64) -> f64 {
        interpolate(&self.times, &self.normalized_curves[i], t)
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&s| s < t);
    if k < times.len() && times[k] == t {
        return values[k];
    }
    if k == 0 {
        return values[0];
    }
    if k == times.len() {
        return values[k - 1];
    }
    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    values[k - 1] + w * (values[k] - values[k - 1])
}

/// Least-squares slope of `ln y` against `t`.
fn log_linear_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut n, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, y) in points {
        let ly = y.ln();
        n += 1.0;
        st += t;
        sy += ly;
        stt += t * t;
        sty += t * ly;
    }
    let denom = n * stt - st * st;
    (n >= 2.0 && denom > 0.0).then(|| (n * sty - st * sy) / denom)
}

fn tau_from_slope(slope: Option<f64>) -> Result<f64> {
    match slope {
        Some(s) if s < 0.0 => Ok(-1.0 / s),
        Some(s) => Err(Error::Degenerate(format!(
            "regression curve does not decay (log slope {s:.3e})"
        ))),
        None => Err(Error::Degenerate(
            "fewer than two samples above the fit floor".into(),
        )),
    }
}

/// Normalises `|n(t) - n_ss|` of each series to 1 at `t_ref` and fits an
/// exponential timescale over `[t_ref, t_end]`.
pub fn regression_analysis(
    times: &[f64],
    series: &[Vec<f64>],
    n_ss: f64,
    t_ref: f64,
) -> Result<RegressionResult> {
    if series.is_empty() {
        return Err(Error::InvalidParameter("no series to analyse".into()));
    }
    for s in series {
        if s.len() != times.len() {
            return Err(Error::InvalidDimension(format!(
                "series of length {} on a grid of {} times",
                s.len(),
                times.len()
            )));
        }
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("times must be strictly increasing".into()));
    }
    match (times.first(), times.last()) {
        (Some(&a), Some(&b)) if a <= t_ref && t_ref < b => {}
        _ => {
            return Err(Error::InvalidParameter(format!(
                "t_ref = {t_ref} outside the sampled interval"
            )))
        }
    }
    let mut curves = Vec::with_capacity(series.len());
    for s in series {
        let dev: Vec<f64> = s.iter().map(|n| (n - n_ss).abs()).collect();
        let at_ref = interpolate(times, &dev, t_ref);
        if at_ref < 1e-10 {
            return Err(Error::Degenerate(format!(
                "deviation at t_ref is {at_ref:.3e}; cannot normalise"
            )));
        }
        curves.push(dev.iter().map(|d| d / at_ref).collect::<Vec<f64>>());
    }
    let window = |c: &[f64]| -> Vec<(f64, f64)> {
        times
            .iter()
            .zip(c)
            .filter(|(t, y)| **t >= t_ref && **y > FIT_FLOOR)
            .map(|(t, y)| (*t, *y))
            .collect()
    };
    let curve_taus = curves
        .iter()
        .map(|c| tau_from_slope(log_linear_slope(window(c).into_iter())))
        .collect::<Result<Vec<f64>>>()?;
    let tau = tau_from_slope(log_linear_slope(curves.iter().flat_map(|c| window(c))))?;
    Ok(RegressionResult {
        t_ref,
        times: times.to_vec(),
        normalized_curves: curves,
        curve_taus,
        tau,
        tau_ratio_vs_reference: None,
    })
}

/// Relaxation of one model from several initial states.
#[derive(Debug, Clone)]
pub struct RelaxationCase {
    pub result: RegressionResult,
    pub records: Vec<EvolutionRecord>,
    /// Steady-state `⟨b†b⟩`.
    pub n_ss: f64,
}

/// Fock state with `n` plant photons and every other mode empty.
pub fn plant_fock_state(model: &LindbladModel, n: usize) -> Result<DensityMatrix> {
    let modes = model.space.mode_dims().len();
    let mut occ = vec![0; modes];
    occ[if modes == 1 { 0 } else { PLANT_MODE }] = n;
    Ok(DensityMatrix::from_pure(&fock_state(&model.space, &occ)?))
}

/// Integrates `⟨b†b⟩` from each plant Fock state in `initial_photons` and
/// fits the decay toward the steady state.
pub fn relaxation_regression(
    model: &LindbladModel,
    initial_photons: &[usize],
    integrator: &IntegratorConfig,
    steady: &SteadyStateConfig,
    t_ref: f64,
) -> Result<RelaxationCase> {
    let n_op = model.observable("n_b")?;
    let rho_ss = steady_state(model, steady)?;
    let n_ss = expectation(&rho_ss, n_op)?.re;
    let rho0s = initial_photons
        .iter()
        .map(|&n| plant_fock_state(model, n))
        .collect::<Result<Vec<_>>>()?;
    let records = integrate_batch(&rho0s, model, integrator)?;
    let series = records
        .iter()
        .map(|r| r.real_series("n_b"))
        .collect::<Result<Vec<_>>>()?;
    let result = regression_analysis(&records[0].times, &series, n_ss, t_ref)?;
    Ok(RelaxationCase {
        result,
        records,
        n_ss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..=400).map(|k| k as f64 * 0.01).collect()
    }

    #[test]
    fn recovers_constructed_timescale() {
        let t = grid();
        let up: Vec<f64> = t.iter().map(|t| 4.0 + 3.0 * (-t / 0.8).exp()).collect();
        let down: Vec<f64> = t.iter().map(|t| 4.0 - 2.0 * (-t / 0.8).exp()).collect();
        let r = regression_analysis(&t, &[up, down], 4.0, 0.25).unwrap();
        assert!((r.tau - 0.8).abs() < 1e-3);
        for c in 0..2 {
            assert_eq!(r.evaluate(c, 0.25), 1.0);
            assert!((r.curve_taus[c] - 0.8).abs() < 1e-3);
        }
        assert!(r.max_curve_deviation(0, 1) < 1e-9);
        assert!((r.with_reference(0.4).tau_ratio_vs_reference.unwrap() - 2.0).abs() < 1e-2);
    }

    #[test]
    fn off_grid_reference_time() {
        let t = grid();
        let s: Vec<f64> = t.iter().map(|t| 1.0 + (-t).exp()).collect();
        let r = regression_analysis(&t, &[s], 1.0, 0.255).unwrap();
        assert!((r.evaluate(0, 0.255) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_normalisation() {
        let t = grid();
        let flat = vec![2.0; t.len()];
        let err = regression_analysis(&t, &[flat], 2.0, 0.25).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn undriven_cavity_relaxes_at_decay_rate() {
        use crate::dynamics::Scheme;
        use crate::models::{build_open_loop, PaperDefaults};
        let plant = crate::models::CavityParams {
            chi: 0.0,
            beta: num_complex::Complex64::new(0.0, 0.0),
            ..PaperDefaults::plant()
        };
        let model = build_open_loop(&plant, 5).unwrap();
        let integ = IntegratorConfig {
            scheme: Scheme::Sdirk2,
            dt: Some(1e-4),
            t_max: 0.05,
            sample_every: 10,
            ..IntegratorConfig::default()
        };
        let case =
            relaxation_regression(&model, &[1, 3], &integ, &SteadyStateConfig::default(), 0.005)
                .unwrap();
        // ⟨n⟩(t) = n₀ e^{-κt}
        assert!(case.n_ss.abs() < 1e-10);
        assert!((case.result.tau * 150.0 - 1.0).abs() < 1e-3, "{}", case.result.tau);
        assert!(case.result.max_curve_deviation(0, 1) < 1e-6);
    }
}
