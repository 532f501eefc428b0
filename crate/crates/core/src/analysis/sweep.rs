use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{steady_state, SteadyStateConfig};
use crate::error::{Error, Result};
use crate::models::{build_closed_loop, CavityParams, ClosedLoopOptions};
use crate::ops::PLANT_MODE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BimodalityCriteria {
    /// Minimum ratio of the smaller peak to the valley between the peaks.
    pub min_contrast: f64,
    /// Minimum probability on each side of the valley.
    pub min_occupation: f64,
}

impl Default for BimodalityCriteria {
    fn default() -> Self {
        Self {
            min_contrast: 2.0,
            min_occupation: 0.05,
        }
    }
}

/// Peak structure of a photon-number distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bimodality {
    pub bistable: bool,
    pub peak_low: usize,
    pub peak_high: Option<usize>,
    pub valley: Option<usize>,
    pub contrast: f64,
    /// Probability at or below the valley.
    pub occ_low: f64,
    /// Probability above the valley.
    pub occ_high: f64,
}

/// Classifies `dist` as bimodal when two local maxima are separated by a
/// valley at least `min_contrast` times lower than the smaller peak and
/// each side holds at least `min_occupation`. Among qualifying pairs the one
/// with the tallest smaller peak is reported.
pub fn bimodality(dist: &[f64], criteria: &BimodalityCriteria) -> Bimodality {
    let p: Vec<f64> = dist.iter().map(|v| v.max(0.0)).collect();
    let n = p.len();
    let maxima: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || p[i] > p[i - 1]) && (i + 1 == n || p[i] >= p[i + 1]))
        .collect();
    let total: f64 = p.iter().sum();
    let mut best: Option<(bool, f64, Bimodality)> = None;
    for (x, &i) in maxima.iter().enumerate() {
        for &j in &maxima[x + 1..] {
            let mut k = i;
            for m in i..=j {
                if p[m] < p[k] {
                    k = m;
                }
            }
            let smaller = p[i].min(p[j]);
            let contrast = if p[k] > 0.0 { smaller / p[k] } else { f64::INFINITY };
            let occ_low: f64 = p[..=k].iter().sum();
            let occ_high = total - occ_low;
            let ok = contrast >= criteria.min_contrast
                && occ_low >= criteria.min_occupation
                && occ_high >= criteria.min_occupation;
            let candidate = Bimodality {
                bistable: ok,
                peak_low: i,
                peak_high: Some(j),
                valley: Some(k),
                contrast,
                occ_low,
                occ_high,
            };
            let better = match &best {
                None => true,
                Some((was_ok, score, _)) => match (ok, *was_ok) {
                    (true, false) => true,
                    (true, true) => smaller > *score,
                    (false, false) => contrast > best.as_ref().map_or(0.0, |b| b.2.contrast),
                    (false, true) => false,
                },
            };
            if better {
                best = Some((ok, smaller, candidate));
            }
        }
    }
    best.map(|b| b.2).unwrap_or_else(|| {
        let peak = (0..n).fold(0, |m, i| if p[i] > p[m] { i } else { m });
        Bimodality {
            bistable: false,
            peak_low: peak,
            peak_high: None,
            valley: None,
            contrast: 1.0,
            occ_low: total,
            occ_high: 0.0,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub steady: SteadyStateConfig,
    pub criteria: BimodalityCriteria,
    pub workers: usize,
    pub closed_loop: ClosedLoopOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            steady: SteadyStateConfig::default(),
            criteria: BimodalityCriteria::default(),
            workers: 1,
            closed_loop: ClosedLoopOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub phi: f64,
    pub bistable: bool,
    pub peak_low_n: Option<usize>,
    pub peak_high_n: Option<usize>,
    pub occ_low: Option<f64>,
    pub occ_high: Option<f64>,
    pub contrast: Option<f64>,
    pub plant_distribution: Vec<f64>,
    /// Set when the steady state for this φ could not be computed.
    pub error: Option<String>,
}

/// `n` equally spaced loop phases `2πk/n`.
pub fn uniform_phi_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

/// Closed-loop steady state for each φ, reduced to the plant and classified
/// by [`bimodality`]. Failures are recorded per point.
pub fn phi_sweep(
    controller: &CavityParams,
    plant: &CavityParams,
    phi_grid: &[f64],
    dims: (usize, usize),
    options: &SweepOptions,
) -> Result<Vec<SweepPoint>> {
    if let Some(bad) = phi_grid.iter().find(|p| !(0.0..TAU).contains(*p)) {
        return Err(Error::InvalidParameter(format!("φ = {bad} outside [0, 2π)")));
    }
    controller.validate()?;
    plant.validate()?;
    options.steady.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
    let evaluate = |phi: f64| -> SweepPoint {
        let dist = build_closed_loop(controller, plant, phi, dims, options.closed_loop)
            .and_then(|m| steady_state(&m, &options.steady))
            .and_then(|rho| rho.photon_distribution(PLANT_MODE));
        match dist {
            Ok(d) => {
                let b = bimodality(&d, &options.criteria);
                SweepPoint {
                    phi,
                    bistable: b.bistable,
                    peak_low_n: Some(b.peak_low),
                    peak_high_n: b.peak_high,
                    occ_low: Some(b.occ_low),
                    occ_high: Some(b.occ_high),
                    contrast: Some(b.contrast),
                    plant_distribution: d,
                    error: None,
                }
            }
            Err(e) => SweepPoint {
                phi,
                bistable: false,
                peak_low_n: None,
                peak_high_n: None,
                occ_low: None,
                occ_high: None,
                contrast: None,
                plant_distribution: Vec::new(),
                error: Some(e.to_string()),
            },
        }
    };
    Ok(pool.install(|| phi_grid.par_iter().map(|&phi| evaluate(phi)).collect()))
}

/// Contiguous runs of bistable points, as `(first φ, last φ)`.
pub fn bistable_windows(points: &[SweepPoint]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut open = false;
    for p in points {
        if p.bistable {
            if open {
                out.last_mut().expect("open window").1 = p.phi;
            } else {
                out.push((p.phi, p.phi));
                open = true;
            }
        } else {
            open = false;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::PaperDefaults;

    #[test]
    fn open_loop_distribution_shape() {
        // steady-state plant distribution of the open-loop default model
        let p = [
            0.3033, 0.1602, 0.0506, 0.0149, 0.0103, 0.0195, 0.038, 0.0607, 0.0788, 0.0836,
            0.0729, 0.0524, 0.031, 0.0151, 0.006, 0.002, 0.0005, 0.0001,
        ];
        let b = bimodality(&p, &BimodalityCriteria::default());
        assert!(b.bistable);
        assert_eq!((b.peak_low, b.peak_high, b.valley), (0, Some(9), Some(4)));
        assert!((b.occ_low - 0.5393).abs() < 1e-9);
    }

    #[test]
    fn unimodal_distributions() {
        let poisson: Vec<f64> = (0..15)
            .scan(1.0f64, |acc, n| {
                let v = *acc;
                *acc *= 4.0 / (n as f64 + 1.0);
                Some(v * (-4.0f64).exp())
            })
            .collect();
        let b = bimodality(&poisson, &BimodalityCriteria::default());
        assert!(!b.bistable);
        assert_eq!(b.peak_low, 3);
        let shallow = [0.3, 0.2, 0.15, 0.2, 0.15];
        assert!(!bimodality(&shallow, &BimodalityCriteria::default()).bistable);
    }

    #[test]
    fn linear_plant_is_never_bistable() {
        let plant = CavityParams {
            chi: 0.0,
            ..PaperDefaults::plant()
        };
        let grid = uniform_phi_grid(4);
        let points =
            phi_sweep(&PaperDefaults::controller(), &plant, &grid, (3, 8), &SweepOptions::default())
                .unwrap();
        assert_eq!(points.len(), 4);
        assert!(points.iter().all(|p| !p.bistable && p.error.is_none()));
    }

    #[test]
    fn rejects_out_of_range_phi() {
        let err = phi_sweep(
            &PaperDefaults::controller(),
            &PaperDefaults::plant(),
            &[TAU],
            (2, 2),
            &SweepOptions::default(),
        )
        .unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn windows_from_points() {
        let mk = |phi: f64, bistable: bool| SweepPoint {
            phi,
            bistable,
            peak_low_n: None,
            peak_high_n: None,
            occ_low: None,
            occ_high: None,
            contrast: None,
            plant_distribution: vec![],
            error: None,
        };
        let pts = [mk(0.0, false), mk(1.0, true), mk(2.0, true), mk(3.0, false), mk(4.0, true)];
        assert_eq!(bistable_windows(&pts), vec![(1.0, 2.0), (4.0, 4.0)]);
    }
}
