use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LOW_THRESHOLD: f64 = 2.5;
pub const DEFAULT_HIGH_THRESHOLD: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    High,
}

/// Telegraph statistics of a photon-number series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingStats {
    pub n_transitions_up: usize,
    pub n_transitions_down: usize,
    /// Completed dwell durations, each bounded by two confirmed entries.
    pub dwell_low: Vec<f64>,
    pub dwell_high: Vec<f64>,
    pub mean_dwell_low: Option<f64>,
    pub mean_dwell_high: Option<f64>,
    pub switching_rate: f64,
    pub observed_time: f64,
    /// Level of each sample after hysteresis; `None` before the first
    /// confirmed entry.
    pub levels: Vec<Option<Level>>,
    /// Set when the series never completes a transition.
    pub no_transitions: bool,
}

impl SwitchingStats {
    /// Index ranges `[start, end)` of maximal runs at one level.
    pub fn segments(&self, level: Level) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (k, l) in self.levels.iter().enumerate() {
            match (start, *l == Some(level)) {
                (None, true) => start = Some(k),
                (Some(s), false) => {
                    out.push((s, k));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.levels.len()));
        }
        out
    }
}

/// Hysteresis state machine: HIGH is entered when the series reaches
/// `n_high`, LOW when it falls to `n_low`.
pub fn switching_stats(
    photons: &[f64],
    times: &[f64],
    n_low: f64,
    n_high: f64,
) -> Result<SwitchingStats> {
    if !(n_low < n_high) {
        return Err(Error::InvalidParameter(format!(
            "low threshold {n_low} must lie below high threshold {n_high}"
        )));
    }
    if photons.len() != times.len() {
        return Err(Error::InvalidDimension(format!(
            "{} samples for {} times",
            photons.len(),
            times.len()
        )));
    }
    let mut level: Option<Level> = None;
    let mut entered_at: Option<f64> = None;
    let (mut up, mut down) = (0, 0);
    let (mut dwell_low, mut dwell_high) = (Vec::new(), Vec::new());
    let mut levels = Vec::with_capacity(photons.len());
    for (&n, &t) in photons.iter().zip(times) {
        let next = match level {
            Some(Level::Low) | None if n >= n_high => Some(Level::High),
            Some(Level::High) | None if n <= n_low => Some(Level::Low),
            l => l,
        };
        if next != level {
            if let Some(prev) = level {
                let dwell = entered_at.map(|t0| t - t0);
                match prev {
                    Level::Low => {
                        up += 1;
                        dwell_low.extend(dwell);
                    }
                    Level::High => {
                        down += 1;
                        dwell_high.extend(dwell);
                    }
                }
            }
            // a level assigned at the first sample starts a censored dwell
            entered_at = (!levels.is_empty()).then_some(t);
            level = next;
        }
        levels.push(level);
    }
    let observed_time = match (times.first(), times.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(SwitchingStats {
        n_transitions_up: up,
        n_transitions_down: down,
        mean_dwell_low: mean(&dwell_low),
        mean_dwell_high: mean(&dwell_high),
        dwell_low,
        dwell_high,
        switching_rate: if observed_time > 0.0 {
            (up + down) as f64 / observed_time
        } else {
            0.0
        },
        observed_time,
        levels,
        no_transitions: up + down == 0,
    })
}
