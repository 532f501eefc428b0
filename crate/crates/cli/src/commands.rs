use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use kerrfb::analysis::{
    bimodality, bistable_windows, feedback_phase, lowpass, phase_curve as controller_phase_curve,
    phase_plateaus, phi_sweep as sweep, relaxation_regression, switching_stats, uniform_phi_grid,
    Bimodality, PhasePlateaus, SweepOptions, SwitchingStats,
};
use kerrfb::config::ExperimentConfig;
use kerrfb::dynamics::{steady_state_report, SteadyStateMethod};
use kerrfb::io::{
    columns_csv, distribution_csv, fmt_f64, jumps_csv, series_csv, sweep_csv, trajectory_csv,
    RunOutputs, TrajectoryMetadata,
};
use kerrfb::models::{
    build_closed_loop, build_open_loop, build_static_feedback, effective_detuning_shift,
    effective_kappa, ClosedLoopOptions,
};
use kerrfb::ops::{expectation, fock_state, PLANT_MODE};
use kerrfb::trajectories::{run_ensemble, run_trajectory, RNG_ID};
use kerrfb::{Error, LindbladModel, Result};
use serde::Serialize;

use crate::{load_config, output_dir, Common, GridArgs, LoopKind, SteadyArgs, TrajectoryArgs};

struct Timer {
    last: Instant,
    timings: BTreeMap<String, f64>,
}

impl Timer {
    fn new() -> Self {
        Self {
            last: Instant::now(),
            timings: BTreeMap::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.timings
            .insert(name.to_string(), (now - self.last).as_secs_f64());
        self.last = now;
    }
}

fn closed_options(cfg: &ExperimentConfig) -> ClosedLoopOptions {
    ClosedLoopOptions {
        include_controller_drive: cfg.include_controller_drive,
    }
}

fn closed_model(cfg: &ExperimentConfig, phi: f64) -> Result<LindbladModel> {
    build_closed_loop(&cfg.controller, &cfg.plant, phi, cfg.dims, closed_options(cfg))
}

fn plant_mode(model: &LindbladModel) -> usize {
    if model.space.n_modes() == 1 {
        0
    } else {
        PLANT_MODE
    }
}

fn finish(
    out: RunOutputs,
    command: &str,
    cfg: &ExperimentConfig,
    seed: Option<u64>,
    timer: Timer,
) -> Result<PathBuf> {
    let dir = out.dir().to_path_buf();
    out.commit(command, cfg.hash(), seed, timer.timings)?;
    Ok(dir)
}

#[derive(Serialize)]
struct SwitchingSummary {
    n_low: f64,
    n_high: f64,
    n_transitions_up: usize,
    n_transitions_down: usize,
    switching_rate: f64,
    observed_time: f64,
    mean_dwell_low: Option<f64>,
    mean_dwell_high: Option<f64>,
    dwell_low: Vec<f64>,
    dwell_high: Vec<f64>,
    no_transitions: bool,
}

impl SwitchingSummary {
    fn new(s: &SwitchingStats, cfg: &ExperimentConfig) -> Self {
        Self {
            n_low: cfg.thresholds.n_low,
            n_high: cfg.thresholds.n_high,
            n_transitions_up: s.n_transitions_up,
            n_transitions_down: s.n_transitions_down,
            switching_rate: s.switching_rate,
            observed_time: s.observed_time,
            mean_dwell_low: s.mean_dwell_low,
            mean_dwell_high: s.mean_dwell_high,
            dwell_low: s.dwell_low.clone(),
            dwell_high: s.dwell_high.clone(),
            no_transitions: s.no_transitions,
        }
    }
}

#[derive(Serialize)]
struct EnsembleMetadata {
    seed: u64,
    rng: &'static str,
    dt: f64,
    model_hash: String,
    n_traj: usize,
    total_jumps: usize,
}

#[derive(Serialize)]
struct PhaseSummary {
    phi: f64,
    lowpass_time_constant: f64,
    plateaus: PhasePlateaus,
    /// `κ_b(φ_low)/κ_b` at the low-state loop phase.
    implied_decay_factor: Option<f64>,
    flagged_samples: usize,
}

pub fn trajectory(args: &TrajectoryArgs, phi: Option<Option<f64>>) -> Result<PathBuf> {
    let closed = phi.is_some();
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.seed {
        cfg.trajectory.seed = s;
    }
    if let Some(t) = args.t_max {
        cfg.trajectory.t_max = t;
    }
    if let Some(Some(p)) = phi {
        cfg.phi = p;
    }
    if args.ensemble == 0 {
        return Err(Error::Config("--ensemble must be at least 1".into()));
    }
    cfg.validate()?;
    let command = if closed {
        "closedloop-trajectory"
    } else {
        "openloop-trajectory"
    };
    let mut timer = Timer::new();
    let model = if closed {
        closed_model(&cfg, cfg.phi)?
    } else {
        build_open_loop(&cfg.plant, cfg.dims.1)?
    };
    let psi0 = fock_state(&model.space, &vec![0; model.space.n_modes()])?;
    timer.lap("build");
    let mut out = RunOutputs::new(output_dir(&args.common, &cfg, command));
    let (times, observables) = if args.ensemble == 1 {
        let rec = run_trajectory(&psi0, &model, &cfg.trajectory)?;
        out.stage("trajectory.csv", trajectory_csv(&rec));
        out.stage("jumps.csv", jumps_csv(&rec.jumps));
        out.stage_json("metadata.json", &TrajectoryMetadata::new(&rec, model.model_hash()))?;
        (rec.times, rec.observables)
    } else {
        let ens = run_ensemble(&psi0, &model, &cfg.trajectory, args.ensemble, cfg.sweep.workers)?;
        out.stage("ensemble.csv", series_csv(&ens.record.times, &ens.record.observables));
        out.stage(
            "standard_errors.csv",
            series_csv(&ens.record.times, &ens.standard_errors),
        );
        out.stage_json(
            "metadata.json",
            &EnsembleMetadata {
                seed: cfg.trajectory.seed,
                rng: RNG_ID,
                dt: cfg.trajectory.grid(&model).1,
                model_hash: model.model_hash(),
                n_traj: ens.n_traj,
                total_jumps: ens.total_jumps,
            },
        )?;
        (ens.record.times, ens.record.observables)
    };
    timer.lap("simulate");
    let photons: Vec<f64> = observables["n_b"].iter().map(|v| v.re).collect();
    let stats = switching_stats(&photons, &times, cfg.thresholds.n_low, cfg.thresholds.n_high)?;
    out.stage_json("switching.json", &SwitchingSummary::new(&stats, &cfg))?;
    if closed {
        let kappa_b2 = cfg.plant.kappa_parts[1];
        let fp = feedback_phase(
            &observables["a"],
            &observables["b"],
            cfg.controller.kappa_total,
            kappa_b2,
            cfg.phi,
        )?;
        let interval = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
        let tc = cfg.feedback_phase.lowpass_samples * interval;
        let smoothed = lowpass(&times, &fp.loop_shift, tc)?;
        let plateaus = phase_plateaus(&smoothed, &stats)?;
        let implied = plateaus
            .low
            .map(|p| effective_kappa(&cfg.plant, p).map(|k| k / cfg.plant.kappa_total))
            .transpose()?;
        out.stage(
            "phase.csv",
            columns_csv(
                &["time", "feedback", "plant", "loop_shift", "loop_shift_smoothed"],
                &[&times, &fp.feedback, &fp.plant, &fp.loop_shift, &smoothed],
            )?,
        );
        out.stage_json(
            "phase.json",
            &PhaseSummary {
                phi: cfg.phi,
                lowpass_time_constant: tc,
                plateaus,
                implied_decay_factor: implied,
                flagged_samples: fp.flagged.iter().filter(|f| **f).count(),
            },
        )?;
    }
    timer.lap("analyse");
    finish(out, command, &cfg, Some(cfg.trajectory.seed), timer)
}

#[derive(Serialize)]
struct SteadySummary {
    #[serde(rename = "loop")]
    loop_kind: &'static str,
    phi: Option<f64>,
    dims: Vec<usize>,
    method: SteadyStateMethod,
    iterations: usize,
    residual: f64,
    mean_photons: f64,
    b: [f64; 2],
    effective_kappa: Option<f64>,
    effective_detuning_shift: Option<f64>,
    bimodality: Bimodality,
    model_hash: String,
}

pub fn steady(args: &SteadyArgs) -> Result<PathBuf> {
    let mut cfg = load_config(&args.common)?;
    if let Some(p) = args.phi {
        cfg.phi = p;
    }
    if let Some(m) = args.method {
        cfg.steady.method = m.into();
    }
    cfg.validate()?;
    let mut timer = Timer::new();
    let (model, loop_kind, phi) = match args.loop_kind {
        LoopKind::Open => (build_open_loop(&cfg.plant, cfg.dims.1)?, "open", None),
        LoopKind::Static => (
            build_static_feedback(&cfg.plant, cfg.phi, cfg.dims.1)?,
            "static",
            Some(cfg.phi),
        ),
        LoopKind::Closed => (closed_model(&cfg, cfg.phi)?, "closed", Some(cfg.phi)),
    };
    timer.lap("build");
    let report = steady_state_report(&model, &cfg.steady)?;
    timer.lap("solve");
    let dist = report.state.photon_distribution(plant_mode(&model))?;
    let b = expectation(&report.state, model.observable("b")?)?;
    let n = expectation(&report.state, model.observable("n_b")?)?.re;
    let is_static = args.loop_kind == LoopKind::Static;
    let summary = SteadySummary {
        loop_kind,
        phi,
        dims: model.space.mode_dims().to_vec(),
        method: report.method,
        iterations: report.iterations,
        residual: report.residual,
        mean_photons: n,
        b: [b.re, b.im],
        effective_kappa: is_static
            .then(|| effective_kappa(&cfg.plant, cfg.phi))
            .transpose()?,
        effective_detuning_shift: is_static
            .then(|| effective_detuning_shift(&cfg.plant, cfg.phi))
            .transpose()?,
        bimodality: bimodality(&dist, &cfg.sweep.criteria),
        model_hash: model.model_hash(),
    };
    let mut out = RunOutputs::new(output_dir(&args.common, &cfg, "steady-state"));
    out.stage("distribution.csv", distribution_csv(&dist));
    out.stage_json("steady.json", &summary)?;
    finish(out, "steady-state", &cfg, None, timer)
}

fn grid_override(common: &Common, grid: Option<usize>) -> Result<ExperimentConfig> {
    let cfg = load_config(common)?;
    if grid == Some(0) {
        return Err(Error::Config("--grid must be at least 1".into()));
    }
    Ok(cfg)
}

pub fn phase_curve(args: &GridArgs) -> Result<PathBuf> {
    let mut cfg = grid_override(&args.common, args.grid)?;
    if let Some(g) = args.grid {
        cfg.phase_curve.points = g;
    }
    cfg.validate()?;
    let mut timer = Timer::new();
    let grid = cfg.phase_curve.grid();
    let scale = cfg.phase_curve.resolved_field_scale(&cfg.plant);
    let curve = controller_phase_curve(&cfg.controller, &grid, scale, cfg.phase_curve.dim, &cfg.steady)?;
    timer.lap("solve");
    let degenerate: Vec<f64> = curve.degenerate.iter().map(|d| f64::from(u8::from(*d))).collect();
    let mut out = RunOutputs::new(output_dir(&args.common, &cfg, "phase-curve"));
    out.stage(
        "phase_curve.csv",
        columns_csv(
            &["amplitude", "phase", "reflected_phase", "mean_photons", "degenerate"],
            &[
                &curve.drive_amplitudes,
                &curve.phases,
                &curve.reflected_phases,
                &curve.mean_photons,
                &degenerate,
            ],
        )?,
    );
    finish(out, "phase-curve", &cfg, None, timer)
}

#[derive(Serialize)]
struct SweepSummary {
    dims: (usize, usize),
    windows: Vec<(f64, f64)>,
    points: Vec<kerrfb::analysis::SweepPoint>,
}

pub fn phi_sweep(args: &GridArgs) -> Result<PathBuf> {
    let mut cfg = grid_override(&args.common, args.grid)?;
    if let Some(g) = args.grid {
        cfg.sweep.points = g;
    }
    cfg.validate()?;
    let mut timer = Timer::new();
    let options = SweepOptions {
        steady: cfg.steady.clone(),
        criteria: cfg.sweep.criteria,
        workers: cfg.sweep.workers,
        closed_loop: closed_options(&cfg),
    };
    let grid = uniform_phi_grid(cfg.sweep.points);
    let points = sweep(&cfg.controller, &cfg.plant, &grid, cfg.dims, &options)?;
    timer.lap("sweep");
    let mut out = RunOutputs::new(output_dir(&args.common, &cfg, "phi-sweep"));
    out.stage("sweep.csv", sweep_csv(&points));
    out.stage_json(
        "sweep.json",
        &SweepSummary {
            dims: cfg.dims,
            windows: bistable_windows(&points),
            points,
        },
    )?;
    finish(out, "phi-sweep", &cfg, None, timer)
}

#[derive(Serialize)]
struct TauRow {
    case: String,
    phi: Option<f64>,
    n_ss: f64,
    tau: f64,
    curve_taus: Vec<f64>,
    tau_ratio_vs_open: f64,
    max_curve_deviation: f64,
}

#[derive(Serialize)]
struct TauTable {
    t_ref: f64,
    initial_photons: Vec<usize>,
    dims: (usize, usize),
    cases: Vec<TauRow>,
}

pub fn regression(args: &GridArgs) -> Result<PathBuf> {
    let mut cfg = grid_override(&args.common, args.grid)?;
    if let Some(g) = args.grid {
        // spread the samples of the fixed step over `g` intervals
        let dt = cfg.regression.integrator.dt.ok_or_else(|| {
            Error::Config("--grid needs an explicit regression.integrator.dt".into())
        })?;
        let steps = (cfg.regression.integrator.t_max / dt).round().max(1.0) as usize;
        cfg.regression.integrator.sample_every = (steps / g).max(1);
    }
    cfg.validate()?;
    let mut timer = Timer::new();
    let r = &cfg.regression;
    let mut cases: Vec<(String, Option<f64>, LindbladModel)> =
        vec![("open".into(), None, build_open_loop(&cfg.plant, cfg.dims.1)?)];
    for &phi in &r.phis {
        cases.push((format!("phi_{phi}"), Some(phi), closed_model(&cfg, phi)?));
    }
    let mut rows = Vec::new();
    let mut csv = String::from("case,initial_photons,time,n,normalized\n");
    let mut open_tau = None;
    for (label, phi, model) in &cases {
        let case = relaxation_regression(model, &r.initial_photons, &r.integrator, &cfg.steady, r.t_ref)?;
        timer.lap(label);
        let tau = case.result.tau;
        let reference = *open_tau.get_or_insert(tau);
        for (k, n0) in r.initial_photons.iter().enumerate() {
            let raw = case.records[k].real_series("n_b")?;
            for (i, t) in case.result.times.iter().enumerate() {
                writeln!(
                    csv,
                    "{label},{n0},{},{},{}",
                    fmt_f64(*t),
                    fmt_f64(raw[i]),
                    fmt_f64(case.result.normalized_curves[k][i])
                )
                .unwrap();
            }
        }
        let max_dev = (1..r.initial_photons.len())
            .map(|j| case.result.max_curve_deviation(0, j))
            .fold(0.0, f64::max);
        rows.push(TauRow {
            case: label.clone(),
            phi: *phi,
            n_ss: case.n_ss,
            tau,
            curve_taus: case.result.curve_taus.clone(),
            tau_ratio_vs_open: tau / reference,
            max_curve_deviation: max_dev,
        });
    }
    let mut out = RunOutputs::new(output_dir(&args.common, &cfg, "regression"));
    out.stage("regression_curves.csv", csv);
    out.stage_json(
        "tau.json",
        &TauTable {
            t_ref: r.t_ref,
            initial_photons: r.initial_photons.clone(),
            dims: cfg.dims,
            cases: rows,
        },
    )?;
    finish(out, "regression", &cfg, None, timer)
}
