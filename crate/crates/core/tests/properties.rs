use std::f64::consts::{PI, TAU};

use kerrfb::analysis::{
    phi_sweep, regression_analysis, switching_stats, unwrap, SweepOptions,
};
use kerrfb::dynamics::{integrate, lindblad_rhs, IntegratorConfig};
use kerrfb::models::{
    build_closed_loop, build_open_loop, effective_kappa, slh_series_check, ClosedLoopOptions,
};
use kerrfb::ops::{destroy, embed, expectation, fock_state, CsrMatrix, Operator};
use kerrfb::trajectories::{run_ensemble, run_trajectory, TrajectoryConfig};
use kerrfb::{CavityParams, Complex64 as C64, DensityMatrix, HilbertSpec, LindbladModel, PaperDefaults};
use ndarray::Array2;
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn dense(n: usize) -> impl Strategy<Value = Array2<C64>> {
    prop::collection::vec(c64(), n * n)
        .prop_map(move |v| Array2::from_shape_vec((n, n), v).unwrap())
}

fn density(n: usize) -> impl Strategy<Value = DensityMatrix> {
    dense(n).prop_map(move |g| {
        let mut rho = g.dot(&g.t().mapv(|v| v.conj()));
        let tr: C64 = rho.diag().sum();
        rho.mapv_inplace(|v| v / tr);
        DensityMatrix::new(HilbertSpec::single(n).unwrap(), rho).unwrap()
    })
}

fn cavity() -> impl Strategy<Value = CavityParams> {
    (
        prop::collection::vec(1.0..100.0f64, 3),
        -300.0..300.0f64,
        -40.0..40.0f64,
        c64(),
    )
        .prop_map(|(parts, delta, chi, beta)| CavityParams {
            kappa_total: parts.iter().sum(),
            kappa_parts: parts,
            delta,
            chi,
            beta: 3.0 * beta,
        })
}

fn controller() -> impl Strategy<Value = CavityParams> {
    (1.0..100.0f64, -200.0..200.0f64, -30.0..30.0f64).prop_map(|(k, delta, chi)| CavityParams {
        kappa_total: k,
        kappa_parts: vec![k],
        delta,
        chi,
        beta: C64::new(0.0, 0.0),
    })
}

fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn truncated_commutator_has_exact_structure(d in 2usize..16) {
        let a = destroy(d).unwrap();
        let c = a.commutator(&a.adjoint()).unwrap();
        for i in 0..d {
            for j in 0..d {
                let expected = match (i == j, i == d - 1) {
                    (true, true) => -((d - 1) as f64),
                    (true, false) => 1.0,
                    _ => 0.0,
                };
                // off-diagonal zeros are exact; sqrt products on the diagonal round
                let v = c.get(i, j);
                if i == j {
                    prop_assert!((v - C64::new(expected, 0.0)).norm() <= 1e-13 * d as f64, "{:?} at {}", v, i);
                } else {
                    prop_assert_eq!(v, C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn embed_repeats_spectrum(dims in (2usize..=4, 2usize..=4), mode in 0usize..2, g in dense(4)) {
        let space = HilbertSpec::new(vec![dims.0, dims.1]).unwrap();
        let d = space.mode_dim(mode).unwrap();
        let h = Array2::from_shape_fn((d, d), |(i, j)| g[[i, j]] + g[[j, i]].conj());
        let single = HilbertSpec::single(d).unwrap();
        let op = Operator::new(single.clone(), CsrMatrix::from_dense(h.view())).unwrap();
        let big = embed(&op, mode, &space).unwrap();
        let eig_small = DensityMatrix::from_matrix(single, h).unwrap().eigenvalues().unwrap();
        let eig_big = DensityMatrix::from_matrix(space.clone(), big.to_dense()).unwrap().eigenvalues().unwrap();
        let reps = space.total_dim() / d;
        let mut expected: Vec<f64> = eig_small.iter().flat_map(|e| std::iter::repeat_n(*e, reps)).collect();
        expected.sort_by(f64::total_cmp);
        for (x, y) in eig_big.iter().zip(&expected) {
            prop_assert!((x - y).abs() < 1e-12, "{:?} vs {:?}", eig_big, expected);
        }
    }

    #[test]
    fn identity_expectation_is_trace(rho in density(6)) {
        let id = Operator::identity(rho.space());
        let e = expectation(&rho, &id).unwrap();
        prop_assert!((e - rho.trace()).norm() < 1e-14);
    }

    #[test]
    fn sparse_dense_products_match_dense(a in dense(20), m in dense(20), keep in prop::collection::vec(prop::bool::weighted(0.3), 400)) {
        let sparse_a = a.indexed_iter().map(|((i, j), v)| if keep[i * 20 + j] { *v } else { C64::new(0.0, 0.0) });
        let a = Array2::from_shape_vec((20, 20), sparse_a.collect()).unwrap();
        let s = CsrMatrix::from_dense(a.view());
        let left = s.mul_dense(m.view()) - a.dot(&m);
        let right = s.dense_mul(m.view()) - m.dot(&a);
        prop_assert!(max_abs(&left) < 1e-12);
        prop_assert!(max_abs(&right) < 1e-12);
    }

    #[test]
    fn rhs_is_linear(p in cavity(), r1 in density(6), r2 in density(6), x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let model = build_open_loop(&p, 6).unwrap();
        let space = model.space.clone();
        let mix = DensityMatrix::from_matrix(space, r1.data() * C64::new(x, 0.0) + r2.data() * C64::new(y, 0.0)).unwrap();
        let lhs = lindblad_rhs(&mix, &model).unwrap();
        let a = lindblad_rhs(&r1, &model).unwrap();
        let b = lindblad_rhs(&r2, &model).unwrap();
        let rhs = a.data() * C64::new(x, 0.0) + b.data() * C64::new(y, 0.0);
        let scale = max_abs(&rhs).max(1.0);
        prop_assert!(max_abs(&(lhs.data() - &rhs)) < 1e-12 * scale);
    }

    #[test]
    fn rhs_is_traceless_and_hermitian(p in cavity(), rho in density(8)) {
        let model = build_open_loop(&p, 8).unwrap();
        let d = lindblad_rhs(&rho, &model).unwrap();
        prop_assert!(d.trace().norm() < 1e-10);
        prop_assert!(d.hermiticity_error() < 1e-10);
    }

    #[test]
    fn static_loop_rate_stays_in_range(p in cavity(), phi in -10.0..10.0f64) {
        let (k1, k2, k3) = (p.kappa_parts[0], p.kappa_parts[1], p.kappa_parts[2]);
        let k = effective_kappa(&p, phi).unwrap();
        let hi = k3 + (k1.sqrt() + k2.sqrt()).powi(2);
        prop_assert!(k >= k3 - 1e-9 && k <= hi + 1e-9, "{k} outside [{k3}, {hi}]");
    }

    #[test]
    fn unwrapped_phases_step_less_than_pi(raw in prop::collection::vec(-PI..PI, 2..200)) {
        let out = unwrap(&raw);
        for w in out.windows(2) {
            prop_assert!((w[1] - w[0]).abs() <= PI + 1e-12);
        }
        for (a, b) in raw.iter().zip(&out) {
            let k = (b - a) / TAU;
            prop_assert!((k - k.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn regression_curves_are_one_at_reference(
        amps in prop::collection::vec(0.1..5.0f64, 1..4),
        rate in 0.1..3.0f64,
        k_ref in 1usize..50,
        frac in 0.0..1.0f64,
    ) {
        let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.02).collect();
        let series: Vec<Vec<f64>> = amps
            .iter()
            .map(|a| times.iter().map(|t| 2.0 + a * (-rate * t).exp()).collect())
            .collect();
        let on_grid = regression_analysis(&times, &series, 2.0, times[k_ref]).unwrap();
        for c in 0..series.len() {
            prop_assert_eq!(on_grid.evaluate(c, times[k_ref]), 1.0);
        }
        let t_ref = times[k_ref] + frac * 0.02;
        let off_grid = regression_analysis(&times, &series, 2.0, t_ref).unwrap();
        prop_assert!(off_grid.tau > 0.0);
        for c in 0..series.len() {
            prop_assert!((off_grid.evaluate(c, t_ref) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn switching_stats_rescale_with_time(
        levels in prop::collection::vec(any::<bool>(), 5..60),
        c in 0.1..10.0f64,
    ) {
        let photons: Vec<f64> = levels.iter().flat_map(|&h| std::iter::repeat_n(if h { 9.0 } else { 0.5 }, 3)).collect();
        let times: Vec<f64> = (0..photons.len()).map(|k| k as f64 * 0.1).collect();
        let scaled: Vec<f64> = times.iter().map(|t| t * c).collect();
        let a = switching_stats(&photons, &times, 2.5, 6.0).unwrap();
        let b = switching_stats(&photons, &scaled, 2.5, 6.0).unwrap();
        prop_assert_eq!(a.n_transitions_up, b.n_transitions_up);
        prop_assert_eq!(a.n_transitions_down, b.n_transitions_down);
        prop_assert!(a.n_transitions_up.abs_diff(a.n_transitions_down) <= 1);
        prop_assert_eq!(&a.levels, &b.levels);
        prop_assert!((a.switching_rate - c * b.switching_rate).abs() <= 1e-9 * a.switching_rate.max(1.0));
        for (x, y) in a.dwell_low.iter().chain(&a.dwell_high).zip(b.dwell_low.iter().chain(&b.dwell_high)) {
            prop_assert!((x * c - y).abs() <= 1e-9 * y.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn slh_composition_matches_builder(c in controller(), p in cavity(), phi in 0.0..TAU, dims in (2usize..5, 2usize..5)) {
        let r = slh_series_check(&c, &p, phi, dims).unwrap();
        prop_assert!(r.matches, "{:?}", r);
    }

    #[test]
    fn closed_loop_builder_is_deterministic(c in controller(), p in cavity(), phi in 0.0..TAU) {
        let a = build_closed_loop(&c, &p, phi, (3, 4), ClosedLoopOptions::default()).unwrap();
        let b = build_closed_loop(&c, &p, phi, (3, 4), ClosedLoopOptions::default()).unwrap();
        prop_assert_eq!(&a.hamiltonian, &b.hamiltonian);
        prop_assert_eq!(&a.collapse_ops, &b.collapse_ops);
        prop_assert_eq!(a.model_hash(), b.model_hash());
    }
}

fn small_model(p: &CavityParams) -> LindbladModel {
    build_open_loop(p, 6).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn integration_preserves_state_properties(p in cavity(), rho in density(6)) {
        let model = small_model(&p);
        let rec = integrate(&rho, &model, &IntegratorConfig { t_max: 0.2, sample_every: 20, ..IntegratorConfig::default() }).unwrap();
        prop_assert!(rec.cumulative_trace_drift < 1e-6);
        let fin = &rec.final_state;
        prop_assert!(fin.hermiticity_error() < 1e-9);
        prop_assert!(fin.min_eigenvalue().unwrap() >= -1e-6);
        prop_assert!((fin.trace().re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trajectories_are_ordered_and_reproducible(p in cavity(), seed in any::<u64>()) {
        let model = small_model(&p);
        let psi0 = fock_state(&model.space, &[3]).unwrap();
        let cfg = TrajectoryConfig { seed, t_max: 0.3, sample_every: 10, ..TrajectoryConfig::default() };
        let a = run_trajectory(&psi0, &model, &cfg).unwrap();
        let b = run_trajectory(&psi0, &model, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        for w in a.jumps.windows(2) {
            prop_assert!(w[1].time > w[0].time);
        }
        prop_assert!(a.jumps.iter().all(|j| j.time >= 0.0 && j.time <= cfg.t_max));
        prop_assert!(a.final_state.is_normalized());
    }

    #[test]
    fn ensemble_is_independent_of_worker_count(p in cavity(), seed in any::<u64>(), workers in 2usize..5) {
        let model = small_model(&p);
        let psi0 = fock_state(&model.space, &[2]).unwrap();
        let cfg = TrajectoryConfig { seed, t_max: 0.1, sample_every: 10, ..TrajectoryConfig::default() };
        let one = run_ensemble(&psi0, &model, &cfg, 12, 1).unwrap();
        let many = run_ensemble(&psi0, &model, &cfg, 12, workers).unwrap();
        prop_assert_eq!(&one.record.observables, &many.record.observables);
        prop_assert_eq!(&one.standard_errors, &many.standard_errors);
        prop_assert_eq!(one.total_jumps, many.total_jumps);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn sweep_is_symmetric_under_grid_reordering(perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let grid: Vec<f64> = (0..6).map(|k| TAU * k as f64 / 6.0).collect();
        let shuffled: Vec<f64> = perm.iter().map(|&k| grid[k]).collect();
        let opts = SweepOptions::default();
        let (c, p) = (PaperDefaults::controller(), PaperDefaults::plant());
        let a = phi_sweep(&c, &p, &grid, (2, 6), &opts).unwrap();
        let b = phi_sweep(&c, &p, &shuffled, (2, 6), &opts).unwrap();
        for (k, &src) in perm.iter().enumerate() {
            prop_assert_eq!(&b[k], &a[src]);
        }
    }
}
