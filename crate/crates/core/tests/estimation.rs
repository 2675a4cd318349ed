use sudest_core::estimate::{
    build_state, mle, mse_experiment, sample_outcomes, DataBlock, ExperimentConfig, MleOptions, StateFamily, Strategy,
};
use sudest_core::linalg::rng_stream;
use sudest_core::measurement::{optimal_povm, Povm};
use sudest_core::sud::Chart;

#[test]
fn mle_lands_within_five_sigma() {
    let chart = Chart::gell_mann(2).unwrap();
    let s = build_state(2, 1, StateFamily::Sic, 0).unwrap();
    let theta = [0.1, -0.05, 0.2];
    let povm = Povm::Optimal(optimal_povm(&s, &chart, &theta).unwrap());
    let big_n = 10_000;
    let radius = 5.0 / ((big_n * 2) as f64).sqrt();
    let mut inside = 0;
    for k in 0..100 {
        let out = sample_outcomes(&povm, &s, &chart, &theta, big_n, &mut rng_stream(91, k)).unwrap();
        let block = DataBlock::from_outcomes(s.clone(), povm.clone(), &out);
        let res = mle(&[block], &chart, &theta, &MleOptions::default()).unwrap();
        if res.converged && res.theta.iter().zip(&theta).all(|(a, b)| (a - b).abs() <= radius) {
            inside += 1;
        }
    }
    assert!(inside >= 99, "{inside}/100 within the five-sigma box");
}

#[test]
fn relabelling_outcomes_leaves_the_estimate_unchanged() {
    let chart = Chart::gell_mann(2).unwrap();
    let s = build_state(2, 2, StateFamily::Mub, 0).unwrap();
    let theta = [0.0; 3];
    let povm = Povm::Optimal(optimal_povm(&s, &chart, &theta).unwrap());
    let out = sample_outcomes(&povm, &s, &chart, &theta, 2000, &mut rng_stream(5, 0)).unwrap();
    let a = mle(
        &[DataBlock::from_outcomes(s.clone(), povm.clone(), &out)],
        &chart,
        &theta,
        &MleOptions::default(),
    )
    .unwrap();

    // Two copies of the same measurement, each holding part of the data, is a
    // relabelling of the outcome space that keeps every probability paired
    // with its count.
    let (first, second) = out.split_at(out.len() / 3);
    let blocks = [
        DataBlock::from_outcomes(s.clone(), povm.clone(), second),
        DataBlock::from_outcomes(s.clone(), povm.clone(), first),
    ];
    let b = mle(&blocks, &chart, &theta, &MleOptions::default()).unwrap();
    for (x, y) in a.theta.iter().zip(&b.theta) {
        assert!((x - y).abs() < 1e-6);
    }
}

fn run(strategy: Strategy, family: StateFamily, n: usize, seed: u64) -> sudest_core::estimate::MseReport {
    let mut cfg = ExperimentConfig::new(2, n, 5000, 200);
    cfg.strategy = strategy;
    cfg.family = family;
    cfg.seed = seed;
    mse_experiment(&cfg).unwrap().report
}

#[test]
fn two_step_tracks_the_oracle_protocol() {
    let oracle = run(Strategy::Optimal, StateFamily::Mub, 1, 12);
    let adaptive = run(Strategy::TwoStep, StateFamily::Mub, 1, 12);
    let rel = (adaptive.n_times_trace - oracle.n_times_trace).abs() / oracle.n_times_trace;
    assert!(rel <= 0.25, "two-step {} vs oracle {}", adaptive.n_times_trace, oracle.n_times_trace);
}

#[test]
fn random_measurement_costs_a_factor_two() {
    let r = run(Strategy::Random, StateFamily::Mub, 1, 13);
    assert!(r.ratio > 1.6 && r.ratio < 2.4, "ratio {}", r.ratio);
}

#[test]
fn mse_respects_the_bound_up_to_noise() {
    for n in [1, 3] {
        let r = run(Strategy::Optimal, StateFamily::Sic, n, 40 + n as u64);
        // 200 trials: a 15% sampling margin below the Cramér–Rao value.
        assert!(r.n_times_trace >= 0.85 * r.bound, "n={n}: {}", r.ratio);
        assert_eq!(r.excluded, 0);
    }
}

#[test]
fn mse_report_is_psd_and_symmetric() {
    let r = run(Strategy::Optimal, StateFamily::Mub, 2, 3);
    let m = nalgebra::DMatrix::from_fn(3, 3, |i, j| r.mse_matrix[i][j]);
    assert!((&m - m.transpose()).norm() < 1e-15);
    assert!(m.symmetric_eigenvalues().iter().all(|&e| e >= -1e-15));
    assert!((r.bound - 0.5625).abs() < 1e-15);
}
