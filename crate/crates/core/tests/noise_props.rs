use std::f64::consts::PI;

use ppt_core::catalog::{builtin_fixtures, find};
use ppt_core::noise::{
    evolve_noisy, evolve_state, measure, peak_budget, readout_probability, simulate_profile,
    InitialState, NoiseModel,
};
use ppt_core::profile::GridSpec;
use ppt_core::su2::{transition_probability, ErrorPoint, PulseTrain, Symmetry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn noiseless_limit_matches_the_propagator() {
    let nm = NoiseModel::noiseless(1024);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let len = rng.random_range(1..=7);
        let det: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0) * PI).collect();
        let t = PulseTrain::from_detunings(
            rng.random_range(0.1..1.5) * PI,
            &det,
            1.0,
            Symmetry::General,
        )
        .unwrap();
        let e = ErrorPoint::new(rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0));
        let ideal = transition_probability(&t, &e).unwrap();
        let noisy = evolve_noisy(&t, &e, &nm, InitialState::Ground).unwrap();
        assert!((ideal - noisy).abs() < 1e-6, "{ideal} vs {noisy}");
    }
}

#[test]
fn populations_stay_physical() {
    // strong decoherence to make violations visible
    let nm = NoiseModel::new(2e-6, 3e-6, 0.0, 1, 100e-9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let det: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0) * PI).collect();
        let t = PulseTrain::from_detunings(
            rng.random_range(0.1..1.5) * PI,
            &det,
            1.0,
            Symmetry::General,
        )
        .unwrap();
        for start in [InitialState::Ground, InitialState::Excited] {
            let s = evolve_state(&t, &ErrorPoint::NONE, &nm, start).unwrap();
            assert!(s.max_trace_defect <= 1e-9);
            assert!((0.0..=1.0).contains(&s.ground) && (0.0..=1.0).contains(&s.excited));
            let (x, y) = s.coherence;
            assert!(x * x + y * y <= s.ground * s.excited + 1e-9);
        }
    }
}

#[test]
fn undriven_decay_follows_t1() {
    let nm = NoiseModel::default();
    let idle = PulseTrain::from_detunings(0.0, &[0.0; 10], 1.0, Symmetry::General).unwrap();
    let left = evolve_noisy(&idle, &ErrorPoint::NONE, &nm, InitialState::Excited).unwrap();
    let want = (-10.0 * nm.pulse_duration / nm.t1).exp();
    assert!((left - want).abs() < 1e-9, "{left} vs {want}");
}

#[test]
fn eleven_pulse_depression_is_small() {
    let fixtures = builtin_fixtures();
    let x11 = &find(&fixtures, "BB-X11-deriv").unwrap().train;
    let b = peak_budget(x11, &ErrorPoint::NONE, &NoiseModel::default()).unwrap();
    assert!(
        b.decoherence_loss() > 0.0 && b.decoherence_loss() < 0.01,
        "{b:?}"
    );
    assert!((b.readout_loss() - 0.0347 * (2.0 * b.after_decoherence - 1.0)).abs() < 1e-12);
}

#[test]
fn shot_noise_is_binomial() {
    let nm = NoiseModel::default();
    let q = readout_probability(1.0, nm.readout_error);
    let sigma = (q * (1.0 - q) / nm.shots as f64).sqrt();
    let inside = (0..1000)
        .filter(|&seed| (measure(1.0, &nm, seed).unwrap() - q).abs() <= 3.0 * sigma)
        .count();
    assert!(inside >= 990, "{inside}");
}

#[test]
fn three_pulse_noisy_peak() {
    let fixtures = builtin_fixtures();
    let x3 = &find(&fixtures, "BB-X3-deriv").unwrap().train;
    let nm = NoiseModel::default();
    let sim = simulate_profile(x3, &GridSpec::default_1d(), &nm, 1, "BB-X3-deriv").unwrap();
    assert!((0.94..=0.97).contains(&sim.peak()), "{}", sim.peak());
    let b = peak_budget(x3, &ErrorPoint::rabi(sim.peak_eps()), &nm).unwrap();
    assert!((0.94..=0.97).contains(&b.after_readout), "{b:?}");
    let again = simulate_profile(x3, &GridSpec::default_1d(), &nm, 1, "BB-X3-deriv").unwrap();
    assert_eq!(sim.measured.values, again.measured.values);
}
