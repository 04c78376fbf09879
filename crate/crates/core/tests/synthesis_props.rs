use ppt_core::catalog::{builtin_fixtures, find};
use ppt_core::su2::{probability_derivative, ErrorPoint};
use ppt_core::synthesis::{cost_bb, minimize, ProfileClass, SynthesisProblem, CENTER_SLOPE_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run_with_threads(prob: &SynthesisProblem, threads: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let run = pool.install(|| minimize(prob, 24, 9)).unwrap();
    format!("{:?}", run.results)
}

#[test]
fn minimize_is_deterministic_across_thread_counts() {
    let prob = SynthesisProblem::new(ProfileClass::Broadband, 1.0, 4, 0.2, 1e-4).unwrap();
    let one = run_with_threads(&prob, 1);
    assert_eq!(one, run_with_threads(&prob, 1));
    assert_eq!(one, run_with_threads(&prob, 3));
}

/// With α set to the fixture's own maximum deviation on the cost grid the
/// penalty is zero, so every perturbation raises it.
#[test]
fn perturbing_an_exact_fit_raises_the_cost() {
    let fixtures = builtin_fixtures();
    let x4 = &find(&fixtures, "BB-X4").unwrap().train;
    let params: Vec<f64> = std::iter::once(x4.rabi())
        .chain(x4.free_detunings())
        .collect();
    let probe = SynthesisProblem::new(ProfileClass::Broadband, 1.0, 4, 0.2, 1e-4).unwrap();
    let grid_dev = (0..=4)
        .map(|i| -0.2 + 0.1 * i as f64)
        .map(|e| {
            (ppt_core::su2::transition_probability(x4, &ErrorPoint::rabi(e)).unwrap() - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let prob = SynthesisProblem::new(ProfileClass::Broadband, 1.0, 4, 0.2, grid_dev).unwrap();
    let base = cost_bb(&params, &prob).unwrap();
    assert!(base < 1e-24, "{base}");
    assert!(cost_bb(&params, &probe).unwrap() > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let moved: Vec<f64> = params
            .iter()
            .map(|p| p + rng.random_range(-1e-3..1e-3))
            .collect();
        assert!(cost_bb(&moved, &prob).unwrap() > base);
    }
}

#[test]
fn narrowband_half_results_have_a_flat_centre() {
    let prob = SynthesisProblem::new(ProfileClass::Narrowband, 0.5, 7, 0.9, 1e-4).unwrap();
    let run = minimize(&prob, 40, 4).unwrap();
    assert!(!run.results.is_empty());
    for r in &run.results {
        assert!(r.validated);
        let slope = probability_derivative(&r.train, 1, &ErrorPoint::NONE).unwrap();
        assert!(slope.abs() <= CENTER_SLOPE_TOL, "{slope}");
    }
}

#[test]
fn results_are_ranked_by_area() {
    let prob = SynthesisProblem::new(ProfileClass::Narrowband, 1.0, 7, 0.8, 1e-4).unwrap();
    let run = minimize(&prob, 40, 1).unwrap();
    assert_eq!(run.diagnostics.validated, run.results.len());
    for w in run.results.windows(2) {
        assert!(w[0].train.total_area() <= w[1].train.total_area() + 1e-12);
    }
}
