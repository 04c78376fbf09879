use std::f64::consts::PI;

use ppt_core::deriv::{build_residuals, solve, DerivProblem, DEDUP_DISTANCE};
use ppt_core::su2::{train_propagator, transition_probability, ErrorPoint};

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn solutions_round_trip_through_the_propagator() {
    for (p, n) in [(1.0, 1), (0.5, 1), (1.0, 2), (0.5, 2)] {
        let prob = DerivProblem::new(p, n, 1e-10).unwrap();
        let sols = solve(&prob, 60, 3).unwrap();
        assert!(!sols.is_empty(), "p={p} n={n}");
        for s in &sols {
            let t = s.train().unwrap();
            assert_eq!(t.len(), 2 * n + 1);
            let r = build_residuals(t.rabi(), &t.free_detunings(), &prob).unwrap();
            assert!(r.iter().all(|v| v.abs() <= prob.tolerance), "{r:?}");
            let p0 = transition_probability(&t, &ErrorPoint::NONE).unwrap();
            assert!((p0 - p).abs() <= 1e-9);
            assert!(s.detunings[0] >= 0.0);
        }
        for (i, a) in sols.iter().enumerate() {
            for b in &sols[i + 1..] {
                let d: f64 = std::iter::once(a.rabi - b.rabi)
                    .chain(a.detunings.iter().zip(&b.detunings).map(|(x, y)| x - y))
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                assert!(d > DEDUP_DISTANCE);
            }
            assert!(sols.get(i + 1).is_none_or(|b| a.total_area <= b.total_area));
        }
    }
}

#[test]
fn flatness_order_grows_with_free_detunings() {
    for n in [1, 2, 3] {
        let prob = DerivProblem::new(1.0, n, 1e-10).unwrap();
        let sols = solve(&prob, 100, 5).unwrap();
        let t = sols[0].train().unwrap();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for k in 0..=20 {
            let eps = 10f64.powf(-3.0 + 2.0 * k as f64 / 20.0);
            // |a|² avoids the cancellation in 1 − |b|²
            let q = train_propagator(&t, &ErrorPoint::rabi(eps))
                .unwrap()
                .survival_probability();
            xs.push(eps.ln());
            ys.push(q.ln());
        }
        let s = slope(&xs, &ys);
        assert!(s >= 2.0 * n as f64 - 0.2, "n={n}: slope {s}");
    }
}

#[test]
fn caption_sets_are_recovered() {
    let prob = DerivProblem::new(0.5, 1, 1e-10).unwrap();
    let sols = solve(&prob, 200, 7).unwrap();
    assert!(sols.iter().any(
        |s| (s.rabi / PI - 0.7014).abs() < 2e-3 && (s.detunings[0] / PI - 1.1789).abs() < 2e-3
    ));
}
