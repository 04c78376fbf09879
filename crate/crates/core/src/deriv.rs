//! Broadband trains from vanishing profile derivatives.
//!
//! For an antisymmetric train `{Δ₁ … Δₙ, 0, −Δₙ … −Δ₁}` of `N = 2n + 1`
//! pulses the `n + 1` unknowns `(Ω; Δ₁ … Δₙ)` are fixed by
//!
//! ```text
//! P(ε = 0) = p,    ∂ᵏP/∂εᵏ |ε=0 = 0   (k = 1 … n)
//! ```
//!
//! For `p = 1` that system is degenerate. The diagonal element `a(ε)` of an
//! antisymmetric train is real at `δ = 0`, so `P(0) = 1` is one condition
//! and forces `∂P/∂ε = 0`; the roots form a continuum. The `p = 1` residuals
//! are therefore taken on the amplitude instead,
//!
//! ```text
//! a(0) = 0,    (1/k!) ∂ᵏa/∂εᵏ |ε=0 = 0   (k = 1 … n)
//! ```
//!
//! which isolates the roots and gives `1 − P = a² = O(ε^(2n+2))`. The
//! amplitude residuals are Taylor coefficients so that rounded parameter
//! sets are judged on a common scale across orders.
//!
//! The system has many roots. [`solve`] runs a multistart
//! Levenberg–Marquardt search and returns every distinct root it converges
//! to, least total pulse area first.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::optim::{levenberg_marquardt, LmOptions};
use crate::su2::{
    probability_derivative, train_propagator, transition_probability, ErrorPoint, FiniteDiff,
    PulseTrain, Symmetry,
};

/// Upper end of the Rabi-frequency search box (rad per unit duration).
pub const MAX_RABI: f64 = 2.0 * PI;
/// Half-width of the detuning search box (rad per unit duration).
pub const MAX_DETUNING: f64 = 2.0 * PI;
/// Distance below which two canonical solutions are the same root.
pub const DEDUP_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivProblem {
    /// Target transition probability `p ∈ (0, 1]`.
    pub target_p: f64,
    /// Free detunings `n`; the train has `2n + 1` pulses.
    pub n_free: usize,
    /// Largest accepted residual magnitude.
    pub tolerance: f64,
}

impl DerivProblem {
    pub fn new(target_p: f64, n_free: usize, tolerance: f64) -> Result<Self> {
        let prob = Self {
            target_p,
            n_free,
            tolerance,
        };
        prob.check()?;
        Ok(prob)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.target_p > 0.0 && self.target_p <= 1.0) {
            return invalid(format!(
                "target probability {} outside (0, 1]",
                self.target_p
            ));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return invalid(format!("tolerance {} must be positive", self.tolerance));
        }
        Ok(())
    }

    pub fn train_len(&self) -> usize {
        2 * self.n_free + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivSolution {
    pub rabi: f64,
    /// Free detunings `Δ₁ … Δₙ`, canonicalized to `Δ₁ ≥ 0`.
    pub detunings: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Nominal on-resonance area `N·Ω·T`.
    pub total_area: f64,
}

impl DerivSolution {
    pub fn train(&self) -> Result<PulseTrain> {
        antisymmetric_train(self.rabi, &self.detunings)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

fn antisymmetric_train(rabi: f64, free: &[f64]) -> Result<PulseTrain> {
    PulseTrain::from_free(rabi, free, 2 * free.len() + 1, Symmetry::Antisymmetric)
}

/// Residual vector for `(rabi; detunings)`: `[P(0) − p, ∂P/∂ε, …, ∂ⁿP/∂εⁿ]`
/// at `ε = 0`, or the Taylor coefficients `[a(0), a′(0), …, a⁽ⁿ⁾(0)/n!]`
/// when `p = 1`.
pub fn build_residuals(rabi: f64, detunings: &[f64], prob: &DerivProblem) -> Result<Vec<f64>> {
    if !(rabi > 0.0 && rabi.is_finite()) {
        return invalid(format!("Rabi frequency {rabi} must be positive"));
    }
    if detunings.len() != prob.n_free {
        return invalid(format!(
            "expected {} free detunings, got {}",
            prob.n_free,
            detunings.len()
        ));
    }
    let train = antisymmetric_train(rabi, detunings)?;
    let mut residuals = Vec::with_capacity(prob.n_free + 1);
    if prob.target_p == 1.0 {
        let amplitude = |eps: f64| Ok(train_propagator(&train, &ErrorPoint::rabi(eps))?.a.re);
        residuals.push(amplitude(0.0)?);
        let fd = FiniteDiff::default();
        let mut factorial = 1.0;
        for order in 1..=prob.n_free {
            factorial *= order as f64;
            residuals.push(fd.derivative(amplitude, 0.0, order)? / factorial);
        }
    } else {
        residuals.push(transition_probability(&train, &ErrorPoint::NONE)? - prob.target_p);
        for order in 1..=prob.n_free {
            residuals.push(probability_derivative(&train, order, &ErrorPoint::NONE)?);
        }
    }
    Ok(residuals)
}

/// `Ω > 0` and the first non-zero detuning positive. The global sign flip
/// of the detunings leaves the whole profile unchanged.
fn canonicalize(params: &mut [f64]) {
    params[0] = params[0].abs();
    if let Some(&lead) = params[1..].iter().find(|d| **d != 0.0) {
        if lead < 0.0 {
            params[1..].iter_mut().for_each(|d| *d = -*d);
        }
    }
}

fn in_box(params: &[f64]) -> bool {
    params[0] > 0.0 && params[0] <= MAX_RABI && params[1..].iter().all(|d| d.abs() <= MAX_DETUNING)
}

/// Multistart root search. Starting points are drawn uniformly from
/// `Ω ∈ (0, 2π]`, `Δₖ ∈ [−2π, 2π]`; the result is deterministic for a
/// given `rng_seed`.
pub fn solve(prob: &DerivProblem, seeds: usize, rng_seed: u64) -> Result<Vec<DerivSolution>> {
    prob.check()?;
    if seeds == 0 {
        return invalid("at least one seed is required");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let starts: Vec<Vec<f64>> = (0..seeds)
        .map(|_| {
            let mut x = Vec::with_capacity(prob.n_free + 1);
            x.push(MAX_RABI * (1.0 - rng.random::<f64>()));
            x.extend((0..prob.n_free).map(|_| rng.random_range(-MAX_DETUNING..=MAX_DETUNING)));
            x
        })
        .collect();

    let opts = LmOptions::default();
    let candidates: Vec<Option<Vec<f64>>> = starts
        .par_iter()
        .map(|x0| {
            let fit = levenberg_marquardt(
                |x| build_residuals(x[0].abs(), &x[1..], prob).ok(),
                x0,
                &opts,
            )?;
            let converged = fit.max_residual() <= prob.tolerance;
            let mut x = fit.x;
            canonicalize(&mut x);
            (converged && in_box(&x)).then_some(x)
        })
        .collect();

    let mut solutions: Vec<DerivSolution> = Vec::new();
    for x in candidates.into_iter().flatten() {
        let duplicate = solutions.iter().any(|s| {
            let dist = (s.rabi - x[0]).abs().max(
                s.detunings
                    .iter()
                    .zip(&x[1..])
                    .fold(0.0, |m, (a, b)| m.max((a - b).abs())),
            );
            dist <= DEDUP_DISTANCE
        });
        if duplicate {
            continue;
        }
        let residuals = build_residuals(x[0], &x[1..], prob)?;
        if residuals.iter().any(|r| r.abs() > prob.tolerance) {
            continue;
        }
        solutions.push(DerivSolution {
            rabi: x[0],
            detunings: x[1..].to_vec(),
            residuals,
            total_area: prob.train_len() as f64 * x[0],
        });
    }
    solutions.sort_by(|a, b| a.total_area.total_cmp(&b.total_area));
    Ok(solutions)
}
