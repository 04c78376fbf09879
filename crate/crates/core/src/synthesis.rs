//! Cost-function synthesis of broadband, narrowband, passband and
//! doubly compensated trains.
//!
//! Every class scores a train by how far the worst sampled deviation sits
//! from the admissible error level `α`:
//!
//! ```text
//! BB   [max |p(ε) − p| − α]²                       ε ∈ [−ε₀, ε₀]
//! NB   [p(0) − p]² + p′(0)² + [max p(ε) − α]²      |ε| ∈ [ε₀, 1]
//! PB   BB term + [max p(ε) − α]²                   |ε| ∈ [1 − ε₀, 1]
//! 2D   [max |p(ε, δ) − p| − α]²                    ε ∈ [−ε₀, ε₀], δ ∈ [−δ₀, δ₀]
//! ```
//!
//! The `p′(0)` term is dropped for `p = 1`, where it vanishes identically.
//! [`minimize`] runs BFGS on a log-sum-exp smoothed max with a decreasing
//! temperature, polishes on a denser grid, and keeps only trains that pass
//! [`validate`] on a `1e−3` grid.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::optim::{bfgs, BfgsOptions};
use crate::profile::{band_from_samples, BandMode};
use crate::su2::{probability_derivative, train_propagator, ErrorPoint, PulseTrain, Symmetry};

/// ε spacing of the cost grids.
pub const COST_GRID_STEP: f64 = 0.1;
/// ε spacing of the polishing grid.
pub const POLISH_GRID_STEP: f64 = 0.02;
/// The polish aims below `α` by this factor to leave room between samples.
pub const POLISH_MARGIN: f64 = 0.9;
/// ε spacing of the validation grid.
pub const VALIDATION_STEP: f64 = 1e-3;
/// Largest `|p′(0)|` accepted from [`minimize`] for narrowband `p < 1`.
pub const CENTER_SLOPE_TOL: f64 = 1e-6;
/// Results closer than this in every parameter are the same solution.
pub const DEDUP_DISTANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProfileClass {
    Broadband,
    Narrowband,
    Passband,
    DoubleComp2D,
}

impl ProfileClass {
    pub fn name(self) -> &'static str {
        match self {
            ProfileClass::Broadband => "bb",
            ProfileClass::Narrowband => "nb",
            ProfileClass::Passband => "pb",
            ProfileClass::DoubleComp2D => "2d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb" | "broadband" => Some(ProfileClass::Broadband),
            "nb" | "narrowband" => Some(ProfileClass::Narrowband),
            "pb" | "passband" => Some(ProfileClass::Passband),
            "2d" | "doublecomp2d" => Some(ProfileClass::DoubleComp2D),
            _ => None,
        }
    }

    /// Symmetry used when none is requested.
    pub fn default_symmetry(self, target_p: f64) -> Symmetry {
        match self {
            ProfileClass::Broadband if target_p == 1.0 => Symmetry::Antisymmetric,
            ProfileClass::Broadband | ProfileClass::Passband => Symmetry::General,
            ProfileClass::Narrowband => Symmetry::Symmetric,
            ProfileClass::DoubleComp2D => Symmetry::Antisymmetric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisProblem {
    pub class: ProfileClass,
    pub target_p: f64,
    pub len: usize,
    /// Bandwidth `ε₀`.
    pub eps0: f64,
    /// Error level `α`.
    pub alpha: f64,
    pub symmetry: Symmetry,
    /// Detuning half-span `δ₀` of the 2D class, rad per unit duration.
    pub delta0: f64,
}

impl SynthesisProblem {
    /// Problem with the class default symmetry and `δ₀ = ε₀·π`.
    pub fn new(
        class: ProfileClass,
        target_p: f64,
        len: usize,
        eps0: f64,
        alpha: f64,
    ) -> Result<Self> {
        let prob = Self {
            class,
            target_p,
            len,
            eps0,
            alpha,
            symmetry: class.default_symmetry(target_p),
            delta0: eps0 * PI,
        };
        prob.check()?;
        Ok(prob)
    }

    pub fn with_symmetry(mut self, symmetry: Symmetry) -> Result<Self> {
        self.symmetry = symmetry;
        self.check()?;
        Ok(self)
    }

    pub fn with_delta0(mut self, delta0: f64) -> Result<Self> {
        self.delta0 = delta0;
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.target_p > 0.0 && self.target_p <= 1.0) {
            return invalid(format!(
                "target probability {} outside (0, 1]",
                self.target_p
            ));
        }
        if self.len < 2 {
            return invalid(format!("train length {} must be at least 2", self.len));
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return invalid(format!("bandwidth {} outside (0, 1)", self.eps0));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return invalid(format!("error level {} must be positive", self.alpha));
        }
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return invalid(format!("detuning span {} must be positive", self.delta0));
        }
        if self.class == ProfileClass::DoubleComp2D && self.symmetry != Symmetry::Antisymmetric {
            return invalid("double compensation trains are antisymmetric");
        }
        Ok(())
    }

    /// Length of the parameter vector `[Ω, free detunings…]`.
    pub fn n_params(&self) -> usize {
        1 + self.symmetry.free_count(self.len)
    }

    /// Unit-duration train for `[Ω, free detunings…]`; the sign of `Ω` is
    /// irrelevant to the profile and dropped.
    pub fn train(&self, params: &[f64]) -> Result<PulseTrain> {
        if params.len() != self.n_params() {
            return invalid(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            ));
        }
        PulseTrain::from_free(params[0].abs(), &params[1..], self.len, self.symmetry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeedDiagnostics {
    pub seed_index: usize,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub train: PulseTrain,
    /// Exact cost on the standard grid.
    pub cost_value: f64,
    pub validated: bool,
    /// Largest `ε₀′` with `|p − target| ≤ α` on `[−ε₀′, ε₀′]`.
    pub measured_bb_band: f64,
    /// Smallest `ε₀′` with `p ≤ α` for all `|ε| ≥ ε₀′`.
    pub measured_nb_band: f64,
    pub diagnostics: SeedDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunDiagnostics {
    pub seeds: usize,
    pub validated: usize,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisRun {
    pub results: Vec<SynthesisResult>,
    pub diagnostics: RunDiagnostics,
}

/// Sample points of one cost evaluation.
struct CostGrid {
    inner: Vec<f64>,
    wings: Vec<f64>,
    deltas: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step - 1e-9).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

fn wing_start(prob: &SynthesisProblem) -> f64 {
    match prob.class {
        ProfileClass::Passband => 1.0 - prob.eps0,
        _ => prob.eps0,
    }
}

impl CostGrid {
    fn new(prob: &SynthesisProblem, step: f64) -> Self {
        let inner = linspace(-prob.eps0, prob.eps0, step);
        let wings = match prob.class {
            ProfileClass::Narrowband | ProfileClass::Passband => {
                let half = linspace(wing_start(prob), 1.0, step);
                half.iter()
                    .rev()
                    .map(|e| -e)
                    .chain(half.iter().copied())
                    .collect()
            }
            _ => Vec::new(),
        };
        let deltas = match prob.class {
            ProfileClass::DoubleComp2D => {
                linspace(-prob.delta0, prob.delta0, step * prob.delta0 / prob.eps0)
            }
            _ => vec![0.0],
        };
        Self {
            inner,
            wings,
            deltas,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Reduce {
    Max,
    /// Log-sum-exp at the given temperature.
    Soft(f64),
}

impl Reduce {
    fn apply(self, values: &[f64]) -> f64 {
        let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match self {
            Reduce::Max => m,
            Reduce::Soft(tau) => {
                m + tau
                    * values
                        .iter()
                        .map(|v| ((v - m) / tau).exp())
                        .sum::<f64>()
                        .ln()
            }
        }
    }
}

fn prob_at(train: &PulseTrain, eps: f64, delta: f64) -> Result<f64> {
    Ok(train_propagator(train, &ErrorPoint::new(eps, delta))?.transition_probability())
}

fn cost_train(
    train: &PulseTrain,
    prob: &SynthesisProblem,
    grid: &CostGrid,
    alpha: f64,
    reduce: Reduce,
) -> Result<f64> {
    let p = prob.target_p;
    let mut cost = 0.0;
    if prob.class != ProfileClass::Narrowband {
        let mut dev = Vec::with_capacity(grid.inner.len() * grid.deltas.len());
        for &d in &grid.deltas {
            for &e in &grid.inner {
                dev.push((prob_at(train, e, d)? - p).abs());
            }
        }
        cost += (reduce.apply(&dev) - alpha).powi(2);
    }
    if !grid.wings.is_empty() {
        let wing = grid
            .wings
            .iter()
            .map(|&e| prob_at(train, e, 0.0))
            .collect::<Result<Vec<_>>>()?;
        cost += (reduce.apply(&wing) - alpha).powi(2);
    }
    if prob.class == ProfileClass::Narrowband {
        cost += (prob_at(train, 0.0, 0.0)? - p).powi(2);
        if p != 1.0 {
            cost += probability_derivative(train, 1, &ErrorPoint::NONE)?.powi(2);
        }
    }
    Ok(cost)
}

fn cost_checked(params: &[f64], prob: &SynthesisProblem, class: ProfileClass) -> Result<f64> {
    prob.check()?;
    if prob.class != class {
        return invalid(format!(
            "{} cost called for a {} problem",
            class.name(),
            prob.class.name()
        ));
    }
    let train = prob.train(params)?;
    cost_train(
        &train,
        prob,
        &CostGrid::new(prob, COST_GRID_STEP),
        prob.alpha,
        Reduce::Max,
    )
}

/// Broadband cost on the standard `ε` grid.
pub fn cost_bb(params: &[f64], prob: &SynthesisProblem) -> Result<f64> {
    cost_checked(params, prob, ProfileClass::Broadband)
}

/// Narrowband cost on the standard `ε` grid.
pub fn cost_nb(params: &[f64], prob: &SynthesisProblem) -> Result<f64> {
    cost_checked(params, prob, ProfileClass::Narrowband)
}

/// Passband cost on the standard `ε` grid.
pub fn cost_pb(params: &[f64], prob: &SynthesisProblem) -> Result<f64> {
    cost_checked(params, prob, ProfileClass::Passband)
}

/// Double-compensation cost on the standard `(ε, δ)` lattice.
pub fn cost_2d(params: &[f64], prob: &SynthesisProblem) -> Result<f64> {
    cost_checked(params, prob, ProfileClass::DoubleComp2D)
}

/// Class-dispatched cost on the standard grid.
pub fn cost(params: &[f64], prob: &SynthesisProblem) -> Result<f64> {
    cost_checked(params, prob, prob.class)
}

/// Check the class predicate on the `1e−3` validation grid.
pub fn validate(train: &PulseTrain, prob: &SynthesisProblem) -> Result<SynthesisResult> {
    validate_with_step(train, prob, VALIDATION_STEP)
}

pub fn validate_with_step(
    train: &PulseTrain,
    prob: &SynthesisProblem,
    step: f64,
) -> Result<SynthesisResult> {
    prob.check()?;
    if train.len() != prob.len {
        return invalid(format!(
            "train has {} pulses, problem expects {}",
            train.len(),
            prob.len
        ));
    }
    if !(step > 0.0 && step < COST_GRID_STEP) {
        return invalid(format!(
            "validation step {step} must be below {COST_GRID_STEP}"
        ));
    }
    let p = prob.target_p;
    let eps = linspace(-1.0, 1.0, step);
    let values = eps
        .iter()
        .map(|&e| prob_at(train, e, 0.0))
        .collect::<Result<Vec<_>>>()?;
    // a hair of slack so a grid point that lands on ±ε₀ in floating point
    // is counted on the intended side
    let slack = 1e-9;
    let inner_dev = eps
        .iter()
        .zip(&values)
        .filter(|(e, _)| e.abs() <= prob.eps0 + slack)
        .fold(0.0, |m: f64, (_, v)| m.max((v - p).abs()));
    let wing_max = eps
        .iter()
        .zip(&values)
        .filter(|(e, _)| e.abs() >= wing_start(prob) - slack)
        .fold(0.0, |m: f64, (_, v)| m.max(*v));

    let validated = match prob.class {
        ProfileClass::Broadband => inner_dev <= prob.alpha,
        ProfileClass::Narrowband => {
            wing_max <= prob.alpha && (prob_at(train, 0.0, 0.0)? - p).abs() <= prob.alpha
        }
        ProfileClass::Passband => inner_dev <= prob.alpha && wing_max <= prob.alpha,
        ProfileClass::DoubleComp2D => {
            let inner = linspace(-prob.eps0, prob.eps0, step);
            let deltas = linspace(-prob.delta0, prob.delta0, step * prob.delta0 / prob.eps0);
            let mut worst: f64 = 0.0;
            for &d in &deltas {
                for &e in &inner {
                    worst = worst.max((prob_at(train, e, d)? - p).abs());
                }
            }
            worst <= prob.alpha
        }
    };
    let bb = band_from_samples(&eps, &values, prob.alpha, BandMode::Inner { target: p })?;
    let nb = band_from_samples(&eps, &values, prob.alpha, BandMode::Outer)?;
    let grid = CostGrid::new(prob, COST_GRID_STEP);
    Ok(SynthesisResult {
        train: train.clone(),
        cost_value: cost_train(train, prob, &grid, prob.alpha, Reduce::Max)?,
        validated,
        measured_bb_band: bb.width,
        measured_nb_band: nb.width,
        diagnostics: SeedDiagnostics::default(),
    })
}

/// Half-width (in units of π) of the uniform detuning start box.
fn start_width(class: ProfileClass) -> f64 {
    match class {
        ProfileClass::Passband => 2.0,
        _ => 1.0,
    }
}

fn local_search(x0: &[f64], prob: &SynthesisProblem) -> (Vec<f64>, usize, usize) {
    let opts = BfgsOptions {
        gradient_step: 1e-7,
        max_step: 0.5,
        ..BfgsOptions::default()
    };
    let run = |x: &[f64], grid: &CostGrid, alpha: f64, reduce: Reduce| {
        bfgs(
            |y| {
                prob.train(y)
                    .and_then(|t| cost_train(&t, prob, grid, alpha, reduce))
                    .unwrap_or(f64::INFINITY)
            },
            x,
            &opts,
        )
    };
    let mut x = x0.to_vec();
    let (mut iterations, mut evaluations) = (0, 0);
    let coarse = CostGrid::new(prob, COST_GRID_STEP);
    let a = prob.alpha;
    for tau in [10.0 * a, a, 0.1 * a] {
        let m = run(&x, &coarse, a, Reduce::Soft(tau));
        iterations += m.iterations;
        evaluations += m.evaluations;
        x = m.x;
    }
    let dense = CostGrid::new(prob, POLISH_GRID_STEP);
    for tau in [0.1 * a, 0.01 * a] {
        let m = run(&x, &dense, POLISH_MARGIN * a, Reduce::Soft(tau));
        iterations += m.iterations;
        evaluations += m.evaluations;
        x = m.x;
    }
    (x, iterations, evaluations)
}

/// `Ω > 0` and the first non-zero detuning positive; a global detuning
/// sign flip leaves every `δ = 0` profile unchanged. General trains are
/// also reversal invariant and take the lexicographically smaller order.
fn canonicalize(params: &mut [f64], symmetry: Symmetry) {
    fn flip_sign(d: &mut [f64]) {
        if let Some(&lead) = d.iter().find(|v| **v != 0.0) {
            if lead < 0.0 {
                d.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    params[0] = params[0].abs();
    flip_sign(&mut params[1..]);
    if symmetry == Symmetry::General {
        let mut reversed: Vec<f64> = params[1..].iter().rev().copied().collect();
        flip_sign(&mut reversed);
        let smaller = reversed
            .iter()
            .zip(&params[1..])
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .is_some_and(|o| o.is_lt());
        if smaller {
            params[1..].copy_from_slice(&reversed);
        }
    }
}

fn center_locked(result: &SynthesisResult, prob: &SynthesisProblem) -> Result<bool> {
    if prob.class != ProfileClass::Narrowband || prob.target_p == 1.0 {
        return Ok(true);
    }
    Ok(probability_derivative(&result.train, 1, &ErrorPoint::NONE)?.abs() <= CENTER_SLOPE_TOL)
}

fn band_key(r: &SynthesisResult, class: ProfileClass) -> f64 {
    match class {
        ProfileClass::Narrowband => r.measured_nb_band,
        _ => -r.measured_bb_band,
    }
}

/// Multistart synthesis. Starting points are `Ω ∈ [0.1π, π)` and detunings
/// uniform in a class-dependent box; the result is deterministic for a
/// given `rng_seed` regardless of thread count.
pub fn minimize(prob: &SynthesisProblem, seeds: usize, rng_seed: u64) -> Result<SynthesisRun> {
    prob.check()?;
    if seeds == 0 {
        return invalid("at least one seed is required");
    }
    let width = start_width(prob.class) * PI;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let starts: Vec<Vec<f64>> = (0..seeds)
        .map(|_| {
            let mut x = Vec::with_capacity(prob.n_params());
            x.push(rng.random_range(0.1 * PI..PI));
            x.extend((1..prob.n_params()).map(|_| rng.random_range(-width..=width)));
            x
        })
        .collect();

    let outcomes: Vec<Result<(Option<SynthesisResult>, SeedDiagnostics)>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let (mut x, iterations, evaluations) = local_search(x0, prob);
            let diag = SeedDiagnostics {
                seed_index: i,
                iterations,
                evaluations,
            };
            if x.iter().any(|v| !v.is_finite()) || x[0] == 0.0 {
                return Ok((None, diag));
            }
            canonicalize(&mut x, prob.symmetry);
            let train = prob.train(&x)?;
            let mut result = validate(&train, prob)?;
            result.diagnostics = diag;
            let keep = result.validated && center_locked(&result, prob)?;
            Ok((keep.then_some(result), diag))
        })
        .collect();

    let mut diagnostics = RunDiagnostics {
        seeds,
        ..RunDiagnostics::default()
    };
    let mut results: Vec<SynthesisResult> = Vec::new();
    for outcome in outcomes {
        let (result, diag) = outcome?;
        diagnostics.iterations += diag.iterations;
        diagnostics.evaluations += diag.evaluations;
        let Some(result) = result else { continue };
        let duplicate = results.iter().any(|r| {
            (r.train.rabi() - result.train.rabi()).abs() <= DEDUP_DISTANCE
                && r.train
                    .detunings()
                    .iter()
                    .zip(result.train.detunings())
                    .all(|(a, b)| (a - b).abs() <= DEDUP_DISTANCE)
        });
        if !duplicate {
            results.push(result);
        }
    }
    diagnostics.validated = results.len();
    results.sort_by(|a, b| {
        a.train
            .total_area()
            .total_cmp(&b.train.total_area())
            .then(band_key(a, prob.class).total_cmp(&band_key(b, prob.class)))
            .then(a.cost_value.total_cmp(&b.cost_value))
    });
    Ok(SynthesisRun {
        results,
        diagnostics,
    })
}
