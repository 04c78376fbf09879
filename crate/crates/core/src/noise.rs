//! Open-system emulation of a measured profile: relaxation and dephasing
//! during the train, then readout assignment error and shot noise.
//!
//! The density matrix `ρ = [[u, c], [c*, v]]` in the `(g, e)` basis follows
//!
//! ```text
//! dρ/dt = −i[H, ρ] + γ₁ D[σ₋]ρ + (γφ/2) D[σz]ρ,    D[L]ρ = LρL† − ½{L†L, ρ}
//! ```
//!
//! with `H = ½[[−Δ, Ω], [Ω, Δ]]`, `γ₁ = 1/T1` and `γφ = 1/T2 − 1/(2T1)`.
//! Each pulse is integrated separately with an adaptive Dormand–Prince
//! scheme.

use ode_solvers::{Dopri5, OutputType, SVector, System};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{invalid, Error, Result};
use crate::profile::{format_sig9, GridSpec, Profile};
use crate::su2::{apply_error, ErrorPoint, PulseTrain};

/// Relative and absolute tolerance of the integrator.
pub const INTEGRATOR_TOLERANCE: f64 = 1e-10;

/// Hardware figures of the reference experiment.
pub const REFERENCE_T1: f64 = 195.52e-6;
pub const REFERENCE_T2: f64 = 232.57e-6;
pub const REFERENCE_READOUT_ERROR: f64 = 0.0347;
pub const REFERENCE_SHOTS: u64 = 1024;
pub const REFERENCE_PULSE_DURATION: f64 = 100e-9;
/// Metadata only; the dynamics live in the rotating frame.
pub const REFERENCE_QUBIT_FREQUENCY_HZ: f64 = 4.972e9;
pub const REFERENCE_ANHARMONICITY_HZ: f64 = -0.34719e9;

/// Decoherence and measurement parameters. Times are in seconds; an
/// infinite `t1` / `t2` switches that channel off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub t1: f64,
    pub t2: f64,
    pub readout_error: f64,
    pub shots: u64,
    /// Physical length of one pulse of the train.
    pub pulse_duration: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            t1: REFERENCE_T1,
            t2: REFERENCE_T2,
            readout_error: REFERENCE_READOUT_ERROR,
            shots: REFERENCE_SHOTS,
            pulse_duration: REFERENCE_PULSE_DURATION,
        }
    }
}

impl NoiseModel {
    pub fn new(
        t1: f64,
        t2: f64,
        readout_error: f64,
        shots: u64,
        pulse_duration: f64,
    ) -> Result<Self> {
        let nm = Self {
            t1,
            t2,
            readout_error,
            shots,
            pulse_duration,
        };
        nm.check()?;
        Ok(nm)
    }

    /// No decoherence, perfect readout.
    pub fn noiseless(shots: u64) -> Self {
        Self {
            t1: f64::INFINITY,
            t2: f64::INFINITY,
            readout_error: 0.0,
            shots,
            pulse_duration: REFERENCE_PULSE_DURATION,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.t1 > 0.0 && self.t2 > 0.0) || self.t1.is_nan() || self.t2.is_nan() {
            return invalid(format!(
                "T1 = {}, T2 = {} must be positive",
                self.t1, self.t2
            ));
        }
        if self.t2 > 2.0 * self.t1 {
            return invalid(format!("T2 = {} exceeds 2·T1 = {}", self.t2, 2.0 * self.t1));
        }
        if !(0.0..0.5).contains(&self.readout_error) {
            return invalid(format!(
                "readout error {} outside [0, 0.5)",
                self.readout_error
            ));
        }
        if self.shots == 0 {
            return invalid("at least one shot is required");
        }
        if !(self.pulse_duration > 0.0 && self.pulse_duration.is_finite()) {
            return invalid(format!(
                "pulse duration {} must be positive",
                self.pulse_duration
            ));
        }
        Ok(())
    }

    /// Energy relaxation rate `1/T1` (1/s).
    pub fn relaxation_rate(&self) -> f64 {
        1.0 / self.t1
    }

    /// Pure dephasing rate `1/T2 − 1/(2T1)` (1/s).
    pub fn dephasing_rate(&self) -> f64 {
        (1.0 / self.t2 - 0.5 / self.t1).max(0.0)
    }

    /// `# t1= t2= readout= shots=` header fields.
    pub fn header(&self) -> String {
        format!(
            "t1={} t2={} readout={} shots={}",
            format_sig9(self.t1),
            format_sig9(self.t2),
            format_sig9(self.readout_error),
            self.shots
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Ground,
    Excited,
}

/// `[u, v, Re c, Im c]`.
type State = SVector<f64, 4>;

struct Bloch {
    rabi: f64,
    detuning: f64,
    gamma1: f64,
    gamma_phi: f64,
}

impl System<f64, State> for Bloch {
    fn system(&self, _t: f64, y: &State, dy: &mut State) {
        let (u, v, x, im) = (y[0], y[1], y[2], y[3]);
        let g2 = 0.5 * self.gamma1 + self.gamma_phi;
        let du = -self.rabi * im + self.gamma1 * v;
        dy[0] = du;
        dy[1] = -du;
        dy[2] = -self.detuning * im - g2 * x;
        dy[3] = self.detuning * x - 0.5 * self.rabi * (v - u) - g2 * im;
    }
}

/// Density matrix after the train, with the largest trace defect seen at
/// any accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyState {
    pub ground: f64,
    pub excited: f64,
    pub coherence: (f64, f64),
    pub max_trace_defect: f64,
}

/// Integrate the master equation through the train under error `e`.
pub fn evolve_state(
    train: &PulseTrain,
    e: &ErrorPoint,
    nm: &NoiseModel,
    initial: InitialState,
) -> Result<NoisyState> {
    nm.check()?;
    let mut y = match initial {
        InitialState::Ground => State::new(1.0, 0.0, 0.0, 0.0),
        InitialState::Excited => State::new(0.0, 1.0, 0.0, 0.0),
    };
    let mut max_trace_defect: f64 = 0.0;
    for pulse in train.pulses() {
        let p = apply_error(pulse, e)?;
        // seconds per unit of dimensionless time
        let scale = nm.pulse_duration / p.duration;
        let system = Bloch {
            rabi: p.rabi,
            detuning: p.detuning,
            gamma1: scale * nm.relaxation_rate(),
            gamma_phi: scale * nm.dephasing_rate(),
        };
        let mut solver = Dopri5::new(
            system,
            0.0,
            p.duration,
            p.duration,
            y,
            INTEGRATOR_TOLERANCE,
            INTEGRATOR_TOLERANCE,
        );
        solver.set_output(OutputType::Sparse);
        solver
            .integrate()
            .map_err(|err| Error::NumericFailure(format!("master equation: {err}")))?;
        for s in solver.y_out() {
            max_trace_defect = max_trace_defect.max((s[0] + s[1] - 1.0).abs());
        }
        y = *solver
            .y_out()
            .last()
            .ok_or_else(|| Error::NumericFailure("integrator produced no output".into()))?;
    }
    Ok(NoisyState {
        ground: y[0],
        excited: y[1],
        coherence: (y[2], y[3]),
        max_trace_defect,
    })
}

/// Excited-state population after the train.
pub fn evolve_noisy(
    train: &PulseTrain,
    e: &ErrorPoint,
    nm: &NoiseModel,
    initial: InitialState,
) -> Result<f64> {
    Ok(evolve_state(train, e, nm, initial)?.excited.clamp(0.0, 1.0))
}

/// Probability of reading "excited" given the true population.
pub fn readout_probability(population: f64, readout_error: f64) -> f64 {
    population * (1.0 - readout_error) + (1.0 - population) * readout_error
}

fn sample(population: f64, nm: &NoiseModel, rng: &mut ChaCha8Rng) -> Result<f64> {
    if !(0.0..=1.0).contains(&population) {
        return invalid(format!("population {population} outside [0, 1]"));
    }
    let q = readout_probability(population, nm.readout_error);
    let dist = Binomial::new(nm.shots, q).map_err(|err| Error::NumericFailure(err.to_string()))?;
    Ok(dist.sample(rng) as f64 / nm.shots as f64)
}

/// Observed excited fraction over `nm.shots` shots.
pub fn measure(population: f64, nm: &NoiseModel, rng_seed: u64) -> Result<f64> {
    nm.check()?;
    sample(population, nm, &mut ChaCha8Rng::seed_from_u64(rng_seed))
}

/// Where the ideal peak goes: decoherence during the train, then readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakBudget {
    pub ideal: f64,
    pub after_decoherence: f64,
    /// Expected observed fraction, before shot noise.
    pub after_readout: f64,
}

impl PeakBudget {
    pub fn decoherence_loss(&self) -> f64 {
        self.ideal - self.after_decoherence
    }

    pub fn readout_loss(&self) -> f64 {
        self.after_decoherence - self.after_readout
    }
}

pub fn peak_budget(train: &PulseTrain, e: &ErrorPoint, nm: &NoiseModel) -> Result<PeakBudget> {
    let ideal = crate::su2::transition_probability(train, e)?;
    let after_decoherence = evolve_noisy(train, e, nm, InitialState::Ground)?;
    Ok(PeakBudget {
        ideal,
        after_decoherence,
        after_readout: readout_probability(after_decoherence, nm.readout_error),
    })
}

/// Simulated measurement of a 1D profile.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyProfile {
    /// Sampled excited fractions.
    pub measured: Profile,
    /// Populations before readout.
    pub populations: Vec<f64>,
    /// Index of the largest population; its sampled value is the reported
    /// peak.
    pub peak_index: usize,
}

impl NoisyProfile {
    pub fn peak(&self) -> f64 {
        self.measured.values[self.peak_index]
    }

    pub fn peak_eps(&self) -> f64 {
        self.measured.grid.eps_points()[self.peak_index]
    }
}

/// Noisy sweep over a 1D grid. Point `i` draws its shots from stream `i`
/// of the generator seeded with `rng_seed`.
pub fn simulate_profile(
    train: &PulseTrain,
    grid: &GridSpec,
    nm: &NoiseModel,
    rng_seed: u64,
    train_id: &str,
) -> Result<NoisyProfile> {
    nm.check()?;
    grid.check()?;
    if grid.is_2d() {
        return invalid("noisy sweeps need a 1D grid");
    }
    let eps = grid.eps_points();
    let populations = eps
        .iter()
        .map(|&x| evolve_noisy(train, &ErrorPoint::rabi(x), nm, InitialState::Ground))
        .collect::<Result<Vec<_>>>()?;
    let values = populations
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(i as u64);
            sample(p, nm, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let peak_index =
        populations.iter().enumerate().fold(
            0,
            |best, (i, p)| if *p > populations[best] { i } else { best },
        );
    Ok(NoisyProfile {
        measured: Profile {
            grid: grid.clone(),
            values,
            train_id: train_id.to_string(),
        },
        populations,
        peak_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::su2::{transition_probability, Symmetry};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn x3() -> PulseTrain {
        PulseTrain::from_free(0.6397 * PI, &[0.72 * PI], 3, Symmetry::Antisymmetric).unwrap()
    }

    #[test]
    fn model_invariants() {
        assert!(NoiseModel::default().check().is_ok());
        assert!(NoiseModel::new(1e-6, 3e-6, 0.0, 1, 1e-7).is_err());
        assert!(NoiseModel::new(1e-6, 1e-6, 0.5, 1, 1e-7).is_err());
        assert!(NoiseModel::new(1e-6, 1e-6, 0.1, 0, 1e-7).is_err());
        assert!(NoiseModel::noiseless(1).check().is_ok());
        assert_eq!(NoiseModel::noiseless(1).dephasing_rate(), 0.0);
    }

    #[test]
    fn noiseless_limit() {
        let nm = NoiseModel::noiseless(1);
        for eps in [-0.3, 0.0, 0.2] {
            let e = ErrorPoint::rabi(eps);
            let ideal = transition_probability(&x3(), &e).unwrap();
            let noisy = evolve_noisy(&x3(), &e, &nm, InitialState::Ground).unwrap();
            assert_abs_diff_eq!(noisy, ideal, epsilon = 1e-8);
        }
    }

    #[test]
    fn free_decay() {
        let nm = NoiseModel::new(1e-6, 1e-6, 0.0, 1, 100e-9).unwrap();
        let idle = PulseTrain::from_detunings(0.0, &[0.0; 5], 1.0, Symmetry::General).unwrap();
        let p = evolve_noisy(&idle, &ErrorPoint::NONE, &nm, InitialState::Excited).unwrap();
        assert_abs_diff_eq!(p, (-0.5f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn trace_is_preserved() {
        let nm = NoiseModel::new(2e-6, 1e-6, 0.0, 1, 100e-9).unwrap();
        let s = evolve_state(&x3(), &ErrorPoint::rabi(0.1), &nm, InitialState::Ground).unwrap();
        assert!(s.max_trace_defect < 1e-9);
        assert_abs_diff_eq!(s.ground + s.excited, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn readout_flip() {
        assert_abs_diff_eq!(readout_probability(1.0, 0.0347), 0.9653);
        assert_abs_diff_eq!(readout_probability(0.5, 0.2), 0.5);
        let nm = NoiseModel {
            shots: 10_000_000,
            ..NoiseModel::default()
        };
        assert_abs_diff_eq!(measure(1.0, &nm, 3).unwrap(), 0.9653, epsilon = 5e-4);
        assert!(measure(1.5, &nm, 3).is_err());
    }

    #[test]
    fn measure_is_seeded() {
        let nm = NoiseModel::default();
        assert_eq!(
            measure(0.7, &nm, 11).unwrap(),
            measure(0.7, &nm, 11).unwrap()
        );
    }

    #[test]
    fn reference_budget() {
        let b = peak_budget(&x3(), &ErrorPoint::NONE, &NoiseModel::default()).unwrap();
        assert!(b.decoherence_loss() > 0.0 && b.decoherence_loss() < 1e-2);
        assert!(b.readout_loss() > b.decoherence_loss());
    }
}
