//! Exact two-level dynamics for trains of rectangular pulses.
//!
//! A pulse with Rabi frequency `Ω`, detuning `Δ` and duration `T` evolves the
//! qubit under `H = ½Ω σx − ½Δ σz`. Its propagator is stored as the
//! Cayley–Klein pair `(a, b)` of
//!
//! ```text
//!     ⎡  a    b  ⎤
//! U = ⎢          ⎥ ,   |a|² + |b|² = 1
//!     ⎣ −b*   a* ⎦
//! ```
//!
//! All rates are in radians per unit duration. Trains are applied left to
//! right: the first pulse in the list acts first.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Below this generalized area the propagator is replaced by its analytic
/// limit, the identity.
const AREA_EPSILON: f64 = 1e-12;

/// One rectangular drive segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    /// Rabi frequency `Ω` (rad per unit duration), non-negative.
    pub rabi: f64,
    /// Detuning `Δ = ω₀ − ω` (rad per unit duration).
    pub detuning: f64,
    /// Duration `T`, strictly positive.
    pub duration: f64,
}

impl Pulse {
    pub fn new(rabi: f64, detuning: f64, duration: f64) -> Result<Self> {
        let pulse = Self {
            rabi,
            detuning,
            duration,
        };
        pulse.check()?;
        Ok(pulse)
    }

    /// A pulse of unit duration.
    pub fn unit(rabi: f64, detuning: f64) -> Result<Self> {
        Self::new(rabi, detuning, 1.0)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.rabi.is_finite() && self.detuning.is_finite() && self.duration.is_finite()) {
            return invalid(format!("non-finite pulse parameters: {self:?}"));
        }
        if self.rabi < 0.0 {
            return invalid(format!("negative Rabi frequency {}", self.rabi));
        }
        if self.duration <= 0.0 {
            return invalid(format!("non-positive duration {}", self.duration));
        }
        Ok(())
    }

    /// Generalized area `A = ΛT`, `Λ = √(Δ² + Ω²)`.
    pub fn area(&self) -> f64 {
        self.rabi.hypot(self.detuning) * self.duration
    }
}

/// SU(2) propagator in Cayley–Klein form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    pub a: Complex64,
    pub b: Complex64,
}

impl Propagator {
    pub const IDENTITY: Propagator = Propagator {
        a: Complex64::new(1.0, 0.0),
        b: Complex64::new(0.0, 0.0),
    };

    /// `self` followed by `next`, i.e. the matrix product `next · self`.
    #[inline]
    pub fn then(&self, next: &Propagator) -> Propagator {
        Propagator {
            a: next.a * self.a - next.b * self.b.conj(),
            b: next.a * self.b + next.b * self.a.conj(),
        }
    }

    /// Transition probability `|b|²`.
    #[inline]
    pub fn transition_probability(&self) -> f64 {
        self.b.norm_sqr()
    }

    /// Population left in the initial state, `|a|²`. Equal to
    /// `1 − transition_probability()` but accurate when the transfer is
    /// nearly complete.
    #[inline]
    pub fn survival_probability(&self) -> f64 {
        self.a.norm_sqr()
    }

    pub fn unitarity_defect(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr() - 1.0).abs()
    }

    /// Full 2×2 matrix, row-major.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [[self.a, self.b], [-self.b.conj(), self.a.conj()]]
    }
}

/// Propagator of a single rectangular pulse.
pub fn pulse_propagator(p: &Pulse) -> Result<Propagator> {
    p.check()?;
    Ok(propagator_unchecked(p.rabi, p.detuning, p.duration))
}

#[inline]
fn propagator_unchecked(rabi: f64, detuning: f64, duration: f64) -> Propagator {
    let lambda = rabi.hypot(detuning);
    let area = lambda * duration;
    if area < AREA_EPSILON {
        return Propagator::IDENTITY;
    }
    let (s, c) = (area / 2.0).sin_cos();
    Propagator {
        a: Complex64::new(c, detuning / lambda * s),
        b: Complex64::new(0.0, -rabi / lambda * s),
    }
}

/// Systematic error applied to every pulse of a train: a relative Rabi error
/// `eps` and an absolute detuning shift.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorPoint {
    pub eps: f64,
    pub detuning_shift: f64,
}

impl ErrorPoint {
    pub const NONE: ErrorPoint = ErrorPoint {
        eps: 0.0,
        detuning_shift: 0.0,
    };

    pub fn new(eps: f64, detuning_shift: f64) -> Self {
        Self {
            eps,
            detuning_shift,
        }
    }

    pub fn rabi(eps: f64) -> Self {
        Self::new(eps, 0.0)
    }

    fn check(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.detuning_shift.is_finite()) {
            return invalid(format!("non-finite error point {self:?}"));
        }
        // eps = -1 is the zero-drive limit and still physical.
        if self.eps < -1.0 {
            return invalid(format!(
                "relative Rabi error {} gives a negative amplitude",
                self.eps
            ));
        }
        Ok(())
    }
}

/// The pulse as seen by the qubit under error `e`: `Ω(1+ε)`, `Δ+δ`.
pub fn apply_error(p: &Pulse, e: &ErrorPoint) -> Result<Pulse> {
    e.check()?;
    Pulse::new(
        p.rabi * (1.0 + e.eps),
        p.detuning + e.detuning_shift,
        p.duration,
    )
}

/// Reversal symmetry of the detuning list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symmetry {
    General,
    /// `Δ[N−k+1] = Δ[k]`
    Symmetric,
    /// `Δ[N−k+1] = −Δ[k]` (a zero middle detuning for odd `N`)
    Antisymmetric,
}

impl Symmetry {
    /// Number of detunings that are free under this symmetry for a train of
    /// `len` pulses. The free detunings are always the leading ones in train
    /// order; for symmetric odd trains the middle detuning is free.
    pub fn free_count(self, len: usize) -> usize {
        match self {
            Symmetry::General => len,
            Symmetry::Symmetric => len.div_ceil(2),
            Symmetry::Antisymmetric => len / 2,
        }
    }

    /// Expand the leading free detunings into the full list.
    pub fn expand(self, free: &[f64], len: usize) -> Result<Vec<f64>> {
        if free.len() != self.free_count(len) {
            return invalid(format!(
                "{self:?} train of length {len} needs {} free detunings, got {}",
                self.free_count(len),
                free.len()
            ));
        }
        Ok(match self {
            Symmetry::General => free.to_vec(),
            Symmetry::Symmetric | Symmetry::Antisymmetric => {
                let sign = if self == Symmetry::Symmetric {
                    1.0
                } else {
                    -1.0
                };
                (0..len)
                    .map(|k| {
                        let mirror = len - 1 - k;
                        if k < free.len() {
                            free[k]
                        } else if mirror < free.len() && mirror != k {
                            sign * free[mirror]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Symmetry::General => "general",
            Symmetry::Symmetric => "symmetric",
            Symmetry::Antisymmetric => "antisymmetric",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "general" => Some(Symmetry::General),
            "symmetric" => Some(Symmetry::Symmetric),
            "antisymmetric" => Some(Symmetry::Antisymmetric),
            _ => None,
        }
    }
}

/// Ordered train of equal-amplitude, equal-duration pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrain {
    pulses: Vec<Pulse>,
    symmetry: Symmetry,
}

impl PulseTrain {
    pub fn new(pulses: Vec<Pulse>, symmetry: Symmetry) -> Result<Self> {
        let Some(first) = pulses.first() else {
            return invalid("pulse train is empty");
        };
        for p in &pulses {
            p.check()?;
            if p.rabi != first.rabi || p.duration != first.duration {
                return invalid("all pulses of a train must share Rabi frequency and duration");
            }
        }
        let n = pulses.len();
        let scale = pulses.iter().map(|p| p.detuning.abs()).fold(1.0, f64::max);
        let tol = 1e-12 * scale;
        for k in 0..n {
            let (d, m) = (pulses[k].detuning, pulses[n - 1 - k].detuning);
            let ok = match symmetry {
                Symmetry::General => true,
                // the middle pulse of an odd symmetric train is unconstrained
                Symmetry::Symmetric => (d - m).abs() <= tol,
                Symmetry::Antisymmetric => (d + m).abs() <= tol,
            };
            if !ok {
                return invalid(format!(
                    "detunings violate the {} condition at positions {} and {}",
                    symmetry.name(),
                    k + 1,
                    n - k
                ));
            }
        }
        Ok(Self { pulses, symmetry })
    }

    /// Train with common Rabi frequency and duration.
    pub fn from_detunings(
        rabi: f64,
        detunings: &[f64],
        duration: f64,
        symmetry: Symmetry,
    ) -> Result<Self> {
        let pulses = detunings
            .iter()
            .map(|&d| Pulse::new(rabi, d, duration))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pulses, symmetry)
    }

    /// Unit-duration train from the leading free detunings.
    pub fn from_free(rabi: f64, free: &[f64], len: usize, symmetry: Symmetry) -> Result<Self> {
        let detunings = symmetry.expand(free, len)?;
        Self::from_detunings(rabi, &detunings, 1.0, symmetry)
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    pub fn rabi(&self) -> f64 {
        self.pulses[0].rabi
    }

    pub fn duration(&self) -> f64 {
        self.pulses[0].duration
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.pulses.iter().map(|p| p.detuning).collect()
    }

    /// Leading free detunings under the train's symmetry.
    pub fn free_detunings(&self) -> Vec<f64> {
        let n = self.symmetry.free_count(self.len());
        self.pulses[..n].iter().map(|p| p.detuning).collect()
    }

    /// Nominal on-resonance area `N·Ω·T`.
    pub fn total_area(&self) -> f64 {
        self.len() as f64 * self.rabi() * self.duration()
    }

    /// Total duration `N·T`.
    pub fn total_duration(&self) -> f64 {
        self.len() as f64 * self.duration()
    }
}

/// Composed propagator `U(Δ_N)⋯U(Δ_1)` with every pulse shifted by `e`.
pub fn train_propagator(t: &PulseTrain, e: &ErrorPoint) -> Result<Propagator> {
    e.check()?;
    if t.is_empty() {
        return invalid("pulse train is empty");
    }
    let rabi = t.rabi() * (1.0 + e.eps);
    let duration = t.duration();
    Ok(t.pulses.iter().fold(Propagator::IDENTITY, |acc, p| {
        acc.then(&propagator_unchecked(
            rabi,
            p.detuning + e.detuning_shift,
            duration,
        ))
    }))
}

/// `|b|²` of the composed propagator.
pub fn transition_probability(t: &PulseTrain, e: &ErrorPoint) -> Result<f64> {
    Ok(train_propagator(t, e)?.transition_probability().min(1.0))
}

/// Central finite differences refined by Richardson extrapolation.
///
/// The `k`-th derivative uses the second-order central stencil at steps
/// `h, h/2, …, h/2^(levels−1)` and eliminates the `h², h⁴, …` error terms.
/// The starting step `h` is `base_step` scaled per order (see
/// [`FiniteDiff::step`]): higher orders divide by `h^k` and need larger
/// steps to stay clear of round-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiff {
    pub base_step: f64,
    pub levels: usize,
}

/// Step multipliers for orders 1..=6.
const ORDER_STEP_SCALE: [f64; 6] = [1.0, 15.0, 30.0, 50.0, 50.0, 60.0];

pub const MAX_DERIVATIVE_ORDER: usize = 6;

impl Default for FiniteDiff {
    fn default() -> Self {
        Self {
            base_step: 1e-3,
            levels: 3,
        }
    }
}

impl FiniteDiff {
    pub fn step(&self, order: usize) -> f64 {
        self.base_step * ORDER_STEP_SCALE[order - 1]
    }

    /// `order`-th derivative of `f` at `x`.
    pub fn derivative<F>(&self, f: F, x: f64, order: usize) -> Result<f64>
    where
        F: Fn(f64) -> Result<f64>,
    {
        if !(1..=MAX_DERIVATIVE_ORDER).contains(&order) {
            return invalid(format!(
                "derivative order {order} outside 1..={MAX_DERIVATIVE_ORDER}"
            ));
        }
        if self.levels == 0 || !(self.base_step > 0.0) {
            return invalid("finite-difference step and level count must be positive");
        }
        let weights = binomial_row(order);
        let mut table = Vec::with_capacity(self.levels);
        let mut h = self.step(order);
        for _ in 0..self.levels {
            let mut acc = 0.0;
            for (j, w) in weights.iter().enumerate() {
                let offset = (order as f64 / 2.0 - j as f64) * h;
                acc += w * f(x + offset)?;
            }
            table.push(acc / h.powi(order as i32));
            h /= 2.0;
        }
        // Neville-style elimination of the even error terms.
        for level in 1..self.levels {
            let factor = 4f64.powi(level as i32);
            for i in (level..self.levels).rev() {
                table[i] = (factor * table[i] - table[i - 1]) / (factor - 1.0);
            }
        }
        Ok(table[self.levels - 1])
    }
}

/// Signed binomial weights `(−1)^j C(k, j)`.
fn binomial_row(k: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for j in 1..=k {
        let prev = row[j - 1];
        row.push(-prev * (k + 1 - j) as f64 / j as f64);
    }
    row
}

/// `∂^order P / ∂ε^order` at `at`, with the default difference scheme.
pub fn probability_derivative(t: &PulseTrain, order: usize, at: &ErrorPoint) -> Result<f64> {
    probability_derivative_with(t, order, at, &FiniteDiff::default())
}

pub fn probability_derivative_with(
    t: &PulseTrain,
    order: usize,
    at: &ErrorPoint,
    fd: &FiniteDiff,
) -> Result<f64> {
    fd.derivative(
        |eps| {
            let e = ErrorPoint::new(eps, at.detuning_shift);
            Ok(train_propagator(t, &e)?.transition_probability())
        },
        at.eps,
        order,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn resonant_pi() -> PulseTrain {
        PulseTrain::from_detunings(PI, &[0.0], 1.0, Symmetry::General).unwrap()
    }

    #[test]
    fn resonant_pi_pulse() {
        let u = pulse_propagator(&Pulse::unit(PI, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(u.a.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.a.im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.b.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.b.im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn undriven_pulse_is_pure_phase() {
        let d = 0.83;
        let u = pulse_propagator(&Pulse::unit(0.0, d).unwrap()).unwrap();
        assert_abs_diff_eq!(u.a.re, (d / 2.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(u.a.im, (d / 2.0).sin(), epsilon = 1e-15);
        assert_eq!(u.b, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_area_is_identity() {
        let u = pulse_propagator(&Pulse::unit(0.0, 0.0).unwrap()).unwrap();
        assert_eq!(u, Propagator::IDENTITY);
    }

    #[test]
    fn rejects_bad_pulses() {
        assert!(Pulse::unit(f64::NAN, 0.0).is_err());
        assert!(Pulse::unit(1.0, f64::INFINITY).is_err());
        assert!(Pulse::unit(-1.0, 0.0).is_err());
        assert!(Pulse::new(1.0, 0.0, 0.0).is_err());
        let bad = Pulse {
            rabi: 1.0,
            detuning: f64::NAN,
            duration: 1.0,
        };
        assert!(pulse_propagator(&bad).is_err());
    }

    #[test]
    fn apply_error_definition() {
        let p = Pulse::unit(1.0, 0.5).unwrap();
        assert_eq!(apply_error(&p, &ErrorPoint::NONE).unwrap(), p);
        let q = apply_error(&p, &ErrorPoint::rabi(0.1)).unwrap();
        assert_abs_diff_eq!(q.rabi, 1.1, epsilon = 1e-15);
        assert_eq!(q.detuning, 0.5);
        let q = apply_error(&p, &ErrorPoint::new(0.0, -0.2)).unwrap();
        assert_eq!(q.rabi, 1.0);
        assert_abs_diff_eq!(q.detuning, 0.3, epsilon = 1e-15);
        assert!(apply_error(&p, &ErrorPoint::rabi(-1.5)).is_err());
        assert_eq!(apply_error(&p, &ErrorPoint::rabi(-1.0)).unwrap().rabi, 0.0);
    }

    #[test]
    fn single_pulse_train_matches_pulse_propagator() {
        let p = Pulse::unit(1.3, -0.4).unwrap();
        let t = PulseTrain::new(vec![p], Symmetry::General).unwrap();
        assert_eq!(
            train_propagator(&t, &ErrorPoint::NONE).unwrap(),
            pulse_propagator(&p).unwrap()
        );
    }

    #[test]
    fn empty_train_rejected() {
        assert!(PulseTrain::new(vec![], Symmetry::General).is_err());
    }

    #[test]
    fn symmetry_conditions_enforced() {
        assert!(
            PulseTrain::from_detunings(1.0, &[0.5, 0.0, -0.5], 1.0, Symmetry::Antisymmetric)
                .is_ok()
        );
        assert!(
            PulseTrain::from_detunings(1.0, &[0.5, 0.1, -0.5], 1.0, Symmetry::Antisymmetric)
                .is_err()
        );
        assert!(
            PulseTrain::from_detunings(1.0, &[0.5, 0.3, 0.5], 1.0, Symmetry::Symmetric).is_ok()
        );
        assert!(
            PulseTrain::from_detunings(1.0, &[0.5, 0.3, 0.4], 1.0, Symmetry::Symmetric).is_err()
        );
        let mixed = vec![
            Pulse::unit(1.0, 0.0).unwrap(),
            Pulse::unit(2.0, 0.0).unwrap(),
        ];
        assert!(PulseTrain::new(mixed, Symmetry::General).is_err());
    }

    #[test]
    fn expand_free_detunings() {
        let s = Symmetry::Antisymmetric;
        assert_eq!(
            s.expand(&[1.0, 2.0], 5).unwrap(),
            vec![1.0, 2.0, 0.0, -2.0, -1.0]
        );
        assert_eq!(
            s.expand(&[1.0, 2.0], 4).unwrap(),
            vec![1.0, 2.0, -2.0, -1.0]
        );
        let s = Symmetry::Symmetric;
        assert_eq!(
            s.expand(&[1.0, 2.0, 3.0], 5).unwrap(),
            vec![1.0, 2.0, 3.0, 2.0, 1.0]
        );
        assert_eq!(s.expand(&[1.0, 2.0], 4).unwrap(), vec![1.0, 2.0, 2.0, 1.0]);
        assert!(s.expand(&[1.0], 4).is_err());
        assert_eq!(Symmetry::Antisymmetric.free_count(1), 0);
        assert_eq!(Symmetry::Antisymmetric.expand(&[], 1).unwrap(), vec![0.0]);
    }

    #[test]
    fn single_pulse_profile_closed_form() {
        let p = transition_probability(&resonant_pi(), &ErrorPoint::rabi(0.2)).unwrap();
        assert_abs_diff_eq!(p, (0.1 * PI).cos().powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(p, 0.904508497187474, epsilon = 1e-12);
    }

    #[test]
    fn zero_drive_gives_zero() {
        let t = PulseTrain::from_detunings(2.1, &[0.3, -1.0, 0.7], 1.0, Symmetry::General).unwrap();
        assert_eq!(
            transition_probability(&t, &ErrorPoint::rabi(-1.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn x3_caption_train_inverts() {
        let t =
            PulseTrain::from_free(0.6397 * PI, &[0.72 * PI], 3, Symmetry::Antisymmetric).unwrap();
        let p = transition_probability(&t, &ErrorPoint::NONE).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 2e-3);
        let t =
            PulseTrain::from_free(0.7014 * PI, &[1.1789 * PI], 3, Symmetry::Antisymmetric).unwrap();
        let p = transition_probability(&t, &ErrorPoint::NONE).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 2e-3);
    }

    #[test]
    fn two_pulse_closed_form() {
        // {Δ, −Δ} with equal Ω: U(−Δ)U(Δ) has b = 2 a₁ b₁ up to phase and the
        // hand formula p = 1 − (1 − 2p₁)² with p₁ = |b₁|².
        let (rabi, d) = (0.937 * PI, 0.735 * PI);
        let t = PulseTrain::from_free(rabi, &[d], 2, Symmetry::Antisymmetric).unwrap();
        let p1 = pulse_propagator(&Pulse::unit(rabi, d).unwrap())
            .unwrap()
            .transition_probability();
        let p = transition_probability(&t, &ErrorPoint::NONE).unwrap();
        assert_abs_diff_eq!(p, 1.0 - (1.0 - 2.0 * p1).powi(2), epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.983, epsilon = 1e-3);
    }

    #[test]
    fn derivative_order_bounds() {
        let t = resonant_pi();
        assert!(probability_derivative(&t, 0, &ErrorPoint::NONE).is_err());
        assert!(probability_derivative(&t, 7, &ErrorPoint::NONE).is_err());
    }

    #[test]
    fn resonant_pulse_derivatives() {
        // p(ε) = (1 + cos πε)/2
        let t = resonant_pi();
        let d1 = probability_derivative(&t, 1, &ErrorPoint::NONE).unwrap();
        assert_abs_diff_eq!(d1, 0.0, epsilon = 1e-8);
        let d2 = probability_derivative(&t, 2, &ErrorPoint::NONE).unwrap();
        assert_abs_diff_eq!(d2, -PI * PI / 2.0, epsilon = 1e-5);
        for order in 1..=MAX_DERIVATIVE_ORDER {
            let exact = match order % 4 {
                0 => PI.powi(order as i32) / 2.0,
                2 => -PI.powi(order as i32) / 2.0,
                _ => 0.0,
            };
            let got = probability_derivative(&t, order, &ErrorPoint::NONE).unwrap();
            let scale = PI.powi(order as i32);
            assert!(
                (got - exact).abs() <= 1e-6 * scale,
                "order {order}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn binomial_weights() {
        assert_eq!(binomial_row(3), vec![1.0, -3.0, 3.0, -1.0]);
    }
}
