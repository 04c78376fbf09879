//! Excitation profiles over error grids and their band metrics.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::su2::{train_propagator, ErrorPoint, PulseTrain};

/// Axes of a 1D (`ε`) or 2D (`ε`, `δ`) sweep. `δ` is in rad per unit
/// duration.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub eps_range: (f64, f64),
    pub eps_step: f64,
    pub delta_range: Option<(f64, f64)>,
    pub delta_step: Option<f64>,
}

fn axis_count(range: (f64, f64), step: f64, name: &str) -> Result<usize> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
        return invalid(format!("non-finite {name} axis"));
    }
    if lo >= hi {
        return invalid(format!("{name} range [{lo}, {hi}] is empty"));
    }
    if step <= 0.0 {
        return invalid(format!("{name} step {step} must be positive"));
    }
    let intervals = ((hi - lo) / step).round();
    if (intervals * step - (hi - lo)).abs() > 1e-9 {
        return invalid(format!(
            "{name} step {step} does not divide the range [{lo}, {hi}]"
        ));
    }
    Ok(intervals as usize + 1)
}

fn axis_points(range: (f64, f64), count: usize) -> Vec<f64> {
    let (lo, hi) = range;
    let span = hi - lo;
    let snap = 1e-12 * lo.abs().max(hi.abs());
    (0..count)
        .map(|i| {
            let x = lo + span * i as f64 / (count - 1) as f64;
            if x.abs() < snap {
                0.0
            } else {
                x
            }
        })
        .collect()
}

impl GridSpec {
    pub fn new_1d(eps_range: (f64, f64), eps_step: f64) -> Result<Self> {
        let grid = Self {
            eps_range,
            eps_step,
            delta_range: None,
            delta_step: None,
        };
        grid.check()?;
        Ok(grid)
    }

    pub fn new_2d(
        eps_range: (f64, f64),
        eps_step: f64,
        delta_range: (f64, f64),
        delta_step: f64,
    ) -> Result<Self> {
        let grid = Self {
            eps_range,
            eps_step,
            delta_range: Some(delta_range),
            delta_step: Some(delta_step),
        };
        grid.check()?;
        Ok(grid)
    }

    /// `ε ∈ [−1, 1]` with step `2e−3`.
    pub fn default_1d() -> Self {
        Self::new_1d((-1.0, 1.0), 2e-3).expect("static grid")
    }

    /// 201 × 201 lattice over `ε ∈ [−1, 1]`, `δ ∈ [−2π, 2π]`.
    pub fn default_2d() -> Self {
        Self::new_2d((-1.0, 1.0), 0.01, (-2.0 * PI, 2.0 * PI), 4.0 * PI / 200.0)
            .expect("static grid")
    }

    pub fn check(&self) -> Result<()> {
        axis_count(self.eps_range, self.eps_step, "eps")?;
        match (self.delta_range, self.delta_step) {
            (None, None) => Ok(()),
            (Some(r), Some(s)) => axis_count(r, s, "delta").map(|_| ()),
            _ => invalid("delta range and step must be given together"),
        }
    }

    pub fn is_2d(&self) -> bool {
        self.delta_range.is_some()
    }

    pub fn eps_points(&self) -> Vec<f64> {
        let n = axis_count(self.eps_range, self.eps_step, "eps").expect("checked grid");
        axis_points(self.eps_range, n)
    }

    /// `δ` axis; `[0]` for a 1D grid.
    pub fn delta_points(&self) -> Vec<f64> {
        match (self.delta_range, self.delta_step) {
            (Some(r), Some(s)) => {
                let n = axis_count(r, s, "delta").expect("checked grid");
                axis_points(r, n)
            }
            _ => vec![0.0],
        }
    }

    pub fn len(&self) -> usize {
        self.eps_points().len() * self.delta_points().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Sampled transition probability. For 2D grids the values are stored
/// `δ`-major: `values[i_delta * n_eps + i_eps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub train_id: String,
}

fn evaluate(train: &PulseTrain, eps: f64, delta: f64) -> Result<f64> {
    let u = train_propagator(train, &ErrorPoint::new(eps, delta))?;
    Ok(u.transition_probability().clamp(0.0, 1.0))
}

/// `p(ε_i)` at `δ = 0`.
pub fn sweep_1d(train: &PulseTrain, grid: &GridSpec, train_id: &str) -> Result<Profile> {
    grid.check()?;
    if grid.is_2d() {
        return invalid("sweep_1d needs a 1D grid");
    }
    let values = grid
        .eps_points()
        .into_iter()
        .map(|eps| evaluate(train, eps, 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(Profile {
        grid: grid.clone(),
        values,
        train_id: train_id.to_string(),
    })
}

/// `p(ε, δ)` over the lattice, `δ`-major.
pub fn sweep_2d(train: &PulseTrain, grid: &GridSpec, train_id: &str) -> Result<Profile> {
    grid.check()?;
    if !grid.is_2d() {
        return invalid("sweep_2d needs a 2D grid");
    }
    let eps = grid.eps_points();
    let mut values = Vec::with_capacity(grid.len());
    for delta in grid.delta_points() {
        for &e in &eps {
            values.push(evaluate(train, e, delta)?);
        }
    }
    Ok(Profile {
        grid: grid.clone(),
        values,
        train_id: train_id.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandMode {
    /// Half-width of the interval around `ε = 0` where `|p − target| ≤ level`.
    Inner { target: f64 },
    /// Smallest `|ε|` beyond which `p ≤ level` out to the grid edges.
    Outer,
}

/// A measured band edge; `attained = false` when the level was never met
/// (inner) or the edges themselves violate it (outer).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub width: f64,
    pub attained: bool,
}

/// Zero of the line through `(x0, g0)` and `(x1, g1)` where `g0 ≤ 0 < g1`.
fn crossing(x0: f64, g0: f64, x1: f64, g1: f64) -> f64 {
    if g1 == g0 {
        return x0;
    }
    x0 + (x1 - x0) * (-g0) / (g1 - g0)
}

/// Band edge of a 1D profile, linearly interpolated between samples.
pub fn band_at_level(profile: &Profile, level: f64, mode: BandMode) -> Result<Band> {
    if profile.grid.is_2d() {
        return invalid("band_at_level needs a 1D profile");
    }
    let eps = profile.grid.eps_points();
    band_from_samples(&eps, &profile.values, level, mode)
}

pub(crate) fn band_from_samples(
    eps: &[f64],
    values: &[f64],
    level: f64,
    mode: BandMode,
) -> Result<Band> {
    if eps.len() != values.len() || eps.is_empty() {
        return invalid("profile length does not match its grid");
    }
    match mode {
        BandMode::Inner { target } => {
            let g = |i: usize| (values[i] - target).abs() - level;
            let centre = eps
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap();
            if g(centre) > 0.0 {
                return Ok(Band {
                    width: 0.0,
                    attained: false,
                });
            }
            let mut right = eps[eps.len() - 1];
            for i in centre + 1..eps.len() {
                if g(i) > 0.0 {
                    right = crossing(eps[i - 1], g(i - 1), eps[i], g(i));
                    break;
                }
            }
            let mut left = eps[0];
            for i in (0..centre).rev() {
                if g(i) > 0.0 {
                    left = crossing(eps[i + 1], g(i + 1), eps[i], g(i));
                    break;
                }
            }
            Ok(Band {
                width: right.min(-left).max(0.0),
                attained: true,
            })
        }
        BandMode::Outer => {
            let g = |i: usize| values[i] - level;
            let last = eps.len() - 1;
            if g(0) > 0.0 || g(last) > 0.0 {
                return Ok(Band {
                    width: eps[0].abs().max(eps[last].abs()),
                    attained: false,
                });
            }
            let mut edge: f64 = 0.0;
            if let Some(i) = (0..eps.len()).rev().find(|&i| g(i) > 0.0) {
                // rightmost violation: crossing towards the right edge
                edge = edge.max(crossing(eps[i + 1], g(i + 1), eps[i], g(i)).abs());
            }
            if let Some(i) = (0..eps.len()).find(|&i| g(i) > 0.0) {
                edge = edge.max(crossing(eps[i - 1], g(i - 1), eps[i], g(i)).abs());
            }
            Ok(Band {
                width: edge,
                attained: true,
            })
        }
    }
}

/// `%.9g`-style rendering used by every text artifact.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV rendering: `#` header lines, a column line, then one row per point.
/// `δ` is written in π/T units. `extra_header` lines are emitted verbatim
/// after the first header line (without the leading `# `).
pub fn profile_csv(profile: &Profile, extra_header: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# train={} unit=pi/T", profile.train_id);
    for line in extra_header {
        let _ = writeln!(out, "# {line}");
    }
    let eps = profile.grid.eps_points();
    if profile.grid.is_2d() {
        let _ = writeln!(
            out,
            "# order=delta-major rows={} cols={}",
            profile.grid.delta_points().len(),
            eps.len()
        );
        let _ = writeln!(out, "eps,delta,p");
        let deltas = profile.grid.delta_points();
        for (j, d) in deltas.iter().enumerate() {
            for (i, e) in eps.iter().enumerate() {
                let p = profile.values[j * eps.len() + i];
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    format_sig9(*e),
                    format_sig9(d / PI),
                    format_sig9(p)
                );
            }
        }
    } else {
        let _ = writeln!(out, "eps,p");
        for (e, p) in eps.iter().zip(&profile.values) {
            let _ = writeln!(out, "{},{}", format_sig9(*e), format_sig9(*p));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::su2::Symmetry;
    use approx::assert_abs_diff_eq;

    fn resonant_pi() -> PulseTrain {
        PulseTrain::from_detunings(PI, &[0.0], 1.0, Symmetry::General).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new_1d((1.0, -1.0), 0.1).is_err());
        assert!(GridSpec::new_1d((-1.0, 1.0), 0.0).is_err());
        assert!(GridSpec::new_1d((-1.0, 1.0), 0.3).is_err());
        let g = GridSpec::new_1d((-1.0, 1.0), 0.1).unwrap();
        let pts = g.eps_points();
        assert_eq!(pts.len(), 21);
        assert_eq!(pts[10], 0.0);
        assert_eq!(pts[0], -1.0);
        assert_eq!(pts[20], 1.0);
        assert_eq!(GridSpec::default_2d().len(), 201 * 201);
    }

    #[test]
    fn single_pulse_sweep_matches_closed_form() {
        let prof = sweep_1d(&resonant_pi(), &GridSpec::default_1d(), "pi").unwrap();
        for (e, p) in prof.grid.eps_points().iter().zip(&prof.values) {
            assert_abs_diff_eq!(*p, (PI * e / 2.0).cos().powi(2), epsilon = 1e-12);
        }
        assert_eq!(prof.values[0], 0.0);
    }

    #[test]
    fn sweep_dimension_checks() {
        let t = resonant_pi();
        assert!(sweep_1d(&t, &GridSpec::default_2d(), "x").is_err());
        assert!(sweep_2d(&t, &GridSpec::default_1d(), "x").is_err());
    }

    #[test]
    fn inner_band_of_cosine() {
        let prof = sweep_1d(&resonant_pi(), &GridSpec::default_1d(), "pi").unwrap();
        let band = band_at_level(&prof, 0.5, BandMode::Inner { target: 1.0 }).unwrap();
        assert!(band.attained);
        assert_abs_diff_eq!(band.width, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn flat_profile_inner_band_is_grid_edge() {
        let grid = GridSpec::new_1d((-0.5, 0.5), 0.01).unwrap();
        let prof = Profile {
            values: vec![0.7; grid.len()],
            grid,
            train_id: "flat".into(),
        };
        let band = band_at_level(&prof, 1e-3, BandMode::Inner { target: 0.7 }).unwrap();
        assert_eq!(band.width, 0.5);
        let band = band_at_level(&prof, 1e-3, BandMode::Inner { target: 0.2 }).unwrap();
        assert!(!band.attained);
        assert_eq!(band.width, 0.0);
    }

    #[test]
    fn outer_band_edges() {
        let prof = sweep_1d(&resonant_pi(), &GridSpec::default_1d(), "pi").unwrap();
        // cos²(πε/2) ≤ 0.5 for |ε| ≥ 0.5
        let band = band_at_level(&prof, 0.5, BandMode::Outer).unwrap();
        assert!(band.attained);
        assert_abs_diff_eq!(band.width, 0.5, epsilon = 1e-6);
        // never below 0.5 at the edges of a narrower grid
        let grid = GridSpec::new_1d((-0.4, 0.4), 0.01).unwrap();
        let prof = sweep_1d(&resonant_pi(), &grid, "pi").unwrap();
        let band = band_at_level(&prof, 0.5, BandMode::Outer).unwrap();
        assert!(!band.attained);
        assert_abs_diff_eq!(band.width, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(0.63970000001), "0.6397");
        assert_eq!(format_sig9(PI), "3.14159265");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(1.5e-7), "1.5e-7");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(2.5e12), "2.5e12");
    }

    #[test]
    fn csv_layout() {
        let grid = GridSpec::new_1d((-0.1, 0.1), 0.1).unwrap();
        let prof = sweep_1d(&resonant_pi(), &grid, "pi").unwrap();
        let csv = profile_csv(&prof, &[]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "# train=pi unit=pi/T");
        assert_eq!(lines[1], "eps,p");
        assert_eq!(lines[3], "0,1");
        assert_eq!(lines.len(), 5);
    }
}
