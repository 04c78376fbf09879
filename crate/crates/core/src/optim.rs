//! Small dense optimizers: BFGS with finite-difference gradients and a
//! Levenberg–Marquardt least-squares root finder.
//!
//! Both work on a handful of parameters (a Rabi frequency plus a few
//! detunings), so everything is plain `Vec<f64>` with O(n²) storage.

/// Settings for [`bfgs`].
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when the largest gradient component drops below this.
    pub grad_tol: f64,
    /// Stop after three iterations whose decrease is below
    /// `value_tol * (|f| + value_tol)`.
    pub value_tol: f64,
    /// Stop once the objective is at or below this value.
    pub value_target: f64,
    /// Relative step of the central-difference gradient.
    pub gradient_step: f64,
    /// Longest step (Euclidean) a single line search may take.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            grad_tol: 1e-12,
            value_tol: 1e-10,
            value_target: f64::NEG_INFINITY,
            gradient_step: 1e-6,
            max_step: 1.0,
        }
    }
}

/// Result of a local minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    calls: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.calls += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&mut self, x: &[f64], step: f64) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let h = step * x[i].abs().max(1.0);
                probe[i] = x[i] + h;
                let up = self.eval(&probe);
                probe[i] = x[i] - h;
                let down = self.eval(&probe);
                probe[i] = x[i];
                let g = (up - down) / (2.0 * h);
                if g.is_finite() {
                    g
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Quasi-Newton minimization with an inverse-Hessian BFGS update and
/// backtracking Armijo line search.
pub fn bfgs<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut obj = Counted { f, calls: 0 };
    let mut x = x0.to_vec();
    let mut fx = obj.eval(&x);
    let mut g = obj.gradient(&x, opts.gradient_step);
    let identity = |scale: f64| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = scale;
        }
        h
    };
    let mut hinv = identity(1.0);
    let mut fresh = true;
    let mut stalls = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        if fx <= opts.value_target || g.iter().all(|v| v.abs() <= opts.grad_tol) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut dir: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| hinv[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            hinv = identity(1.0);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let len = norm(&dir);
        if len > opts.max_step {
            let s = opts.max_step / len;
            dir.iter_mut().for_each(|d| *d *= s);
            slope *= s;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            let ft = obj.eval(&trial);
            if ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                // no descent even along the gradient
                converged = true;
                break;
            }
            hinv = identity(1.0);
            fresh = true;
            continue;
        };

        let g_new = obj.gradient(&x_new, opts.gradient_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * norm(&s) * norm(&y) && sy > 0.0 {
            if fresh {
                let scale = sy / dot(&y, &y);
                hinv = identity(scale);
            }
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| hinv[i * n + j] * y[j]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] +=
                        rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
            fresh = false;
        }

        let decrease = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        if decrease <= opts.value_tol * (fx.abs() + opts.value_tol) {
            stalls += 1;
            if stalls >= 3 {
                converged = true;
                break;
            }
        } else {
            stalls = 0;
        }
    }

    Minimum {
        x,
        value: fx,
        iterations,
        evaluations: obj.calls,
        converged,
    }
}

/// Settings for [`levenberg_marquardt`].
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once every residual is at or below this magnitude.
    pub residual_tol: f64,
    /// Relative step of the central-difference Jacobian.
    pub jacobian_step: f64,
    pub initial_damping: f64,
    /// Longest step (Euclidean) per iteration.
    pub max_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            residual_tol: 1e-15,
            jacobian_step: 1e-6,
            initial_damping: 1e-3,
            max_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
}

impl LeastSquares {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Damped Gauss–Newton on `r(x) = 0` with Marquardt scaling. Returns `None`
/// when the residuals become non-finite.
pub fn levenberg_marquardt<R>(mut r: R, x0: &[f64], opts: &LmOptions) -> Option<LeastSquares>
where
    R: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| -> Option<Vec<f64>> {
        evaluations += 1;
        r(x).filter(|v| v.iter().all(|e| e.is_finite()))
    };
    let mut x = x0.to_vec();
    let mut res = eval(&x)?;
    let m = res.len();
    let sumsq = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>();
    let mut cost = sumsq(&res);
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if res.iter().all(|e| e.abs() <= opts.residual_tol) {
            break;
        }
        iterations += 1;

        // Jacobian, column by column
        let mut jac = vec![0.0; m * n];
        let mut probe = x.clone();
        for j in 0..n {
            let h = opts.jacobian_step * x[j].abs().max(1.0);
            probe[j] = x[j] + h;
            let up = eval(&probe)?;
            probe[j] = x[j] - h;
            let down = eval(&probe)?;
            probe[j] = x[j];
            for i in 0..m {
                jac[i * n + j] = (up[i] - down[i]) / (2.0 * h);
            }
        }
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                jtj[a * n + b] = (0..m).map(|i| jac[i * n + a] * jac[i * n + b]).sum();
            }
            jtr[a] = (0..m).map(|i| jac[i * n + a] * res[i]).sum();
        }

        let mut improved = false;
        for _ in 0..30 {
            let mut sys = jtj.clone();
            for a in 0..n {
                sys[a * n + a] += lambda * (jtj[a * n + a] + 1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(mut step) = solve_linear(sys, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let len = norm(&step);
            if len > opts.max_step {
                step.iter_mut().for_each(|s| *s *= opts.max_step / len);
            }
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            if let Some(trial_res) = eval(&trial) {
                let trial_cost = sumsq(&trial_res);
                if trial_cost < cost {
                    x = trial;
                    res = trial_res;
                    cost = trial_cost;
                    lambda = (lambda / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            break;
        }
    }

    Some(LeastSquares {
        x,
        residuals: res,
        iterations,
        evaluations,
    })
}

/// Gaussian elimination with partial pivoting on a row-major `n × n` system.
pub fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
