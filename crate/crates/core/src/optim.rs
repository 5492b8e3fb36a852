//! BFGS quasi-Newton minimization with central-difference derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Stop when ‖∇f‖∞ / max(1, |f|) falls below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Largest coordinate change allowed on a steepest-descent step.
    pub step_scale: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings { gradient_tolerance: 1e-5, max_iterations: 500, step_scale: 1.0 }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) || self.max_iterations < 1 || !(self.step_scale > 0.0) {
            return Err(Error::Input(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    /// The line search could not decrease the objective any further.
    NoProgress,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    /// Scaled gradient infinity-norm at `x`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

/// Scaled gradient norms up to this value count as converged when the line
/// search stalls on finite-difference noise.
pub const STALL_ACCEPT: f64 = 1e-4;

impl Minimum {
    pub fn converged(&self) -> bool {
        match self.termination {
            Termination::GradientTolerance => true,
            Termination::NoProgress => self.grad_norm < STALL_ACCEPT,
            Termination::MaxIterations => false,
        }
    }
}

#[inline]
fn step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

fn stencil_error(i: usize, v: f64) -> Error {
    Error::Numerical(format!("non-finite objective value {v} in difference stencil along coordinate {i}"))
}

/// Central-difference gradient with steps 1e−5·max(1, |xᵢ|).
pub fn num_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Result<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        for v in [fp, fm] {
            if !v.is_finite() {
                return Err(stencil_error(i, v));
            }
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// Central-difference Hessian, symmetric by construction.
pub fn num_hessian<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let f0 = f(x);
    if !f0.is_finite() {
        return Err(Error::Numerical(format!("non-finite objective {f0} at Hessian centre")));
    }
    let mut h = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    let eval = |xp: &[f64], i: usize, f: &mut F| -> Result<f64> {
        let v = f(xp);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(stencil_error(i, v))
        }
    };
    for i in 0..n {
        let hi = step(x[i]);
        xp[i] = x[i] + hi;
        let fp = eval(&xp, i, f)?;
        xp[i] = x[i] - hi;
        let fm = eval(&xp, i, f)?;
        xp[i] = x[i];
        h[i][i] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in i + 1..n {
            let hj = step(x[j]);
            let mut corner = |si: f64, sj: f64, f: &mut F| -> Result<f64> {
                xp[i] = x[i] + si * hi;
                xp[j] = x[j] + sj * hj;
                let v = eval(&xp, i, f);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let pp = corner(1.0, 1.0, f)?;
            let pm = corner(1.0, -1.0, f)?;
            let mp = corner(-1.0, 1.0, f)?;
            let mm = corner(-1.0, -1.0, f)?;
            let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    Ok(h)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` from `x0` by BFGS with backtracking line search. The
/// returned point is never worse than `x0`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    settings: &OptimizerSettings,
) -> Result<Minimum> {
    settings.validate()?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evaluations = 1;
    if !fx.is_finite() {
        return Err(Error::Optimizer {
            stage: String::new(),
            reason: format!("objective is {fx} at the starting point"),
            last_iterate: x,
        });
    }
    let wrap = |e: Error, x: &[f64]| Error::Optimizer {
        stage: String::new(),
        reason: e.to_string(),
        last_iterate: x.to_vec(),
    };
    let mut g = num_gradient(f, &x).map_err(|e| wrap(e, &x))?;
    evaluations += 2 * n;
    // inverse Hessian approximation, row-major
    let mut hinv = vec![0.0; n * n];
    let mut fresh = true;
    let mut iterations = 0;
    let scaled = |g: &[f64], fx: f64| inf_norm(g) / fx.abs().max(1.0);

    let termination = loop {
        if n == 0 || scaled(&g, fx) < settings.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= settings.max_iterations {
            break Termination::MaxIterations;
        }
        let mut d: Vec<f64>;
        let mut slope;
        if fresh {
            let s = settings.step_scale / inf_norm(&g);
            d = g.iter().map(|v| -v * s).collect();
            slope = dot(&g, &d);
        } else {
            d = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                let s = settings.step_scale / inf_norm(&g);
                d = g.iter().map(|v| -v * s).collect();
                slope = dot(&g, &d);
                fresh = true;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let ft = f(&xt);
            evaluations += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope && ft < fx {
                accepted = Some((xt, ft));
                break;
            }
            let next = if ft.is_finite() {
                let denom = 2.0 * (ft - fx - alpha * slope);
                if denom > 0.0 {
                    (-slope * alpha * alpha / denom).clamp(0.1 * alpha, 0.5 * alpha)
                } else {
                    0.5 * alpha
                }
            } else {
                0.25 * alpha
            };
            alpha = next;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                break Termination::NoProgress;
            }
            fresh = true;
            continue;
        };
        let gn = num_gradient(f, &xn).map_err(|e| wrap(e, &xn))?;
        evaluations += 2 * n;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                hinv.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n {
                    hinv[i * n + i] = scale;
                }
                fresh = false;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        x = xn;
        fx = fnew;
        g = gn;
        iterations += 1;
    };

    Ok(Minimum { grad_norm: scaled(&g, fx), x, f: fx, iterations, evaluations, termination })
}

/// H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ with ρ = 1/(sᵀy).
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
