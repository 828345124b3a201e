//! Empirical order checks: integrate autonomous test problems with a tableau
//! and fit the slope of `log E` against `log h`.
//!
//! The local error of a method of order `p` scales like `h^(p+1)`, the global
//! error at a fixed horizon like `h^p`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tableau::ButcherTableau;

pub const IMPLICIT_TOL: f64 = 1e-14;
pub const IMPLICIT_MAX_ITER: usize = 200;
/// Levels whose error falls below this fraction of `|y|` are not fitted.
pub const ROUNDING_FLOOR: f64 = 1e-13;
pub const MIN_LEVELS: usize = 4;

/// `y' = g(y)`, `y(0) = y0`, with a closed-form solution.
#[derive(Clone, Debug)]
pub struct TestProblem {
    pub name: &'static str,
    pub dimension: usize,
    pub rhs: fn(&[f64]) -> Vec<f64>,
    pub y0: Vec<f64>,
    pub t_final: f64,
    pub exact: Option<fn(f64) -> Vec<f64>>,
}

impl TestProblem {
    pub fn all() -> Vec<TestProblem> {
        vec![
            TestProblem {
                name: "exp-growth",
                dimension: 1,
                rhs: |y| vec![y[0]],
                y0: vec![1.0],
                t_final: 1.0,
                exact: Some(|t| vec![t.exp()]),
            },
            TestProblem {
                name: "exp-decay",
                dimension: 1,
                rhs: |y| vec![-y[0]],
                y0: vec![1.0],
                t_final: 2.0,
                exact: Some(|t| vec![(-t).exp()]),
            },
            TestProblem {
                name: "logistic",
                dimension: 1,
                rhs: |y| vec![y[0] * (1.0 - y[0])],
                y0: vec![0.5],
                t_final: 2.0,
                exact: Some(|t| vec![1.0 / (1.0 + (-t).exp())]),
            },
            TestProblem {
                name: "quadratic",
                dimension: 1,
                rhs: |y| vec![y[0] * y[0]],
                y0: vec![1.0],
                t_final: 0.5,
                exact: Some(|t| vec![1.0 / (1.0 - t)]),
            },
            TestProblem {
                name: "oscillator",
                dimension: 2,
                rhs: |y| vec![y[1], -y[0]],
                y0: vec![1.0, 0.0],
                t_final: 2.0,
                exact: Some(|t| vec![t.cos(), -t.sin()]),
            },
        ]
    }

    pub fn names() -> Vec<&'static str> {
        Self::all().iter().map(|p| p.name).collect()
    }

    pub fn by_name(name: &str) -> Result<TestProblem> {
        Self::all().into_iter().find(|p| p.name == name).ok_or_else(|| {
            Error::Config(format!(
                "unknown problem `{name}` (known: {})",
                Self::names().join(", ")
            ))
        })
    }
}

/// One step of the method from `y` with step `h`.
pub fn rk_step(tableau: &ButcherTableau, rhs: impl Fn(&[f64]) -> Vec<f64>, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let s = tableau.stages();
    let n = y.len();
    let stage_input = |k: &[Vec<f64>], i: usize, upto: usize| -> Vec<f64> {
        let row = tableau.a_row(i);
        let mut arg = y.to_vec();
        for (j, kj) in k.iter().enumerate().take(upto) {
            if row[j] != 0.0 {
                for (a, v) in arg.iter_mut().zip(kj) {
                    *a += h * row[j] * v;
                }
            }
        }
        arg
    };

    let k: Vec<Vec<f64>> = if is_lower(tableau) {
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(s);
        for i in 0..s {
            let arg = stage_input(&k, i, i);
            k.push(rhs(&arg));
        }
        k
    } else {
        let f0 = rhs(y);
        let mut k = vec![f0; s];
        let mut damping = 1.0;
        let mut prev_change = f64::INFINITY;
        let mut converged = false;
        for _ in 0..IMPLICIT_MAX_ITER {
            let next: Vec<Vec<f64>> = (0..s).map(|i| rhs(&stage_input(&k, i, s))).collect();
            let mut change: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for (ki, ni) in k.iter_mut().zip(&next) {
                for (a, b) in ki.iter_mut().zip(ni) {
                    let updated = (1.0 - damping) * *a + damping * b;
                    change = change.max((updated - *a).abs());
                    scale = scale.max(updated.abs());
                    *a = updated;
                }
            }
            if !change.is_finite() {
                break;
            }
            if change <= IMPLICIT_TOL * (1.0 + scale) {
                converged = true;
                break;
            }
            if change >= prev_change {
                damping = 0.5;
            }
            prev_change = change;
        }
        if !converged {
            return Err(Error::NonConvergence {
                iterations: IMPLICIT_MAX_ITER,
            });
        }
        k
    };

    let mut out = y.to_vec();
    for (w, ki) in tableau.weights().iter().zip(&k) {
        for j in 0..n {
            out[j] += h * w * ki[j];
        }
    }
    Ok(out)
}

fn is_lower(t: &ButcherTableau) -> bool {
    t.is_explicit() || (0..t.stages()).all(|i| t.a_row(i)[i..].iter().all(|&v| v == 0.0))
}

/// Integrates with `steps` equal steps of size `h`.
pub fn integrate(tableau: &ButcherTableau, problem: &TestProblem, h: f64, steps: usize) -> Result<Vec<f64>> {
    let mut y = problem.y0.clone();
    for _ in 0..steps {
        y = rk_step(tableau, problem.rhs, &y, h)?;
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Local,
    Global,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderEstimate {
    pub problem: String,
    pub kind: ErrorKind,
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// Whether each level entered the fit.
    pub used: Vec<bool>,
    /// Least-squares slope of `log E` against `log h`.
    pub slope: f64,
    /// Root mean square residual of the fit in natural log units.
    pub residual: f64,
}

fn exact_of(problem: &TestProblem) -> Result<fn(f64) -> Vec<f64>> {
    problem
        .exact
        .ok_or_else(|| Error::Config(format!("problem `{}` has no exact solution", problem.name)))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn check_levels(h0: f64, levels: usize) -> Result<()> {
    if levels < MIN_LEVELS {
        return Err(Error::Bounds {
            what: "levels",
            value: levels,
            min: MIN_LEVELS,
            max: 60,
        });
    }
    if !(h0 > 0.0 && h0.is_finite()) {
        return Err(Error::Config("h0 must be positive".into()));
    }
    Ok(())
}

/// Error of a single step from `y0` for `h_k = h0 / 2^k`.
pub fn local_order(tableau: &ButcherTableau, problem: &TestProblem, h0: f64, levels: usize) -> Result<OrderEstimate> {
    check_levels(h0, levels)?;
    let exact = exact_of(problem)?;
    let mut steps = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    let mut scales = Vec::with_capacity(levels);
    for k in 0..levels {
        let h = h0 / 2f64.powi(k as i32);
        let y1 = rk_step(tableau, problem.rhs, &problem.y0, h)?;
        let truth = exact(h);
        steps.push(h);
        errors.push(max_abs_diff(&y1, &truth));
        scales.push(max_abs(&truth));
    }
    fit(problem, ErrorKind::Local, steps, errors, scales)
}

/// Error at `t_final` with `n_k = round(t_final / h0) * 2^k` equal steps.
pub fn global_order(tableau: &ButcherTableau, problem: &TestProblem, h0: f64, levels: usize) -> Result<OrderEstimate> {
    check_levels(h0, levels)?;
    let exact = exact_of(problem)?;
    let truth = exact(problem.t_final);
    let base = (problem.t_final / h0).round().max(1.0) as usize;
    let mut steps = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    for k in 0..levels {
        let n = base << k;
        let h = problem.t_final / n as f64;
        let y = integrate(tableau, problem, h, n)?;
        steps.push(h);
        errors.push(max_abs_diff(&y, &truth));
    }
    let scales = vec![max_abs(&truth); levels];
    fit(problem, ErrorKind::Global, steps, errors, scales)
}

fn fit(
    problem: &TestProblem,
    kind: ErrorKind,
    steps: Vec<f64>,
    errors: Vec<f64>,
    scales: Vec<f64>,
) -> Result<OrderEstimate> {
    let used: Vec<bool> = errors
        .iter()
        .zip(&scales)
        .map(|(e, s)| e.is_finite() && *e >= ROUNDING_FLOOR * s.max(f64::MIN_POSITIVE))
        .collect();
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(&errors)
        .zip(&used)
        .filter(|(_, u)| **u)
        .map(|((h, e), _)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Underflow { usable: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(OrderEstimate {
        problem: problem.name.to_string(),
        kind,
        steps,
        errors,
        used,
        slope,
        residual,
    })
}
