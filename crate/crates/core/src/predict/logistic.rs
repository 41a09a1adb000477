//! Logistic regression with ridge-penalized per-participant intercepts.
//!
//! Random participant effects are approximated by one intercept offset per
//! training participant, shrunk toward zero by the same ridge strength that
//! regularizes the feature weights. Fitting is Newton-Raphson (IRLS) with
//! step halving so the penalized objective never increases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lambda: 1.0,
            max_iter: 500,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    /// Offset per training participant, indexed like the `participant` input.
    pub offsets: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective after each accepted step, starting at the origin.
    pub objective_trace: Vec<f64>,
}

impl LogisticModel {
    /// Probability for a row from an unseen participant (offset zero).
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.intercept + dot(&self.weights, x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    participant: &'a [usize],
    m: usize,
    n_participants: usize,
    lambda: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        1 + self.m + self.n_participants
    }

    fn eta(&self, theta: &[f64], i: usize) -> f64 {
        theta[0] + dot(&theta[1..=self.m], &self.x[i]) + theta[1 + self.m + self.participant[i]]
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let nll: f64 = (0..self.y.len())
            .map(|i| {
                let e = self.eta(theta, i);
                softplus(e) - if self.y[i] { e } else { 0.0 }
            })
            .sum();
        nll + 0.5 * self.lambda * theta[1..].iter().map(|t| t * t).sum::<f64>()
    }

    /// Gradient and Hessian of the penalized objective.
    fn derivatives(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (m, d) = (self.m, self.dim());
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        let mut z = vec![0.0; 1 + m];
        for i in 0..self.y.len() {
            let p = sigmoid(self.eta(theta, i));
            let r = p - if self.y[i] { 1.0 } else { 0.0 };
            let s = p * (1.0 - p);
            z[0] = 1.0;
            z[1..].copy_from_slice(&self.x[i]);
            let k = 1 + m + self.participant[i];
            for a in 0..=m {
                g[a] += r * z[a];
                for b in a..=m {
                    h[a * d + b] += s * z[a] * z[b];
                }
                h[a * d + k] += s * z[a];
            }
            g[k] += r;
            h[k * d + k] += s;
        }
        for a in 0..d {
            for b in (a + 1)..d {
                h[b * d + a] = h[a * d + b];
            }
        }
        for a in 1..d {
            g[a] += self.lambda * theta[a];
            h[a * d + a] += self.lambda;
        }
        (g, h)
    }
}

/// Fits the model. `participant[i]` indexes row `i`'s participant in `0..n_participants`.
pub fn fit_logistic(
    x: &[Vec<f64>],
    y: &[bool],
    participant: &[usize],
    n_participants: usize,
    config: &LogisticConfig,
) -> Result<LogisticModel> {
    if x.len() != y.len() || x.len() != participant.len() || x.is_empty() {
        return Err(Error::InvalidShape("rows, labels and participants must align".into()));
    }
    if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(Error::NoClassVariation);
    }
    if participant.iter().any(|&p| p >= n_participants) {
        return Err(Error::InvalidShape("participant index out of range".into()));
    }
    let m = x[0].len();
    let prob = Problem {
        x,
        y,
        participant,
        m,
        n_participants,
        lambda: config.lambda,
    };
    let d = prob.dim();
    let mut theta = vec![0.0; d];
    let mut f = prob.objective(&theta);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let (g, mut h) = prob.derivatives(&theta);
        if g.iter().fold(0.0f64, |a, v| a.max(v.abs())) < config.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut jitter = 0.0;
        let step = loop {
            if let Some(s) = cholesky_solve(&h, d, &g) {
                break s;
            }
            let bump = if jitter == 0.0 { 1e-10 } else { jitter * 9.0 };
            for a in 0..d {
                h[a * d + a] += bump;
            }
            jitter += bump;
            if jitter > 1e6 {
                return Err(Error::InvalidShape("Hessian is not positive definite".into()));
            }
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let fc = prob.objective(&cand);
            if fc <= f {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                let stalled = fc >= f;
                theta = cand;
                f = fc;
                trace.push(f);
                // the gradient can sit above tolerance from summation roundoff alone
                if stalled {
                    converged = true;
                    break;
                }
            }
            // no descent possible at machine precision
            None => {
                converged = true;
                break;
            }
        }
    }

    Ok(LogisticModel {
        intercept: theta[0],
        weights: theta[1..=m].to_vec(),
        offsets: theta[1 + m..].to_vec(),
        iterations,
        converged,
        objective_trace: trace,
    })
}
