//! Small dense convex programs: `maximize cᵀx` subject to smooth convex
//! constraints `f_i(x) ≤ 0`, solved with a log-barrier Newton method.
//!
//! Constraints carry their own support (the variables they touch) so
//! that Hessian assembly stays cheap when supports are small.

mod barrier;
pub mod gp;

pub use barrier::{phase_one, solve, solve_from};
pub use gp::{gp_log_transform, GpProgram, Monomial, Posynomial};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Affine,
    ConvexQuadratic,
    Exponential2Pow,
    PosynomialLog,
}

/// Body of a constraint over its local support variables `z`.
#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    /// `aᵀz + b`.
    Affine { coef: Vec<f64>, constant: f64 },
    /// `Σ q_j z_j² + aᵀz + b` with `q ≥ 0`.
    Quadratic {
        quad: Vec<f64>,
        coef: Vec<f64>,
        constant: f64,
    },
    /// `w · 2^{s z_e} + aᵀz + b` with `w ≥ 0`.
    Exp2 {
        weight: f64,
        scale: f64,
        exp_index: usize,
        coef: Vec<f64>,
        constant: f64,
    },
    /// `log Σ_t exp(a_tᵀz + b_t)`.
    LogSumExp {
        exponents: Vec<Vec<f64>>,
        log_coefs: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub support: Vec<usize>,
    pub body: Body,
    /// Variable subtracted from the body value; used by phase I.
    pub slack: Option<usize>,
}

impl Constraint {
    pub fn affine(support: Vec<usize>, coef: Vec<f64>, constant: f64) -> Self {
        debug_assert_eq!(support.len(), coef.len());
        Constraint {
            support,
            body: Body::Affine { coef, constant },
            slack: None,
        }
    }

    pub fn quadratic(support: Vec<usize>, quad: Vec<f64>, coef: Vec<f64>, constant: f64) -> Self {
        debug_assert_eq!(support.len(), quad.len());
        debug_assert_eq!(support.len(), coef.len());
        debug_assert!(quad.iter().all(|&q| q >= 0.0));
        Constraint {
            support,
            body: Body::Quadratic {
                quad,
                coef,
                constant,
            },
            slack: None,
        }
    }

    pub fn exp2(
        support: Vec<usize>,
        weight: f64,
        scale: f64,
        exp_index: usize,
        coef: Vec<f64>,
        constant: f64,
    ) -> Self {
        debug_assert!(weight >= 0.0 && exp_index < support.len());
        Constraint {
            support,
            body: Body::Exp2 {
                weight,
                scale,
                exp_index,
                coef,
                constant,
            },
            slack: None,
        }
    }

    pub fn log_sum_exp(support: Vec<usize>, exponents: Vec<Vec<f64>>, log_coefs: Vec<f64>) -> Self {
        debug_assert_eq!(exponents.len(), log_coefs.len());
        Constraint {
            support,
            body: Body::LogSumExp {
                exponents,
                log_coefs,
            },
            slack: None,
        }
    }

    /// Same constraint with `-x[slack]` added.
    pub fn with_shift(&self, slack: usize) -> Self {
        Constraint {
            slack: Some(slack),
            ..self.clone()
        }
    }

    pub fn kind(&self) -> ConstraintKind {
        match self.body {
            Body::Affine { .. } => ConstraintKind::Affine,
            Body::Quadratic { .. } => ConstraintKind::ConvexQuadratic,
            Body::Exp2 { .. } => ConstraintKind::Exponential2Pow,
            Body::LogSumExp { .. } => ConstraintKind::PosynomialLog,
        }
    }

    fn local(&self, x: &[f64]) -> Vec<f64> {
        self.support.iter().map(|&j| x[j]).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let z = self.local(x);
        let shift = self.slack.map_or(0.0, |s| x[s]);
        body_value(&self.body, &z) - shift
    }

    /// Value, local gradient and local Hessian.
    pub(crate) fn eval_local(&self, x: &[f64]) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let z = self.local(x);
        let shift = self.slack.map_or(0.0, |s| x[s]);
        let (v, g, h) = body_eval(&self.body, &z);
        (v - shift, g, h)
    }

    /// Full-length gradient.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (_, g, _) = self.eval_local(x);
        let mut full = vec![0.0; x.len()];
        for (&j, gj) in self.support.iter().zip(g) {
            full[j] += gj;
        }
        if let Some(s) = self.slack {
            full[s] -= 1.0;
        }
        full
    }

    /// Largest relative mismatch between the analytic gradient and central
    /// differences at `x`.
    pub fn gradient_check(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        let mut worst = 0.0_f64;
        let mut xp = x.to_vec();
        for j in 0..x.len() {
            let h = 1e-6 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            let fp = self.value(&xp);
            xp[j] = x[j] - h;
            let fm = self.value(&xp);
            xp[j] = x[j];
            let fd = (fp - fm) / (2.0 * h);
            let err = (fd - g[j]).abs() / (1.0 + g[j].abs());
            worst = worst.max(err);
        }
        worst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn body_value(body: &Body, z: &[f64]) -> f64 {
    match body {
        Body::Affine { coef, constant } => dot(coef, z) + constant,
        Body::Quadratic {
            quad,
            coef,
            constant,
        } => quad.iter().zip(z).map(|(q, v)| q * v * v).sum::<f64>() + dot(coef, z) + constant,
        Body::Exp2 {
            weight,
            scale,
            exp_index,
            coef,
            constant,
        } => weight * (scale * z[*exp_index]).exp2() + dot(coef, z) + constant,
        Body::LogSumExp {
            exponents,
            log_coefs,
        } => {
            let e: Vec<f64> = exponents
                .iter()
                .zip(log_coefs)
                .map(|(a, b)| dot(a, z) + b)
                .collect();
            log_sum_exp(&e)
        }
    }
}

pub(crate) fn log_sum_exp(e: &[f64]) -> f64 {
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + e.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn body_eval(body: &Body, z: &[f64]) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
    let n = z.len();
    match body {
        Body::Affine { coef, .. } => (body_value(body, z), coef.clone(), None),
        Body::Quadratic { quad, coef, .. } => {
            let g = quad
                .iter()
                .zip(coef)
                .zip(z)
                .map(|((q, a), v)| 2.0 * q * v + a)
                .collect();
            let h =
                DMatrix::from_diagonal(&DVector::from_iterator(n, quad.iter().map(|q| 2.0 * q)));
            (body_value(body, z), g, Some(h))
        }
        Body::Exp2 {
            weight,
            scale,
            exp_index,
            coef,
            constant,
        } => {
            let e = weight * (scale * z[*exp_index]).exp2();
            let ln2s = std::f64::consts::LN_2 * scale;
            let mut g = coef.clone();
            g[*exp_index] += e * ln2s;
            let mut h = DMatrix::zeros(n, n);
            h[(*exp_index, *exp_index)] = e * ln2s * ln2s;
            (e + dot(coef, z) + constant, g, Some(h))
        }
        Body::LogSumExp {
            exponents,
            log_coefs,
        } => {
            let e: Vec<f64> = exponents
                .iter()
                .zip(log_coefs)
                .map(|(a, b)| dot(a, z) + b)
                .collect();
            let v = log_sum_exp(&e);
            let p: Vec<f64> = e.iter().map(|t| (t - v).exp()).collect();
            let mut mean = vec![0.0; n];
            for (a, &pt) in exponents.iter().zip(&p) {
                for j in 0..n {
                    mean[j] += pt * a[j];
                }
            }
            let mut h = DMatrix::zeros(n, n);
            for (a, &pt) in exponents.iter().zip(&p) {
                for i in 0..n {
                    let di = a[i] - mean[i];
                    if di == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        h[(i, j)] += pt * di * (a[j] - mean[j]);
                    }
                }
            }
            (v, mean, Some(h))
        }
    }
}

/// `maximize cᵀx` subject to every constraint being `≤ 0`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl Program {
    pub fn new(n_vars: usize) -> Self {
        Program {
            n_vars,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn push(&mut self, c: Constraint) {
        debug_assert!(c.support.iter().all(|&j| j < self.n_vars));
        self.constraints.push(c);
    }

    /// `x_j ≥ lo`.
    pub fn lower_bound(&mut self, j: usize, lo: f64) {
        self.push(Constraint::affine(vec![j], vec![-1.0], lo));
    }

    /// `x_j ≤ hi`.
    pub fn upper_bound(&mut self, j: usize, hi: f64) {
        self.push(Constraint::affine(vec![j], vec![1.0], -hi));
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn strictly_feasible(&self, x: &[f64]) -> bool {
        x.len() == self.n_vars && x.iter().all(|v| v.is_finite()) && self.max_violation(x) < 0.0
    }

    /// Worst gradient mismatch over all constraints at `x`.
    pub fn self_test(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.gradient_check(x))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolveStatus,
    /// Barrier (outer) iterations.
    pub iterations: usize,
    pub newton_steps: usize,
    pub kkt_residual: f64,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    pub max_newton: usize,
    /// Barrier growth factor.
    pub mu: f64,
    /// Phase-I stops once every constraint is below `-margin`.
    pub phase_one_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-6,
            max_iter: 60,
            max_newton: 2000,
            mu: 20.0,
            phase_one_margin: 1e-8,
        }
    }
}
