//! Geometric programs in posynomial form and their log-variable transform.

use super::{Constraint, Program};
use crate::error::{Error, Result};

/// `coef · Π x_j^{e_j}` with `coef > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub exponents: Vec<(usize, f64)>,
}

impl Monomial {
    pub fn new(coef: f64, exponents: Vec<(usize, f64)>) -> Self {
        Monomial { coef, exponents }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .fold(self.coef, |acc, &(j, e)| acc * x[j].powf(e))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Posynomial {
    pub terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Posynomial { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }
}

/// `maximize Π x_j^{w_j}` subject to `p_i(x) ≤ 1`, `x > 0`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GpProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Posynomial>,
    /// Lower bound on every `log x_j`; keeps the transformed problem bounded.
    pub log_lower: f64,
}

impl GpProgram {
    pub fn new(n_vars: usize) -> Self {
        GpProgram {
            n_vars,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
            log_lower: -80.0,
        }
    }
}

/// Rewrites the GP over `y = log x`: monomial constraints become affine,
/// the rest become log-sum-exp constraints.
pub fn gp_log_transform(gp: &GpProgram) -> Result<Program> {
    let n = gp.n_vars;
    let mut p = Program::new(n);
    p.objective = gp.objective.clone();
    for (ci, posy) in gp.constraints.iter().enumerate() {
        if posy.terms.is_empty() {
            return Err(Error::Modeling(format!("constraint {ci} has no terms")));
        }
        let mut support: Vec<usize> = Vec::new();
        for t in &posy.terms {
            if !(t.coef > 0.0) || !t.coef.is_finite() {
                return Err(Error::Modeling(format!(
                    "constraint {ci} has a term with coefficient {}",
                    t.coef
                )));
            }
            for &(j, _) in &t.exponents {
                if j >= n {
                    return Err(Error::Modeling(format!("variable {j} out of range")));
                }
                if !support.contains(&j) {
                    support.push(j);
                }
            }
        }
        support.sort_unstable();
        let local = |t: &Monomial| {
            let mut a = vec![0.0; support.len()];
            for &(j, e) in &t.exponents {
                let pos = support.binary_search(&j).expect("index in support");
                a[pos] += e;
            }
            a
        };
        if posy.terms.len() == 1 {
            let t = &posy.terms[0];
            p.push(Constraint::affine(support.clone(), local(t), t.coef.ln()));
        } else {
            let exps = posy.terms.iter().map(local).collect();
            let logs = posy.terms.iter().map(|t| t.coef.ln()).collect();
            p.push(Constraint::log_sum_exp(support.clone(), exps, logs));
        }
    }
    for j in 0..n {
        p.lower_bound(j, gp.log_lower);
    }
    Ok(p)
}
