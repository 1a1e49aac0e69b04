use nalgebra::{DMatrix, DVector};

use super::{finish, AllocationOutcome, Scheme};
use crate::error::{Error, Result};
use crate::se_eval::{NormalizedCoefficients, SECoefficients, ShareRule};

/// Powers meeting SINR `γ` for every UE with the least total, if any fit
/// the budget. Solves `(diag(a) - γ B) p = γ 1`; a positive solution is the
/// minimal one whenever one exists.
fn target_powers(n: &NormalizedCoefficients, gamma: f64) -> Option<Vec<f64>> {
    let k = n.users();
    let m = DMatrix::from_fn(k, k, |i, j| {
        let d = if i == j { n.a_p[i] } else { 0.0 };
        d - gamma * n.b_p[(i, j)]
    });
    let p = m.lu().solve(&DVector::from_element(k, gamma))?;
    let ok = p.iter().all(|&v| v > 0.0 && v.is_finite()) && p.sum() <= 1.0;
    ok.then(|| p.iter().copied().collect())
}

/// NoRS max-min SE by bisection on a common SINR target.
pub fn nors_maxmin_bisection(
    coeffs: &SECoefficients,
    budget_mw: f64,
    tol: f64,
) -> Result<AllocationOutcome> {
    let n = coeffs.normalized(budget_mw);
    let k = n.users();
    if n.a_p.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::Modeling("a UE has no private signal gain".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Config("bisection tolerance must be positive".into()));
    }
    // Single-user SINR with the full budget bounds every target.
    let mut hi = n.a_p.iter().copied().fold(0.0, f64::max);
    let mut lo = 0.0;
    let mut best = vec![1.0 / k as f64; k];
    let mut steps = 0;
    while hi - lo > tol * hi.max(f64::MIN_POSITIVE) && steps < 200 {
        let mid = 0.5 * (lo + hi);
        match target_powers(&n, mid) {
            Some(p) => {
                lo = mid;
                best = p;
            }
            None => hi = mid,
        }
        steps += 1;
    }
    // Scaling up raises every SINR, so use the whole budget.
    let s: f64 = best.iter().sum();
    best.iter_mut().for_each(|v| *v /= s);
    finish(
        Scheme::NorsBisection,
        coeffs,
        budget_mw,
        0.0,
        &best,
        ShareRule::None,
        steps,
        Vec::new(),
    )
}
