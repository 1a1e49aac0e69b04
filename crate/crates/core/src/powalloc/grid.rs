use super::{finish, normalized, AllocationOutcome, Scheme};
use crate::error::{Error, Result};
use crate::se_eval::{SECoefficients, ShareRule};

/// MaxSum-SE by line search over the private fraction `ζ`: `p_c = 1 - ζ`,
/// `p_k = ζ / K`. Ties go to the smaller `ζ`.
pub fn maxsum_grid(
    coeffs: &SECoefficients,
    budget_mw: f64,
    step: f64,
) -> Result<AllocationOutcome> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("grid step {step} outside (0, 1]")));
    }
    let n = coeffs.normalized(budget_mw);
    let k = n.users();
    let points = (1.0 / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for j in 0..=points {
        let zeta = (j as f64 * step).min(1.0);
        let p = vec![zeta / k as f64; k];
        let v = n.sum_se(1.0 - zeta, &p);
        if v > best.0 {
            best = (v, zeta);
        }
    }
    let zeta = best.1;
    let p = vec![zeta / k as f64; k];
    finish(
        Scheme::RsMaxsumGrid,
        coeffs,
        budget_mw,
        1.0 - zeta,
        &p,
        ShareRule::Equal,
        points + 1,
        Vec::new(),
    )
}

/// NoRS sum-SE reference: the whole budget split evenly over private streams.
pub fn nors_maxsum(coeffs: &SECoefficients, budget_mw: f64) -> Result<AllocationOutcome> {
    let k = normalized(coeffs, budget_mw).users();
    let p = vec![1.0 / k as f64; k];
    finish(
        Scheme::NorsMaxsum,
        coeffs,
        budget_mw,
        0.0,
        &p,
        ShareRule::None,
        1,
        Vec::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn coeffs() -> SECoefficients {
        let b = DMatrix::from_row_slice(2, 2, &[2.5, 0.5, 0.4, 3.4]);
        SECoefficients::new(vec![1.5, 2.0], vec![2.0, 3.0], b, vec![0.3, 0.2], 1.0, 0.95).unwrap()
    }

    #[test]
    fn grid_dominates_uniform() {
        let c = coeffs();
        let g = maxsum_grid(&c, 10.0, 0.05).unwrap();
        let u = nors_maxsum(&c, 10.0).unwrap();
        assert!(g.rates.sum_se >= u.rates.sum_se - 1e-12);
        assert!((g.allocation.total_power() - 10.0).abs() < 1e-9);
        assert_eq!(g.iterations, 21);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(maxsum_grid(&coeffs(), 1.0, 0.0).is_err());
    }
}
