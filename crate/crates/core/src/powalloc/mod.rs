//! Power allocation between the common stream and the private streams.
//!
//! Every scheme works internally on budget fractions with unit noise (see
//! [`NormalizedCoefficients`]) and returns a physical [`PowerAllocation`].

mod bisection;
mod grid;
mod maxsinr;
mod sca;
mod shares;

pub use bisection::nors_maxmin_bisection;
pub use grid::{maxsum_grid, nors_maxsum};
pub use maxsinr::{maxsinr_gp, nors_gp};
pub use sca::{maxmin_sca, maxsinr_sca, maxsumse_sca, nors_sca, sca_run, ScaObjective, ScaRun};
pub use shares::water_fill;

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::se_eval::{
    evaluate, NormalizedCoefficients, PowerAllocation, RateResult, SECoefficients, ShareRule,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    RsMaxsumGrid,
    RsMaxsinrGp,
    RsMaxminSca,
    RsMaxsumseSca,
    RsMaxsinrSca,
    NorsMaxsum,
    NorsGp,
    NorsSca,
    NorsBisection,
}

impl Scheme {
    pub const ALL: [Scheme; 9] = [
        Scheme::RsMaxsumGrid,
        Scheme::RsMaxsinrGp,
        Scheme::RsMaxminSca,
        Scheme::RsMaxsumseSca,
        Scheme::RsMaxsinrSca,
        Scheme::NorsMaxsum,
        Scheme::NorsGp,
        Scheme::NorsSca,
        Scheme::NorsBisection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::RsMaxsumGrid => "rs_maxsum_grid",
            Scheme::RsMaxsinrGp => "rs_maxsinr_gp",
            Scheme::RsMaxminSca => "rs_maxmin_sca",
            Scheme::RsMaxsumseSca => "rs_maxsumse_sca",
            Scheme::RsMaxsinrSca => "rs_maxsinr_sca",
            Scheme::NorsMaxsum => "nors_maxsum",
            Scheme::NorsGp => "nors_gp",
            Scheme::NorsSca => "nors_sca",
            Scheme::NorsBisection => "nors_bisection",
        }
    }

    pub fn is_rs(self) -> bool {
        matches!(
            self,
            Scheme::RsMaxsumGrid
                | Scheme::RsMaxsinrGp
                | Scheme::RsMaxminSca
                | Scheme::RsMaxsumseSca
                | Scheme::RsMaxsinrSca
        )
    }

    /// NoRS scheme optimizing the same utility, used for RS gains.
    pub fn nors_counterpart(self) -> Option<Scheme> {
        match self {
            Scheme::RsMaxsumGrid | Scheme::RsMaxsumseSca => Some(Scheme::NorsMaxsum),
            Scheme::RsMaxsinrGp | Scheme::RsMaxsinrSca => Some(Scheme::NorsGp),
            Scheme::RsMaxminSca => Some(Scheme::NorsSca),
            _ => None,
        }
    }

    pub fn utility(self) -> Utility {
        match self {
            Scheme::RsMaxsumGrid | Scheme::RsMaxsumseSca | Scheme::NorsMaxsum => Utility::SumSe,
            Scheme::RsMaxsinrGp | Scheme::RsMaxsinrSca | Scheme::NorsGp => Utility::SinrProduct,
            Scheme::RsMaxminSca | Scheme::NorsSca | Scheme::NorsBisection => Utility::MinSe,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Utility {
    SumSe,
    /// `γ_c Π γ_{p,k}`, reported as its natural log.
    SinrProduct,
    MinSe,
}

impl Utility {
    pub fn value(self, r: &RateResult, common_on: bool) -> f64 {
        match self {
            Utility::SumSe => r.sum_se,
            Utility::MinSe => r.min_se,
            Utility::SinrProduct => {
                let private: f64 = r.gamma_p.iter().map(|g| g.ln()).sum();
                if common_on {
                    let gc = r.gamma_c.iter().copied().fold(f64::INFINITY, f64::min);
                    private + gc.ln()
                } else {
                    private
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocOptions {
    /// ζ step of the MaxSum-SE grid.
    pub grid_step: f64,
    /// Stop when the SCA objective moves less than this (bits/s/Hz).
    pub sca_tolerance: f64,
    pub sca_max_iter: usize,
    /// Initial common-power fractions tried by MaxMin; 0 runs the NoRS
    /// formulation.
    pub common_fractions: Vec<f64>,
    /// Relative tolerance on the bisection SINR target.
    pub bisection_tolerance: f64,
    pub exec: Execution,
}

impl Default for AllocOptions {
    fn default() -> Self {
        AllocOptions {
            grid_step: 0.05,
            sca_tolerance: 1e-4,
            sca_max_iter: 100,
            common_fractions: vec![0.0, 0.1, 0.3, 0.5],
            bisection_tolerance: 1e-6,
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub scheme: Scheme,
    pub allocation: PowerAllocation,
    pub rates: RateResult,
    /// Scheme utility evaluated at the returned allocation.
    pub objective: f64,
    /// Grid points, bisection steps, SCA iterations or barrier iterations.
    pub iterations: usize,
    /// SCA surrogate values per accepted iteration; empty for other schemes.
    pub trajectory: Vec<f64>,
}

/// Builds the physical allocation and evaluates it.
pub(crate) fn finish(
    scheme: Scheme,
    coeffs: &SECoefficients,
    budget_mw: f64,
    p_c: f64,
    p: &[f64],
    rule: ShareRule,
    iterations: usize,
    trajectory: Vec<f64>,
) -> Result<AllocationOutcome> {
    let total = p_c + p.iter().sum::<f64>();
    // Clamp barrier round-off back inside the budget.
    let s = if total > 1.0 { 1.0 / total } else { 1.0 };
    let mut alloc = PowerAllocation {
        rho_c: (p_c * s).max(0.0) * budget_mw,
        rho: p.iter().map(|v| (v * s).max(0.0) * budget_mw).collect(),
        budget_mw,
        c_shares: vec![0.0; p.len()],
        share_rule: rule,
    };
    let pre = evaluate(coeffs, &alloc);
    let k = p.len();
    alloc.c_shares = match rule {
        ShareRule::None => vec![0.0; k],
        ShareRule::Equal => vec![pre.se_c / k as f64; k],
        ShareRule::WaterFill => water_fill(&pre.se_p, pre.se_c),
    };
    let rates = evaluate(coeffs, &alloc);
    alloc.validate(rates.se_c)?;
    let objective = scheme.utility().value(&rates, alloc.rho_c > 0.0);
    Ok(AllocationOutcome {
        scheme,
        allocation: alloc,
        rates,
        objective,
        iterations,
        trajectory,
    })
}

pub fn allocate(
    scheme: Scheme,
    coeffs: &SECoefficients,
    budget_mw: f64,
    opts: &AllocOptions,
) -> Result<AllocationOutcome> {
    if !(budget_mw > 0.0) {
        return Err(Error::Config("power budget must be positive".into()));
    }
    match scheme {
        Scheme::RsMaxsumGrid => maxsum_grid(coeffs, budget_mw, opts.grid_step),
        Scheme::NorsMaxsum => nors_maxsum(coeffs, budget_mw),
        Scheme::RsMaxsinrGp => maxsinr_gp(coeffs, budget_mw),
        Scheme::NorsGp => nors_gp(coeffs, budget_mw),
        Scheme::RsMaxminSca => maxmin_sca(coeffs, budget_mw, opts),
        Scheme::NorsSca => nors_sca(coeffs, budget_mw, opts),
        Scheme::RsMaxsumseSca => maxsumse_sca(coeffs, budget_mw, opts),
        Scheme::RsMaxsinrSca => maxsinr_sca(coeffs, budget_mw, opts),
        Scheme::NorsBisection => nors_maxmin_bisection(coeffs, budget_mw, opts.bisection_tolerance),
    }
}

pub(crate) fn normalized(coeffs: &SECoefficients, budget_mw: f64) -> NormalizedCoefficients {
    coeffs.normalized(budget_mw)
}
