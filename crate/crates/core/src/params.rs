//! Physical parameters and unit conversion.
//!
//! Everything past the config boundary is linear: powers in mW, gains
//! dimensionless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

/// Samples per coherence block. Only pilot and downlink phases exist.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TddFrame {
    pub tau: usize,
    pub tau_p: usize,
    pub tau_d: usize,
}

impl TddFrame {
    pub const DEFAULT: TddFrame = TddFrame {
        tau: 200,
        tau_p: 20,
        tau_d: 190,
    };

    // The default frame (200, 20, 190) has tau_p + tau_d > tau, so only
    // tau_d <= tau is enforced; the pre-log is all that depends on it.
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 || self.tau_p == 0 || self.tau_d == 0 {
            return Err(Error::Config("frame lengths must be positive".into()));
        }
        if self.tau_d > self.tau {
            return Err(Error::Config(format!(
                "tau_d = {} exceeds tau = {}",
                self.tau_d, self.tau
            )));
        }
        Ok(())
    }

    /// `τ_d / τ`.
    pub fn prelog(&self) -> f64 {
        self.tau_d as f64 / self.tau as f64
    }
}

/// Transmit and noise powers, linear mW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Powers {
    pub rho_ul_mw: f64,
    pub rho_dl_mw: f64,
    pub sigma_ul2_mw: f64,
    pub sigma_n2_mw: f64,
}

impl Powers {
    pub fn from_dbm(rho_ul: f64, rho_dl: f64, sigma_ul2: f64, sigma_n2: f64) -> Self {
        Powers {
            rho_ul_mw: dbm_to_mw(rho_ul),
            rho_dl_mw: dbm_to_mw(rho_dl),
            sigma_ul2_mw: dbm_to_mw(sigma_ul2),
            sigma_n2_mw: dbm_to_mw(sigma_n2),
        }
    }

    /// 10 dBm uplink, 20 dBm downlink, -94 dBm noise on both links.
    pub fn default_link() -> Self {
        Self::from_dbm(10.0, 20.0, -94.0, -94.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho_ul", self.rho_ul_mw),
            ("rho_dl", self.rho_dl_mw),
            ("sigma_ul2", self.sigma_ul2_mw),
            ("sigma_n2", self.sigma_n2_mw),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}
