use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chanstat::{PilotAssignment, PilotMode};
use crate::error::{Error, Result};
use crate::geometry::{
    CorrelationModel, PathLossParams, ScatteringParams, TopologyKind, TopologySpec,
};
use crate::par::Execution;
use crate::params::{Powers, TddFrame};
use crate::powalloc::{AllocOptions, Scheme};

/// One campaign. Flat `key = value` TOML; units are part of the key names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(alias = "M")]
    pub antennas: usize,
    #[serde(alias = "K")]
    pub users: usize,
    pub topology: TopologyKind,
    pub sector_width_deg: f64,
    pub sector_center_deg: f64,
    pub rect_side_m: f64,
    pub circle_radius_m: f64,
    pub min_distance_m: f64,
    pub correlation: CorrelationModel,
    pub scattering_clusters: usize,
    pub angular_std_deg: f64,
    pub cluster_spread_deg: f64,
    pub pilot_mode: PilotMode,
    pub schemes: Vec<Scheme>,
    pub pathloss_gain_db: f64,
    pub pathloss_exponent: f64,
    pub shadowing_var_db2: f64,
    pub tau: usize,
    pub tau_p: usize,
    pub tau_d: usize,
    pub rho_ul_dbm: f64,
    pub rho_dl_dbm: f64,
    pub sigma_ul2_dbm: f64,
    pub sigma_n2_dbm: f64,
    pub n_setups: usize,
    pub n_mc_samples: usize,
    /// Compare closed forms against Monte Carlo on every setup.
    pub validate_mc: bool,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Worker threads for setups; 0 lets rayon decide.
    pub workers: usize,
    pub execution: Execution,
    pub grid_step: f64,
    pub sca_tolerance: f64,
    pub sca_max_iter: usize,
    pub common_fractions: Vec<f64>,
    pub bisection_tolerance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let alloc = AllocOptions::default();
        let frame = TddFrame::DEFAULT;
        let pl = PathLossParams::DEFAULT;
        let scat = ScatteringParams::default();
        let topo = TopologySpec::circular(360f64.to_radians());
        ExperimentConfig {
            name: "campaign".into(),
            antennas: 100,
            users: 4,
            topology: topo.kind,
            sector_width_deg: 360.0,
            sector_center_deg: 0.0,
            rect_side_m: topo.rect_side_m,
            circle_radius_m: topo.circle_radius_m,
            min_distance_m: topo.min_distance_m,
            correlation: CorrelationModel::GaussianScattering,
            scattering_clusters: scat.clusters,
            angular_std_deg: scat.angular_std.to_degrees(),
            cluster_spread_deg: scat.cluster_spread.to_degrees(),
            pilot_mode: PilotMode::SharedSinglePilot,
            schemes: vec![Scheme::RsMaxminSca, Scheme::NorsSca],
            pathloss_gain_db: pl.gain_db,
            pathloss_exponent: pl.exponent,
            shadowing_var_db2: pl.shadowing_var_db2,
            tau: frame.tau,
            tau_p: frame.tau_p,
            tau_d: frame.tau_d,
            rho_ul_dbm: 10.0,
            rho_dl_dbm: 20.0,
            sigma_ul2_dbm: -94.0,
            sigma_n2_dbm: -94.0,
            n_setups: 50,
            n_mc_samples: 20_000,
            validate_mc: false,
            seed: 1,
            output_dir: None,
            workers: 0,
            execution: Execution::Parallel,
            grid_step: alloc.grid_step,
            sca_tolerance: alloc.sca_tolerance,
            sca_max_iter: alloc.sca_max_iter,
            common_fractions: alloc.common_fractions,
            bisection_tolerance: alloc.bisection_tolerance,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn topology_spec(&self) -> TopologySpec {
        TopologySpec {
            kind: self.topology,
            sector_width: self.sector_width_deg.to_radians(),
            sector_center: self.sector_center_deg.to_radians(),
            rect_side_m: self.rect_side_m,
            circle_radius_m: self.circle_radius_m,
            min_distance_m: self.min_distance_m,
        }
    }

    pub fn scattering(&self) -> ScatteringParams {
        ScatteringParams {
            clusters: self.scattering_clusters,
            angular_std: self.angular_std_deg.to_radians(),
            cluster_spread: self.cluster_spread_deg.to_radians(),
        }
    }

    pub fn path_loss(&self) -> PathLossParams {
        PathLossParams {
            gain_db: self.pathloss_gain_db,
            exponent: self.pathloss_exponent,
            shadowing_var_db2: self.shadowing_var_db2,
        }
    }

    pub fn frame(&self) -> TddFrame {
        TddFrame {
            tau: self.tau,
            tau_p: self.tau_p,
            tau_d: self.tau_d,
        }
    }

    pub fn powers(&self) -> Powers {
        Powers::from_dbm(
            self.rho_ul_dbm,
            self.rho_dl_dbm,
            self.sigma_ul2_dbm,
            self.sigma_n2_dbm,
        )
    }

    pub fn pilots(&self) -> PilotAssignment {
        let p = self.powers();
        PilotAssignment {
            mode: self.pilot_mode,
            tau_p: self.tau_p,
            rho_ul_mw: p.rho_ul_mw,
            sigma_ul2_mw: p.sigma_ul2_mw,
        }
    }

    pub fn alloc_options(&self) -> AllocOptions {
        AllocOptions {
            grid_step: self.grid_step,
            sca_tolerance: self.sca_tolerance,
            sca_max_iter: self.sca_max_iter,
            common_fractions: self.common_fractions.clone(),
            bisection_tolerance: self.bisection_tolerance,
            // Setups already run in parallel.
            exec: Execution::Sequential,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(Error::Config("need at least one antenna".into()));
        }
        if self.n_setups == 0 {
            return Err(Error::Config("n_setups must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        if self.validate_mc && self.n_mc_samples == 0 {
            return Err(Error::Config("Monte Carlo validation needs samples".into()));
        }
        if self.scattering_clusters == 0 {
            return Err(Error::Config("need at least one scattering cluster".into()));
        }
        self.topology_spec().validate(self.users)?;
        self.frame().validate()?;
        self.powers().validate()?;
        self.pilots().validate(self.users)?;
        let a = self.alloc_options();
        if !(a.grid_step > 0.0 && a.grid_step <= 1.0) {
            return Err(Error::Config("grid_step must lie in (0, 1]".into()));
        }
        if !(a.sca_tolerance > 0.0) || a.sca_max_iter == 0 || !(a.bisection_tolerance > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if a.common_fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
            return Err(Error::Config("common_fractions must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Overrides one numeric field by name, for sweeps.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "{name} needs a whole number, got {v}"
                )))
            }
        };
        match name {
            "M" | "antennas" => self.antennas = as_count(value)?,
            "K" | "users" => self.users = as_count(value)?,
            "n_setups" => self.n_setups = as_count(value)?,
            "sector_width_deg" => self.sector_width_deg = value,
            "rho_dl_dbm" => self.rho_dl_dbm = value,
            "rho_ul_dbm" => self.rho_ul_dbm = value,
            "tau_p" => self.tau_p = as_count(value)?,
            _ => return Err(Error::Config(format!("cannot sweep `{name}`"))),
        }
        Ok(())
    }
}
