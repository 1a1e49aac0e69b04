//! Network layouts, large-scale fading and spatial correlation.
//!
//! The base station sits at the origin with a half-wavelength uniform
//! linear array whose boresight is the `+x` axis. UE angles are measured
//! from boresight.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::params::db_to_linear;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// UEs uniform in a square centred on the base station.
    Rectangular,
    /// UEs on a circle around the base station.
    Circular,
}

impl TopologyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Rectangular => "rectangular",
            TopologyKind::Circular => "circular",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    /// Angular width θ of the sector the UEs are confined to, radians.
    pub sector_width: f64,
    /// Sector centre, radians from boresight.
    pub sector_center: f64,
    pub rect_side_m: f64,
    pub circle_radius_m: f64,
    pub min_distance_m: f64,
}

impl TopologySpec {
    pub fn rectangular(sector_width: f64) -> Self {
        TopologySpec {
            kind: TopologyKind::Rectangular,
            sector_width,
            sector_center: 0.0,
            rect_side_m: 250.0,
            circle_radius_m: 125.0,
            min_distance_m: 10.0,
        }
    }

    pub fn circular(sector_width: f64) -> Self {
        TopologySpec {
            kind: TopologyKind::Circular,
            ..Self::rectangular(sector_width)
        }
    }

    pub fn validate(&self, users: usize) -> Result<()> {
        if users == 0 {
            return Err(Error::Config("need at least one UE".into()));
        }
        if !(self.sector_width > 0.0 && self.sector_width <= 2.0 * PI + 1e-12) {
            return Err(Error::Config(format!(
                "sector width {} outside (0, 2π]",
                self.sector_width
            )));
        }
        if !(self.min_distance_m >= 0.0) {
            return Err(Error::Config("minimum distance must be nonnegative".into()));
        }
        match self.kind {
            TopologyKind::Rectangular => {
                if !(self.rect_side_m / 2.0 > self.min_distance_m) {
                    return Err(Error::Config(
                        "rectangle too small for the minimum UE distance".into(),
                    ));
                }
            }
            TopologyKind::Circular => {
                if !(self.circle_radius_m > 0.0 && self.circle_radius_m >= self.min_distance_m) {
                    return Err(Error::Config(format!(
                        "circle radius {} m is below the minimum distance",
                        self.circle_radius_m
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkGeometry {
    pub kind: TopologyKind,
    pub sector_width: f64,
    pub users: usize,
    /// Planar UE coordinates in metres, base station at the origin.
    pub positions: Vec<[f64; 2]>,
    /// BS–UE distances in km.
    pub distances_km: Vec<f64>,
    /// Geographical angles from boresight, radians.
    pub angles: Vec<f64>,
}

/// Wraps an angle into `(-π, π]`.
fn wrap(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn generate_topology<R: Rng + ?Sized>(
    spec: &TopologySpec,
    users: usize,
    rng: &mut R,
) -> Result<NetworkGeometry> {
    spec.validate(users)?;
    let half = spec.sector_width / 2.0;
    let mut positions = Vec::with_capacity(users);
    let mut angles = Vec::with_capacity(users);
    match spec.kind {
        TopologyKind::Circular => {
            let r = spec.circle_radius_m;
            for _ in 0..users {
                let offset = rng.random_range(-half..=half);
                let phi = spec.sector_center + offset;
                positions.push([r * phi.cos(), r * phi.sin()]);
                angles.push(phi);
            }
        }
        TopologyKind::Rectangular => {
            let side = spec.rect_side_m / 2.0;
            while positions.len() < users {
                let x = rng.random_range(-side..=side);
                let y = rng.random_range(-side..=side);
                if x.hypot(y) < spec.min_distance_m {
                    continue;
                }
                let offset = wrap(y.atan2(x) - spec.sector_center);
                if offset.abs() > half {
                    continue;
                }
                positions.push([x, y]);
                angles.push(spec.sector_center + offset);
            }
        }
    }
    let distances_km = positions
        .iter()
        .map(|p| p[0].hypot(p[1]).max(spec.min_distance_m) / 1000.0)
        .collect();
    Ok(NetworkGeometry {
        kind: spec.kind,
        sector_width: spec.sector_width,
        users,
        positions,
        distances_km,
        angles,
    })
}

/// Log-distance path loss with shadowing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// Γ, channel gain at 1 km in dB.
    pub gain_db: f64,
    /// η.
    pub exponent: f64,
    /// σ_s² in dB².
    pub shadowing_var_db2: f64,
}

impl PathLossParams {
    pub const DEFAULT: PathLossParams = PathLossParams {
        gain_db: -148.1,
        exponent: 3.76,
        shadowing_var_db2: 16.0,
    };
}

/// Channel gain in dB at `d_km` from the base station.
pub fn path_loss(d_km: f64, shadowing_db: f64, gain_db: f64, exponent: f64) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(Error::Domain(format!(
            "distance must be positive, got {d_km} km"
        )));
    }
    Ok(gain_db - 10.0 * exponent * d_km.log10() + shadowing_db)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleFading {
    pub beta_db: Vec<f64>,
    pub beta_linear: Vec<f64>,
    pub shadowing_db: Vec<f64>,
    pub params: PathLossParams,
}

/// Draws i.i.d. shadowing per UE and evaluates the path-loss model.
pub fn large_scale_fading<R: Rng + ?Sized>(
    geometry: &NetworkGeometry,
    params: &PathLossParams,
    rng: &mut R,
) -> Result<LargeScaleFading> {
    if !(params.shadowing_var_db2 >= 0.0) {
        return Err(Error::Config(
            "shadowing variance must be nonnegative".into(),
        ));
    }
    let shadow = Normal::new(0.0, params.shadowing_var_db2.sqrt())
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut beta_db = Vec::with_capacity(geometry.users);
    let mut shadowing_db = Vec::with_capacity(geometry.users);
    for &d in &geometry.distances_km {
        let s = shadow.sample(rng);
        beta_db.push(path_loss(d, s, params.gain_db, params.exponent)?);
        shadowing_db.push(s);
    }
    let beta_linear = beta_db.iter().map(|&b| db_to_linear(b)).collect();
    Ok(LargeScaleFading {
        beta_db,
        beta_linear,
        shadowing_db,
        params: *params,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationModel {
    GaussianScattering,
    Uncorrelated,
}

impl CorrelationModel {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationModel::GaussianScattering => "gaussian_scattering",
            CorrelationModel::Uncorrelated => "uncorrelated",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringParams {
    /// Number of clusters S.
    pub clusters: usize,
    /// Angular standard deviation σ_φ around each nominal angle, radians.
    pub angular_std: f64,
    /// Nominal cluster angles are uniform within ± this of the UE angle, radians.
    pub cluster_spread: f64,
}

impl Default for ScatteringParams {
    fn default() -> Self {
        ScatteringParams {
            clusters: 10,
            angular_std: 15f64.to_radians(),
            cluster_spread: 40f64.to_radians(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialCorrelation {
    pub matrix: CMatrix,
    pub beta: f64,
    pub model: CorrelationModel,
    pub nominal_angles: Vec<f64>,
}

impl SpatialCorrelation {
    pub fn antennas(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Builds `R_k` for one UE.
///
/// Under Gaussian scattering the matrix is Hermitian Toeplitz with first
/// column `β/S Σ_s exp(iπδ sin φ_s) exp(-σ²/2 (πδ cos φ_s)²)`; it is
/// filled from that column so conjugate symmetry is exact.
pub fn correlation_matrix<R: Rng + ?Sized>(
    beta: f64,
    angle: f64,
    antennas: usize,
    model: CorrelationModel,
    scattering: &ScatteringParams,
    rng: &mut R,
) -> Result<SpatialCorrelation> {
    if antennas == 0 {
        return Err(Error::Config("need at least one antenna".into()));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!(
            "channel gain must be positive, got {beta}"
        )));
    }
    match model {
        CorrelationModel::Uncorrelated => Ok(SpatialCorrelation {
            matrix: CMatrix::identity(antennas, antennas) * C64::new(beta, 0.0),
            beta,
            model,
            nominal_angles: Vec::new(),
        }),
        CorrelationModel::GaussianScattering => {
            if scattering.clusters == 0 {
                return Err(Error::Config("need at least one cluster".into()));
            }
            if !(scattering.angular_std >= 0.0 && scattering.cluster_spread >= 0.0) {
                return Err(Error::Config(
                    "angular parameters must be nonnegative".into(),
                ));
            }
            let spread = scattering.cluster_spread;
            let nominal: Vec<f64> = (0..scattering.clusters)
                .map(|_| angle + rng.random_range(-spread..=spread))
                .collect();
            let var = scattering.angular_std * scattering.angular_std;
            let scale = beta / scattering.clusters as f64;
            let first_col: Vec<C64> = (0..antennas)
                .map(|delta| {
                    let d = PI * delta as f64;
                    let sum = nominal.iter().fold(C64::new(0.0, 0.0), |acc, &phi| {
                        let spread = (-0.5 * var * (d * phi.cos()).powi(2)).exp();
                        acc + C64::from_polar(spread, d * phi.sin())
                    });
                    sum * scale
                })
                .collect();
            let matrix = CMatrix::from_fn(antennas, antennas, |m1, m2| {
                if m1 == m2 {
                    C64::new(beta, 0.0)
                } else if m1 > m2 {
                    first_col[m1 - m2]
                } else {
                    first_col[m2 - m1].conj()
                }
            });
            Ok(SpatialCorrelation {
                matrix,
                beta,
                model,
                nominal_angles: nominal,
            })
        }
    }
}
