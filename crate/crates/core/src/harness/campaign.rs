use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::chanstat::{
    sample_channels, verify_estimate_dependence, EstimationStatistics, PilotMode,
};
use crate::error::{Error, Result};
use crate::geometry::{
    correlation_matrix, generate_topology, large_scale_fading, NetworkGeometry, TopologyKind,
};
use crate::par::{map_range, with_workers};
use crate::powalloc::{allocate, Scheme};
use crate::precoding::{precoder_statistics, PathChoice, PrecoderStatistics};
use crate::se_eval::{build_coefficients, monte_carlo_coefficients, SECoefficients};

/// Generator for setup `index`: the master seed picks the key, the index
/// picks the stream, so any setup can be replayed alone.
pub fn setup_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Everything drawn and derived for one random setup.
#[derive(Clone, Debug)]
pub struct SetupInstance {
    pub index: usize,
    pub geometry: NetworkGeometry,
    pub beta: Vec<f64>,
    pub stats: EstimationStatistics,
    pub precoders: PrecoderStatistics,
    pub coeffs: SECoefficients,
    /// Seed for this setup's Monte Carlo checks.
    pub mc_seed: u64,
}

pub fn build_setup(cfg: &ExperimentConfig, index: usize) -> Result<SetupInstance> {
    let mut rng = setup_rng(cfg.seed, index);
    let geometry = generate_topology(&cfg.topology_spec(), cfg.users, &mut rng)?;
    let fading = large_scale_fading(&geometry, &cfg.path_loss(), &mut rng)?;
    let scattering = cfg.scattering();
    let mut correlations = Vec::with_capacity(cfg.users);
    for k in 0..cfg.users {
        let r = correlation_matrix(
            fading.beta_linear[k],
            geometry.angles[k],
            cfg.antennas,
            cfg.correlation,
            &scattering,
            &mut rng,
        )?;
        correlations.push(r.matrix);
    }
    let mc_seed = rng.random::<u64>();
    let stats = EstimationStatistics::new(&correlations, &cfg.pilots())?;
    let precoders = precoder_statistics(&stats, PathChoice::Auto)?;
    let powers = cfg.powers();
    let coeffs = build_coefficients(
        &precoders.private,
        &precoders.common,
        powers.sigma_n2_mw,
        cfg.frame().prelog(),
    )?;
    Ok(SetupInstance {
        index,
        geometry,
        beta: fading.beta_linear,
        stats,
        precoders,
        coeffs,
        mc_seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub setup: usize,
    pub scheme: Scheme,
    pub pilot_mode: PilotMode,
    pub topology: TopologyKind,
    pub antennas: usize,
    pub users: usize,
    pub se_ue: Vec<f64>,
    pub se_p: Vec<f64>,
    pub c_shares: Vec<f64>,
    pub se_c: f64,
    pub sum_se: f64,
    pub min_se: f64,
    pub rho_c_mw: f64,
    pub rho_mw: Vec<f64>,
    pub budget_mw: f64,
    pub objective: f64,
    pub iterations: usize,
    pub wallclock_ms: f64,
    /// Largest closed-form vs Monte Carlo relative coefficient error.
    pub mc_max_rel_error: Option<f64>,
}

impl ResultRecord {
    pub fn mean_se(&self) -> f64 {
        self.se_ue.iter().sum::<f64>() / self.se_ue.len() as f64
    }

    pub fn common_fraction(&self) -> f64 {
        self.rho_c_mw / self.budget_mw
    }
}

/// Largest entrywise relative gap `|x − y| / |x|` between two coefficient
/// sets, over `a_c`, `a_p`, `b_c` and `I_c`. Exact zeros are skipped.
pub fn coefficient_error(exact: &SECoefficients, other: &SECoefficients) -> f64 {
    fn rel(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .filter(|(x, _)| **x != 0.0)
            .map(|(x, y)| ((x - y) / x).abs())
            .fold(0.0, f64::max)
    }
    [
        rel(&exact.a_c, &other.a_c),
        rel(&exact.a_p, &other.a_p),
        rel(exact.b_c.as_slice(), other.b_c.as_slice()),
        rel(&exact.i_c, &other.i_c),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Closed-form coefficients against sampled ones for one setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub setup: usize,
    pub samples: usize,
    pub max_rel_error: f64,
    /// Shared-pilot estimate dependence residual on one draw.
    pub dependence_residual: Option<f64>,
}

pub fn validate_setup(cfg: &ExperimentConfig, setup: &SetupInstance) -> Result<ValidationRecord> {
    let mc = monte_carlo_coefficients(
        &setup.stats,
        &setup.precoders.weights,
        setup.coeffs.noise_mw,
        setup.coeffs.prelog,
        cfg.n_mc_samples,
        setup.mc_seed,
        crate::par::Execution::Sequential,
    )?;
    let dependence_residual = if setup.stats.mode == PilotMode::SharedSinglePilot {
        let mut rng = ChaCha8Rng::seed_from_u64(setup.mc_seed ^ 0x5eed);
        let sample = sample_channels(&setup.stats, &mut rng)?;
        Some(verify_estimate_dependence(&sample, &setup.stats)?.residual)
    } else {
        None
    };
    Ok(ValidationRecord {
        setup: setup.index,
        samples: cfg.n_mc_samples,
        max_rel_error: coefficient_error(&setup.coeffs, &mc),
        dependence_residual,
    })
}

fn run_setup(cfg: &ExperimentConfig, index: usize) -> Result<Vec<ResultRecord>> {
    let setup = build_setup(cfg, index)?;
    let mc_err = if cfg.validate_mc {
        Some(validate_setup(cfg, &setup)?.max_rel_error)
    } else {
        None
    };
    let budget = cfg.powers().rho_dl_mw;
    let opts = cfg.alloc_options();
    let mut out = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let start = Instant::now();
        let o = allocate(scheme, &setup.coeffs, budget, &opts)?;
        let wallclock_ms = start.elapsed().as_secs_f64() * 1e3;
        out.push(ResultRecord {
            setup: index,
            scheme,
            pilot_mode: cfg.pilot_mode,
            topology: cfg.topology,
            antennas: cfg.antennas,
            users: cfg.users,
            se_ue: o.rates.se_total.clone(),
            se_p: o.rates.se_p.clone(),
            c_shares: o.allocation.c_shares.clone(),
            se_c: o.rates.se_c,
            sum_se: o.rates.sum_se,
            min_se: o.rates.min_se,
            rho_c_mw: o.allocation.rho_c,
            rho_mw: o.allocation.rho.clone(),
            budget_mw: budget,
            objective: o.objective,
            iterations: o.iterations,
            wallclock_ms,
            mc_max_rel_error: mc_err,
        });
    }
    Ok(out)
}

fn wrap_setup(cfg: &ExperimentConfig, index: usize, e: Error) -> Error {
    Error::Setup {
        setup: index,
        seed: cfg.seed,
        stream: index as u64,
        source: Box::new(e),
    }
}

/// Runs `f` on every setup, in parallel when configured, in setup order.
pub fn for_each_setup<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results = with_workers(cfg.workers, || {
        map_range(cfg.n_setups, cfg.execution, |i| {
            f(i).map_err(|e| wrap_setup(cfg, i, e))
        })
    });
    results.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeAggregate {
    pub setups: usize,
    pub mean_sum_se: f64,
    pub mean_min_se: f64,
    /// Mean over setups and UEs of `SE_k`.
    pub mean_se_per_ue: f64,
    pub mean_se_c: f64,
    pub mean_common_fraction: f64,
    /// `Σ SE_c / Σ sum-SE` over setups.
    pub common_share_of_sum: f64,
    pub mean_wallclock_ms: f64,
}

/// Relative gain `(SE_RS − SE_NoRS) / SE_RS` of averaged metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub rs: Scheme,
    pub nors: Scheme,
    pub min_se_gain: f64,
    pub mean_se_gain: f64,
    pub sum_se_gain: f64,
    /// Mean over setups of `|min SE_RS − min SE_NoRS| / min SE_RS`.
    pub mean_abs_rel_min_se_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schemes: BTreeMap<Scheme, SchemeAggregate>,
    pub gains: Vec<GainSummary>,
}

pub fn relative_gain(rs: f64, nors: f64) -> f64 {
    (rs - nors) / rs
}

/// Aggregates uses only fields that the CSV output carries, so the numbers
/// recomputed from a CSV file are identical.
pub fn summarize(records: &[ResultRecord]) -> Summary {
    let mut by: BTreeMap<Scheme, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        by.entry(r.scheme).or_default().push(r);
    }
    let mut schemes = BTreeMap::new();
    for (&s, rs) in &by {
        let n = rs.len() as f64;
        let mean = |f: &dyn Fn(&ResultRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
        let total_c: f64 = rs.iter().map(|r| r.se_c).sum();
        let total_sum: f64 = rs.iter().map(|r| r.sum_se).sum();
        schemes.insert(
            s,
            SchemeAggregate {
                setups: rs.len(),
                mean_sum_se: mean(&|r| r.sum_se),
                mean_min_se: mean(&|r| r.min_se),
                mean_se_per_ue: mean(&|r| r.mean_se()),
                mean_se_c: mean(&|r| r.se_c),
                mean_common_fraction: mean(&|r| r.common_fraction()),
                common_share_of_sum: if total_sum > 0.0 {
                    total_c / total_sum
                } else {
                    0.0
                },
                mean_wallclock_ms: mean(&|r| r.wallclock_ms),
            },
        );
    }
    let mut gains = Vec::new();
    for (&s, agg) in &schemes {
        let Some(c) = s.nors_counterpart() else {
            continue;
        };
        let Some(base) = schemes.get(&c) else {
            continue;
        };
        let pairs: Vec<(f64, f64)> = by[&s]
            .iter()
            .filter_map(|r| {
                by[&c]
                    .iter()
                    .find(|q| q.setup == r.setup)
                    .map(|q| (r.min_se, q.min_se))
            })
            .collect();
        let diff = if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / pairs.len() as f64
        };
        gains.push(GainSummary {
            rs: s,
            nors: c,
            min_se_gain: relative_gain(agg.mean_min_se, base.mean_min_se),
            mean_se_gain: relative_gain(agg.mean_se_per_ue, base.mean_se_per_ue),
            sum_se_gain: relative_gain(agg.mean_sum_se, base.mean_sum_se),
            mean_abs_rel_min_se_diff: diff,
        });
    }
    Summary { schemes, gains }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub config: ExperimentConfig,
    pub records: Vec<ResultRecord>,
    pub summary: Summary,
}

pub fn run_campaign(cfg: &ExperimentConfig) -> Result<Campaign> {
    cfg.validate()?;
    let per_setup = for_each_setup(cfg, |i| run_setup(cfg, i))?;
    let records: Vec<ResultRecord> = per_setup.into_iter().flatten().collect();
    let summary = summarize(&records);
    Ok(Campaign {
        config: cfg.clone(),
        records,
        summary,
    })
}

pub fn run_validation(cfg: &ExperimentConfig) -> Result<Vec<ValidationRecord>> {
    cfg.validate()?;
    if cfg.n_mc_samples == 0 {
        return Err(Error::Config("validation needs n_mc_samples > 0".into()));
    }
    for_each_setup(cfg, |i| validate_setup(cfg, &build_setup(cfg, i)?))
}

/// One campaign per value of `param`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[f64],
) -> Result<Vec<(f64, Campaign)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.set_param(param, v)?;
            Ok((v, run_campaign(&c)?))
        })
        .collect()
}
