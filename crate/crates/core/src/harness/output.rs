use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::campaign::{summarize, Campaign, ResultRecord, Summary, ValidationRecord};
use super::config::ExperimentConfig;
use crate::chanstat::PilotMode;
use crate::error::{Error, Result};
use crate::geometry::TopologyKind;
use crate::powalloc::Scheme;

pub const CSV_HEADER: &str =
    "setup,scheme,pilot_mode,topology,M,K,sum_se,min_se,se_c,ue_index,se_ue,rho_c,wallclock_ms";

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    setup: usize,
    scheme: Scheme,
    pilot_mode: PilotMode,
    topology: TopologyKind,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "K")]
    k: usize,
    sum_se: f64,
    min_se: f64,
    se_c: f64,
    ue_index: usize,
    se_ue: f64,
    /// Common power, mW.
    rho_c: f64,
    wallclock_ms: f64,
}

pub fn version_string() -> String {
    match option_env!("RSMA_GIT_DESCRIBE") {
        Some(g) => format!("rsma-mimo {} ({g})", env!("CARGO_PKG_VERSION")),
        None => format!("rsma-mimo {}", env!("CARGO_PKG_VERSION")),
    }
}

/// One row per (record, UE).
pub fn write_csv(path: &Path, records: &[ResultRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Config("no records to write".into()));
    }
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for r in records {
        for (ue, &se) in r.se_ue.iter().enumerate() {
            w.serialize(CsvRow {
                setup: r.setup,
                scheme: r.scheme,
                pilot_mode: r.pilot_mode,
                topology: r.topology,
                m: r.antennas,
                k: r.users,
                sum_se: r.sum_se,
                min_se: r.min_se,
                se_c: r.se_c,
                ue_index: ue,
                se_ue: se,
                rho_c: r.rho_c_mw,
                wallclock_ms: r.wallclock_ms,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds records from a CSV file. Fields the CSV does not carry are left
/// empty; `budget_mw` restores the common-power fraction.
pub fn read_csv(path: &Path, budget_mw: f64) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(File::open(path)?);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header `{header}`")));
    }
    let mut out: Vec<ResultRecord> = Vec::new();
    for row in rdr.deserialize() {
        let row: CsvRow = row?;
        let same = out.last().is_some_and(|r| {
            r.setup == row.setup
                && r.scheme == row.scheme
                && r.antennas == row.m
                && row.ue_index > 0
        });
        if same {
            out.last_mut().expect("checked").se_ue.push(row.se_ue);
            continue;
        }
        out.push(ResultRecord {
            setup: row.setup,
            scheme: row.scheme,
            pilot_mode: row.pilot_mode,
            topology: row.topology,
            antennas: row.m,
            users: row.k,
            se_ue: vec![row.se_ue],
            se_p: Vec::new(),
            c_shares: Vec::new(),
            se_c: row.se_c,
            sum_se: row.sum_se,
            min_se: row.min_se,
            rho_c_mw: row.rho_c,
            rho_mw: Vec::new(),
            budget_mw,
            objective: f64::NAN,
            iterations: 0,
            wallclock_ms: row.wallclock_ms,
            mc_max_rel_error: None,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub version: String,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub summary: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sweep_param: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sweep: Vec<SweepPoint>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub validation: Vec<ValidationRecord>,
}

impl SummaryFile {
    pub fn new(config: &ExperimentConfig) -> Self {
        SummaryFile {
            version: version_string(),
            config: config.clone(),
            summary: None,
            sweep_param: None,
            sweep: Vec::new(),
            validation: Vec::new(),
        }
    }
}

pub fn write_summary(path: &Path, s: &SummaryFile) -> Result<()> {
    let f = File::create(path)?;
    serde_json::to_writer_pretty(f, s)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<SummaryFile> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes `<name>.csv` and `<name>.json` under `dir`.
pub fn write_campaign(dir: &Path, c: &Campaign) -> Result<(PathBuf, PathBuf)> {
    prepare(dir)?;
    let csv = dir.join(format!("{}.csv", c.config.name));
    let json = dir.join(format!("{}.json", c.config.name));
    write_csv(&csv, &c.records)?;
    let mut s = SummaryFile::new(&c.config);
    s.summary = Some(c.summary.clone());
    write_summary(&json, &s)?;
    Ok((csv, json))
}

pub fn write_sweep(
    dir: &Path,
    cfg: &ExperimentConfig,
    param: &str,
    points: &[(f64, Campaign)],
) -> Result<(PathBuf, PathBuf)> {
    prepare(dir)?;
    let csv = dir.join(format!("{}_sweep_{param}.csv", cfg.name));
    let json = dir.join(format!("{}_sweep_{param}.json", cfg.name));
    let all: Vec<ResultRecord> = points.iter().flat_map(|(_, c)| c.records.clone()).collect();
    write_csv(&csv, &all)?;
    let mut s = SummaryFile::new(cfg);
    s.sweep_param = Some(param.to_string());
    s.sweep = points
        .iter()
        .map(|(v, c)| SweepPoint {
            value: *v,
            summary: summarize(&c.records),
        })
        .collect();
    write_summary(&json, &s)?;
    Ok((csv, json))
}

pub fn write_validation(
    dir: &Path,
    cfg: &ExperimentConfig,
    v: &[ValidationRecord],
) -> Result<PathBuf> {
    prepare(dir)?;
    let json = dir.join(format!("{}_validation.json", cfg.name));
    let mut s = SummaryFile::new(cfg);
    s.validation = v.to_vec();
    write_summary(&json, &s)?;
    Ok(json)
}
