//! Campaign runner: random setups through the full pipeline, aggregates
//! and file outputs.

mod campaign;
mod config;
mod output;

pub use campaign::{
    build_setup, coefficient_error, for_each_setup, relative_gain, run_campaign, run_sweep,
    run_validation, setup_rng, summarize, validate_setup, Campaign, GainSummary, ResultRecord,
    SchemeAggregate, SetupInstance, Summary, ValidationRecord,
};
pub use config::ExperimentConfig;
pub use output::{
    read_csv, read_summary, version_string, write_campaign, write_csv, write_summary, write_sweep,
    write_validation, SummaryFile, CSV_HEADER,
};
