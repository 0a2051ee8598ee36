//! Baselines, experiment sweeps, policy maps and plots.

mod baseline;
mod experiment;
mod plot;
mod policymap;

pub use baseline::{SAloha, SAlohaBeb, DEFAULT_BEB_BASE, DEFAULT_W_MAX};
pub use experiment::{
    evaluate, run_experiment, ExperimentConfig, ExperimentResult, ExperimentRow, LoadedProtocol, ProtocolSpec,
};
pub use plot::{line_plot, Series};
pub use policymap::{
    agreement, npm_policy_map, policy_map_csv, spm_policy_map, Agreement, PolicyMap, PolicyMapRow,
    POLICY_MAP_CSV_HEADER,
};
