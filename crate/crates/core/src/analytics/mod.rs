//! Entropy metrics, model selection, collision-free reconfiguration and
//! SPM portfolios.

mod entropy;
mod portfolio;
mod reconfigure;

pub use entropy::{
    clause_entropy, net_entropy, net_entropy_in, select_min_entropy, select_min_vocabulary, select_random,
    EntropyReport, LogBase, Selector,
};
pub use portfolio::{
    continual_baseline, fixed_run, portfolio_run, MarkovEnvConfig, MarkovRun, Portfolio, Regime, RegimeEpisode,
    SelectionMode,
};
pub use reconfigure::{
    collision_probability, manipulation_csv, reconfigure_collision_free, Manipulation, MANIPULATION_CSV_HEADER,
};
