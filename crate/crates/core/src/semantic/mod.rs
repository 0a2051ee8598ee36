//! Semantic protocol model: merging, probability estimation, rules, text form.

mod estimate;
mod merge;
mod pattern;
mod problog;
mod spm;

pub use estimate::{estimate_clause_probabilities, ClauseMap, Weighting};
pub use merge::{merge, merge_activation_aware, merge_connection_aware, MergeMode};
pub use pattern::ActivationPattern;
pub use problog::{parse_problog, serialize_problog};
pub use spm::{
    construct_spm, format_prob, formulate_rule, spm_from_graph, Clause, ClauseKind, DomainSource, Provenance, Rule,
    Spm, SpmOptions,
};
