//! Two-UE MAC protocol learning and its symbolic counterpart.
//!
//! A neural protocol model (NPM) is trained with multi-agent reinforcement
//! learning on a slotted uplink with a base station. Its control-message
//! activations are extracted into a protocol graph, compressed into a
//! symbolic protocol model (SPM) of probabilistic logic clauses, and that SPM
//! drives the same environment. Analytics quantify, select and reconfigure
//! SPMs; the harness compares them to classic random access.

pub mod analytics;
pub mod config;
pub mod env;
pub mod error;
pub mod extract;
pub mod harness;
pub mod infer;
pub mod kpi;
pub mod nn;
pub mod rng;
pub mod semantic;

pub use error::{Error, Result};
