//! Empirical clause probabilities.
//!
//! Uplink clauses are certain. A downlink clause `d_i :- u_j` gets the
//! weighted share of states selecting `u_j` that also select `d_i`; an action
//! clause `a_i :- d_i` gets the share of states selecting `d_i` whose action
//! is `a_i`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::env::NUM_UES;
use crate::error::{Error, Result};
use crate::extract::{ProtocolGraph, VocabId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Every domain state counts once.
    Uniform,
    /// States count by how often they were visited.
    #[default]
    Empirical,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Uniform => "uniform",
            Weighting::Empirical => "empirical",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "empirical" => Ok(Weighting::Empirical),
            _ => Err(Error::Config(format!("unknown weighting {s:?}"))),
        }
    }
}

pub type ClauseMap = BTreeMap<(VocabId, VocabId), f64>;

/// Clause probabilities keyed by `(tail, head)`. `visits` supplies state
/// weights under [`Weighting::Empirical`]; states without visits are
/// ignored. Returns the clauses and the total weight used.
pub fn estimate_clause_probabilities(
    graph: &ProtocolGraph,
    visits: &BTreeMap<[usize; NUM_UES], u64>,
    weighting: Weighting,
) -> Result<(ClauseMap, u64)> {
    let mut occ: BTreeMap<VocabId, u64> = BTreeMap::new();
    let mut co: BTreeMap<(VocabId, VocabId), u64> = BTreeMap::new();
    let mut total = 0;
    for c in &graph.chains {
        let w = match weighting {
            Weighting::Uniform => 1,
            Weighting::Empirical => visits.get(&c.state).copied().unwrap_or(0),
        };
        if w == 0 {
            continue;
        }
        total += w;
        for i in 0..NUM_UES {
            *occ.entry(c.ucm[i]).or_insert(0) += w;
            *occ.entry(c.dcm[i]).or_insert(0) += w;
        }
        for (t, h) in c.edges() {
            *co.entry((t, h)).or_insert(0) += w;
        }
    }
    if total == 0 {
        return Err(Error::EmptyDomain);
    }
    let mut out = ClauseMap::new();
    for ((t, h), n) in co {
        let p = match occ.get(&t) {
            None => 1.0,
            Some(&o) => n as f64 / o as f64,
        };
        out.insert((t, h), p);
    }
    Ok((out, total))
}
