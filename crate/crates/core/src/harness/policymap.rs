//! Decision regions over the full buffer grid.

use std::fmt::Write as _;

use crate::env::{UeAction, NUM_UES};
use crate::error::{Error, Result};
use crate::infer::{access_probability, SpmPolicy};
use crate::nn::{sanitize, NpModel};
use crate::semantic::Spm;

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyMapRow {
    pub state: [usize; NUM_UES],
    /// Model output before empty-buffer substitution.
    pub raw: [UeAction; NUM_UES],
    /// Actions the environment executes.
    pub actions: [UeAction; NUM_UES],
    /// NPM Q(Access) or SPM Access truth probability.
    pub access_value: [f64; NUM_UES],
}

pub type PolicyMap = Vec<PolicyMapRow>;

fn grid(b_max: usize) -> impl Iterator<Item = [usize; NUM_UES]> {
    (0..=b_max).flat_map(move |a| (0..=b_max).map(move |b| [a, b]))
}

pub fn npm_policy_map(model: &NpModel) -> Result<PolicyMap> {
    grid(model.b_max)
        .map(|b| {
            let f = model.full_cycle_forward(b)?;
            let q = model.q_values(b)?;
            let access = UeAction::Access.index();
            Ok(PolicyMapRow {
                state: b,
                raw: f.actions,
                actions: sanitize(f.actions, b).0,
                access_value: [q[0][access], q[1][access]],
            })
        })
        .collect()
}

/// Grid up to `b_max`; UEs without a rule stay silent with value 0.
pub fn spm_policy_map(spm: &Spm, b_max: usize) -> PolicyMap {
    let policy = SpmPolicy::new(spm.clone());
    grid(b_max)
        .map(|b| {
            let raw = policy.raw_actions(b);
            let value = |i| access_probability(spm, b, i).unwrap_or(0.0);
            PolicyMapRow { state: b, raw, actions: sanitize(raw, b).0, access_value: [value(0), value(1)] }
        })
        .collect()
}

pub const POLICY_MAP_CSV_HEADER: &str = "b1,b2,a1,a2,raw1,raw2,access1,access2";

pub fn policy_map_csv(map: &PolicyMap) -> String {
    let mut s = format!("{POLICY_MAP_CSV_HEADER}\n");
    for r in map {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.state[0],
            r.state[1],
            r.actions[0],
            r.actions[1],
            r.raw[0],
            r.raw[1],
            r.access_value[0],
            r.access_value[1]
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agreement {
    pub matching: usize,
    pub total: usize,
    pub disagreements: Vec<[usize; NUM_UES]>,
}

impl Agreement {
    pub fn fraction(&self) -> f64 {
        self.matching as f64 / self.total as f64
    }
}

/// States where both UEs execute the same action under the two maps.
pub fn agreement(a: &PolicyMap, b: &PolicyMap) -> Result<Agreement> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.state != y.state) {
        return Err(Error::SizeMismatch("policy maps cover different grids".into()));
    }
    let disagreements: Vec<_> = a.iter().zip(b).filter(|(x, y)| x.actions != y.actions).map(|(x, _)| x.state).collect();
    Ok(Agreement { matching: a.len() - disagreements.len(), total: a.len(), disagreements })
}
