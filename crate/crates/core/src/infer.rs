//! SPM execution: truth probabilities, argmax selection, grant-free shortcuts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::RngCore;

use crate::env::{EnvState, Protocol, UeAction, NUM_UES};
use crate::error::{Error, Result};
use crate::extract::{VocabId, VocabKind};
use crate::kpi::{Diagnostics, Footprint};
use crate::semantic::{serialize_problog, Clause, ClauseKind, Spm};

/// Truth probabilities seen by UE `i` at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthProbabilities {
    pub ucm: VocabId,
    pub ucm_prob: f64,
    /// Joint downlink probability of every DCM reachable from both UCMs.
    pub dcm: BTreeMap<VocabId, f64>,
    /// Action probabilities from the selected DCM.
    pub action: BTreeMap<VocabId, f64>,
}

fn argmax(probs: &BTreeMap<VocabId, f64>) -> Option<(VocabId, f64)> {
    let mut best: Option<(VocabId, f64)> = None;
    for (&id, &p) in probs {
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((id, p));
        }
    }
    best
}

fn other(i: usize) -> usize {
    1 - i
}

/// Probabilities along the CM chain of UE `i`, ignoring grant-free clauses.
pub fn truth_probabilities(spm: &Spm, b: [usize; NUM_UES], i: usize) -> Result<TruthProbabilities> {
    if i >= NUM_UES {
        return Err(Error::UeOutOfRange(i));
    }
    let j = other(i);
    let no_rule = || Error::NoRule(b[0], b[1]);
    let ui = spm.uplink(i, b[i]).ok_or_else(no_rule)?;
    let uj = spm.uplink(j, b[j]).ok_or_else(no_rule)?;
    let ucm_prob = spm.prob(VocabId::input(i, b[i]), ui).unwrap_or(0.0);
    let mut dcm = BTreeMap::new();
    for (d, pi) in spm.heads(ui).filter(|(h, _)| h.kind == VocabKind::Dcm && h.owner == i) {
        if let Some(pj) = spm.prob(uj, d) {
            dcm.insert(d, pi * pj);
        }
    }
    let action = match argmax(&dcm) {
        Some((d, p)) if p > 0.0 => spm.heads(d).filter(|(h, p)| h.kind == VocabKind::Action && *p > 0.0).collect(),
        _ => BTreeMap::new(),
    };
    Ok(TruthProbabilities { ucm: ui, ucm_prob, dcm, action })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UeSelection {
    pub ucm: VocabId,
    /// `None` when the action came from a grant-free clause.
    pub dcm: Option<VocabId>,
    pub action: UeAction,
    pub dcm_prob: f64,
    pub action_prob: f64,
    pub grant_free: bool,
}

fn select_chain(spm: &Spm, b: [usize; NUM_UES], i: usize) -> Result<UeSelection> {
    let t = truth_probabilities(spm, b, i)?;
    let no_rule = || Error::NoRule(b[0], b[1]);
    let (d, dp) = argmax(&t.dcm).filter(|(_, p)| *p > 0.0).ok_or_else(no_rule)?;
    let (a, ap) = argmax(&t.action).ok_or_else(no_rule)?;
    Ok(UeSelection {
        ucm: t.ucm,
        dcm: Some(d),
        action: a.as_action().expect("action clause heads are actions"),
        dcm_prob: dp,
        action_prob: ap,
        grant_free: false,
    })
}

/// Grant-free clause of UE `i` at `level`, if any.
pub fn grant_free_action(spm: &Spm, i: usize, level: usize) -> Option<(UeAction, f64)> {
    spm.heads(VocabId::input(i, level))
        .find(|(h, p)| h.kind == VocabKind::Action && *p > 0.0)
        .map(|(h, p)| (h.as_action().expect("grant-free heads are actions"), p))
}

/// Selection for UE `i`; a grant-free clause takes precedence over the DCM.
pub fn select_ue(spm: &Spm, b: [usize; NUM_UES], i: usize) -> Result<UeSelection> {
    if let Some((action, p)) = grant_free_action(spm, i, b[i]) {
        let ucm = spm.uplink(i, b[i]).ok_or(Error::NoRule(b[0], b[1]))?;
        return Ok(UeSelection { ucm, dcm: None, action, dcm_prob: 0.0, action_prob: p, grant_free: true });
    }
    select_chain(spm, b, i)
}

pub fn select(spm: &Spm, b: [usize; NUM_UES]) -> Result<[UeSelection; NUM_UES]> {
    Ok([select_ue(spm, b, 0)?, select_ue(spm, b, 1)?])
}

/// Truth probability that UE `i` accesses at `b`: the grant-free clause if
/// present, else the Access clause of the selected DCM.
pub fn access_probability(spm: &Spm, b: [usize; NUM_UES], i: usize) -> Result<f64> {
    if let Some((a, p)) = grant_free_action(spm, i, b[i]) {
        return Ok(if a == UeAction::Access { p } else { 0.0 });
    }
    let t = truth_probabilities(spm, b, i)?;
    Ok(t.action.get(&VocabId::action(i, UeAction::Access)).copied().unwrap_or(0.0))
}

/// One grant-free clause per UE and level whose selected DCM and action do
/// not depend on the other UE's level. Existing grant-free clauses are
/// ignored.
pub fn detect_grant_free(spm: &Spm) -> Vec<Clause> {
    let base = spm.without_grant_free();
    let mut out = Vec::new();
    for i in 0..NUM_UES {
        let j = other(i);
        let partners = base.levels(j);
        if partners.is_empty() {
            continue;
        }
        for level in base.levels(i) {
            let mut chains = partners.iter().map(|&lj| {
                let mut b = [0; NUM_UES];
                b[i] = level;
                b[j] = lj;
                select_chain(&base, b, i).ok().map(|s| (s.dcm, s.action))
            });
            let first = chains.next().flatten();
            if let Some((_, action)) = first {
                if chains.all(|c| c == first) {
                    out.push(Clause { prob: 1.0, head: VocabId::action(i, action), tail: VocabId::input(i, level) });
                }
            }
        }
    }
    out
}

/// Returns a copy of `spm` with freshly detected grant-free clauses.
pub fn with_grant_free(spm: &Spm) -> Spm {
    let mut s = spm.without_grant_free();
    for c in detect_grant_free(&s) {
        s.insert(c.tail, c.head, c.prob).expect("grant-free clauses are well-formed");
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceRecord {
    pub cycle: usize,
    pub state: [usize; NUM_UES],
    /// `None` for a UE that fell back to Silence.
    pub selection: [Option<UeSelection>; NUM_UES],
    pub actions: [UeAction; NUM_UES],
}

pub const INFERENCE_CSV_HEADER: &str = "cycle,b1,b2,u1,u2,d1,d2,a1,a2,p_d1,p_d2,p_a1,p_a2,gf1,gf2";

pub fn inference_csv(rows: &[InferenceRecord]) -> String {
    let mut out = String::from(INFERENCE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let sel = |i: usize| r.selection[i];
        let u = |i: usize| sel(i).map_or("-".to_string(), |s| s.ucm.to_string());
        let d = |i: usize| sel(i).and_then(|s| s.dcm).map_or("-".to_string(), |d| d.to_string());
        let pd = |i: usize| sel(i).map_or(0.0, |s| s.dcm_prob);
        let pa = |i: usize| sel(i).map_or(0.0, |s| s.action_prob);
        let gf = |i: usize| sel(i).map_or(0, |s| s.grant_free as u8);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.cycle,
            r.state[0],
            r.state[1],
            u(0),
            u(1),
            d(0),
            d(1),
            r.actions[0].symbol(),
            r.actions[1].symbol(),
            pd(0),
            pd(1),
            pa(0),
            pa(1),
            gf(0),
            gf(1)
        );
    }
    out
}

/// Clause lookups plus comparisons for one cycle at `b`.
pub fn chain_operations(spm: &Spm, b: [usize; NUM_UES]) -> u64 {
    let mut ops = 0;
    for i in 0..NUM_UES {
        if grant_free_action(spm, i, b[i]).is_some() {
            ops += 2;
            continue;
        }
        ops += 2;
        if let Ok(t) = truth_probabilities(spm, b, i) {
            let nd = t.dcm.len() as u64;
            let na = t.action.len() as u64;
            ops += 2 * nd + nd.saturating_sub(1) + na + na.saturating_sub(1);
        }
    }
    ops
}

/// Message length in bits for the larger of the UCM and DCM alphabets.
pub fn spm_cm_bits(spm: &Spm) -> u64 {
    let mut bits = 0;
    for kind in [VocabKind::Ucm, VocabKind::Dcm] {
        for ue in 0..NUM_UES {
            let n = spm.vocab_count(kind, Some(ue)) as u64;
            bits = bits.max(if n <= 1 { 0 } else { 64 - (n - 1).leading_zeros() as u64 });
        }
    }
    bits
}

pub fn spm_footprint(spm: &Spm) -> Footprint {
    let domain = spm.domain();
    Footprint {
        cm_bits: spm_cm_bits(spm),
        model_bytes: serialize_problog(spm).len() as u64,
        inference_flops: domain.iter().map(|&b| chain_operations(spm, b)).max().unwrap_or(0),
    }
}

/// An SPM driving the environment. A UE without a rule for the current state
/// stays silent; Access or Discard on an empty buffer becomes Silence. Both
/// events are counted.
#[derive(Clone, Debug)]
pub struct SpmPolicy {
    spm: Spm,
    diagnostics: Diagnostics,
    record: bool,
    trace: Vec<InferenceRecord>,
    last: Option<InferenceRecord>,
    cycle: usize,
}

impl SpmPolicy {
    pub fn new(spm: Spm) -> Self {
        Self { spm, diagnostics: Diagnostics::default(), record: false, trace: Vec::new(), last: None, cycle: 0 }
    }

    /// Keeps every cycle's selection in [`SpmPolicy::trace`].
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn spm(&self) -> &Spm {
        &self.spm
    }

    pub fn trace(&self) -> &[InferenceRecord] {
        &self.trace
    }

    pub fn footprint(&self) -> Footprint {
        spm_footprint(&self.spm)
    }

    /// Actions the SPM selects at `b`, before buffer checks, with Silence for
    /// UEs without a rule.
    pub fn raw_actions(&self, b: [usize; NUM_UES]) -> [UeAction; NUM_UES] {
        let mut out = [UeAction::Silence; NUM_UES];
        for (i, a) in out.iter_mut().enumerate() {
            if let Ok(s) = select_ue(&self.spm, b, i) {
                *a = s.action;
            }
        }
        out
    }
}

impl Protocol for SpmPolicy {
    fn decide(&mut self, state: &EnvState, _rng: &mut dyn RngCore) -> Result<[UeAction; NUM_UES]> {
        let b = state.buffers;
        let mut selection = [None; NUM_UES];
        let mut actions = [UeAction::Silence; NUM_UES];
        for i in 0..NUM_UES {
            match select_ue(&self.spm, b, i) {
                Ok(s) => {
                    self.diagnostics.grant_free += s.grant_free as u64;
                    if s.action.needs_sdu() && b[i] == 0 {
                        self.diagnostics.invalid_substitutions += 1;
                    } else {
                        actions[i] = s.action;
                    }
                    selection[i] = Some(s);
                }
                Err(Error::NoRule(..)) => self.diagnostics.fallbacks += 1,
                Err(e) => return Err(e),
            }
        }
        let rec = InferenceRecord { cycle: self.cycle, state: b, selection, actions };
        self.cycle += 1;
        if self.record {
            self.trace.push(rec.clone());
        }
        self.last = Some(rec);
        Ok(actions)
    }

    fn reset(&mut self) {
        self.cycle = 0;
    }

    fn last_messages(&self) -> Option<String> {
        let r = self.last.as_ref()?;
        let part = |i: usize| match r.selection[i] {
            None => "-/-".to_string(),
            Some(s) => format!("{}/{}", s.ucm, s.dcm.map_or("-".to_string(), |d| d.to_string())),
        };
        Some(format!("{} {}", part(0), part(1)))
    }

    fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }
}

/// True when every clause kind in `spm` is certain.
pub fn is_deterministic(spm: &Spm) -> bool {
    spm.clauses().all(|c| c.prob == 1.0 || c.kind() == ClauseKind::GrantFree)
}
