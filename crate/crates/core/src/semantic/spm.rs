//! Symbolic protocol model: ground probabilistic clauses over vocabularies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::estimate::{estimate_clause_probabilities, Weighting};
use super::merge::{merge, MergeMode};
use super::pattern::ActivationPattern;
use crate::env::{EnvConfig, NUM_UES};
use crate::error::{Error, Result};
use crate::extract::{
    extract_graph, greedy_state_domain, grid_state_domain, observed_state_domain, ProtocolGraph, VocabId, VocabKind,
};
use crate::nn::{npm_hash, EpisodicMemory, NpModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClauseKind {
    /// `u_i :- b_i`
    Uplink,
    /// `d_i :- u_j`
    Downlink,
    /// `a_i :- d_i`
    Action,
    /// `a_i :- b_i`
    GrantFree,
}

impl ClauseKind {
    pub fn of(tail: &VocabId, head: &VocabId) -> Option<ClauseKind> {
        use VocabKind::*;
        let same_owner = tail.owner == head.owner;
        match (tail.kind, head.kind) {
            (Input, Ucm) if same_owner => Some(ClauseKind::Uplink),
            (Ucm, Dcm) => Some(ClauseKind::Downlink),
            (Dcm, Action) if same_owner => Some(ClauseKind::Action),
            (Input, Action) if same_owner => Some(ClauseKind::GrantFree),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clause {
    pub prob: f64,
    pub head: VocabId,
    pub tail: VocabId,
}

impl Clause {
    pub fn kind(&self) -> ClauseKind {
        ClauseKind::of(&self.tail, &self.head).expect("clauses are validated on insertion")
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{} :- {}.", format_prob(self.prob), self.head, self.tail)
    }
}

/// Shortest round-tripping decimal, with `1.0`/`0.0` for integral values.
pub fn format_prob(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{p:.1}")
    } else {
        format!("{p}")
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Provenance {
    pub npm_hash: String,
    pub merge: MergeMode,
    pub weighting: Weighting,
    /// Total state weight behind the probability estimates.
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Spm {
    clauses: BTreeMap<(VocabId, VocabId), f64>,
    pub patterns: BTreeMap<VocabId, ActivationPattern>,
    pub provenance: Provenance,
}

const MIN_ID: VocabId = VocabId { kind: VocabKind::Input, owner: 0, index: 0 };
const MAX_ID: VocabId = VocabId { kind: VocabKind::Action, owner: usize::MAX, index: usize::MAX };

impl Spm {
    pub fn new(provenance: Provenance) -> Self {
        Self { provenance, ..Default::default() }
    }

    /// Adds or replaces the clause `tail -> head`.
    pub fn insert(&mut self, tail: VocabId, head: VocabId, prob: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::ProbabilityRange(prob));
        }
        if ClauseKind::of(&tail, &head).is_none() {
            return Err(Error::Config(format!("no clause type connects {tail} to {head}")));
        }
        self.clauses.insert((tail, head), prob);
        Ok(())
    }

    pub fn remove(&mut self, tail: VocabId, head: VocabId) -> Option<f64> {
        self.clauses.remove(&(tail, head))
    }

    pub fn prob(&self, tail: VocabId, head: VocabId) -> Option<f64> {
        self.clauses.get(&(tail, head)).copied()
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn clauses(&self) -> impl Iterator<Item = Clause> + '_ {
        self.clauses.iter().map(|(&(tail, head), &prob)| Clause { prob, head, tail })
    }

    pub fn clauses_of(&self, kind: ClauseKind) -> impl Iterator<Item = Clause> + '_ {
        self.clauses().filter(move |c| c.kind() == kind)
    }

    /// Clauses with the given tail, ordered by head id.
    pub fn heads(&self, tail: VocabId) -> impl Iterator<Item = (VocabId, f64)> + '_ {
        self.clauses.range((tail, MIN_ID)..=(tail, MAX_ID)).map(|(&(_, h), &p)| (h, p))
    }

    pub fn vocabulary(&self) -> BTreeSet<VocabId> {
        self.clauses.keys().flat_map(|&(t, h)| [t, h]).collect()
    }

    pub fn vocab_count(&self, kind: VocabKind, owner: Option<usize>) -> usize {
        self.vocabulary().iter().filter(|v| v.kind == kind && owner.is_none_or(|o| v.owner == o)).count()
    }

    /// Head of the uplink clause for UE `ue` at `level`.
    pub fn uplink(&self, ue: usize, level: usize) -> Option<VocabId> {
        self.heads(VocabId::input(ue, level)).find(|(h, p)| h.kind == VocabKind::Ucm && *p > 0.0).map(|(h, _)| h)
    }

    /// Buffer levels of `ue` with an uplink clause.
    pub fn levels(&self, ue: usize) -> BTreeSet<usize> {
        self.clauses_of(ClauseKind::Uplink).filter(|c| c.tail.owner == ue).map(|c| c.tail.index).collect()
    }

    /// Product of the per-UE level sets, in sorted order.
    pub fn domain(&self) -> Vec<[usize; NUM_UES]> {
        let l1 = self.levels(0);
        let l2 = self.levels(1);
        l1.iter().flat_map(|&a| l2.iter().map(move |&b| [a, b])).collect()
    }

    pub fn without_grant_free(&self) -> Spm {
        let mut s = self.clone();
        s.clauses.retain(|(t, h), _| ClauseKind::of(t, h) != Some(ClauseKind::GrantFree));
        s
    }
}

/// Clauses entailed for UE `i` from UE `j`'s input at state `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub state: [usize; NUM_UES],
    pub i: usize,
    pub j: usize,
    pub clauses: Vec<Clause>,
}

/// Follows `b_j -> u_j -> d_i -> a_i` through clauses with positive
/// probability.
pub fn formulate_rule(spm: &Spm, b: [usize; NUM_UES], i: usize, j: usize) -> Result<Rule> {
    if i >= NUM_UES || j >= NUM_UES {
        return Err(Error::UeOutOfRange(i.max(j)));
    }
    let input = VocabId::input(j, b[j]);
    let alphas: Vec<Clause> = spm
        .heads(input)
        .filter(|(h, p)| h.kind == VocabKind::Ucm && *p > 0.0)
        .map(|(head, prob)| Clause { prob, head, tail: input })
        .collect();
    if alphas.is_empty() {
        return Err(Error::NoRule(b[0], b[1]));
    }
    let mut clauses = alphas.clone();
    for a in &alphas {
        let betas: Vec<Clause> = spm
            .heads(a.head)
            .filter(|(h, p)| h.kind == VocabKind::Dcm && h.owner == i && *p > 0.0)
            .map(|(head, prob)| Clause { prob, head, tail: a.head })
            .collect();
        for beta in betas {
            clauses.push(beta);
            for (head, prob) in spm.heads(beta.head).filter(|(h, p)| h.kind == VocabKind::Action && *p > 0.0) {
                clauses.push(Clause { prob, head, tail: beta.head });
            }
        }
    }
    Ok(Rule { state: b, i, j, clauses })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DomainSource {
    /// The full buffer grid, weighted by memory visits plus one.
    #[default]
    Grid,
    /// States recorded in the episodic memory.
    Memory,
    /// States visited in this many greedy test episodes.
    Greedy(u64),
}

impl fmt::Display for DomainSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainSource::Grid => f.write_str("grid"),
            DomainSource::Memory => f.write_str("memory"),
            DomainSource::Greedy(k) => write!(f, "greedy:{k}"),
        }
    }
}

impl std::str::FromStr for DomainSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "grid" => Ok(DomainSource::Grid),
            None if s == "memory" => Ok(DomainSource::Memory),
            Some(("greedy", k)) => {
                k.parse().map(DomainSource::Greedy).map_err(|_| Error::Config(format!("bad episode count in {s:?}")))
            }
            _ => Err(Error::Config(format!("unknown domain source {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpmOptions {
    pub merge: MergeMode,
    pub weighting: Weighting,
    pub domain: DomainSource,
    /// Greedy episodes to run when the memory is empty (0 disables).
    pub fallback_episodes: u64,
    pub grant_free: bool,
}

impl Default for SpmOptions {
    fn default() -> Self {
        Self {
            merge: MergeMode::Connection,
            weighting: Weighting::Empirical,
            domain: DomainSource::Grid,
            fallback_episodes: 20,
            grant_free: false,
        }
    }
}

/// Builds the SPM of an extracted graph. States with zero weight under the
/// chosen weighting are left out of the domain. Without merging every
/// connection becomes a certain clause.
pub fn spm_from_graph(
    graph: &ProtocolGraph,
    visits: &BTreeMap<[usize; NUM_UES], u64>,
    options: &SpmOptions,
    npm_hash: String,
) -> Result<Spm> {
    let merged = merge(graph, options.merge);
    let mut candidate = Spm::default();
    let samples = if options.merge == MergeMode::None {
        for c in merged.connections() {
            candidate.insert(c.tail, c.head, 1.0)?;
        }
        merged.chains.len() as u64
    } else {
        let (probs, total) = estimate_clause_probabilities(&merged, visits, options.weighting)?;
        for ((t, h), p) in probs {
            candidate.insert(t, h, p)?;
        }
        total
    };
    let mut spm = Spm::new(Provenance { npm_hash, merge: options.merge, weighting: options.weighting, samples });
    let weighted = |b: &[usize; NUM_UES]| {
        options.merge == MergeMode::None
            || options.weighting == Weighting::Uniform
            || visits.get(b).is_some_and(|&w| w > 0)
    };
    for b in merged.domain().iter().filter(|b| weighted(b)) {
        for i in 0..NUM_UES {
            for j in 0..NUM_UES {
                for c in formulate_rule(&candidate, *b, i, j)?.clauses {
                    spm.insert(c.tail, c.head, c.prob)?;
                }
            }
        }
    }
    for id in spm.vocabulary() {
        if matches!(id.kind, VocabKind::Ucm | VocabKind::Dcm) {
            if let Some(p) = merged.vocabularies.get(&id).and_then(|p| p.pattern()) {
                spm.patterns.insert(id, p);
            }
        }
    }
    if options.grant_free {
        for c in crate::infer::detect_grant_free(&spm) {
            spm.insert(c.tail, c.head, c.prob)?;
        }
    }
    Ok(spm)
}

/// Extract, merge, estimate and assemble in one pass.
pub fn construct_spm(model: &NpModel, memory: &EpisodicMemory, env: &EnvConfig, options: &SpmOptions) -> Result<Spm> {
    let visits = match options.domain {
        DomainSource::Grid => grid_state_domain(model.b_max, memory),
        DomainSource::Greedy(k) => greedy_state_domain(model, env, k)?,
        DomainSource::Memory => match observed_state_domain(memory) {
            Err(Error::EmptyMemory) if options.fallback_episodes > 0 => {
                greedy_state_domain(model, env, options.fallback_episodes)?
            }
            other => other?,
        },
    };
    let graph = extract_graph(model, visits.keys())?;
    spm_from_graph(&graph, &visits, options, npm_hash(model))
}
