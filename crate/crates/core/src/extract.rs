//! Protocol graph extraction.
//!
//! A trained model is replayed over a set of buffer states. Every distinct
//! control-message vector becomes a vocabulary, and every state contributes
//! one chain per UE: `b_j -> u_j -> d_i -> a_i`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use crate::env::{run_episode, EnvConfig, UeAction, NUM_UES};
use crate::error::{Error, Result};
use crate::nn::{EpisodicMemory, NpModel, NpmPolicy};
use crate::semantic::ActivationPattern;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VocabKind {
    Input,
    Ucm,
    Dcm,
    Action,
}

impl VocabKind {
    pub fn prefix(self) -> char {
        match self {
            VocabKind::Input => 'b',
            VocabKind::Ucm => 'u',
            VocabKind::Dcm => 'd',
            VocabKind::Action => 'a',
        }
    }

    /// Stage that a connection from this kind may point to.
    pub fn successor(self) -> Option<VocabKind> {
        match self {
            VocabKind::Input => Some(VocabKind::Ucm),
            VocabKind::Ucm => Some(VocabKind::Dcm),
            VocabKind::Dcm => Some(VocabKind::Action),
            VocabKind::Action => None,
        }
    }
}

/// Vocabulary identifier. `owner` is the 0-based UE index; `index` is the
/// buffer level for inputs, the action index for actions and a running
/// number for control messages. Text form uses 1-based UEs: `u1_3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VocabId {
    pub kind: VocabKind,
    pub owner: usize,
    pub index: usize,
}

impl VocabId {
    pub fn new(kind: VocabKind, owner: usize, index: usize) -> Self {
        Self { kind, owner, index }
    }

    pub fn input(owner: usize, level: usize) -> Self {
        Self::new(VocabKind::Input, owner, level)
    }

    pub fn action(owner: usize, a: UeAction) -> Self {
        Self::new(VocabKind::Action, owner, a.index())
    }

    pub fn as_action(&self) -> Option<UeAction> {
        (self.kind == VocabKind::Action).then(|| UeAction::from_index(self.index)).flatten()
    }

    pub fn parse(s: &str) -> Option<Self> {
        let mut chars = s.chars();
        let kind = match chars.next()? {
            'b' => VocabKind::Input,
            'u' => VocabKind::Ucm,
            'd' => VocabKind::Dcm,
            'a' => VocabKind::Action,
            _ => return None,
        };
        let (ue, rest) = chars.as_str().split_once('_')?;
        if ue.is_empty() || !ue.bytes().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let owner = ue.parse::<usize>().ok()?.checked_sub(1)?;
        let index = if kind == VocabKind::Action {
            let mut r = rest.chars();
            let a = UeAction::from_symbol(r.next()?)?;
            if r.next().is_some() {
                return None;
            }
            a.index()
        } else {
            if rest.is_empty() || !rest.bytes().all(|c| c.is_ascii_digit()) {
                return None;
            }
            rest.parse().ok()?
        };
        Some(Self { kind, owner, index })
    }
}

impl fmt::Display for VocabId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_action() {
            Some(a) => write!(f, "a{}_{}", self.owner + 1, a.symbol()),
            None => write!(f, "{}{}_{}", self.kind.prefix(), self.owner + 1, self.index),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Level(usize),
    Vector(Vec<f64>),
    Pattern(ActivationPattern),
    Action(UeAction),
}

impl Payload {
    pub fn pattern(&self) -> Option<ActivationPattern> {
        match self {
            Payload::Vector(v) => Some(ActivationPattern::of(v)),
            Payload::Pattern(p) => Some(p.clone()),
            _ => None,
        }
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Level(l) => write!(f, "{l}"),
            Payload::Action(a) => write!(f, "{}", a.symbol()),
            Payload::Pattern(p) => write!(f, "{p}"),
            Payload::Vector(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
                write!(f, "{}", parts.join(" "))
            }
        }
    }
}

/// Vocabularies one state selects for both UEs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateChain {
    pub state: [usize; NUM_UES],
    pub ucm: [VocabId; NUM_UES],
    pub dcm: [VocabId; NUM_UES],
    pub action: [VocabId; NUM_UES],
}

impl StateChain {
    pub fn input(&self, ue: usize) -> VocabId {
        VocabId::input(ue, self.state[ue])
    }

    /// Connections of this state: inputs to UCMs, both UCMs to each DCM,
    /// DCMs to actions.
    pub fn edges(&self) -> impl Iterator<Item = (VocabId, VocabId)> + '_ {
        (0..NUM_UES).flat_map(move |i| {
            [
                (self.input(i), self.ucm[i]),
                (self.ucm[0], self.dcm[i]),
                (self.ucm[1], self.dcm[i]),
                (self.dcm[i], self.action[i]),
            ]
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Connection {
    pub tail: VocabId,
    pub head: VocabId,
    pub count: u64,
}

/// The extracted protocol: vocabularies plus one chain per domain state.
/// Connections are the union of chain edges with per-state tallies.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolGraph {
    pub b_max: usize,
    pub vocabularies: BTreeMap<VocabId, Payload>,
    pub chains: Vec<StateChain>,
}

impl ProtocolGraph {
    pub fn domain(&self) -> BTreeSet<[usize; NUM_UES]> {
        self.chains.iter().map(|c| c.state).collect()
    }

    pub fn count(&self, kind: VocabKind, owner: Option<usize>) -> usize {
        self.vocabularies.keys().filter(|v| v.kind == kind && owner.is_none_or(|o| v.owner == o)).count()
    }

    /// Connections tallied once per state.
    pub fn connections(&self) -> Vec<Connection> {
        let mut tally: BTreeMap<(VocabId, VocabId), u64> = BTreeMap::new();
        for c in &self.chains {
            for e in c.edges() {
                *tally.entry(e).or_insert(0) += 1;
            }
        }
        tally.into_iter().map(|((tail, head), count)| Connection { tail, head, count }).collect()
    }

    pub fn successors(&self, id: VocabId) -> BTreeSet<VocabId> {
        self.chains.iter().flat_map(|c| c.edges()).filter(|(t, _)| *t == id).map(|(_, h)| h).collect()
    }

    /// Renames vocabularies through `map` (identity for unmapped ids).
    pub fn remap(&self, map: &BTreeMap<VocabId, VocabId>, payloads: BTreeMap<VocabId, Payload>) -> ProtocolGraph {
        let m = |v: VocabId| *map.get(&v).unwrap_or(&v);
        let chains = self
            .chains
            .iter()
            .map(|c| StateChain { state: c.state, ucm: c.ucm.map(m), dcm: c.dcm.map(m), action: c.action.map(m) })
            .collect();
        ProtocolGraph { b_max: self.b_max, vocabularies: payloads, chains }
    }

    pub fn vocabulary_csv(&self) -> String {
        let mut out = String::from("id,kind,owner,payload\n");
        for (id, p) in &self.vocabularies {
            let _ = writeln!(out, "{id},{:?},{},{p}", id.kind, id.owner + 1);
        }
        out
    }

    pub fn edge_csv(&self) -> String {
        let mut out = String::from("tail_id,head_id,count\n");
        for c in self.connections() {
            let _ = writeln!(out, "{},{},{}", c.tail, c.head, c.count);
        }
        out
    }

    /// Layered text rendering: one block per stage, edges listed under
    /// their tail.
    pub fn render_text(&self) -> String {
        let conns = self.connections();
        let mut out = String::new();
        for kind in [VocabKind::Input, VocabKind::Ucm, VocabKind::Dcm, VocabKind::Action] {
            let _ = writeln!(out, "[{kind:?}]");
            for (id, p) in self.vocabularies.iter().filter(|(v, _)| v.kind == kind) {
                let heads: Vec<String> =
                    conns.iter().filter(|c| c.tail == *id).map(|c| format!("{}x{}", c.head, c.count)).collect();
                if heads.is_empty() {
                    let _ = writeln!(out, "  {id} ({p})");
                } else {
                    let _ = writeln!(out, "  {id} ({p}) -> {}", heads.join(" "));
                }
            }
        }
        out
    }
}

/// Buffer pairs visited in `memory`, with visit counts.
pub fn observed_state_domain(memory: &EpisodicMemory) -> Result<BTreeMap<[usize; NUM_UES], u64>> {
    if memory.is_empty() {
        return Err(Error::EmptyMemory);
    }
    Ok(memory.state_counts())
}

/// Every buffer pair up to `b_max`, weighted by one plus its visit count in
/// `memory`.
pub fn grid_state_domain(b_max: usize, memory: &EpisodicMemory) -> BTreeMap<[usize; NUM_UES], u64> {
    let visits = memory.state_counts();
    (0..=b_max)
        .flat_map(|a| (0..=b_max).map(move |b| [a, b]))
        .map(|s| (s, 1 + visits.get(&s).copied().unwrap_or(0)))
        .collect()
}

/// Domain from `episodes` greedy test runs of `model`.
pub fn greedy_state_domain(model: &NpModel, env: &EnvConfig, episodes: u64) -> Result<BTreeMap<[usize; NUM_UES], u64>> {
    let mut policy = NpmPolicy::new(model.clone());
    let mut counts = BTreeMap::new();
    for e in 0..episodes {
        for row in run_episode(&mut policy, env, e)?.trace {
            *counts.entry(row.buffers).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyDomain);
    }
    Ok(counts)
}

fn intern(table: &mut Vec<Vec<f64>>, v: Vec<f64>) -> usize {
    match table.iter().position(|x| x.iter().map(|a| a.to_bits()).eq(v.iter().map(|a| a.to_bits()))) {
        Some(i) => i,
        None => {
            table.push(v);
            table.len() - 1
        }
    }
}

/// Runs the model on every state of `domain` (in sorted order) and collects
/// vocabularies by exact vector equality.
pub fn extract_graph<'a>(
    model: &NpModel,
    domain: impl IntoIterator<Item = &'a [usize; NUM_UES]>,
) -> Result<ProtocolGraph> {
    let states: BTreeSet<[usize; NUM_UES]> = domain.into_iter().copied().collect();
    if states.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let mut ucms: [Vec<Vec<f64>>; NUM_UES] = Default::default();
    let mut dcms: [Vec<Vec<f64>>; NUM_UES] = Default::default();
    let mut vocab = BTreeMap::new();
    let mut chains = Vec::with_capacity(states.len());
    for b in states {
        let f = model.full_cycle_forward(b)?;
        let mut chain = StateChain {
            state: b,
            ucm: [VocabId::input(0, 0); NUM_UES],
            dcm: [VocabId::input(0, 0); NUM_UES],
            action: [VocabId::input(0, 0); NUM_UES],
        };
        for i in 0..NUM_UES {
            let u = intern(&mut ucms[i], f.u[i].clone());
            let d = intern(&mut dcms[i], f.d[i].clone());
            chain.ucm[i] = VocabId::new(VocabKind::Ucm, i, u);
            chain.dcm[i] = VocabId::new(VocabKind::Dcm, i, d);
            chain.action[i] = VocabId::action(i, f.actions[i]);
            vocab.insert(chain.input(i), Payload::Level(b[i]));
            vocab.insert(chain.ucm[i], Payload::Vector(f.u[i].clone()));
            vocab.insert(chain.dcm[i], Payload::Vector(f.d[i].clone()));
            vocab.insert(chain.action[i], Payload::Action(f.actions[i]));
        }
        chains.push(chain);
    }
    Ok(ProtocolGraph { b_max: model.b_max, vocabularies: vocab, chains })
}
