//! Vocabulary merging.
//!
//! Activation-aware merging groups control messages of one UE by their
//! activation pattern. Connection-aware merging groups DCMs by their action
//! successor sets and then UCMs by their DCM successor sets, repeated until
//! nothing changes. Every merge renumbers control messages canonically by
//! (representative pattern, smallest original index); the representative
//! pattern of a group is that of its lowest-indexed member.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use super::pattern::ActivationPattern;
use crate::error::{Error, Result};
use crate::extract::{Payload, ProtocolGraph, VocabId, VocabKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MergeMode {
    None,
    Activation,
    #[default]
    Connection,
    Both,
}

impl fmt::Display for MergeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergeMode::None => "none",
            MergeMode::Activation => "activation",
            MergeMode::Connection => "connection",
            MergeMode::Both => "both",
        })
    }
}

impl FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MergeMode::None),
            "activation" => Ok(MergeMode::Activation),
            "connection" => Ok(MergeMode::Connection),
            "both" => Ok(MergeMode::Both),
            _ => Err(Error::Config(format!("unknown merge mode {s:?}"))),
        }
    }
}

fn pattern_of(g: &ProtocolGraph, id: VocabId) -> ActivationPattern {
    g.vocabularies.get(&id).and_then(Payload::pattern).unwrap_or_else(|| ActivationPattern::from_bits(Vec::new()))
}

/// Merges vocabularies of `kind` that share `(owner, key)`.
fn merge_by<K: Ord>(g: &ProtocolGraph, kind: VocabKind, key: impl Fn(VocabId) -> K) -> ProtocolGraph {
    let mut groups: BTreeMap<(usize, K), Vec<VocabId>> = BTreeMap::new();
    for &id in g.vocabularies.keys().filter(|v| v.kind == kind) {
        groups.entry((id.owner, key(id))).or_default().push(id);
    }
    let mut by_owner: BTreeMap<usize, Vec<(ActivationPattern, usize, Vec<VocabId>)>> = BTreeMap::new();
    for ((owner, _), members) in groups {
        let first = members[0];
        by_owner.entry(owner).or_default().push((pattern_of(g, first), first.index, members));
    }
    let mut map = BTreeMap::new();
    let mut payloads: BTreeMap<VocabId, Payload> =
        g.vocabularies.iter().filter(|(v, _)| v.kind != kind).map(|(v, p)| (*v, p.clone())).collect();
    for (owner, mut list) in by_owner {
        list.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        for (index, (pattern, _, members)) in list.into_iter().enumerate() {
            let new = VocabId::new(kind, owner, index);
            for m in members {
                map.insert(m, new);
            }
            payloads.insert(new, Payload::Pattern(pattern));
        }
    }
    g.remap(&map, payloads)
}

pub fn merge_activation_aware(g: &ProtocolGraph) -> ProtocolGraph {
    let u = merge_by(g, VocabKind::Ucm, |id| pattern_of(g, id));
    merge_by(&u, VocabKind::Dcm, |id| pattern_of(&u, id))
}

fn successor_sets(g: &ProtocolGraph, kind: VocabKind) -> BTreeMap<VocabId, BTreeSet<VocabId>> {
    let mut out: BTreeMap<VocabId, BTreeSet<VocabId>> = BTreeMap::new();
    for c in &g.chains {
        for (t, h) in c.edges() {
            if t.kind == kind {
                out.entry(t).or_default().insert(h);
            }
        }
    }
    out
}

fn vocab_count(g: &ProtocolGraph) -> usize {
    g.vocabularies.len()
}

pub fn merge_connection_aware(g: &ProtocolGraph) -> ProtocolGraph {
    let mut cur = g.clone();
    loop {
        let before = vocab_count(&cur);
        let dsucc = successor_sets(&cur, VocabKind::Dcm);
        let d = merge_by(&cur, VocabKind::Dcm, |id| dsucc.get(&id).cloned().unwrap_or_default());
        let usucc = successor_sets(&d, VocabKind::Ucm);
        let u = merge_by(&d, VocabKind::Ucm, |id| usucc.get(&id).cloned().unwrap_or_default());
        let done = vocab_count(&u) == before;
        cur = u;
        if done {
            return cur;
        }
    }
}

pub fn merge(g: &ProtocolGraph, mode: MergeMode) -> ProtocolGraph {
    match mode {
        MergeMode::None => g.clone(),
        MergeMode::Activation => merge_activation_aware(g),
        MergeMode::Connection => merge_connection_aware(g),
        MergeMode::Both => merge_connection_aware(&merge_activation_aware(g)),
    }
}
