//! Semantic entropy of clauses and SPMs, and entropy-based model selection.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::extract::VocabKind;
use crate::semantic::{format_prob, serialize_problog, Clause, ClauseKind, Spm};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LogBase {
    #[default]
    Nats,
    Bits,
}

impl LogBase {
    fn scale(self) -> f64 {
        match self {
            LogBase::Nats => 1.0,
            LogBase::Bits => std::f64::consts::LOG2_E,
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::Nats => "nats",
            LogBase::Bits => "bits",
        })
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nats" => Ok(LogBase::Nats),
            "bits" => Ok(LogBase::Bits),
            _ => Err(Error::Config(format!("unknown log base {s:?}"))),
        }
    }
}

/// Binary entropy of a clause probability in nats, zero at 0 and 1.
pub fn clause_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    term(p) + term(1.0 - p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyReport {
    pub base: LogBase,
    pub net: f64,
    /// Share of `net` carried by downlink clauses.
    pub partial_beta: f64,
    /// Share of `net` carried by action clauses.
    pub partial_gamma: f64,
    pub per_clause: Vec<(Clause, f64)>,
}

impl EntropyReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("tail,head,prob,entropy\n");
        for (c, h) in &self.per_clause {
            let _ = writeln!(s, "{},{},{},{}", c.tail, c.head, format_prob(c.prob), h);
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "net = {}\npartial_beta = {}\npartial_gamma = {}\nunit = {}\n",
            self.net, self.partial_beta, self.partial_gamma, self.base
        )
    }
}

pub fn net_entropy(spm: &Spm) -> EntropyReport {
    net_entropy_in(spm, LogBase::Nats)
}

pub fn net_entropy_in(spm: &Spm, base: LogBase) -> EntropyReport {
    let k = base.scale();
    let mut report = EntropyReport { base, net: 0.0, partial_beta: 0.0, partial_gamma: 0.0, per_clause: Vec::new() };
    for c in spm.clauses() {
        let h = clause_entropy(c.prob) * k;
        report.net += h;
        match c.kind() {
            ClauseKind::Downlink => report.partial_beta += h,
            ClauseKind::Action => report.partial_gamma += h,
            _ => {}
        }
        report.per_clause.push((c, h));
    }
    report
}

fn total_vocabularies(spm: &Spm) -> usize {
    spm.vocab_count(VocabKind::Ucm, None) + spm.vocab_count(VocabKind::Dcm, None)
}

fn argmin_by<K: PartialOrd>(candidates: &[Spm], key: impl Fn(&Spm) -> K) -> Result<usize> {
    let keys: Vec<(K, usize, String)> =
        candidates.iter().enumerate().map(|(i, s)| (key(s), i, serialize_problog(s))).collect();
    let mut best: Option<&(K, usize, String)> = None;
    for k in &keys {
        let better = match best {
            None => true,
            Some(b) => match k.0.partial_cmp(&b.0) {
                Some(std::cmp::Ordering::Less) => true,
                Some(std::cmp::Ordering::Equal) => k.2 < b.2,
                _ => false,
            },
        };
        if better {
            best = Some(k);
        }
    }
    best.map(|b| b.1).ok_or(Error::EmptyCandidates)
}

/// Index of the SPM with the smallest net entropy. Ties go to fewer UCM and
/// DCM vocabularies, then to the lexicographically smaller text form.
pub fn select_min_entropy(candidates: &[Spm]) -> Result<usize> {
    argmin_by(candidates, |s| (net_entropy(s).net, total_vocabularies(s)))
}

/// Index of the SPM with the fewest UCM and DCM vocabularies.
pub fn select_min_vocabulary(candidates: &[Spm]) -> Result<usize> {
    argmin_by(candidates, |s| (total_vocabularies(s), net_entropy(s).net))
}

pub fn select_random<R: Rng + ?Sized>(candidates: &[Spm], rng: &mut R) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(rng.gen_range(0..candidates.len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selector {
    MinEntropy,
    MinVocabulary,
    Random,
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Selector::MinEntropy),
            "vocab" => Ok(Selector::MinVocabulary),
            "random" => Ok(Selector::Random),
            _ => Err(Error::Config(format!("unknown selector {s:?}"))),
        }
    }
}

impl Selector {
    pub fn pick<R: Rng + ?Sized>(self, candidates: &[Spm], rng: &mut R) -> Result<usize> {
        match self {
            Selector::MinEntropy => select_min_entropy(candidates),
            Selector::MinVocabulary => select_min_vocabulary(candidates),
            Selector::Random => select_random(candidates, rng),
        }
    }
}
