//! Two-UE, one-BS contention environment.
//!
//! A communication cycle runs: SDU arrivals, protocol decision, channel
//! resolution. Arrivals are Bernoulli per UE and cycle, capped at `d_max`
//! per episode. A solo access succeeds unless a block error is drawn; two
//! accesses collide and both SDUs are lost (there is no retransmission).

mod episode;

pub use episode::{run_episode, Env, Episode, EpisodeTally, Protocol, TraceRow};

use std::fmt;

use rand::Rng;

use crate::config::{read_into, KvConfig};
use crate::error::{Error, Result};

pub const NUM_UES: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    /// Arrival probability per UE per cycle.
    pub lambda: [f64; NUM_UES],
    pub b_max: usize,
    /// Cap on cumulative SDU arrivals per UE per episode.
    pub d_max: usize,
    /// Reward for a successfully received SDU.
    pub rho1: f64,
    /// Penalty per discarded SDU.
    pub rho2: f64,
    pub t_max: usize,
    pub eps_block: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { lambda: [0.5, 0.5], b_max: 5, d_max: 12, rho1: 5.0, rho2: 5.0, t_max: 24, eps_block: 0.02, seed: 0 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !self.lambda.iter().all(|&l| unit(l)) {
            return Err(Error::Config(format!("lambda {:?} outside [0, 1]", self.lambda)));
        }
        if !unit(self.eps_block) {
            return Err(Error::Config(format!("eps_block {} outside [0, 1]", self.eps_block)));
        }
        if self.b_max == 0 || self.t_max == 0 || self.d_max == 0 {
            return Err(Error::Config("b_max, t_max and d_max must be >= 1".into()));
        }
        if !(self.rho1 > 0.0 && self.rho2 > 0.0) {
            return Err(Error::Config("rho1 and rho2 must be positive".into()));
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: [f64; NUM_UES]) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_eps_block(mut self, eps: f64) -> Self {
        self.eps_block = eps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of buffer levels, `b_max + 1`.
    pub fn levels(&self) -> usize {
        self.b_max + 1
    }

    /// Reads the documented keys (`lambda` as a pair or `lambda1`/`lambda2`,
    /// `b_max`, `d_max`, `rho1`, `rho2`, `t_max`, `eps_block`, `seed`) on top
    /// of the defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(l) = kv.get_list::<f64>("lambda")? {
            cfg.lambda = match l.as_slice() {
                [x] => [*x, *x],
                [x, y] => [*x, *y],
                _ => return Err(Error::Config("lambda expects one or two values".into())),
            };
        }
        read_into(kv, "lambda1", &mut cfg.lambda[0])?;
        read_into(kv, "lambda2", &mut cfg.lambda[1])?;
        read_into(kv, "b_max", &mut cfg.b_max)?;
        read_into(kv, "d_max", &mut cfg.d_max)?;
        read_into(kv, "rho1", &mut cfg.rho1)?;
        read_into(kv, "rho2", &mut cfg.rho2)?;
        read_into(kv, "t_max", &mut cfg.t_max)?;
        read_into(kv, "eps_block", &mut cfg.eps_block)?;
        read_into(kv, "seed", &mut cfg.seed)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("lambda", format!("{},{}", self.lambda[0], self.lambda[1]));
        kv.set("b_max", self.b_max);
        kv.set("d_max", self.d_max);
        kv.set("rho1", self.rho1);
        kv.set("rho2", self.rho2);
        kv.set("t_max", self.t_max);
        kv.set("eps_block", self.eps_block);
        kv.set("seed", self.seed);
        kv
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub buffers: [usize; NUM_UES],
    pub arrived_total: [usize; NUM_UES],
    pub cycle: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UeAction {
    Silence,
    Access,
    Discard,
}

impl UeAction {
    /// Fixed order, also the tie-break order for argmax selections.
    pub const ALL: [UeAction; 3] = [UeAction::Silence, UeAction::Access, UeAction::Discard];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn symbol(self) -> char {
        match self {
            UeAction::Silence => 'S',
            UeAction::Access => 'A',
            UeAction::Discard => 'D',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'S' => Some(UeAction::Silence),
            'A' => Some(UeAction::Access),
            'D' => Some(UeAction::Discard),
            _ => None,
        }
    }

    /// True when the action needs at least one buffered SDU.
    pub fn needs_sdu(self) -> bool {
        !matches!(self, UeAction::Silence)
    }
}

impl fmt::Display for UeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// What the BS observes at the end of a cycle. UE indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BsObservation {
    Idle,
    Ack(usize),
    Nack,
}

impl fmt::Display for BsObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BsObservation::Idle => write!(f, "idle"),
            BsObservation::Ack(ue) => write!(f, "ack{}", ue + 1),
            BsObservation::Nack => write!(f, "nack"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleEvents {
    pub collision: bool,
    pub block_error: bool,
    pub discards: usize,
    /// SDUs rejected on arrival because the buffer was full. Filled by the
    /// arrival phase feeding this cycle.
    pub overflow_drops: [usize; NUM_UES],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleOutcome {
    pub observation: BsObservation,
    pub reward: f64,
    pub next_state: EnvState,
    pub events: CycleEvents,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArrivalStep {
    pub state: EnvState,
    pub arrived: [bool; NUM_UES],
    pub dropped: [bool; NUM_UES],
}

/// Arrival phase. Always consumes exactly one uniform draw per UE so arrival
/// sequences do not depend on buffer contents or caps.
pub fn apply_arrivals<R: Rng + ?Sized>(state: &EnvState, config: &EnvConfig, rng: &mut R) -> ArrivalStep {
    let mut next = state.clone();
    let mut arrived = [false; NUM_UES];
    let mut dropped = [false; NUM_UES];
    for ue in 0..NUM_UES {
        let draw: f64 = rng.gen();
        if next.arrived_total[ue] >= config.d_max || draw >= config.lambda[ue] {
            continue;
        }
        arrived[ue] = true;
        next.arrived_total[ue] += 1;
        if next.buffers[ue] >= config.b_max {
            dropped[ue] = true;
        } else {
            next.buffers[ue] += 1;
        }
    }
    ArrivalStep { state: next, arrived, dropped }
}

/// Channel phase. Consumes exactly one uniform draw for the block-error test.
pub fn resolve_cycle<R: Rng + ?Sized>(
    state: &EnvState,
    actions: [UeAction; NUM_UES],
    config: &EnvConfig,
    rng: &mut R,
) -> Result<CycleOutcome> {
    for (ue, &action) in actions.iter().enumerate() {
        if action.needs_sdu() && state.buffers[ue] == 0 {
            return Err(Error::InvalidAction { ue, action });
        }
    }
    let draw: f64 = rng.gen();

    let mut next = state.clone();
    next.cycle += 1;
    let mut events = CycleEvents::default();
    let mut accessors = Vec::with_capacity(NUM_UES);
    for (ue, &action) in actions.iter().enumerate() {
        match action {
            UeAction::Silence => {}
            UeAction::Access => {
                next.buffers[ue] -= 1;
                accessors.push(ue);
            }
            UeAction::Discard => {
                next.buffers[ue] -= 1;
                events.discards += 1;
            }
        }
    }

    let observation = match accessors.as_slice() {
        [] => BsObservation::Idle,
        [ue] if draw >= config.eps_block => BsObservation::Ack(*ue),
        [_] => {
            events.block_error = true;
            BsObservation::Nack
        }
        _ => {
            events.collision = true;
            BsObservation::Nack
        }
    };

    let acked = matches!(observation, BsObservation::Ack(_));
    let reward = if !acked && events.discards == 0 {
        -1.0
    } else {
        (if acked { config.rho1 } else { 0.0 }) - config.rho2 * events.discards as f64
    };

    Ok(CycleOutcome { observation, reward, next_state: next, events })
}
