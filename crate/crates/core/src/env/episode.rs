use std::fmt::Write as _;

use rand::RngCore;

use super::{apply_arrivals, resolve_cycle, BsObservation, CycleOutcome, EnvConfig, EnvState, UeAction, NUM_UES};
use crate::error::Result;
use crate::kpi::{Diagnostics, KpiReport};
use crate::rng::{stream, Stream, StreamRng};

/// A MAC protocol driving both UEs from the environment state.
pub trait Protocol {
    fn decide(&mut self, state: &EnvState, rng: &mut dyn RngCore) -> Result<[UeAction; NUM_UES]>;

    /// Called after every resolved cycle with the actions actually applied.
    fn observe(&mut self, _actions: [UeAction; NUM_UES], _outcome: &CycleOutcome) {}

    /// Called at the start of every episode.
    fn reset(&mut self) {}

    /// Control messages exchanged in the last decision, if the protocol has any.
    fn last_messages(&self) -> Option<String> {
        None
    }

    /// Cumulative diagnostic counters since construction.
    fn diagnostics(&self) -> Diagnostics {
        Diagnostics::default()
    }
}

/// Per-episode ledger. Conservation holds per UE:
/// `arrivals = accessed + discarded + overflow + buffer`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeTally {
    pub cycles: usize,
    pub arrivals: [usize; NUM_UES],
    pub accessed: [usize; NUM_UES],
    pub discarded: [usize; NUM_UES],
    pub overflow: [usize; NUM_UES],
    pub acks: usize,
    pub collisions: usize,
    pub block_errors: usize,
    pub total_reward: f64,
}

impl EpisodeTally {
    pub fn conserves(&self, final_buffers: [usize; NUM_UES]) -> bool {
        (0..NUM_UES).all(|ue| {
            self.arrivals[ue] == self.accessed[ue] + self.discarded[ue] + self.overflow[ue] + final_buffers[ue]
        })
    }
}

pub struct Env {
    config: EnvConfig,
    state: EnvState,
    rng: StreamRng,
    tally: EpisodeTally,
    pending_drops: [usize; NUM_UES],
}

impl Env {
    /// Starts episode `episode`; the first arrivals are already applied.
    pub fn new(config: &EnvConfig, episode: u64) -> Self {
        let mut env = Self {
            config: config.clone(),
            state: EnvState::default(),
            rng: stream(config.seed, Stream::Env(episode)),
            tally: EpisodeTally::default(),
            pending_drops: [0; NUM_UES],
        };
        env.arrive();
        env
    }

    fn arrive(&mut self) {
        let step = apply_arrivals(&self.state, &self.config, &mut self.rng);
        for ue in 0..NUM_UES {
            self.tally.arrivals[ue] += step.arrived[ue] as usize;
            self.tally.overflow[ue] += step.dropped[ue] as usize;
            self.pending_drops[ue] = step.dropped[ue] as usize;
        }
        self.state = step.state;
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// State observed by the protocol for the upcoming cycle.
    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn done(&self) -> bool {
        self.state.cycle >= self.config.t_max
    }

    pub fn tally(&self) -> &EpisodeTally {
        &self.tally
    }

    /// Resolves the current cycle and, unless the episode ended, applies the
    /// next arrivals.
    pub fn step(&mut self, actions: [UeAction; NUM_UES]) -> Result<CycleOutcome> {
        let mut out = resolve_cycle(&self.state, actions, &self.config, &mut self.rng)?;
        out.events.overflow_drops = self.pending_drops;
        let t = &mut self.tally;
        t.cycles += 1;
        t.total_reward += out.reward;
        t.collisions += out.events.collision as usize;
        t.block_errors += out.events.block_error as usize;
        t.acks += matches!(out.observation, BsObservation::Ack(_)) as usize;
        for (ue, a) in actions.iter().enumerate() {
            match a {
                UeAction::Access => t.accessed[ue] += 1,
                UeAction::Discard => t.discarded[ue] += 1,
                UeAction::Silence => {}
            }
        }
        self.state = out.next_state.clone();
        self.pending_drops = [0; NUM_UES];
        if !self.done() {
            self.arrive();
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub cycle: usize,
    pub buffers: [usize; NUM_UES],
    pub actions: [UeAction; NUM_UES],
    pub observation: BsObservation,
    pub reward: f64,
    pub messages: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub trace: Vec<TraceRow>,
    pub tally: EpisodeTally,
    pub final_state: EnvState,
    pub kpi: KpiReport,
}

impl Episode {
    pub const CSV_HEADER: &'static str = "cycle,b1,b2,a1,a2,obs,reward";

    pub fn trace_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.trace {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.cycle, r.buffers[0], r.buffers[1], r.actions[0], r.actions[1], r.observation, r.reward
            );
        }
        out
    }
}

/// Runs one episode of `t_max` cycles: arrivals, decision, resolution.
/// Environment randomness comes from `(config.seed, Env(episode))` and
/// protocol randomness from `(config.seed, Policy(episode))`.
pub fn run_episode(protocol: &mut dyn Protocol, config: &EnvConfig, episode: u64) -> Result<Episode> {
    config.validate()?;
    let mut env = Env::new(config, episode);
    let mut policy_rng = stream(config.seed, Stream::Policy(episode));
    let before = protocol.diagnostics();
    protocol.reset();
    let mut trace = Vec::with_capacity(config.t_max);
    while !env.done() {
        let state = env.state().clone();
        let actions = protocol.decide(&state, &mut policy_rng)?;
        let messages = protocol.last_messages();
        let out = env.step(actions)?;
        protocol.observe(actions, &out);
        trace.push(TraceRow {
            cycle: state.cycle,
            buffers: state.buffers,
            actions,
            observation: out.observation,
            reward: out.reward,
            messages,
        });
    }
    let tally = env.tally().clone();
    let mut kpi = KpiReport::from_tally(&tally, config.t_max);
    kpi.diagnostics = protocol.diagnostics().since(&before);
    Ok(Episode { trace, tally, final_state: env.state().clone(), kpi })
}
