//! Random-access baselines.

use rand::{Rng, RngCore};

use crate::env::{CycleOutcome, EnvState, Protocol, UeAction, NUM_UES};
use crate::error::{Error, Result};

/// Slotted ALOHA: a UE holding an SDU accesses with probability `p`.
#[derive(Clone, Debug)]
pub struct SAloha {
    p: f64,
}

impl SAloha {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProbabilityRange(p));
        }
        Ok(Self { p })
    }
}

impl Protocol for SAloha {
    fn decide(&mut self, state: &EnvState, rng: &mut dyn RngCore) -> Result<[UeAction; NUM_UES]> {
        let mut out = [UeAction::Silence; NUM_UES];
        for (ue, a) in out.iter_mut().enumerate() {
            let draw: f64 = rng.gen();
            if state.buffers[ue] > 0 && draw < self.p {
                *a = UeAction::Access;
            }
        }
        Ok(out)
    }
}

/// Slotted ALOHA with binary exponential backoff. A UE with an SDU accesses
/// unless it is backing off. Each collision multiplies its window by `base`
/// up to `w_max` and draws a backoff uniformly from `0..window`; an Ack
/// resets the window to 1. Block errors leave the window unchanged.
#[derive(Clone, Debug)]
pub struct SAlohaBeb {
    base: usize,
    w_max: usize,
    window: [usize; NUM_UES],
    backoff: [usize; NUM_UES],
    pending_draw: [bool; NUM_UES],
}

pub const DEFAULT_BEB_BASE: usize = 2;
pub const DEFAULT_W_MAX: usize = 16;

impl SAlohaBeb {
    pub fn new(base: usize, w_max: usize) -> Result<Self> {
        if base < 2 || w_max < 1 {
            return Err(Error::Config(format!("BEB needs base >= 2 and w_max >= 1, got {base} and {w_max}")));
        }
        Ok(Self { base, w_max, window: [1; NUM_UES], backoff: [0; NUM_UES], pending_draw: [false; NUM_UES] })
    }

    pub fn window(&self, ue: usize) -> usize {
        self.window[ue]
    }
}

impl Default for SAlohaBeb {
    fn default() -> Self {
        Self::new(DEFAULT_BEB_BASE, DEFAULT_W_MAX).expect("default parameters are valid")
    }
}

impl Protocol for SAlohaBeb {
    fn decide(&mut self, state: &EnvState, rng: &mut dyn RngCore) -> Result<[UeAction; NUM_UES]> {
        let mut out = [UeAction::Silence; NUM_UES];
        for ue in 0..NUM_UES {
            if self.pending_draw[ue] {
                self.backoff[ue] = rng.gen_range(0..self.window[ue]);
                self.pending_draw[ue] = false;
            }
            if self.backoff[ue] > 0 {
                self.backoff[ue] -= 1;
            } else if state.buffers[ue] > 0 {
                out[ue] = UeAction::Access;
            }
        }
        Ok(out)
    }

    fn observe(&mut self, actions: [UeAction; NUM_UES], outcome: &CycleOutcome) {
        for ue in 0..NUM_UES {
            if actions[ue] != UeAction::Access {
                continue;
            }
            if outcome.events.collision {
                self.window[ue] = (self.window[ue] * self.base).min(self.w_max);
                self.pending_draw[ue] = true;
            } else if outcome.observation == crate::env::BsObservation::Ack(ue) {
                self.window[ue] = 1;
            }
        }
    }

    fn reset(&mut self) {
        self.window = [1; NUM_UES];
        self.backoff = [0; NUM_UES];
        self.pending_draw = [false; NUM_UES];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_episode, EnvConfig};

    #[test]
    fn aloha_extremes() {
        let env = EnvConfig::default();
        let silent = run_episode(&mut SAloha::new(0.0).unwrap(), &env, 0).unwrap();
        assert_eq!(silent.kpi.goodput, 0.0);
        let full = EnvConfig::default().with_lambda([1.0, 1.0]);
        let greedy = run_episode(&mut SAloha::new(1.0).unwrap(), &full, 0).unwrap();
        assert_eq!(greedy.tally.collisions, full.d_max);
        assert!(SAloha::new(1.5).is_err());
    }

    #[test]
    fn window_doubles_per_collision_up_to_cap() {
        let mut beb = SAlohaBeb::default();
        let collide = CycleOutcome {
            observation: crate::env::BsObservation::Nack,
            reward: -1.0,
            next_state: EnvState::default(),
            events: crate::env::CycleEvents { collision: true, ..Default::default() },
        };
        for k in 1..=6 {
            beb.observe([UeAction::Access, UeAction::Access], &collide);
            assert_eq!(beb.window(0), (1 << k).min(DEFAULT_W_MAX));
        }
        let ack =
            CycleOutcome { observation: crate::env::BsObservation::Ack(0), events: Default::default(), ..collide };
        beb.observe([UeAction::Access, UeAction::Silence], &ack);
        assert_eq!(beb.window(0), 1);
        assert_eq!(beb.window(1), DEFAULT_W_MAX);
    }

    #[test]
    fn beb_without_collisions_is_persistent() {
        let env = EnvConfig::default().with_lambda([0.5, 0.0]);
        let ep = run_episode(&mut SAlohaBeb::default(), &env, 3).unwrap();
        for row in &ep.trace {
            let expect = if row.buffers[0] > 0 { UeAction::Access } else { UeAction::Silence };
            assert_eq!(row.actions[0], expect);
        }
    }
}
