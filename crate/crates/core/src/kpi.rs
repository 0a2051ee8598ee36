//! Episode KPIs and their aggregation.

use std::fmt::Write as _;

use crate::env::EpisodeTally;

/// Counters a learned protocol exposes about its own runtime corrections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Access/Discard selected for an empty buffer and replaced by Silence.
    pub invalid_substitutions: u64,
    /// Decisions for states the model has no rule for.
    pub fallbacks: u64,
    /// UE decisions taken through a grant-free clause.
    pub grant_free: u64,
}

impl Diagnostics {
    pub fn since(&self, earlier: &Diagnostics) -> Diagnostics {
        Diagnostics {
            invalid_substitutions: self.invalid_substitutions - earlier.invalid_substitutions,
            fallbacks: self.fallbacks - earlier.fallbacks,
            grant_free: self.grant_free - earlier.grant_free,
        }
    }

    fn add(&mut self, other: &Diagnostics) {
        self.invalid_substitutions += other.invalid_substitutions;
        self.fallbacks += other.fallbacks;
        self.grant_free += other.grant_free;
    }
}

/// Static cost of a protocol model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Footprint {
    /// Length of one control message in bits.
    pub cm_bits: u64,
    pub model_bytes: u64,
    /// Estimated operations for one communication cycle.
    pub inference_flops: u64,
}

/// KPIs averaged over `episodes` episodes. Counts are per episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KpiReport {
    pub episodes: usize,
    pub t_max: usize,
    /// Successfully received SDUs.
    pub n_r: f64,
    pub n_c: f64,
    /// Lost SDUs: discard actions plus overflow drops.
    pub n_d: f64,
    pub n_discard_actions: f64,
    pub n_overflow: f64,
    pub n_block_errors: f64,
    pub access_events: f64,
    pub arrivals: f64,
    /// `n_r / t_max`.
    pub goodput: f64,
    /// Per-cycle mean reward.
    pub mean_reward: f64,
    pub diagnostics: Diagnostics,
    pub footprint: Option<Footprint>,
}

impl KpiReport {
    pub fn from_tally(t: &EpisodeTally, t_max: usize) -> Self {
        let sum = |x: [usize; 2]| (x[0] + x[1]) as f64;
        let n_r = t.acks as f64;
        Self {
            episodes: 1,
            t_max,
            n_r,
            n_c: t.collisions as f64,
            n_d: sum(t.discarded) + sum(t.overflow),
            n_discard_actions: sum(t.discarded),
            n_overflow: sum(t.overflow),
            n_block_errors: t.block_errors as f64,
            access_events: sum(t.accessed),
            arrivals: sum(t.arrivals),
            goodput: n_r / t_max as f64,
            mean_reward: t.total_reward / t_max as f64,
            diagnostics: Diagnostics::default(),
            footprint: None,
        }
    }

    /// Episode-weighted mean of several reports sharing `t_max`.
    pub fn mean(reports: &[KpiReport]) -> KpiReport {
        let Some(first) = reports.first() else {
            return KpiReport::default();
        };
        let episodes: usize = reports.iter().map(|r| r.episodes).sum();
        let w =
            |f: fn(&KpiReport) -> f64| reports.iter().map(|r| f(r) * r.episodes as f64).sum::<f64>() / episodes as f64;
        let n_r = w(|r| r.n_r);
        let mut diagnostics = Diagnostics::default();
        for r in reports {
            diagnostics.add(&r.diagnostics);
        }
        KpiReport {
            episodes,
            t_max: first.t_max,
            n_r,
            n_c: w(|r| r.n_c),
            n_d: w(|r| r.n_d),
            n_discard_actions: w(|r| r.n_discard_actions),
            n_overflow: w(|r| r.n_overflow),
            n_block_errors: w(|r| r.n_block_errors),
            access_events: w(|r| r.access_events),
            arrivals: w(|r| r.arrivals),
            goodput: n_r / first.t_max as f64,
            mean_reward: w(|r| r.mean_reward),
            diagnostics,
            footprint: first.footprint,
        }
    }

    pub const CSV_HEADER: &'static str = "episodes,goodput,n_r,n_c,n_d,n_discard,n_overflow,n_block_err,\
access_events,mean_reward,invalid_subst,fallbacks,grant_free,cm_bits,model_bytes,inference_flops";

    pub fn csv_row(&self) -> String {
        let fp = self.footprint.unwrap_or_default();
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.episodes,
            self.goodput,
            self.n_r,
            self.n_c,
            self.n_d,
            self.n_discard_actions,
            self.n_overflow,
            self.n_block_errors,
            self.access_events,
            self.mean_reward,
            self.diagnostics.invalid_substitutions,
            self.diagnostics.fallbacks,
            self.diagnostics.grant_free,
            fp.cm_bits,
            fp.model_bytes,
            fp.inference_flops
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goodput_identity_survives_averaging() {
        let t1 = EpisodeTally { acks: 10, total_reward: 20.0, ..Default::default() };
        let t2 = EpisodeTally { acks: 7, total_reward: 5.0, ..Default::default() };
        let m = KpiReport::mean(&[KpiReport::from_tally(&t1, 24), KpiReport::from_tally(&t2, 24)]);
        assert_eq!(m.episodes, 2);
        assert_eq!(m.n_r, 8.5);
        assert_eq!(m.goodput, m.n_r / 24.0);
    }
}
