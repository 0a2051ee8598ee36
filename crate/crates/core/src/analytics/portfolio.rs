//! SPM portfolios in a non-stationary environment whose arrival rates follow
//! a Markov chain over regimes, switching only between episodes.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::config::{read_into, KvConfig};
use crate::env::{run_episode, EnvConfig, Protocol, NUM_UES};
use crate::error::{Error, Result};
use crate::infer::SpmPolicy;
use crate::kpi::KpiReport;
use crate::nn::{NpModel, NpmPolicy, TrainConfig, Trainer};
use crate::rng::{stream, Stream};
use crate::semantic::{parse_problog, Spm};

#[derive(Clone, Debug, PartialEq)]
pub struct Regime {
    pub name: String,
    pub lambda: [f64; NUM_UES],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovEnvConfig {
    pub base: EnvConfig,
    pub regimes: Vec<Regime>,
    /// Probability of leaving the current regime at an episode boundary.
    pub switch_prob: f64,
    pub initial: usize,
}

impl Default for MarkovEnvConfig {
    fn default() -> Self {
        Self {
            base: EnvConfig::default(),
            regimes: vec![
                Regime { name: "ue1_heavy".into(), lambda: [0.9, 0.1] },
                Regime { name: "ue2_heavy".into(), lambda: [0.1, 0.9] },
            ],
            switch_prob: 0.8,
            initial: 0,
        }
    }
}

impl MarkovEnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.regimes.is_empty() {
            return Err(Error::Config("at least one regime is required".into()));
        }
        if self.initial >= self.regimes.len() {
            return Err(Error::Config(format!("initial regime {} out of range", self.initial)));
        }
        if !(0.0..=1.0).contains(&self.switch_prob) {
            return Err(Error::Config(format!("switch probability {} outside [0, 1]", self.switch_prob)));
        }
        for (k, r) in self.regimes.iter().enumerate() {
            if self.regimes[..k].iter().any(|o| o.name == r.name) {
                return Err(Error::Config(format!("duplicate regime {}", r.name)));
            }
            self.env_for(k).validate()?;
        }
        Ok(())
    }

    pub fn env_for(&self, regime: usize) -> EnvConfig {
        self.base.clone().with_lambda(self.regimes[regime].lambda)
    }

    /// Regime of every episode. A switch moves to one of the other regimes
    /// uniformly.
    pub fn regime_sequence(&self, episodes: usize) -> Vec<usize> {
        let mut rng = stream(self.base.seed, Stream::Regime);
        let n = self.regimes.len();
        let mut current = self.initial;
        let mut out = Vec::with_capacity(episodes);
        for e in 0..episodes {
            if e > 0 && n > 1 && rng.gen_bool(self.switch_prob) {
                current = (current + 1 + rng.gen_range(0..n - 1)) % n;
            }
            out.push(current);
        }
        out
    }

    /// Reads `switch_prob`, `initial_regime` and `regime.<name> = l1, l2`
    /// keys over the environment keys of `base`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut c = Self { base: EnvConfig::from_kv(kv)?, ..Self::default() };
        read_into(kv, "switch_prob", &mut c.switch_prob)?;
        read_into(kv, "initial_regime", &mut c.initial)?;
        let names: Vec<String> = kv.keys().filter_map(|k| k.strip_prefix("regime.")).map(String::from).collect();
        if !names.is_empty() {
            c.regimes.clear();
            for name in names {
                let l: Vec<f64> = kv.get_list(&format!("regime.{name}"))?.unwrap_or_default();
                let lambda: [f64; NUM_UES] =
                    l.try_into().map_err(|_| Error::Config(format!("regime.{name} needs {NUM_UES} arrival rates")))?;
                c.regimes.push(Regime { name, lambda });
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum SelectionMode {
    /// The active regime name is revealed to the portfolio.
    #[default]
    Oracle,
    /// Move to the next entry when the mean reward of the last `window`
    /// episodes falls below `threshold`.
    Reward { window: usize, threshold: f64 },
}

#[derive(Clone, Debug)]
pub struct Portfolio {
    entries: Vec<(String, Spm)>,
    pub mode: SelectionMode,
}

impl Portfolio {
    pub fn new(entries: Vec<(String, Spm)>, mode: SelectionMode) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        for (k, (name, _)) in entries.iter().enumerate() {
            if entries[..k].iter().any(|(o, _)| o == name) {
                return Err(Error::Config(format!("duplicate portfolio descriptor {name}")));
            }
        }
        if let SelectionMode::Reward { window, .. } = mode {
            if window == 0 {
                return Err(Error::Config("reward window must be positive".into()));
            }
        }
        Ok(Self { entries, mode })
    }

    /// Parses a portfolio file: `entry.<descriptor> = <spm path>` lines, an
    /// optional `mode = oracle | reward` with `window` and `threshold`.
    /// Relative paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let kv = KvConfig::load(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for key in kv.keys() {
            if let Some(name) = key.strip_prefix("entry.") {
                let file = dir.join(kv.get_str(key).unwrap_or_default());
                let text = std::fs::read_to_string(&file)?;
                entries.push((name.to_string(), parse_problog(&text)?));
            }
        }
        let mode = match kv.get_str("mode").unwrap_or("oracle") {
            "oracle" => SelectionMode::Oracle,
            "reward" => SelectionMode::Reward {
                window: kv.get("window")?.unwrap_or(3),
                threshold: kv.get("threshold")?.unwrap_or(0.0),
            },
            m => return Err(Error::Config(format!("unknown portfolio mode {m:?}"))),
        };
        Self::new(entries, mode)
    }

    pub fn entries(&self) -> &[(String, Spm)] {
        &self.entries
    }

    fn entry_of(&self, descriptor: &str) -> Result<usize> {
        self.entries.iter().position(|(n, _)| n == descriptor).ok_or_else(|| Error::MissingEntry(descriptor.into()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeEpisode {
    pub episode: usize,
    pub regime: usize,
    /// Portfolio entry that ran, when a portfolio drove the episode.
    pub entry: Option<usize>,
    pub kpi: KpiReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MarkovRun {
    pub episodes: Vec<RegimeEpisode>,
}

impl MarkovRun {
    /// Mean over episodes of the per-cycle mean reward.
    pub fn mean_reward(&self) -> f64 {
        self.episodes.iter().map(|e| e.kpi.mean_reward).sum::<f64>() / self.episodes.len().max(1) as f64
    }

    pub fn min_reward(&self) -> f64 {
        self.episodes.iter().map(|e| e.kpi.mean_reward).fold(f64::INFINITY, f64::min)
    }

    pub fn kpi(&self) -> KpiReport {
        KpiReport::mean(&self.episodes.iter().map(|e| e.kpi.clone()).collect::<Vec<_>>())
    }

    pub const CSV_HEADER: &'static str = "episode,regime,entry,mean_reward,goodput,n_r,n_c,n_d";

    pub fn csv(&self, regimes: &[Regime]) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for e in &self.episodes {
            let entry = e.entry.map_or(String::from("-"), |k| k.to_string());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                e.episode,
                regimes[e.regime].name,
                entry,
                e.kpi.mean_reward,
                e.kpi.goodput,
                e.kpi.n_r,
                e.kpi.n_c,
                e.kpi.n_d
            );
        }
        s
    }
}

/// Runs the portfolio for `episodes` episodes of the Markov environment.
pub fn portfolio_run(portfolio: &Portfolio, markov: &MarkovEnvConfig, episodes: usize) -> Result<MarkovRun> {
    markov.validate()?;
    let mut policies: Vec<SpmPolicy> = portfolio.entries.iter().map(|(_, s)| SpmPolicy::new(s.clone())).collect();
    let mut current = 0;
    let mut recent: Vec<f64> = Vec::new();
    let mut run = MarkovRun::default();
    for (e, regime) in markov.regime_sequence(episodes).into_iter().enumerate() {
        if portfolio.mode == SelectionMode::Oracle {
            current = portfolio.entry_of(&markov.regimes[regime].name)?;
        }
        let ep = run_episode(&mut policies[current], &markov.env_for(regime), e as u64)?;
        run.episodes.push(RegimeEpisode { episode: e, regime, entry: Some(current), kpi: ep.kpi.clone() });
        if let SelectionMode::Reward { window, threshold } = portfolio.mode {
            recent.push(ep.kpi.mean_reward);
            if recent.len() >= window {
                let tail = &recent[recent.len() - window..];
                if tail.iter().sum::<f64>() / (window as f64) < threshold {
                    current = (current + 1) % policies.len();
                    recent.clear();
                }
            }
        }
    }
    Ok(run)
}

/// Runs one protocol unchanged through the regime sequence.
pub fn fixed_run(protocol: &mut dyn Protocol, markov: &MarkovEnvConfig, episodes: usize) -> Result<MarkovRun> {
    markov.validate()?;
    let mut run = MarkovRun::default();
    for (e, regime) in markov.regime_sequence(episodes).into_iter().enumerate() {
        let ep = run_episode(protocol, &markov.env_for(regime), e as u64)?;
        run.episodes.push(RegimeEpisode { episode: e, regime, entry: None, kpi: ep.kpi });
    }
    Ok(run)
}

/// Single NPM that is retrained from its current weights for `budget`
/// episodes whenever the regime changes, then evaluated greedily.
pub fn continual_baseline(
    model: &NpModel,
    markov: &MarkovEnvConfig,
    train: &TrainConfig,
    budget: usize,
    episodes: usize,
) -> Result<MarkovRun> {
    markov.validate()?;
    let mut current = model.clone();
    let mut last = None;
    let mut run = MarkovRun::default();
    for (e, regime) in markov.regime_sequence(episodes).into_iter().enumerate() {
        let env = markov.env_for(regime);
        if last.is_some_and(|r| r != regime) && budget > 0 {
            let retrain_env = env.clone().with_seed(env.seed.wrapping_add(e as u64 + 1));
            let mut trainer = Trainer::from_model(current, &retrain_env, &train.clone().with_episodes(budget))?;
            trainer.run(&retrain_env, budget)?;
            current = trainer.model().clone();
        }
        last = Some(regime);
        let ep = run_episode(&mut NpmPolicy::new(current.clone()), &env, e as u64)?;
        run.episodes.push(RegimeEpisode { episode: e, regime, entry: None, kpi: ep.kpi });
    }
    Ok(run)
}
