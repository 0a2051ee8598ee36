//! Centralized DQN training of the neural protocol model.
//!
//! Both UEs share the scalar reward. The loss is the sum of both action
//! heads' Huber TD errors, so gradients flow from each head back through the
//! downlink segments into both uplink segments. Exploration is epsilon-greedy
//! per action head. Targets come from a periodically synced copy of the
//! network.

use std::fmt::Write as _;

use log::debug;
use rand::Rng;

use super::adam::Adam;
use super::memory::{EpisodicMemory, MemoryRecord};
use super::model::{Architecture, NpModel, TdSample, Q_WIDTH};
use crate::config::{read_into, KvConfig};
use crate::env::{Env, EnvConfig, UeAction, NUM_UES};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream, StreamRng};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub gamma: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Gradient steps between target network syncs.
    pub target_sync_interval: usize,
    pub total_episodes: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of `total_episodes` over which epsilon decays linearly.
    pub eps_decay_fraction: f64,
    pub huber_delta: f64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-7,
            gamma: 0.9,
            replay_capacity: 10_000,
            batch_size: 32,
            target_sync_interval: 200,
            total_episodes: 3000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_fraction: 0.6,
            huber_delta: 1.0,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.target_sync_interval == 0 {
            return bad("replay_capacity, batch_size and target_sync_interval must be positive");
        }
        if self.batch_size > self.replay_capacity {
            return bad("batch_size exceeds replay_capacity");
        }
        if self.architecture.cm_width == 0 || self.architecture.hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        Ok(())
    }

    pub fn with_episodes(mut self, n: usize) -> Self {
        self.total_episodes = n;
        self
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut c = Self::default();
        read_into(kv, "learning_rate", &mut c.learning_rate)?;
        read_into(kv, "adam_beta1", &mut c.adam_beta1)?;
        read_into(kv, "adam_beta2", &mut c.adam_beta2)?;
        read_into(kv, "adam_eps", &mut c.adam_eps)?;
        read_into(kv, "gamma", &mut c.gamma)?;
        read_into(kv, "replay_capacity", &mut c.replay_capacity)?;
        read_into(kv, "batch_size", &mut c.batch_size)?;
        read_into(kv, "target_sync_interval", &mut c.target_sync_interval)?;
        read_into(kv, "total_episodes", &mut c.total_episodes)?;
        read_into(kv, "eps_start", &mut c.eps_start)?;
        read_into(kv, "eps_end", &mut c.eps_end)?;
        read_into(kv, "eps_decay_fraction", &mut c.eps_decay_fraction)?;
        read_into(kv, "huber_delta", &mut c.huber_delta)?;
        if let Some(h) = kv.get_list::<usize>("hidden")? {
            c.architecture.hidden = h;
        }
        read_into(kv, "cm_width", &mut c.architecture.cm_width)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("learning_rate", self.learning_rate);
        kv.set("adam_beta1", self.adam_beta1);
        kv.set("adam_beta2", self.adam_beta2);
        kv.set("adam_eps", self.adam_eps);
        kv.set("gamma", self.gamma);
        kv.set("replay_capacity", self.replay_capacity);
        kv.set("batch_size", self.batch_size);
        kv.set("target_sync_interval", self.target_sync_interval);
        kv.set("total_episodes", self.total_episodes);
        kv.set("eps_start", self.eps_start);
        kv.set("eps_end", self.eps_end);
        kv.set("eps_decay_fraction", self.eps_decay_fraction);
        kv.set("huber_delta", self.huber_delta);
        let hidden: Vec<String> = self.architecture.hidden.iter().map(ToString::to_string).collect();
        kv.set("hidden", hidden.join(","));
        kv.set("cm_width", self.architecture.cm_width);
        kv
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub epsilon: f64,
    /// Mean minibatch loss over the episode's gradient steps (0 before learning starts).
    pub loss: f64,
    /// Per-cycle mean reward.
    pub mean_reward: f64,
    pub goodput: f64,
}

pub const METRICS_CSV_HEADER: &str = "episode,epsilon,loss,mean_reward,goodput";

pub fn metrics_csv(rows: &[EpisodeMetrics]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for m in rows {
        let _ = writeln!(out, "{},{},{},{},{}", m.episode, m.epsilon, m.loss, m.mean_reward, m.goodput);
    }
    out
}

pub struct TrainOutcome {
    pub model: NpModel,
    pub memory: EpisodicMemory,
    pub metrics: Vec<EpisodeMetrics>,
}

/// Replaces actions that need an SDU by Silence when the buffer is empty.
pub fn sanitize(actions: [UeAction; NUM_UES], buffers: [usize; NUM_UES]) -> ([UeAction; NUM_UES], usize) {
    let mut out = actions;
    let mut fixed = 0;
    for ue in 0..NUM_UES {
        if out[ue].needs_sdu() && buffers[ue] == 0 {
            out[ue] = UeAction::Silence;
            fixed += 1;
        }
    }
    (out, fixed)
}

/// Stateful trainer; supports continuing from existing weights.
pub struct Trainer {
    config: TrainConfig,
    online: NpModel,
    target: NpModel,
    target_table: Vec<[[f64; Q_WIDTH]; NUM_UES]>,
    grads: NpModel,
    adam: Adam,
    memory: EpisodicMemory,
    explore_rng: StreamRng,
    replay_rng: StreamRng,
    steps: u64,
    episodes_done: u64,
}

impl Trainer {
    pub fn new(env: &EnvConfig, config: &TrainConfig) -> Result<Self> {
        let model = NpModel::new(env.b_max, &config.architecture, &mut stream(env.seed, Stream::Init));
        Self::from_model(model, env, config)
    }

    pub fn from_model(model: NpModel, env: &EnvConfig, config: &TrainConfig) -> Result<Self> {
        env.validate()?;
        config.validate()?;
        if model.b_max != env.b_max {
            return Err(Error::Config(format!("model b_max {} differs from env b_max {}", model.b_max, env.b_max)));
        }
        let adam =
            Adam::new(model.param_count(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
        let mut t = Self {
            config: config.clone(),
            target: model.clone(),
            target_table: Vec::new(),
            grads: model.zeros_like(),
            online: model,
            adam,
            memory: EpisodicMemory::new(config.replay_capacity),
            explore_rng: stream(env.seed, Stream::Explore),
            replay_rng: stream(env.seed, Stream::Replay),
            steps: 0,
            episodes_done: 0,
        };
        t.sync_target()?;
        Ok(t)
    }

    pub fn model(&self) -> &NpModel {
        &self.online
    }

    pub fn target(&self) -> &NpModel {
        &self.target
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.memory
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn into_outcome(self, metrics: Vec<EpisodeMetrics>) -> TrainOutcome {
        TrainOutcome { model: self.online, memory: self.memory, metrics }
    }

    fn sync_target(&mut self) -> Result<()> {
        self.target = self.online.clone();
        let levels = self.online.b_max + 1;
        self.target_table.clear();
        for b1 in 0..levels {
            for b2 in 0..levels {
                let q = self.target.q_values([b1, b2])?;
                let mut row = [[0.0; Q_WIDTH]; NUM_UES];
                for ue in 0..NUM_UES {
                    row[ue].copy_from_slice(&q[ue]);
                }
                self.target_table.push(row);
            }
        }
        Ok(())
    }

    fn target_q(&self, b: [usize; NUM_UES]) -> &[[f64; Q_WIDTH]; NUM_UES] {
        &self.target_table[b[0] * (self.online.b_max + 1) + b[1]]
    }

    fn epsilon(&self, k: usize, budget: usize) -> f64 {
        let horizon = (self.config.eps_decay_fraction * budget as f64).max(1.0);
        let frac = (k as f64 / horizon).min(1.0);
        self.config.eps_start + (self.config.eps_end - self.config.eps_start) * frac
    }

    fn learn(&mut self) -> Result<f64> {
        let batch = self.memory.sample(self.config.batch_size, &mut self.replay_rng);
        self.grads.params_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        let samples: Vec<TdSample> = batch
            .iter()
            .map(|rec| {
                let tq = self.target_q(rec.next_state);
                let mut targets = [0.0; NUM_UES];
                for ue in 0..NUM_UES {
                    let next_best =
                        if rec.terminal { 0.0 } else { tq[ue].iter().copied().fold(f64::NEG_INFINITY, f64::max) };
                    targets[ue] = rec.reward + self.config.gamma * next_best;
                }
                TdSample { state: rec.state, actions: rec.actions, targets }
            })
            .collect();
        let loss = self.online.accumulate_batch_gradient(&samples, self.config.huber_delta, scale, &mut self.grads)?;
        self.adam.step(&mut self.online, &self.grads);
        Ok(loss * scale)
    }

    /// Runs `episodes` training episodes; epsilon decays over this budget.
    pub fn run(&mut self, env: &EnvConfig, episodes: usize) -> Result<Vec<EpisodeMetrics>> {
        let mut metrics = Vec::with_capacity(episodes);
        for k in 0..episodes {
            let eps = self.epsilon(k, episodes);
            let index = self.episodes_done;
            let mut sim = Env::new(env, index);
            let (mut loss_sum, mut loss_n) = (0.0, 0usize);
            while !sim.done() {
                let b = sim.state().buffers;
                let f = self.online.full_cycle_forward(b)?;
                let mut chosen = f.actions;
                for a in chosen.iter_mut() {
                    if self.explore_rng.gen::<f64>() < eps {
                        *a = UeAction::ALL[self.explore_rng.gen_range(0..UeAction::ALL.len())];
                    }
                }
                let (applied, _) = sanitize(chosen, b);
                let out = sim.step(applied)?;
                let to32 = |v: &Vec<f64>| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
                let q32 = |v: &Vec<f64>| [v[0] as f32, v[1] as f32, v[2] as f32];
                self.memory.push(MemoryRecord {
                    state: b,
                    ucm: [to32(&f.u[0]), to32(&f.u[1])],
                    dcm: [to32(&f.d[0]), to32(&f.d[1])],
                    q: [q32(&f.q[0]), q32(&f.q[1])],
                    actions: chosen,
                    reward: out.reward,
                    next_state: sim.state().buffers,
                    terminal: sim.done(),
                });
                if self.memory.len() >= self.config.batch_size {
                    let loss = self.learn()?;
                    if !loss.is_finite() || !self.online.is_finite() {
                        return Err(Error::Diverged { episode: index as usize, step: self.steps as usize, loss });
                    }
                    loss_sum += loss;
                    loss_n += 1;
                    self.steps += 1;
                    if self.steps.is_multiple_of(self.config.target_sync_interval as u64) {
                        self.sync_target()?;
                    }
                }
            }
            let t = sim.tally();
            let m = EpisodeMetrics {
                episode: index as usize,
                epsilon: eps,
                loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { 0.0 },
                mean_reward: t.total_reward / env.t_max as f64,
                goodput: t.acks as f64 / env.t_max as f64,
            };
            if index.is_multiple_of(500) {
                debug!("episode {} eps {:.3} loss {:.4} reward {:.3}", index, eps, m.loss, m.mean_reward);
            }
            metrics.push(m);
            self.episodes_done += 1;
        }
        Ok(metrics)
    }
}

/// Trains a fresh model for `config.total_episodes` episodes. All
/// randomness derives from `env.seed`.
pub fn train_npm(env: &EnvConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(env, config)?;
    let metrics = trainer.run(env, config.total_episodes)?;
    Ok(trainer.into_outcome(metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 20, replay_capacity: 10, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn config_kv_round_trip() {
        let c = TrainConfig { gamma: 0.8, total_episodes: 10, ..Default::default() };
        assert_eq!(TrainConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn sanitize_replaces_empty_buffer_actions() {
        let (a, n) = sanitize([UeAction::Access, UeAction::Discard], [0, 2]);
        assert_eq!(a, [UeAction::Silence, UeAction::Discard]);
        assert_eq!(n, 1);
    }

    #[test]
    fn short_training_is_reproducible_and_bounded() {
        let env = EnvConfig::default().with_seed(3);
        let cfg = TrainConfig { replay_capacity: 100, total_episodes: 8, ..Default::default() };
        let a = train_npm(&env, &cfg).unwrap();
        let b = train_npm(&env, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.memory.len(), 100);
        assert!(a.model.is_finite());
    }

    #[test]
    fn target_matches_online_after_sync() {
        let env = EnvConfig::default().with_seed(4);
        let cfg = TrainConfig { target_sync_interval: 10, total_episodes: 3, ..Default::default() };
        let mut t = Trainer::new(&env, &cfg).unwrap();
        t.run(&env, 3).unwrap();
        // 3 episodes x 24 cycles, learning from step 32: 41 gradient steps
        assert_eq!(t.steps(), 41);
        assert_ne!(t.model(), t.target());
        t.sync_target().unwrap();
        assert_eq!(t.model(), t.target());
    }
    #[test]
    fn td_gradient_matches_central_differences() {
        let model = NpModel::new(5, &Architecture::default(), &mut stream(11, Stream::Init));
        let (b, acts, y) = ([3, 1], [UeAction::Access, UeAction::Discard], [0.7, -0.4]);
        let mut grads = model.zeros_like();
        model.accumulate_td_gradient(b, acts, y, 1.0, 1.0, &mut grads).unwrap();
        let loss = |m: &NpModel| m.accumulate_td_gradient(b, acts, y, 1.0, 1.0, &mut m.zeros_like()).unwrap();
        let analytic: Vec<f64> = grads.params().copied().collect();
        let h = 1e-6;
        let mut checked = 0;
        for k in (0..analytic.len()).step_by(7) {
            let mut plus = model.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            let mut minus = model.clone();
            *minus.params_mut().nth(k).unwrap() -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let scale = analytic[k].abs().max(numeric.abs()).max(1e-3);
            assert!((analytic[k] - numeric).abs() / scale < 1e-4, "param {k}: {} vs {numeric}", analytic[k]);
            checked += 1;
        }
        assert!(checked > 400);
    }
}
