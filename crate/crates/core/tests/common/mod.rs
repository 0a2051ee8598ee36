//! Property suites shared by the proptest target and the acceptance report.
//! None of them trains a model.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, RngCore};

use semproto::analytics::{
    clause_entropy, collision_probability, net_entropy, reconfigure_collision_free, select_min_entropy,
};
use semproto::env::{run_episode, Env, EnvConfig, EnvState, Protocol, UeAction, NUM_UES};
use semproto::extract::{extract_graph, ProtocolGraph, VocabId, VocabKind};
use semproto::harness::{run_experiment, ExperimentConfig, ProtocolSpec, SAloha, SAlohaBeb};
use semproto::infer::{truth_probabilities, with_grant_free, SpmPolicy};
use semproto::kpi::KpiReport;
use semproto::nn::{sanitize, Architecture, NpModel, TdSample};
use semproto::rng::{stream, Stream};
use semproto::semantic::{
    formulate_rule, merge, parse_problog, serialize_problog, spm_from_graph, ClauseKind, MergeMode, Spm, SpmOptions,
    Weighting,
};

pub struct Suite {
    pub name: &'static str,
    pub run: fn() -> Result<(), String>,
}

pub fn suites() -> Vec<Suite> {
    vec![
        Suite { name: "entropy identities", run: entropy_identities },
        Suite { name: "entropy additivity", run: entropy_additivity },
        Suite { name: "beta/gamma normalization", run: normalization },
        Suite { name: "merge idempotence and monotone counts", run: merge_properties },
        Suite { name: "problog round trip", run: problog_round_trip },
        Suite { name: "gradient vs finite difference", run: gradient_check },
        Suite { name: "environment conservation", run: conservation },
        Suite { name: "deterministic replay", run: deterministic_replay },
        Suite { name: "collision probability monte carlo", run: collision_monte_carlo },
        Suite { name: "reconfiguration invariants", run: reconfigure_invariants },
        Suite { name: "selection order invariance", run: selection_order },
        Suite { name: "grant-free equivalence", run: grant_free_equivalence },
        Suite { name: "rule closure", run: rule_closure },
        Suite { name: "baselines never discard", run: baselines_never_discard },
    ]
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Parameters of a randomly initialized network and a visit profile over its grid.
#[derive(Clone, Debug)]
pub struct RandomSpm {
    pub seed: u64,
    pub b_max: usize,
    pub merge: MergeMode,
    pub uniform: bool,
    pub visits: Vec<u64>,
}

pub fn random_spm_params() -> impl Strategy<Value = RandomSpm> {
    (
        any::<u64>(),
        1usize..=5,
        prop_oneof![Just(MergeMode::Activation), Just(MergeMode::Connection), Just(MergeMode::Both)],
        any::<bool>(),
        prop::collection::vec(0u64..20, 36),
    )
        .prop_map(|(seed, b_max, merge, uniform, visits)| RandomSpm { seed, b_max, merge, uniform, visits })
}

impl RandomSpm {
    pub fn model(&self) -> NpModel {
        NpModel::new(self.b_max, &Architecture::default(), &mut stream(self.seed, Stream::Init))
    }

    pub fn visits(&self) -> BTreeMap<[usize; NUM_UES], u64> {
        let n = self.b_max + 1;
        (0..n * n).map(|k| ([k / n, k % n], self.visits[k] + 1)).collect()
    }

    pub fn graph(&self) -> ProtocolGraph {
        let visits = self.visits();
        extract_graph(&self.model(), visits.keys()).expect("grid states are in range")
    }

    pub fn options(&self) -> SpmOptions {
        let weighting = if self.uniform { Weighting::Uniform } else { Weighting::Empirical };
        SpmOptions { merge: self.merge, weighting, ..SpmOptions::default() }
    }

    pub fn spm(&self) -> Spm {
        spm_from_graph(&self.graph(), &self.visits(), &self.options(), format!("{:016x}", self.seed))
            .expect("valid graph")
    }
}

fn grid(b_max: usize) -> impl Iterator<Item = [usize; NUM_UES]> {
    (0..=b_max).flat_map(move |a| (0..=b_max).map(move |b| [a, b]))
}

fn entropy_identities() -> Result<(), String> {
    if clause_entropy(0.0) != 0.0 || clause_entropy(1.0) != 0.0 {
        return Err("H(0) and H(1) must be 0".into());
    }
    if (clause_entropy(0.5) - std::f64::consts::LN_2).abs() > 1e-12 {
        return Err(format!("H(0.5) = {}", clause_entropy(0.5)));
    }
    run(512, 0.0f64..=1.0, |p| {
        let h = clause_entropy(p);
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&h));
        prop_assert!((h - clause_entropy(1.0 - p)).abs() < 1e-12);
        let mid = if p == 0.5 { p } else { 0.5 + (p - 0.5) / 2.0 };
        prop_assert!(clause_entropy(mid) >= h - 1e-12);
        Ok(())
    })
}

fn entropy_additivity() -> Result<(), String> {
    run(48, random_spm_params(), |r| {
        let s = r.spm();
        let e = net_entropy(&s);
        let sum: f64 = e.per_clause.iter().map(|(_, h)| h).sum();
        prop_assert!((e.net - sum).abs() < 1e-9);
        let direct: f64 = s.clauses().map(|c| clause_entropy(c.prob)).sum();
        prop_assert!((e.net - direct).abs() < 1e-9);
        prop_assert!(e.partial_beta + e.partial_gamma <= e.net + 1e-9);
        let mut split = [Spm::default(), Spm::default()];
        for (k, c) in s.clauses().enumerate() {
            split[k % 2].insert(c.tail, c.head, c.prob).unwrap();
        }
        prop_assert!((net_entropy(&split[0]).net + net_entropy(&split[1]).net - e.net).abs() < 1e-9);
        Ok(())
    })
}

/// Sums of clause probabilities per UCM and downlink owner, and per DCM.
fn family_sums(s: &Spm) -> Vec<((VocabId, usize), f64)> {
    let mut sums: BTreeMap<(VocabId, usize), f64> = BTreeMap::new();
    for c in s.clauses() {
        match c.kind() {
            ClauseKind::Downlink => *sums.entry((c.tail, c.head.owner)).or_default() += c.prob,
            ClauseKind::Action => *sums.entry((c.tail, usize::MAX)).or_default() += c.prob,
            _ => {}
        }
    }
    sums.into_iter().collect()
}

fn normalization() -> Result<(), String> {
    run(48, random_spm_params(), |r| {
        let s = r.spm();
        for (fam, total) in family_sums(&s) {
            prop_assert!((total - 1.0).abs() < 1e-9, "{fam:?} sums to {total}");
        }
        let (rc, _) = reconfigure_collision_free(&s, 0.0).unwrap();
        for (fam, total) in family_sums(&rc) {
            prop_assert!((total - 1.0).abs() < 1e-9, "reconfigured {fam:?} sums to {total}");
        }
        Ok(())
    })
}

fn merge_properties() -> Result<(), String> {
    run(48, random_spm_params(), |r| {
        let g = r.graph();
        let once = merge(&g, r.merge);
        let twice = merge(&once, r.merge);
        for kind in [VocabKind::Ucm, VocabKind::Dcm] {
            prop_assert!(once.count(kind, None) <= g.count(kind, None));
            prop_assert_eq!(twice.count(kind, None), once.count(kind, None));
        }
        prop_assert_eq!(&twice.chains, &once.chains);
        prop_assert_eq!(merge(&g, MergeMode::None), g);
        Ok(())
    })
}

fn problog_round_trip() -> Result<(), String> {
    run(48, random_spm_params(), |r| {
        let s = r.spm();
        let text = serialize_problog(&s);
        let back = parse_problog(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(serialize_problog(&back), text);
        Ok(())
    })
}

fn td_loss(m: &NpModel, s: &TdSample, delta: f64) -> f64 {
    let mut sink = m.zeros_like();
    m.accumulate_td_gradient(s.state, s.actions, s.targets, delta, 1.0, &mut sink).unwrap()
}

fn gradient_check() -> Result<(), String> {
    let action = prop_oneof![Just(UeAction::Silence), Just(UeAction::Access), Just(UeAction::Discard)];
    let strategy =
        (any::<u64>(), 0usize..=5, 0usize..=5, action.clone(), action, -3.0f64..3.0, -3.0f64..3.0, 0.5f64..4.0);
    run(32, strategy, |(seed, b1, b2, a1, a2, y1, y2, delta)| {
        let m = NpModel::new(5, &Architecture::default(), &mut stream(seed, Stream::Init));
        let sample = TdSample { state: [b1, b2], actions: [a1, a2], targets: [y1, y2] };
        let mut grads = m.zeros_like();
        m.accumulate_td_gradient(sample.state, sample.actions, sample.targets, delta, 1.0, &mut grads).unwrap();
        let analytic: Vec<f64> = grads.params().copied().collect();
        let mut rng = stream(seed, Stream::Custom(1));
        let h = 1e-6;
        for _ in 0..24 {
            let k = rng.gen_range(0..analytic.len());
            let mut plus = m.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            let mut minus = m.clone();
            *minus.params_mut().nth(k).unwrap() -= h;
            let fd = (td_loss(&plus, &sample, delta) - td_loss(&minus, &sample, delta)) / (2.0 * h);
            let g = analytic[k];
            let scale = g.abs().max(fd.abs()).max(1e-2);
            prop_assert!((g - fd).abs() <= 1e-4 * scale, "param {k}: analytic {g}, numeric {fd}");
        }
        Ok(())
    })
}

/// Uniformly random actions, with those needing an SDU replaced by Silence
/// on an empty buffer.
struct Chaos;

impl Protocol for Chaos {
    fn decide(&mut self, state: &EnvState, rng: &mut dyn RngCore) -> semproto::Result<[UeAction; NUM_UES]> {
        Ok(sanitize([0, 1].map(|_| UeAction::ALL[rng.gen_range(0..3)]), state.buffers).0)
    }
}

fn env_params() -> impl Strategy<Value = EnvConfig> {
    (any::<u64>(), 0.0f64..=1.0, 0.0f64..=1.0, 1usize..=6, 1usize..=15, 1usize..=40, 0.0f64..0.5).prop_map(
        |(seed, l1, l2, b_max, d_max, t_max, eps)| EnvConfig {
            lambda: [l1, l2],
            b_max,
            d_max,
            t_max,
            eps_block: eps,
            seed,
            ..EnvConfig::default()
        },
    )
}

fn conservation() -> Result<(), String> {
    run(256, (env_params(), 0u64..100), |(config, ep)| {
        let mut env = Env::new(&config, ep);
        let mut rng = stream(config.seed, Stream::Policy(ep));
        let mut chaos = Chaos;
        while !env.done() {
            let a = chaos.decide(env.state(), &mut rng).unwrap();
            env.step(a).unwrap();
            prop_assert!(env.state().buffers.iter().all(|&b| b <= config.b_max));
        }
        let t = env.tally();
        prop_assert!(t.conserves(env.state().buffers));
        prop_assert!(t.arrivals.iter().all(|&a| a <= config.d_max));
        prop_assert_eq!(t.cycles, config.t_max);
        let kpi = KpiReport::from_tally(t, config.t_max);
        prop_assert!((kpi.goodput - kpi.n_r / config.t_max as f64).abs() < 1e-12);
        prop_assert!(kpi.n_r <= kpi.access_events);
        Ok(())
    })
}

fn deterministic_replay() -> Result<(), String> {
    run(16, (env_params(), 0u64..50), |(config, ep)| {
        let mut a = SAloha::new(0.5).unwrap();
        let mut b = SAloha::new(0.5).unwrap();
        let ea = run_episode(&mut a, &config, ep).unwrap();
        let eb = run_episode(&mut b, &config, ep).unwrap();
        prop_assert_eq!(ea.trace_csv(), eb.trace_csv());
        let mut sweep = ExperimentConfig {
            scenario: "replay".into(),
            protocols: vec![ProtocolSpec::Aloha(0.5), ProtocolSpec::Beb { base: 2, w_max: 16 }],
            lambdas: vec![0.3, 0.7],
            eps_blocks: vec![config.eps_block],
            repetitions: 2,
            episodes: 2,
            ..ExperimentConfig::default()
        };
        sweep.env.seed = config.seed;
        let x = run_experiment(&sweep).unwrap();
        sweep.workers = 3;
        let y = run_experiment(&sweep).unwrap();
        prop_assert_eq!(x.data_csv(), y.data_csv());
        prop_assert_eq!(x.summary_csv(), y.summary_csv());
        Ok(())
    })
}

fn collision_monte_carlo() -> Result<(), String> {
    run(12, (random_spm_params(), any::<u64>()), |(r, seed)| {
        let s = r.spm();
        let mut rng = stream(seed, Stream::Custom(2));
        let domain = s.domain();
        let b = domain[rng.gen_range(0..domain.len())];
        let p = collision_probability(&s, b).unwrap();
        let dists: Vec<Vec<(UeAction, f64)>> = (0..NUM_UES)
            .map(|i| {
                truth_probabilities(&s, b, i)
                    .unwrap()
                    .action
                    .into_iter()
                    .map(|(a, p)| (a.as_action().unwrap(), p))
                    .collect()
            })
            .collect();
        let draw = |i: usize, rng: &mut dyn RngCore| {
            let mut u: f64 = rng.gen();
            for &(a, p) in &dists[i] {
                if u < p {
                    return a;
                }
                u -= p;
            }
            dists[i].last().unwrap().0
        };
        let trials = 100_000;
        let mut hits = 0;
        for _ in 0..trials {
            let a = [draw(0, &mut rng), draw(1, &mut rng)];
            if (0..NUM_UES).all(|i| a[i] == UeAction::Access && b[i] > 0) {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        prop_assert!((freq - p).abs() <= 0.01, "state {b:?}: exact {p}, empirical {freq}");
        Ok(())
    })
}

fn reconfigure_invariants() -> Result<(), String> {
    run(48, (random_spm_params(), 0.0f64..=1.0), |(r, p_th)| {
        let s = r.spm();
        for th in [0.0, p_th] {
            let (rc, log) = reconfigure_collision_free(&s, th).unwrap();
            let cms = |x: &Spm| -> BTreeSet<VocabId> {
                x.vocabulary().into_iter().filter(|v| matches!(v.kind, VocabKind::Ucm | VocabKind::Dcm)).collect()
            };
            prop_assert_eq!(cms(&rc), cms(&s));
            prop_assert!(log.len() <= s.clauses_of(ClauseKind::Action).count());
            for kind in [ClauseKind::Uplink, ClauseKind::Downlink] {
                let a: Vec<_> = s.clauses_of(kind).collect();
                let b: Vec<_> = rc.clauses_of(kind).collect();
                prop_assert_eq!(a, b);
            }
            for b in rc.domain() {
                prop_assert!(collision_probability(&rc, b).unwrap() <= th);
            }
            if th == 0.0 {
                let policy = SpmPolicy::new(rc.clone());
                for b in rc.domain() {
                    let a = policy.raw_actions(b);
                    prop_assert!(!(a == [UeAction::Access; 2] && b.iter().all(|&l| l > 0)), "{b:?}");
                }
            }
        }
        Ok(())
    })
}

fn selection_order() -> Result<(), String> {
    let pool = prop::collection::vec(random_spm_params(), 1..6);
    run(24, (pool, any::<u64>()), |(params, seed)| {
        let spms: Vec<Spm> = params.iter().map(RandomSpm::spm).collect();
        let chosen = serialize_problog(&spms[select_min_entropy(&spms).unwrap()]);
        let mut shuffled = spms.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut stream(seed, Stream::Custom(3)));
        prop_assert_eq!(serialize_problog(&shuffled[select_min_entropy(&shuffled).unwrap()]), chosen.clone());
        let best = spms.iter().map(|s| net_entropy(s).net).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(net_entropy(&parse_problog(&chosen).unwrap()).net, best);
        Ok(())
    })
}

fn grant_free_equivalence() -> Result<(), String> {
    run(48, random_spm_params(), |r| {
        let s = r.spm();
        let plain = SpmPolicy::new(s.clone());
        let augmented = SpmPolicy::new(with_grant_free(&s));
        for b in grid(r.b_max) {
            prop_assert_eq!(plain.raw_actions(b), augmented.raw_actions(b), "{:?}", b);
        }
        prop_assert_eq!(with_grant_free(&s).without_grant_free(), s);
        Ok(())
    })
}

/// Clauses reachable from the domain inputs by repeatedly following positive
/// clauses one stage forward, restricted to downlinks of either UE.
fn reachable_clauses(s: &Spm) -> BTreeSet<(VocabId, VocabId)> {
    let mut frontier: BTreeSet<VocabId> =
        s.domain().iter().flat_map(|b| (0..NUM_UES).map(move |i| VocabId::input(i, b[i]))).collect();
    let mut seen = BTreeSet::new();
    loop {
        let mut next = BTreeSet::new();
        for c in s.clauses().filter(|c| c.prob > 0.0 && c.kind() != ClauseKind::GrantFree) {
            if frontier.contains(&c.tail) && seen.insert((c.tail, c.head)) {
                next.insert(c.head);
            }
        }
        if next.is_empty() {
            return seen;
        }
        frontier.extend(next);
    }
}

fn rule_closure() -> Result<(), String> {
    run(48, random_spm_params(), |r| {
        let s = r.spm();
        let mut from_rules = BTreeSet::new();
        for b in s.domain() {
            for i in 0..NUM_UES {
                for j in 0..NUM_UES {
                    let rule = formulate_rule(&s, b, i, j).unwrap();
                    for c in rule.clauses {
                        prop_assert!(s.prob(c.tail, c.head) == Some(c.prob));
                        if c.kind() == ClauseKind::Downlink {
                            prop_assert_eq!(c.head.owner, i);
                        }
                        from_rules.insert((c.tail, c.head));
                    }
                }
            }
        }
        let all: BTreeSet<_> = s.clauses().map(|c| (c.tail, c.head)).collect();
        prop_assert_eq!(&from_rules, &reachable_clauses(&s));
        prop_assert_eq!(from_rules, all);
        Ok(())
    })
}

fn baselines_never_discard() -> Result<(), String> {
    run(64, (env_params(), 0.0f64..=1.0, 2usize..4, 1usize..64), |(config, p, base, w_max)| {
        let mut protocols: Vec<Box<dyn Protocol>> =
            vec![Box::new(SAloha::new(p).unwrap()), Box::new(SAlohaBeb::new(base, w_max).unwrap())];
        for proto in &mut protocols {
            let ep = run_episode(proto.as_mut(), &config, 0).unwrap();
            prop_assert!(ep.trace.iter().all(|row| !row.actions.contains(&UeAction::Discard)));
            prop_assert_eq!(ep.kpi.n_discard_actions, 0.0);
        }
        Ok(())
    })
}
