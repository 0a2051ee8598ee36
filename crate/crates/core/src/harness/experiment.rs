//! Sweeps over arrival rate and block error rate with repeated seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::baseline::{SAloha, SAlohaBeb, DEFAULT_BEB_BASE, DEFAULT_W_MAX};
use super::plot::{line_plot, Series};
use crate::config::{read_into, KvConfig};
use crate::env::{run_episode, EnvConfig, Protocol};
use crate::error::{Error, Result};
use crate::infer::{spm_footprint, SpmPolicy};
use crate::kpi::{Footprint, KpiReport};
use crate::nn::{load_npm, NpModel, NpmPolicy};
use crate::semantic::{parse_problog, Spm};

/// A protocol named in an experiment: `npm:<file>`, `spm:<file>`,
/// `aloha[:p]` or `beb[:base[:w_max]]`.
#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolSpec {
    Npm(PathBuf),
    Spm(PathBuf),
    Aloha(f64),
    Beb { base: usize, w_max: usize },
}

impl FromStr for ProtocolSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let bad = || Error::Config(format!("bad protocol {s:?}"));
        match kind {
            "npm" if !rest.is_empty() => Ok(ProtocolSpec::Npm(rest.into())),
            "spm" if !rest.is_empty() => Ok(ProtocolSpec::Spm(rest.into())),
            "aloha" => Ok(ProtocolSpec::Aloha(if rest.is_empty() { 0.5 } else { rest.parse().map_err(|_| bad())? })),
            "beb" => {
                let mut parts =
                    rest.split(':').filter(|p| !p.is_empty()).map(|p| p.parse::<usize>().map_err(|_| bad()));
                let base = parts.next().transpose()?.unwrap_or(DEFAULT_BEB_BASE);
                let w_max = parts.next().transpose()?.unwrap_or(DEFAULT_W_MAX);
                Ok(ProtocolSpec::Beb { base, w_max })
            }
            _ => Err(bad()),
        }
    }
}

/// A protocol ready to instantiate per run.
#[derive(Clone, Debug)]
pub enum LoadedProtocol {
    Npm(NpModel),
    Spm(Spm),
    Aloha(f64),
    Beb { base: usize, w_max: usize },
}

impl LoadedProtocol {
    pub fn load(spec: &ProtocolSpec) -> Result<Self> {
        let read = |p: &Path| {
            std::fs::read(p).map_err(|e| Error::Config(format!("cannot read model file {}: {e}", p.display())))
        };
        Ok(match spec {
            ProtocolSpec::Npm(p) => LoadedProtocol::Npm(load_npm(&read(p)?)?),
            ProtocolSpec::Spm(p) => {
                let text =
                    String::from_utf8(read(p)?).map_err(|_| Error::Config(format!("{} is not UTF-8", p.display())))?;
                LoadedProtocol::Spm(parse_problog(&text)?)
            }
            ProtocolSpec::Aloha(p) => LoadedProtocol::Aloha(*p),
            ProtocolSpec::Beb { base, w_max } => LoadedProtocol::Beb { base: *base, w_max: *w_max },
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            LoadedProtocol::Npm(_) => "npm",
            LoadedProtocol::Spm(_) => "spm",
            LoadedProtocol::Aloha(_) => "aloha",
            LoadedProtocol::Beb { .. } => "beb",
        }
    }

    pub fn instantiate(&self) -> Result<Box<dyn Protocol + Send>> {
        Ok(match self {
            LoadedProtocol::Npm(m) => Box::new(NpmPolicy::new(m.clone())),
            LoadedProtocol::Spm(s) => Box::new(SpmPolicy::new(s.clone())),
            LoadedProtocol::Aloha(p) => Box::new(SAloha::new(*p)?),
            LoadedProtocol::Beb { base, w_max } => Box::new(SAlohaBeb::new(*base, *w_max)?),
        })
    }

    pub fn footprint(&self) -> Option<Footprint> {
        match self {
            LoadedProtocol::Npm(m) => Some(NpmPolicy::new(m.clone()).footprint()),
            LoadedProtocol::Spm(s) => Some(spm_footprint(s)),
            _ => None,
        }
    }
}

/// Mean KPIs of `episodes` test episodes numbered from 0.
pub fn evaluate(protocol: &mut dyn Protocol, env: &EnvConfig, episodes: usize) -> Result<KpiReport> {
    let reports =
        (0..episodes as u64).map(|e| run_episode(protocol, env, e).map(|ep| ep.kpi)).collect::<Result<Vec<_>>>()?;
    Ok(KpiReport::mean(&reports))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub protocols: Vec<ProtocolSpec>,
    pub lambdas: Vec<f64>,
    pub eps_blocks: Vec<f64>,
    pub repetitions: usize,
    /// Seed of each repetition; when shorter, repetition `r` uses
    /// `env.seed + r`.
    pub seeds: Vec<u64>,
    /// Test episodes per repetition.
    pub episodes: usize,
    pub workers: usize,
    pub output_dir: Option<PathBuf>,
    pub plot: bool,
    pub env: EnvConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "table1".into(),
            protocols: vec![
                ProtocolSpec::Aloha(0.5),
                ProtocolSpec::Beb { base: DEFAULT_BEB_BASE, w_max: DEFAULT_W_MAX },
            ],
            lambdas: vec![0.5],
            eps_blocks: vec![0.02],
            repetitions: 10,
            seeds: Vec::new(),
            episodes: 10,
            workers: 1,
            output_dir: None,
            plot: false,
            env: EnvConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        let unit = |x: &f64| (0.0..=1.0).contains(x);
        if self.lambdas.is_empty() || self.eps_blocks.is_empty() || self.protocols.is_empty() {
            return Err(Error::Config("protocol, lambda and eps_block lists must be non-empty".into()));
        }
        if !self.lambdas.iter().all(unit) || !self.eps_blocks.iter().all(unit) {
            return Err(Error::Config("sweep values must lie in [0, 1]".into()));
        }
        if self.repetitions == 0 || self.episodes == 0 || self.workers == 0 {
            return Err(Error::Config("repetitions, episodes and workers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn seed(&self, rep: usize) -> u64 {
        self.seeds.get(rep).copied().unwrap_or(self.env.seed.wrapping_add(rep as u64))
    }

    /// Reads `scenario`, `protocols`, `lambdas`, `eps_blocks`, `repetitions`,
    /// `seeds`, `episodes`, `workers`, `output_dir` and `plot` plus the
    /// environment keys.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut c = Self { env: EnvConfig::from_kv(kv)?, ..Self::default() };
        read_into(kv, "scenario", &mut c.scenario)?;
        if let Some(p) = kv.get_list::<ProtocolSpec>("protocols")? {
            c.protocols = p;
        }
        if let Some(l) = kv.get_list("lambdas")? {
            c.lambdas = l;
        }
        if let Some(e) = kv.get_list("eps_blocks")? {
            c.eps_blocks = e;
        }
        if let Some(s) = kv.get_list("seeds")? {
            c.seeds = s;
        }
        read_into(kv, "repetitions", &mut c.repetitions)?;
        read_into(kv, "episodes", &mut c.episodes)?;
        read_into(kv, "workers", &mut c.workers)?;
        read_into(kv, "plot", &mut c.plot)?;
        c.output_dir = kv.get_str("output_dir").map(PathBuf::from);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub protocol: String,
    pub lambda: f64,
    pub eps_block: f64,
    pub rep: usize,
    pub seed: u64,
    pub kpi: KpiReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub scenario: String,
    pub rows: Vec<ExperimentRow>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

const SUMMARY_FIELDS: [(&str, fn(&KpiReport) -> f64); 5] = [
    ("goodput", |k| k.goodput),
    ("n_r", |k| k.n_r),
    ("n_c", |k| k.n_c),
    ("n_d", |k| k.n_d),
    ("mean_reward", |k| k.mean_reward),
];

impl ExperimentResult {
    pub fn data_csv(&self) -> String {
        let mut s = format!("scenario,protocol,lambda,eps_block,rep,seed,{}\n", KpiReport::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.scenario,
                r.protocol,
                r.lambda,
                r.eps_block,
                r.rep,
                r.seed,
                r.kpi.csv_row()
            );
        }
        s
    }

    /// Rows grouped by `(protocol, lambda, eps_block)` in first-seen order.
    pub fn groups(&self) -> Vec<((String, f64, f64), Vec<&ExperimentRow>)> {
        let mut out: Vec<((String, f64, f64), Vec<&ExperimentRow>)> = Vec::new();
        for r in &self.rows {
            let key = (r.protocol.clone(), r.lambda, r.eps_block);
            match out.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(r),
                None => out.push((key, vec![r])),
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("scenario,protocol,lambda,eps_block,reps");
        for (name, _) in SUMMARY_FIELDS {
            let _ = write!(s, ",{name}_mean,{name}_std");
        }
        s.push('\n');
        for ((p, l, e), rows) in self.groups() {
            let _ = write!(s, "{},{},{},{},{}", self.scenario, p, l, e, rows.len());
            for (_, f) in SUMMARY_FIELDS {
                let (m, sd) = mean_std(&rows.iter().map(|r| f(&r.kpi)).collect::<Vec<_>>());
                let _ = write!(s, ",{m},{sd}");
            }
            s.push('\n');
        }
        s
    }

    /// Goodput against arrival rate, one plot per block error rate.
    pub fn goodput_plots(&self) -> Vec<(f64, String)> {
        let groups = self.groups();
        let mut eps: Vec<f64> = groups.iter().map(|((_, _, e), _)| *e).collect();
        eps.dedup();
        eps.sort_by(f64::total_cmp);
        eps.dedup();
        eps.into_iter()
            .map(|e| {
                let mut series: Vec<Series> = Vec::new();
                for ((p, l, ge), rows) in &groups {
                    if *ge != e {
                        continue;
                    }
                    let (m, _) = mean_std(&rows.iter().map(|r| r.kpi.goodput).collect::<Vec<_>>());
                    match series.iter_mut().find(|s| s.name == *p) {
                        Some(s) => s.points.push((*l, m)),
                        None => series.push(Series { name: p.clone(), points: vec![(*l, m)] }),
                    }
                }
                (e, line_plot(&format!("goodput, eps = {e}"), "lambda", "goodput", &series))
            })
            .collect()
    }

    /// Writes `<scenario>_data.csv`, `<scenario>_summary.csv` and, when
    /// `plot` is set, one SVG per block error rate.
    pub fn write(&self, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: String, body: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            written.push(p);
            Ok(())
        };
        put(format!("{}_data.csv", self.scenario), self.data_csv())?;
        put(format!("{}_summary.csv", self.scenario), self.summary_csv())?;
        if plot {
            for (k, (_, svg)) in self.goodput_plots().into_iter().enumerate() {
                put(format!("{}_goodput_{k}.svg", self.scenario), svg)?;
            }
        }
        Ok(written)
    }
}

struct Job {
    protocol: usize,
    lambda: f64,
    eps: f64,
    rep: usize,
}

/// Runs every `(protocol, lambda, eps_block, repetition)` point, in parallel
/// over `workers` threads, and writes the outputs when `output_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let loaded = config.protocols.iter().map(LoadedProtocol::load).collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (pi, _) in loaded.iter().enumerate() {
        for &lambda in &config.lambdas {
            for &eps in &config.eps_blocks {
                for rep in 0..config.repetitions {
                    jobs.push(Job { protocol: pi, lambda, eps, rep });
                }
            }
        }
    }
    let run = |job: &Job| -> Result<ExperimentRow> {
        let p = &loaded[job.protocol];
        let seed = config.seed(job.rep);
        let env = config.env.clone().with_lambda([job.lambda; 2]).with_eps_block(job.eps).with_seed(seed);
        let mut proto = p.instantiate()?;
        let mut kpi = evaluate(proto.as_mut(), &env, config.episodes)?;
        kpi.footprint = p.footprint();
        Ok(ExperimentRow {
            protocol: p.label().into(),
            lambda: job.lambda,
            eps_block: job.eps,
            rep: job.rep,
            seed,
            kpi,
        })
    };
    let workers = config.workers.min(jobs.len()).max(1);
    let mut slots: Vec<Option<Result<ExperimentRow>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = jobs.len().div_ceil(workers);
        for (job_chunk, slot_chunk) in jobs.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            let run = &run;
            scope.spawn(move || {
                for (job, slot) in job_chunk.iter().zip(slot_chunk.iter_mut()) {
                    *slot = Some(run(job));
                }
            });
        }
    });
    let rows = slots.into_iter().map(|s| s.expect("every job ran")).collect::<Result<Vec<_>>>()?;
    let result = ExperimentResult { scenario: config.scenario.clone(), rows };
    if let Some(dir) = &config.output_dir {
        result.write(dir, config.plot)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_specs_parse() {
        assert_eq!("aloha".parse::<ProtocolSpec>().unwrap(), ProtocolSpec::Aloha(0.5));
        assert_eq!("aloha:0.3".parse::<ProtocolSpec>().unwrap(), ProtocolSpec::Aloha(0.3));
        assert_eq!("beb:2:8".parse::<ProtocolSpec>().unwrap(), ProtocolSpec::Beb { base: 2, w_max: 8 });
        assert_eq!("spm:a.pl".parse::<ProtocolSpec>().unwrap(), ProtocolSpec::Spm("a.pl".into()));
        assert!("npm".parse::<ProtocolSpec>().is_err());
        assert!("tdma".parse::<ProtocolSpec>().is_err());
    }

    #[test]
    fn degenerate_grid_gives_one_row_per_protocol() {
        let c = ExperimentConfig { repetitions: 1, episodes: 2, ..Default::default() };
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.data_csv().lines().count(), 3);
        assert_eq!(r.summary_csv().lines().count(), 3);
    }

    #[test]
    fn parallel_matches_serial() {
        let c = ExperimentConfig { lambdas: vec![0.2, 0.5, 0.8], repetitions: 3, episodes: 2, ..Default::default() };
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&ExperimentConfig { workers: 4, ..c }).unwrap();
        assert_eq!(a.data_csv(), b.data_csv());
    }

    #[test]
    fn missing_model_file_is_reported() {
        let c = ExperimentConfig {
            protocols: vec![ProtocolSpec::Npm("/nonexistent/model.npm".into())],
            ..Default::default()
        };
        assert!(matches!(run_experiment(&c), Err(Error::Config(_))));
    }

    #[test]
    fn certain_block_errors_zero_goodput() {
        let c = ExperimentConfig { eps_blocks: vec![1.0], repetitions: 2, episodes: 3, ..Default::default() };
        assert!(run_experiment(&c).unwrap().rows.iter().all(|r| r.kpi.goodput == 0.0));
    }
}
