use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use semproto::analytics::{
    fixed_run, manipulation_csv, net_entropy_in, portfolio_run, reconfigure_collision_free, LogBase, MarkovEnvConfig,
    MarkovRun, Portfolio, Selector,
};
use semproto::config::KvConfig;
use semproto::env::{run_episode, EnvConfig, Episode};
use semproto::extract::{extract_graph, greedy_state_domain, grid_state_domain, observed_state_domain, VocabKind};
use semproto::harness::{
    agreement, npm_policy_map, policy_map_csv, run_experiment, spm_policy_map, ExperimentConfig, LoadedProtocol,
    ProtocolSpec, POLICY_MAP_CSV_HEADER,
};
use semproto::infer::{inference_csv, SpmPolicy};
use semproto::kpi::KpiReport;
use semproto::nn::{load_npm, metrics_csv, npm_hash, save_npm, EpisodicMemory, NpModel, TrainConfig, Trainer};
use semproto::rng::{stream, Stream};
use semproto::semantic::{parse_problog, serialize_problog, spm_from_graph, DomainSource, Spm, SpmOptions};

#[derive(Parser)]
#[command(name = "semproto", version, about = "Train, distill and evaluate two-UE MAC protocol models")]
struct Cli {
    /// Overrides the `seed` key of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an NPM; writes the model, its episodic memory and training metrics.
    Train(TrainArgs),
    /// Extract the protocol graph of an NPM as CSV and text.
    Extract(ExtractArgs),
    /// Distill an NPM into an SPM text file.
    Transform(TransformArgs),
    /// Run a protocol in the environment and write trace and KPI CSVs.
    Run(RunArgs),
    /// Remove collision-prone Access clauses from an SPM.
    Reconfigure(ReconfigureArgs),
    /// Report the semantic entropy of an SPM.
    Entropy(EntropyArgs),
    /// Choose one SPM from a list.
    Select(SelectArgs),
    /// Run an SPM portfolio in the two-regime Markov environment.
    Portfolio(PortfolioArgs),
    /// Sweep a random-access baseline.
    Baseline(BaselineArgs),
    /// Sweep the protocols listed in the configuration.
    Experiment(ExperimentArgs),
    /// Export decision regions over the full buffer grid.
    Policymap(PolicymapArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Base name of the output files.
    #[arg(long, default_value = "npm")]
    name: String,
    /// Overrides `total_episodes`.
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    memory: Option<PathBuf>,
    /// grid, memory or greedy:<episodes>.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    memory: Option<PathBuf>,
    /// none, activation, connection or both.
    #[arg(long)]
    merge: Option<String>,
    /// uniform or empirical.
    #[arg(long)]
    weighting: Option<String>,
    /// grid, memory or greedy:<episodes>.
    #[arg(long)]
    domain: Option<String>,
    /// Add grant-free clauses.
    #[arg(long)]
    grant_free: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// npm:<file>, spm:<file>, aloha[:p] or beb[:base[:w_max]].
    #[arg(long)]
    protocol: String,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    kpi: Option<PathBuf>,
    /// SPM selections per cycle (SPM protocols only).
    #[arg(long)]
    inference: Option<PathBuf>,
}

#[derive(Args)]
struct ReconfigureArgs {
    #[arg(long)]
    spm: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    p_th: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EntropyArgs {
    #[arg(long)]
    spm: PathBuf,
    /// nats or bits.
    #[arg(long, default_value = "nats")]
    unit: String,
    /// Per-clause entropies.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long = "spm", required = true, num_args = 1..)]
    spms: Vec<PathBuf>,
    /// entropy, vocab or random.
    #[arg(long, default_value = "entropy")]
    selector: String,
}

#[derive(Args)]
struct PortfolioArgs {
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run every entry alone through the same regime sequence.
    #[arg(long)]
    compare: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    eps_blocks: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct BaselineArgs {
    /// aloha or beb.
    kind: String,
    /// Access probability for aloha.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 2)]
    base: usize,
    #[arg(long, default_value_t = 16)]
    w_max: usize,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args)]
struct PolicymapArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    spm: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<KvConfig> {
    let mut kv = match &cli.config {
        Some(p) => KvConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => KvConfig::default(),
    };
    if let Some(seed) = cli.seed {
        kv.set("seed", seed);
    }
    Ok(kv)
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn read_model(path: &Path) -> Result<NpModel> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_npm(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn read_memory(path: Option<&Path>, capacity: usize) -> Result<EpisodicMemory> {
    match path {
        None => Ok(EpisodicMemory::new(capacity)),
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            EpisodicMemory::read_from(bytes.as_slice()).with_context(|| format!("loading {}", p.display()))
        }
    }
}

fn read_spm(path: &Path) -> Result<Spm> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_problog(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Flag value, else config key, else the default.
fn pick<T: std::str::FromStr>(flag: Option<&str>, kv: &KvConfig, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match flag.or(kv.get_str(key)) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|e| anyhow::anyhow!("--{key} {s:?}: {e}")),
    }
}

fn train(kv: &KvConfig, args: &TrainArgs) -> Result<()> {
    let env = EnvConfig::from_kv(kv)?;
    let mut cfg = TrainConfig::from_kv(kv)?;
    if let Some(n) = args.episodes {
        cfg = cfg.with_episodes(n);
    }
    let mut trainer = Trainer::new(&env, &cfg)?;
    let metrics = trainer.run(&env, cfg.total_episodes)?;
    let out = trainer.into_outcome(metrics);
    let base = args.out_dir.join(&args.name);
    let model_path = base.with_extension("npm");
    write(&model_path, save_npm(&out.model))?;
    write(&base.with_extension("memory"), out.memory.to_bytes())?;
    write(&args.out_dir.join(format!("{}_metrics.csv", args.name)), metrics_csv(&out.metrics))?;
    let tail = &out.metrics[out.metrics.len().saturating_sub(100)..];
    let goodput = tail.iter().map(|m| m.goodput).sum::<f64>() / tail.len().max(1) as f64;
    println!(
        "trained {} episodes, {} params, final goodput {goodput:.3}, hash {}",
        out.metrics.len(),
        out.model.param_count(),
        npm_hash(&out.model)
    );
    println!("model {}", model_path.display());
    Ok(())
}

fn visits(
    domain: DomainSource,
    model: &NpModel,
    memory: &EpisodicMemory,
    env: &EnvConfig,
) -> Result<std::collections::BTreeMap<[usize; 2], u64>> {
    Ok(match domain {
        DomainSource::Grid => grid_state_domain(model.b_max, memory),
        DomainSource::Memory => observed_state_domain(memory)?,
        DomainSource::Greedy(k) => greedy_state_domain(model, env, k)?,
    })
}

fn extract(kv: &KvConfig, args: &ExtractArgs) -> Result<()> {
    let env = EnvConfig::from_kv(kv)?;
    let model = read_model(&args.model)?;
    let memory = read_memory(args.memory.as_deref(), 1)?;
    let domain: DomainSource = pick(args.domain.as_deref(), kv, "domain", DomainSource::Grid)?;
    let v = visits(domain, &model, &memory, &env)?;
    let g = extract_graph(&model, v.keys())?;
    write(&args.out_dir.join("vocabulary.csv"), g.vocabulary_csv())?;
    write(&args.out_dir.join("edges.csv"), g.edge_csv())?;
    write(&args.out_dir.join("graph.txt"), g.render_text())?;
    println!(
        "{} states, UCM {}, DCM {}, {} connections",
        v.len(),
        g.count(VocabKind::Ucm, None),
        g.count(VocabKind::Dcm, None),
        g.connections().len()
    );
    Ok(())
}

fn transform_spm(kv: &KvConfig, args: &TransformArgs) -> Result<Spm> {
    let env = EnvConfig::from_kv(kv)?;
    let model = read_model(&args.model)?;
    let memory = read_memory(args.memory.as_deref(), 1)?;
    let defaults = SpmOptions::default();
    let options = SpmOptions {
        merge: pick(args.merge.as_deref(), kv, "merge", defaults.merge)?,
        weighting: pick(args.weighting.as_deref(), kv, "weighting", defaults.weighting)?,
        domain: pick(args.domain.as_deref(), kv, "domain", defaults.domain)?,
        grant_free: args.grant_free || pick(None, kv, "grant_free", false)?,
        ..defaults
    };
    let v = visits(options.domain, &model, &memory, &env)?;
    let graph = extract_graph(&model, v.keys())?;
    Ok(spm_from_graph(&graph, &v, &options, npm_hash(&model))?)
}

fn transform(kv: &KvConfig, args: &TransformArgs) -> Result<()> {
    let spm = transform_spm(kv, args)?;
    let text = serialize_problog(&spm);
    write(&args.out, &text)?;
    println!(
        "{} clauses, UCM {}, DCM {}, {} bytes",
        spm.len(),
        spm.vocab_count(VocabKind::Ucm, None),
        spm.vocab_count(VocabKind::Dcm, None),
        text.len()
    );
    Ok(())
}

fn kpi_csv(episodes: &[Episode], mean: &KpiReport) -> String {
    let mut s = format!("episode,{}\n", KpiReport::CSV_HEADER);
    for (k, e) in episodes.iter().enumerate() {
        s.push_str(&format!("{k},{}\n", e.kpi.csv_row()));
    }
    s.push_str(&format!("mean,{}\n", mean.csv_row()));
    s
}

fn run(kv: &KvConfig, args: &RunArgs) -> Result<()> {
    let env = EnvConfig::from_kv(kv)?;
    let spec: ProtocolSpec = args.protocol.parse()?;
    let loaded = LoadedProtocol::load(&spec)?;
    let mut spm_policy = match &loaded {
        LoadedProtocol::Spm(s) => Some(SpmPolicy::new(s.clone()).recording()),
        _ => None,
    };
    if args.inference.is_some() && spm_policy.is_none() {
        bail!("--inference needs an spm protocol");
    }
    let mut other = loaded.instantiate()?;
    let mut episodes = Vec::with_capacity(args.episodes);
    for e in 0..args.episodes as u64 {
        let ep = match spm_policy.as_mut() {
            Some(p) => run_episode(p, &env, e)?,
            None => run_episode(other.as_mut(), &env, e)?,
        };
        episodes.push(ep);
    }
    let mut mean = KpiReport::mean(&episodes.iter().map(|e| e.kpi.clone()).collect::<Vec<_>>());
    mean.footprint = loaded.footprint();
    if let Some(p) = &args.trace {
        let mut s = format!("episode,{}\n", Episode::CSV_HEADER);
        for (k, e) in episodes.iter().enumerate() {
            for line in e.trace_csv().lines().skip(1) {
                s.push_str(&format!("{k},{line}\n"));
            }
        }
        write(p, s)?;
    }
    if let Some(p) = &args.kpi {
        write(p, kpi_csv(&episodes, &mean))?;
    }
    if let (Some(p), Some(policy)) = (&args.inference, &spm_policy) {
        write(p, inference_csv(policy.trace()))?;
    }
    println!(
        "{} over {} episodes: goodput {:.4}, n_R {:.2}, n_C {:.2}, n_D {:.2}, mean reward {:.3}",
        loaded.label(),
        args.episodes,
        mean.goodput,
        mean.n_r,
        mean.n_c,
        mean.n_d,
        mean.mean_reward
    );
    Ok(())
}

fn reconfigure(args: &ReconfigureArgs) -> Result<()> {
    let spm = read_spm(&args.spm)?;
    let (out, log) = reconfigure_collision_free(&spm, args.p_th)?;
    write(&args.out, serialize_problog(&out))?;
    if let Some(p) = &args.log {
        write(p, manipulation_csv(&log))?;
    }
    println!("{} manipulations", log.len());
    Ok(())
}

fn entropy(args: &EntropyArgs) -> Result<()> {
    let spm = read_spm(&args.spm)?;
    let unit: LogBase = args.unit.parse()?;
    let report = net_entropy_in(&spm, unit);
    if let Some(p) = &args.csv {
        write(p, report.csv())?;
    }
    print!("{}", report.summary());
    Ok(())
}

fn select(kv: &KvConfig, args: &SelectArgs) -> Result<()> {
    let selector: Selector = args.selector.parse()?;
    let spms = args.spms.iter().map(|p| read_spm(p)).collect::<Result<Vec<_>>>()?;
    let seed = pick(None, kv, "seed", 0u64)?;
    let k = selector.pick(&spms, &mut stream(seed, Stream::Custom(0)))?;
    println!("{}", args.spms[k].display());
    Ok(())
}

fn portfolio(cli: &Cli, kv: &KvConfig, args: &PortfolioArgs) -> Result<()> {
    let Some(path) = &cli.config else { bail!("portfolio needs --config <portfolio file>") };
    let portfolio = Portfolio::load(path).with_context(|| format!("loading portfolio {}", path.display()))?;
    let markov = MarkovEnvConfig::from_kv(kv)?;
    let run = portfolio_run(&portfolio, &markov, args.episodes)?;
    let mut csv = format!("model,{}\n", MarkovRun::CSV_HEADER);
    let mut add = |name: &str, r: &MarkovRun| {
        for line in r.csv(&markov.regimes).lines().skip(1) {
            csv.push_str(&format!("{name},{line}\n"));
        }
    };
    add("portfolio", &run);
    println!("portfolio: mean reward {:.4}, min episode reward {:.4}", run.mean_reward(), run.min_reward());
    if args.compare {
        for (name, spm) in portfolio.entries() {
            let r = fixed_run(&mut SpmPolicy::new(spm.clone()), &markov, args.episodes)?;
            add(name, &r);
            println!("{name}: mean reward {:.4}, min episode reward {:.4}", r.mean_reward(), r.min_reward());
        }
    }
    if let Some(p) = &args.out {
        write(p, csv)?;
    }
    Ok(())
}

fn sweep(mut cfg: ExperimentConfig, args: &SweepArgs) -> Result<()> {
    if let Some(l) = &args.lambdas {
        cfg.lambdas = l.clone();
    }
    if let Some(e) = &args.eps_blocks {
        cfg.eps_blocks = e.clone();
    }
    if let Some(r) = args.reps {
        cfg.repetitions = r;
    }
    if let Some(e) = args.episodes {
        cfg.episodes = e;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(d) = &args.out_dir {
        cfg.output_dir = Some(d.clone());
    }
    cfg.plot |= args.plot;
    let result = run_experiment(&cfg)?;
    print!("{}", result.summary_csv());
    Ok(())
}

fn policymap(kv: &KvConfig, args: &PolicymapArgs) -> Result<()> {
    let env = EnvConfig::from_kv(kv)?;
    let model = args.model.as_deref().map(read_model).transpose()?;
    let b_max = model.as_ref().map_or(env.b_max, |m| m.b_max);
    let npm = model.as_ref().map(npm_policy_map).transpose()?;
    let spm = args.spm.as_deref().map(read_spm).transpose()?.map(|s| spm_policy_map(&s, b_max));
    if npm.is_none() && spm.is_none() {
        bail!("policymap needs --model and/or --spm");
    }
    let mut csv = format!("source,{POLICY_MAP_CSV_HEADER}\n");
    for (name, map) in [("npm", &npm), ("spm", &spm)] {
        if let Some(map) = map {
            for line in policy_map_csv(map).lines().skip(1) {
                csv.push_str(&format!("{name},{line}\n"));
            }
        }
    }
    match &args.out {
        Some(p) => write(p, csv)?,
        None => print!("{csv}"),
    }
    if let (Some(a), Some(b)) = (&npm, &spm) {
        let ag = agreement(a, b)?;
        let states: Vec<String> = ag.disagreements.iter().map(|s| format!("({},{})", s[0], s[1])).collect();
        eprintln!(
            "agreement {}/{} ({:.2}%), differing states: {}",
            ag.matching,
            ag.total,
            100.0 * ag.fraction(),
            states.join(" ")
        );
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let kv = load_config(cli)?;
    match &cli.command {
        Command::Train(a) => train(&kv, a),
        Command::Extract(a) => extract(&kv, a),
        Command::Transform(a) => transform(&kv, a),
        Command::Run(a) => run(&kv, a),
        Command::Reconfigure(a) => reconfigure(a),
        Command::Entropy(a) => entropy(a),
        Command::Select(a) => select(&kv, a),
        Command::Portfolio(a) => portfolio(cli, &kv, a),
        Command::Baseline(a) => {
            let protocol = match a.kind.as_str() {
                "aloha" => ProtocolSpec::Aloha(a.p),
                "beb" => ProtocolSpec::Beb { base: a.base, w_max: a.w_max },
                k => bail!("unknown baseline {k:?}, expected aloha or beb"),
            };
            let cfg = ExperimentConfig {
                scenario: a.kind.clone(),
                protocols: vec![protocol],
                ..ExperimentConfig::from_kv(&kv)?
            };
            sweep(cfg, &a.sweep)
        }
        Command::Experiment(a) => sweep(ExperimentConfig::from_kv(&kv)?, &a.sweep),
        Command::Policymap(a) => policymap(&kv, a),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
