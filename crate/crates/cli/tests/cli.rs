use std::path::Path;
use std::process::{Command, Output};

use semproto::env::EnvConfig;
use semproto::harness::evaluate;
use semproto::infer::SpmPolicy;
use semproto::nn::{train_npm, TrainConfig};
use semproto::semantic::{construct_spm, SpmOptions};

fn semproto(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semproto")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semproto(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const EPISODES: usize = 150;

fn trained(dir: &Path) {
    ok(dir, &["train", "--seed", "5", "--episodes", &EPISODES.to_string(), "--out-dir", "."]);
}

#[test]
fn transform_then_run_matches_in_memory_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    ok(dir, &["transform", "--model", "npm.npm", "--memory", "npm.memory", "--out", "spm.pl"]);
    ok(dir, &["run", "--seed", "5", "--protocol", "spm:spm.pl", "--episodes", "10", "--kpi", "kpi.csv"]);

    let env = EnvConfig::default().with_seed(5);
    let out = train_npm(&env, &TrainConfig::default().with_episodes(EPISODES)).unwrap();
    let spm = construct_spm(&out.model, &out.memory, &env, &SpmOptions::default()).unwrap();
    let mut policy = SpmPolicy::new(spm);
    let csv = std::fs::read_to_string(dir.join("kpi.csv")).unwrap();
    let cli_rows: Vec<&str> = csv.lines().skip(1).take(10).map(|l| l.split_once(',').unwrap().1).collect();
    for (e, row) in cli_rows.iter().enumerate() {
        let ep = semproto::env::run_episode(&mut policy, &env, e as u64).unwrap();
        assert_eq!(*row, ep.kpi.csv_row(), "episode {e}");
    }
    let mean = evaluate(&mut SpmPolicy::new(policy.spm().clone()), &env, 10).unwrap();
    let cli_mean = csv.lines().last().unwrap();
    assert!(cli_mean.starts_with("mean,"));
    assert!(cli_mean.contains(&format!(",{},", mean.goodput)));
}

#[test]
fn entropy_of_unmerged_extract_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    ok(dir, &["transform", "--model", "npm.npm", "--merge", "none", "--out", "raw.pl"]);
    let report = ok(dir, &["entropy", "--spm", "raw.pl"]);
    assert!(report.lines().any(|l| l == "net = 0"), "{report}");
}

#[test]
fn reconfigure_policymap_select_and_extract() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    ok(dir, &["transform", "--model", "npm.npm", "--memory", "npm.memory", "--out", "spm.pl"]);
    ok(dir, &["transform", "--model", "npm.npm", "--merge", "none", "--out", "raw.pl"]);
    let msg = ok(dir, &["reconfigure", "--spm", "spm.pl", "--p-th", "0", "--out", "rc.pl", "--log", "log.csv"]);
    assert!(msg.contains("manipulations"));
    assert!(std::fs::read_to_string(dir.join("log.csv")).unwrap().starts_with("step,b1,b2,ue"));
    ok(dir, &["policymap", "--model", "npm.npm", "--spm", "rc.pl", "--out", "map.csv"]);
    assert_eq!(std::fs::read_to_string(dir.join("map.csv")).unwrap().lines().count(), 1 + 2 * 36);
    let chosen = ok(dir, &["select", "--spm", "spm.pl", "raw.pl"]);
    assert!(["spm.pl", "raw.pl"].contains(&chosen.trim()));
    assert_eq!(ok(dir, &["select", "--selector", "vocab", "--spm", "raw.pl", "spm.pl"]).trim(), "spm.pl");
    ok(dir, &["extract", "--model", "npm.npm", "--out-dir", "graph"]);
    for f in ["vocabulary.csv", "edges.csv", "graph.txt"] {
        assert!(dir.join("graph").join(f).exists());
    }
}

#[test]
fn baseline_outputs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for out in ["a", "b"] {
        ok(dir, &["baseline", "beb", "--seed", "9", "--lambdas", "0.3,0.6", "--reps", "2", "--out-dir", out, "--plot"]);
    }
    for f in ["beb_data.csv", "beb_summary.csv", "beb_goodput_0.svg"] {
        let a = std::fs::read(dir.join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn portfolio_from_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    ok(dir, &["transform", "--model", "npm.npm", "--memory", "npm.memory", "--out", "spm.pl"]);
    std::fs::write(dir.join("p.cfg"), "entry.ue1_heavy = spm.pl\nentry.ue2_heavy = spm.pl\nswitch_prob = 0.8\n")
        .unwrap();
    let out = ok(dir, &["portfolio", "--config", "p.cfg", "--episodes", "6", "--compare", "--out", "p.csv"]);
    assert!(out.starts_with("portfolio: mean reward"));
    assert_eq!(std::fs::read_to_string(dir.join("p.csv")).unwrap().lines().count(), 1 + 3 * 6);
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert!(!semproto(dir, &["frobnicate"]).status.success());
    std::fs::write(dir.join("bad.cfg"), "this line has no equals sign\n").unwrap();
    let out = semproto(dir, &["baseline", "aloha", "--config", "bad.cfg"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"));
    let missing = semproto(dir, &["run", "--protocol", "npm:missing.npm"]);
    assert!(!missing.status.success());
}
