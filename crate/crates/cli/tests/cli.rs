use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pcn_rebalance::ingestion::{load_state, SnapshotFormat};
use pcn_rebalance::{NetworkGraph, RebalanceCycle};

fn pcn_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcn-sim")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pcn_sim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, nodes: usize, seed: u64) -> std::path::PathBuf {
    let net = dir.join(format!("net-{nodes}-{seed}.csv"));
    ok(&["gen", "--nodes", &nodes.to_string(), "--degree", "3", "--seed", &seed.to_string(), "-o", p(&net)]);
    net
}

#[test]
fn gen_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["gen", "--nodes", "200", "--degree", "4", "--seed", "7", "-o", p(&a)]);
    ok(&["gen", "--nodes", "200", "--degree", "4", "--seed", "7", "-o", p(&b)]);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("node_a,node_b,capacity_sat,base_fee_msat,fee_rate_ppm\n"));
    assert_eq!(text.lines().count(), 1 + 784);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcn_sim(&["gen", "--degree", "0", "-o", p(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = pcn_sim(&["gen", "--nodes", "3", "--degree", "4", "-o", p(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));

    let net = gen(dir.path(), 20, 1);
    let out = pcn_sim(&["simulate", "-i", p(&net), "--strategy", "cycle6", "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["cycle4", "cycle5", "foaf", "mpp"] {
        assert!(err.contains(name), "{err}");
    }

    let out = pcn_sim(&["simulate", "-i", p(&net), "--cycle-cap", "0", "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn input_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcn_sim(&["simulate", "-i", p(&dir.path().join("missing.csv")), "-o", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));

    // a single channel is funded from one side only, so no liquidity cycle exists
    let single = dir.path().join("single.csv");
    fs::write(&single, "node_a,node_b,capacity_sat\nx,y,1000\n").unwrap();
    let out = pcn_sim(&["simulate", "-i", p(&single), "-o", p(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no rebalancing possible"));

    let net = gen(dir.path(), 20, 1);
    let out = pcn_sim(&["evaluate", "-i", p(&net), "-o", p(&dir.path().join("ev"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("balances missing"));
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn operations(dir: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(dir.join("operations.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn cycle_of(g: &NetworkGraph, op: &serde_json::Value) -> (RebalanceCycle, u64) {
    let initiator = g.node_by_name(op["initiator"].as_str().unwrap()).unwrap();
    let channels: Vec<_> = op["cycle_channels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| pcn_rebalance::ChannelId(c.as_u64().unwrap() as u32))
        .collect();
    let cycle = RebalanceCycle::from_channels(g, initiator, &channels).unwrap();
    let names: Vec<&str> = cycle.nodes().iter().map(|&n| g.name(n)).collect();
    let logged: Vec<&str> = op["cycle_nodes"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(names, logged);
    (cycle, op["amount_sat"].as_u64().unwrap())
}

#[test]
fn simulate_bundle_is_complete_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let net = gen(dir.path(), 60, 3);
    let run = dir.path().join("run");
    ok(&["simulate", "-i", p(&net), "--strategy", "foaf", "--seed", "42", "-o", p(&run)]);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["strategy"], "foaf");
    assert_eq!(manifest["config"]["seed"], 42);
    assert_eq!(manifest["input_sha256"].as_str().unwrap().len(), 64);
    for name in manifest["outputs"].as_array().unwrap() {
        assert!(run.join(name.as_str().unwrap()).is_file(), "{name}");
    }

    let (header, rows) = read_csv(&run.join("metrics.csv"));
    assert_eq!(header, ["ops_count", "imbalance", "success_rate", "median_payment_sat"]);
    let ops: Vec<u64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(ops[0], 0);
    assert!(ops.windows(2).all(|w| w[0] < w[1]));
    for r in &rows {
        let rate: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&rate));
        r[3].parse::<u64>().unwrap();
    }

    let (header, rows) = read_csv(&run.join("fees.csv"));
    assert_eq!(header, ["node_id", "net_fee_msat"]);
    assert_eq!(rows.iter().map(|r| r[1].parse::<i64>().unwrap()).sum::<i64>(), 0);

    // replaying the log on the initial state reproduces the final state
    let mut g = load_state(&run.join("initial_state.csv"), SnapshotFormat::Csv).unwrap();
    let last = load_state(&run.join("final_state.csv"), SnapshotFormat::Csv).unwrap();
    let log = operations(&run);
    assert!(!log.is_empty());
    assert_eq!(*ops.last().unwrap(), log.len() as u64);
    for (i, op) in log.iter().enumerate() {
        assert_eq!(op["seq"].as_u64().unwrap(), i as u64 + 1);
        let (cycle, amount) = cycle_of(&g, op);
        g.apply_circular_payment(&cycle, amount).unwrap();
        let imbalance = g.network_imbalance().unwrap();
        assert!((imbalance - op["imbalance_after"].as_f64().unwrap()).abs() < 1e-9);
    }
    assert_eq!(g, last);
}

#[test]
fn mpp_moves_a_twentieth() {
    let dir = tempfile::tempdir().unwrap();
    let net = gen(dir.path(), 60, 5);
    let run = dir.path().join("mpp");
    ok(&["simulate", "-i", p(&net), "--strategy", "mpp", "--seed", "5", "--no-eval", "-o", p(&run)]);
    let mut g = load_state(&run.join("initial_state.csv"), SnapshotFormat::Csv).unwrap();
    let log = operations(&run);
    assert!(!log.is_empty());
    for op in &log {
        let (cycle, amount) = cycle_of(&g, op);
        let u = cycle.initiator();
        let first = cycle.hops()[0].channel;
        let c = g.channel(first).unwrap().capacity as i128;
        let b = g.balance(first, u).unwrap() as i128;
        let (tau, kappa) = (g.total_funds(u) as i128, g.total_capacity(u) as i128);
        let full = (b * kappa - c * tau).div_euclid(kappa);
        assert!(amount as i128 <= full / 20, "amount {amount} full {full}");
        g.apply_circular_payment(&cycle, amount).unwrap();
    }
    let (_, rows) = read_csv(&run.join("metrics.csv"));
    assert!(rows.iter().all(|r| r[2].is_empty() && r[3].is_empty()));
}

#[test]
fn simulate_and_evaluate_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let net = gen(dir.path(), 50, 9);
    let mut bundles = Vec::new();
    for name in ["one", "two"] {
        let run = dir.path().join(name);
        ok(&["simulate", "-i", p(&net), "--strategy", "cycle5", "--seed", "9", "-o", p(&run)]);
        ok(&["evaluate", "-i", p(&run.join("final_state.csv")), "-o", p(&run.join("eval"))]);
        let mut files = BTreeMap::new();
        for f in ["manifest.json", "operations.jsonl", "metrics.csv", "fees.csv", "final_state.csv", "eval/report.json", "eval/payment_cdf.csv", "eval/gini_cdf.csv"] {
            files.insert(f, fs::read(run.join(f)).unwrap());
        }
        bundles.push(files);
    }
    assert_eq!(bundles[0], bundles[1]);
}

#[test]
fn evaluate_reports_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let net = gen(dir.path(), 60, 11);
    let run = dir.path().join("run");
    ok(&["simulate", "-i", p(&net), "--seed", "11", "--no-eval", "-o", p(&run)]);
    let before = dir.path().join("before");
    let after = dir.path().join("after");
    let same = dir.path().join("same");
    ok(&["evaluate", "-i", p(&run.join("initial_state.csv")), "-o", p(&before)]);
    let base = before.join("report.json");
    ok(&["evaluate", "-i", p(&run.join("final_state.csv")), "--compare", p(&base), "-o", p(&after)]);
    ok(&["evaluate", "-i", p(&run.join("initial_state.csv")), "--compare", p(&base), "-o", p(&same)]);

    let ks = |d: &Path| {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("comparison.json")).unwrap()).unwrap();
        v["ks_distance"].as_f64().unwrap()
    };
    assert!(ks(&after) > 0.0);
    assert_eq!(ks(&same), 0.0);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(base).unwrap()).unwrap();
    assert_eq!(report["amount_sat"], 1);
    assert_eq!(report["approximate"], false);
    let n = report["gini_values"].as_array().unwrap().len() as u64;
    assert_eq!(report["pairs"].as_u64().unwrap(), n * (n - 1));

    for f in ["payment_cdf.csv", "gini_cdf.csv"] {
        let (header, rows) = read_csv(&before.join(f));
        assert_eq!(header, ["value", "cumulative_fraction"]);
        let fr: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
        assert!(fr.windows(2).all(|w| w[0] < w[1]));
        assert!((fr.last().unwrap() - 1.0).abs() < 1e-12);
    }

    let sampled = dir.path().join("sampled");
    ok(&["evaluate", "-i", p(&run.join("final_state.csv")), "--sample-pairs", "500", "--seed", "3", "-o", p(&sampled)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(sampled.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"], 500);
    assert_eq!(report["approximate"], true);
}
