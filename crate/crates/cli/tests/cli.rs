use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use lc_core::data::{save_dataset, BiasedDataset, DataSource, Split};
use lc_core::debias::CorrelationTopology;

fn lc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = lc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gauss(dir: &Path, name: &str, ratio: &str) -> String {
    let path = dir.join(name);
    ok(&[
        "gen-data",
        "--dataset",
        "gauss",
        "--ratio",
        ratio,
        "--seed",
        "3",
        "--train-per-class",
        "120",
        "--test-per-cell",
        "20",
        "--out",
        s(&path),
    ]);
    s(&path).to_string()
}

#[test]
fn gen_data_records_inputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str| {
        let out = dir.path().join(name);
        let args = [
            "gen-data",
            "--dataset",
            "cmnist",
            "--ratio",
            "0.01",
            "--seed",
            "3",
            "--train-per-class",
            "40",
            "--test-per-cell",
            "2",
            "--out",
            s(&out),
        ];
        (kv(&ok(&args)), out)
    };
    let (meta, first) = gen("a.lcds");
    let (again, second) = gen("b.lcds");
    assert_eq!(meta["ratio"], "0.01");
    assert_eq!(meta["seed"], "3");
    assert_eq!(meta["source"], "synthetic-glyphs");
    assert_eq!(meta["checksum"], again["checksum"]);
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());

    let written = std::fs::read_to_string(dir.path().join("a.lcds.meta")).unwrap();
    assert_eq!(kv(&written), meta);
    let manifest = std::fs::read_to_string(dir.path().join("a.lcds.manifest.csv")).unwrap();
    assert!(manifest.starts_with("index,y,a,group,split\n"));
    assert_eq!(manifest.lines().count(), 1 + 400 + 200);
}

#[test]
fn appendix_topologies_generate() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, topology) in [("cmnist-m2o", "many-to-one"), ("cmnist-o2m", "one-to-many")] {
        let out = dir.path().join(kind);
        let meta = kv(&ok(&[
            "gen-data",
            "--dataset",
            kind,
            "--ratio",
            "0.05",
            "--train-per-class",
            "20",
            "--test-per-cell",
            "1",
            "--out",
            s(&out),
        ]));
        assert!(meta["topology"].starts_with(topology), "{}", meta["topology"]);
    }
}

#[test]
fn invalid_ratio_is_a_usage_error() {
    for ratio in ["1.5", "0", "-0.1", "abc"] {
        let out = lc(&["gen-data", "--dataset", "cmnist", "--ratio", ratio, "--out", "/tmp/never"]);
        assert_eq!(out.status.code(), Some(2), "ratio {ratio}");
    }
}

#[test]
fn train_is_reproducible_and_evaluate_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let data = gauss(dir.path(), "g.lcds", "0.05");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let summary = ok(&[
            "train", "--data", &data, "--epochs", "2", "--batch-size", "32", "--seed", "4", "--out", s(&out),
        ]);
        (kv(&summary), out)
    };
    let (summary, a) = run("a");
    let (_, b) = run("b");
    for name in [
        "epochs.csv",
        "margins_train.csv",
        "margins_test.csv",
        "summary.txt",
        "prior.csv",
        "config.txt",
        "robust.ckpt",
        "erm.ckpt",
    ] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let manifest = |d: &Path| kv(&std::fs::read_to_string(d.join("manifest.txt")).unwrap());
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["output_hash"], mb["output_hash"]);
    assert_eq!(ma["config.loss"], "lc");
    assert_eq!(ma["config.epochs"], "2");
    assert!(ma.contains_key("dataset_checksum") && ma.contains_key("started_unix"));

    let eval = kv(&ok(&["evaluate", "--data", &data, "--checkpoint", s(&a.join("robust.ckpt"))]));
    assert_eq!(eval["gba"], summary["final_gba"]);
    assert_eq!(eval["worst_group"], summary["final_worst"]);
}

#[test]
fn non_finite_loss_exits_3_with_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let n = 40;
    let mut features: Vec<f32> = (0..n * 2).map(|i| (i % 7) as f32 / 7.0).collect();
    features[5] = f32::NAN;
    let ds = BiasedDataset::new(
        features,
        (0..n).map(|i| i % 2).collect(),
        (0..n).map(|i| (i / 2) % 2).collect(),
        (0..n).map(|i| if i < 30 { Split::Train } else { Split::Test }).collect(),
        2,
        CorrelationTopology::one_to_one(2).unwrap(),
        0.5,
        DataSource::Unknown,
    )
    .unwrap();
    let path = dir.path().join("nan.lcds");
    save_dataset(&ds, &path).unwrap();
    let out = lc(&["train", "--data", s(&path), "--epochs", "1", "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("iteration"), "{stderr}");
}

#[test]
fn io_and_usage_failures_have_stable_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.lcds");
    let out = lc(&["train", "--data", s(&missing), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(4));

    let data = gauss(dir.path(), "g.lcds", "0.05");
    let out = lc(&["train", "--data", &data, "--epochs", "0", "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_lc"))
        .args(["oracle-check", "--instances", "1"])
        .env("LC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_check_reports_match_fractions() {
    let lc_out = ok(&["oracle-check", "--instances", "50", "--mode", "lc"]);
    assert_eq!(lc_out.lines().filter(|l| l.starts_with("instance ")).count(), 50);
    assert_eq!(lc_out.lines().last(), Some("match 50/50"));

    let ce_out = ok(&["oracle-check", "--instances", "20", "--mode", "ce", "--family", "skewed"]);
    let last = ce_out.lines().last().unwrap();
    let k: usize = last.trim_start_matches("match ").split('/').next().unwrap().parse().unwrap();
    assert!(k < 20, "{last}");
}

#[test]
fn report_merges_the_ablation_grid() {
    let dir = tempfile::tempdir().unwrap();
    let data = gauss(dir.path(), "g.lcds", "0.02");
    let mut runs = Vec::new();
    for (loss, mixup) in [("lc", "on"), ("ce", "off"), ("lc", "off"), ("ce", "on")] {
        let out = dir.path().join(format!("{loss}-{mixup}"));
        ok(&[
            "train", "--data", &data, "--loss", loss, "--mixup", mixup, "--epochs", "1", "--out", s(&out),
        ]);
        runs.push(s(&out).to_string());
    }
    let mut args = vec!["report", "--runs"];
    args.extend(runs.iter().map(String::as_str));
    let table = ok(&args);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "loss,mixup,prior,ratio,seed,final_gba,final_worst,best_gba,topology,epochs,run");
    assert_eq!(lines.len(), 5);
    let keys: Vec<&str> = lines[1..].iter().map(|l| &l[..l.find(",moving").unwrap()]).collect();
    assert_eq!(keys, vec!["ce,off", "ce,on", "lc,off", "lc,on"]);
    assert!(lines[1..].iter().all(|l| l.contains(",0.02,0,")));

    let gone = dir.path().join("gone");
    let out = lc(&["report", "--runs", &runs[0], s(&gone)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gone"));
}
