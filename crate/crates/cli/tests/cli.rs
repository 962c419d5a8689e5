//! End-to-end runs of the `sfb` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfb")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn describe_matches_the_golden_table() {
    let o = sfb(&["describe"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = include_str!("golden/describe_baseline.tsv");
    assert_eq!(stdout(&o), golden);
}

#[test]
fn cost_total_near_reference() {
    let o = sfb(&["cost"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let total = text.lines().find(|l| l.starts_with("total\t")).unwrap();
    let madds: f64 = total.split('\t').nth(3).unwrap().parse().unwrap();
    assert!((madds / 1e9 / 36.1 - 1.0).abs() < 0.02, "{total}");
    assert!(text.starts_with("# layer\t"));
}

#[test]
fn structured_output_is_json_lines() {
    let o = sfb(&["cost", "--structured", "mode=slow-only", "lateral=none"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for line in stdout(&o).lines() {
        let _: serde_json::Value = serde_json::from_str(line).unwrap();
    }
}

#[test]
fn lr_dump_spans_the_cosine() {
    let o = sfb(&["lr-dump", "eta=1.6", "iters=100", "warmup=0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lrs: Vec<f64> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(lrs.len(), 101);
    assert_eq!(lrs[0], 1.6);
    assert!(lrs[100].abs() < 1e-15);
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn gradcheck_passes_on_the_tiny_net() {
    let o = sfb(&["gradcheck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("max relative error")).unwrap();
    let v: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(v < 1e-4);
    for variant in ["t-conv", "t-sample", "ttoc-concat", "ttoc-sum"] {
        assert!(text.contains(variant), "{variant}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(sfb(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sfb(&["cost", "--bogus"]).status.code(), Some(2));
    assert_eq!(sfb(&["describe", "--config", "/nonexistent/file.cfg"]).status.code(), Some(2));
    let unknown = sfb(&["cost", "colour=blue"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(stderr(&unknown).contains("colour"));
    assert_eq!(sfb(&["cost", "tau=6"]).status.code(), Some(1));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "# comment\nT = 4\ntau = sixteen\n").unwrap();
    let o = sfb(&["describe", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn overrides_win_over_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.cfg");
    fs::write(&path, "mode = slow-only\nlateral = none\nT = 8\n").unwrap();
    let o = sfb(&["describe", "--config", path.to_str().unwrap(), "T=2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("data\tslow\t2\t224"));
    assert!(!stdout(&o).contains("fast"));
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s);
    let corpus = ["classes=2", "clips_per_class=2", "corpus_frames=16", "corpus_side=8", "patch=3"];
    let train: Vec<&str> = corpus.iter().copied().chain(["iters=4", "warmup=1", "eval_every=2"]).collect();
    for run in ["a", "b"] {
        let data = p(&format!("data_{run}"));
        let mut args = vec!["synth-gen", "--seed", "3", "--out", data.to_str().unwrap()];
        args.extend(&corpus);
        assert!(sfb(&args).status.success());
        let out = p(&format!("train_{run}"));
        let mut args = vec!["train-toy", "--seed", "3", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend(&train);
        let o = sfb(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let table = p(&format!("eval_{run}.tsv"));
        let ckpt = out.join("final.sfck");
        let val = data.join("val");
        let mut args = vec![
            "eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", val.to_str().unwrap(),
            "--spatial", "8", "--out", table.to_str().unwrap(),
        ];
        args.extend(&corpus);
        let o = sfb(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["data_{}/train/00000.sfv", "data_{}/val/00003.sfv", "train_{}/train_log.jsonl", "train_{}/final.sfck", "eval_{}.tsv"] {
        assert_eq!(read(&p(&f.replace("{}", "a"))), read(&p(&f.replace("{}", "b"))), "{f}");
    }
    let table = String::from_utf8(read(&p("eval_a.tsv"))).unwrap();
    assert!(table.starts_with("# metric\tvalue\ntop1\t"), "{table}");
    assert!(table.contains("top2\t100.000000"));
}

#[test]
fn detect_eval_reads_interchange_files() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.txt");
    let det = dir.path().join("det.txt");
    fs::write(&gt, "# frame x0 y0 x1 y1 labels\nf1 0.1 0.1 0.5 0.5 0\nf2 0.2 0.2 0.9 0.9 1\n").unwrap();
    fs::write(&det, "f1 0.1 0.1 0.5 0.5 0 0.9\nf2 0.2 0.2 0.9 0.9 1 0.8\nf2 0.0 0.0 0.1 0.1 1 0.95\n").unwrap();
    let o = sfb(&["detect-eval", "--gt", gt.to_str().unwrap(), "--detections", det.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "# class\tap\n0\t1.000000\n1\t0.500000\n# mAP\t0.750000\n");
    let missing = sfb(&["detect-eval", "--gt", "/nope", "--detections", det.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}
