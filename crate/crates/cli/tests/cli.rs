use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fmhash(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmhash"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const QUICK_TRAIN: [&str; 8] = [
    "--pretrain-iters",
    "20",
    "--pairwise-iters",
    "40",
    "--pairs-per-label",
    "2",
    "--augment-target",
    "10",
];

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["synth", "preprocess", "augment", "train", "enroll", "identify", "evaluate", "stats", "experiment"] {
        let o = fmhash(dir.path(), &[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        assert!(stdout(&o).contains("Usage"), "{cmd}");
    }
    let train = stdout(&fmhash(dir.path(), &["train", "--help"]));
    assert!(train.contains("--hash-bits") && train.contains("[default: 16]"));
}

#[test]
fn synth_writes_counted_reproducible_trees() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = fmhash(dir.path(), &["synth", "--accounts", "50", "--seed", "7", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = tree(&dir.path().join("a"));
    assert_eq!(a.iter().filter(|(p, _)| p.ends_with(".txt") && p != "manifest.txt").count(), 500);
    assert!(a.iter().any(|(p, _)| p == "manifest.txt"));
    assert_eq!(a, tree(&dir.path().join("b")));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmhash(dir.path(), &["synth", "--accounts", "1", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fmhash(dir.path(), &["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(fmhash(dir.path(), &["identify", "--model", "m", "--db", "d", "--signal", "s", "--tolerance", "3"]).status.code(), Some(2));
}

#[test]
fn train_enroll_identify_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(fmhash(d, &["synth", "--accounts", "3", "--out", "ds"]).status.success());
    for (bits, out) in [("16", "m16"), ("32", "m32")] {
        let mut args = vec!["train", "--dataset", "ds", "--hash-bits", bits, "--out", out];
        args.extend(QUICK_TRAIN);
        let o = fmhash(d, &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let log = fs::read_to_string(d.join("m16/train.log")).unwrap();
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 60);

    assert!(fmhash(d, &["enroll", "--model", "m16/model.fmh", "--dataset", "ds", "--out", "db.fmdb"]).status.success());

    let o = fmhash(d, &["identify", "--model", "m16/model.fmh", "--db", "db.fmdb", "--signal", "ds/1/train/0.txt", "--tolerance", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().next(), Some("account 1"));

    let o = fmhash(d, &["identify", "--model", "m32/model.fmh", "--db", "db.fmdb", "--signal", "ds/1/train/0.txt"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash size mismatch"));

    let o = fmhash(d, &["evaluate", "--model", "m16/model.fmh", "--db", "db.fmdb", "--dataset", "ds", "--out", "ev"]);
    assert!(o.status.success());
    let report = stdout(&o);
    let rates: usize = report
        .lines()
        .filter(|l| l.starts_with("l="))
        .map(|l| ["precision", "recall", "miss_rate", "fail_rate"].iter().filter(|k| l.contains(*k)).count())
        .sum();
    assert_eq!(rates, 12);
    assert!(d.join("ev/predictions.txt").exists());
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmhash(dir.path(), &["enroll", "--model", "none.fmh", "--dataset", "none", "--out", "db"]);
    assert_eq!(o.status.code(), Some(3));
}
