use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn porestack(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_porestack"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for name in files(dir) {
        let p = dir.join(&name);
        if p.is_dir() {
            out.extend(tree_bytes(&p).into_iter().map(|(n, b)| (format!("{name}/{n}"), b)));
        } else {
            out.push((name, fs::read(p).unwrap()));
        }
    }
    out
}

#[test]
fn phantom_writes_pairs_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = porestack(&["phantom", "--slices", "16", "--t", "0.5", "--seed", "7", "out"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = tmp.path().join("out");
    assert_eq!(files(&root), ["images", "labels", "summary.csv"]);
    assert_eq!(files(&root.join("images")).len(), 16);
    assert_eq!(files(&root.join("labels")).len(), 16);
    let summary = fs::read_to_string(root.join("summary.csv")).unwrap();
    assert!(summary.starts_with("t,slices,pore_i_percent,pore_ii_percent\n0.5,16,"));
}

#[test]
fn validation_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(porestack(&["phantom", "--slices", "0", "x"], tmp.path()).status.code(), Some(2));
    assert_eq!(porestack(&["phantom", "--t", "1.5", "x"], tmp.path()).status.code(), Some(2));
    fs::create_dir(tmp.path().join("empty")).unwrap();
    assert_eq!(porestack(&["make-masks", "empty", "m"], tmp.path()).status.code(), Some(2));
    assert_eq!(porestack(&["frobnicate"], tmp.path()).status.code(), Some(2));
    fs::write(tmp.path().join("bad.cfg"), "colour = blue\n").unwrap();
    assert_eq!(porestack(&["--config", "bad.cfg", "porosity", "x", "r"], tmp.path()).status.code(), Some(2));
}

#[test]
fn same_seed_same_bytes_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    for (dir, threads) in [("a", "1"), ("b", "4")] {
        let out = porestack(&["--threads", threads, "phantom", "--slices", "4", "--canvas", "64", "--t", "0", "--t", "1", "--seed", "3", dir], tmp.path());
        assert!(out.status.success());
        let out = porestack(&["--threads", threads, "make-masks", &format!("{dir}/t_0/images"), &format!("{dir}/masks")], tmp.path());
        assert!(out.status.success());
    }
    assert_eq!(tree_bytes(&tmp.path().join("a")), tree_bytes(&tmp.path().join("b")));
    assert_eq!(files(&tmp.path().join("a")), ["masks", "summary.csv", "t_0", "t_1"]);
}

#[test]
fn blank_slice_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(porestack(&["phantom", "--slices", "2", "--canvas", "64", "ph"], tmp.path()).status.success());
    let blank = porestack::GrayImage::filled(64, 64, 0.0);
    porestack::io::write_image(&tmp.path().join("ph/images/slice_0002.pgm"), &blank).unwrap();
    let out = porestack(&["make-masks", "ph", "mm"], tmp.path());
    assert!(out.status.success());
    let status = fs::read_to_string(tmp.path().join("mm/status.csv")).unwrap();
    let lines: Vec<&str> = status.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("2,rejected,"), "{status}");
    assert_eq!(files(&tmp.path().join("mm/labels")).len(), 2);
}

#[test]
fn train_predict_evaluate_porosity_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let out = porestack(args, tmp.path());
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["phantom", "--slices", "4", "--canvas", "64", "--seed", "1", "train"]);
    run(&["phantom", "--slices", "2", "--canvas", "64", "--seed", "2", "held"]);
    run(&["make-masks", "train", "pairs"]);
    run(&["train", "pairs", "w.psnw", "--epochs", "3", "--input-size", "32", "--levels", "2", "--base-channels", "4", "--augment-copies", "1", "-q"]);
    let history = fs::read_to_string(tmp.path().join("w.loss.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    assert!(history.starts_with("epoch,loss\n0,"));
    run(&["predict", "w.psnw", "held", "pred"]);
    assert_eq!(files(&tmp.path().join("pred")).len(), 2);
    let eval = run(&["evaluate", "pred", "held", "eval.csv"]);
    assert!(String::from_utf8_lossy(&eval.stdout).contains("pore_i"));
    let report = fs::read_to_string(tmp.path().join("eval.csv")).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("TOTAL,")).count(), 4);
    run(&["porosity", "held", "por.csv"]);
    let por = fs::read_to_string(tmp.path().join("por.csv")).unwrap();
    assert!(por.lines().any(|l| l.starts_with("TOTAL,pore_ii,")));

    let weights = fs::read(tmp.path().join("w.psnw")).unwrap();
    fs::write(tmp.path().join("cut.psnw"), &weights[..weights.len() / 2]).unwrap();
    let out = porestack(&["predict", "cut.psnw", "held", "p2"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt weights"));
    let out = porestack(&["predict", "missing.psnw", "held", "p3"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
