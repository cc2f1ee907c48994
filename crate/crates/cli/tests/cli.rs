use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sil")).args(args).output().expect("sil runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&sil(&["--help"])), 0);
    assert_eq!(code(&sil(&["sweep", "--bogus"])), 1);
    assert_eq!(code(&sil(&["frobnicate"])), 1);
    assert_eq!(code(&sil(&["gen", "--d", "ten"])), 1);
    assert_eq!(code(&sil(&["plot", "--input", "x.csv", "--kind", "pie", "--out", "x.svg"])), 1);
}

#[test]
fn degenerate_link_is_a_numeric_failure() {
    let out = sil(&["gen", "--d", "4", "--n", "3", "--s", "1", "--link", "poly:1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gen_is_seeded() {
    let args = ["gen", "--d", "8", "--n", "5", "--s", "2", "--seed", "3", "--augment"];
    let a = sil(&args);
    assert_eq!(code(&a), 0);
    let text = stdout(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0].split(',').count(), 10);
    assert_eq!(text, stdout(&sil(&args)));
}

#[test]
fn prune_then_train() {
    let dir = tempfile::tempdir().unwrap();
    let support = dir.path().join("support.txt");
    let common = ["--d", "16", "--n", "2000", "--s", "2", "--M", "4", "--m", "8", "--seed", "5"];
    let mut args = vec!["prune"];
    args.extend(common);
    args.extend(["--out", support.to_str().unwrap()]);
    let out = sil(&args);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("index,sources"));
    assert!(!fs::read_to_string(&support).unwrap().trim().is_empty());

    let predictor = dir.path().join("p.txt");
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--out", predictor.to_str().unwrap()]);
    let out = sil(&args);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("support_size,support_residual,excess_risk,iterations,converged"));
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(fields[2].parse::<f64>().unwrap().is_finite());
    assert!(fs::read_to_string(&predictor).unwrap().starts_with("sparse-index-lab/predictor v1"));
}

fn csv_without_wall_time(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let skip = header.iter().position(|h| *h == "wall_time_ms").unwrap();
    lines
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != skip).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect()
}

#[test]
fn sweep_resume_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.csv");
    let grid = ["--d", "12", "--n", "200,400", "--s", "2", "--M", "3", "--m", "4", "--seeds", "3", "--jobs", "2"];
    let mut args = vec!["sweep"];
    args.extend(grid);
    args.extend(["--out", full.to_str().unwrap()]);
    assert_eq!(code(&sil(&args)), 0);
    let reference = csv_without_wall_time(&full);
    assert_eq!(reference.len(), 6);

    // Header, two records and a torn third line, then resume.
    let partial = dir.path().join("partial.csv");
    let text = fs::read_to_string(&full).unwrap();
    let kept: Vec<&str> = text.lines().take(3).collect();
    let torn = &text.lines().nth(3).unwrap()[..10];
    fs::write(&partial, format!("{}\n{torn}", kept.join("\n"))).unwrap();
    let mut args = vec!["sweep"];
    args.extend(grid);
    args.extend(["--out", partial.to_str().unwrap(), "--resume"]);
    assert_eq!(code(&sil(&args)), 0);
    let mut resumed = csv_without_wall_time(&partial);
    let mut want = reference.clone();
    resumed.sort();
    want.sort();
    assert_eq!(resumed, want);

    let svg = dir.path().join("risk.svg");
    let out = sil(&["plot", "--input", full.to_str().unwrap(), "--kind", "risk_vs_n", "--out", svg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn compare_emits_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("compare.csv");
    let out = sil(&[
        "compare", "--d", "12", "--n", "300", "--s", "2", "--M", "3", "--m", "4", "--seeds", "3", "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("pruned") && text.contains("unpruned"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn csq_pack_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok");
    let out = sil(&["csq-pack", "--d", "256", "--s", "8", "--r", "2", "--count", "5", "--seed", "1", "--out", ok.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(ok.join("frame_005.csv").exists());
    assert!(ok.join("coherence.csv").exists());

    let partial = dir.path().join("partial");
    let out = sil(&[
        "csq-pack", "--d", "64", "--s", "4", "--r", "2", "--count", "50", "--cap", "0.01", "--max-attempts", "5", "--out",
        partial.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}
