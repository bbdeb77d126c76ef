use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sharpzo::driver::StepRow;
use sharpzo_cli::logio::write_log;
use sharpzo_cli::{compare_report, COLUMNS};

const SPEC: &str = r#"
[experiment]
seeds = [0, 1, 2]
budget = 400
thresholds = [0.5, -1.0]

[objective]
kind = "quadratic"
d = 4
condition_number = 10.0

[method.sharpzo]
eta = 0.005
population = 8
stage1_cap = 10

[method.cold]
variant = "zosgd-dense"
eta = 0.005
"#;

fn sharpzo(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sharpzo"));
    cmd.args(args).env_remove("SHARPZO_OUT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_spec(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("spec.toml");
    fs::write(&path, text).unwrap();
    path
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == ext)).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn run_ok(spec: &Path, out: &Path, jobs: &str) {
    let o = sharpzo(&["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs], &[]);
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn two_methods_three_seeds_produce_six_logs_a_summary_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SPEC);
    let out = tmp.path().join("out");
    run_ok(&spec, &out, "2");

    let logs = files_with_ext(&out.join("logs"), "csv");
    assert_eq!(logs.len(), 6);
    assert_eq!(files_with_ext(&out, "csv"), vec![out.join("summary.csv")]);
    assert!(out.join("summary.json").is_file());
    assert!(!files_with_ext(&out.join("plots"), "svg").is_empty());
    for log in &logs {
        let text = fs::read_to_string(log).unwrap();
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
    }
}

#[test]
fn rerun_gives_byte_identical_logs_regardless_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SPEC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&spec, &a, "1");
    run_ok(&spec, &b, "4");
    let la = files_with_ext(&a.join("logs"), "csv");
    let lb = files_with_ext(&b.join("logs"), "csv");
    assert_eq!(la.len(), lb.len());
    for (x, y) in la.iter().zip(&lb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
    assert_eq!(fs::read(a.join("summary.csv")).unwrap(), fs::read(b.join("summary.csv")).unwrap());
}

#[test]
fn unreachable_threshold_leaves_an_empty_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SPEC);
    let out = tmp.path().join("out");
    run_ok(&spec, &out, "0");
    let mut r = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let header = r.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "queries_to_-1").unwrap();
    let reached = header.iter().position(|h| h == "reached_-1").unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[col], "");
        assert_eq!(&rec[reached], "0");
    }
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(json["methods"][0]["thresholds"][1]["median_queries"].is_null());
}

#[test]
fn env_var_sets_output_dir_and_flag_overrides_it() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), &SPEC.replace("seeds = [0, 1, 2]", "seeds = [0]"));
    let env_dir = tmp.path().join("from-env");
    let o = sharpzo(&["run", spec.to_str().unwrap()], &[("SHARPZO_OUT", &env_dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(env_dir.join("summary.csv").is_file());

    let flag_dir = tmp.path().join("from-flag");
    let o = sharpzo(&["run", spec.to_str().unwrap(), "--out", flag_dir.to_str().unwrap()], &[("SHARPZO_OUT", &env_dir)]);
    assert!(o.status.success());
    assert!(flag_dir.join("summary.csv").is_file());
}

#[test]
fn unknown_key_fails_with_a_located_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), &SPEC.replace("eta = 0.005\npopulation", "etta = 0.005\npopulation"));
    let out = tmp.path().join("out");
    let o = sharpzo(&["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("etta") && err.contains("line"), "{err}");
    assert!(!out.exists());
}

#[test]
fn diverging_run_writes_no_summary() {
    let tmp = tempfile::tempdir().unwrap();
    // The exponential skew term overflows once the oversized step throws w far out.
    let text = SPEC
        .replace("condition_number = 10.0", "condition_number = 10.0\nskew = 0.5")
        .replace("variant = \"zosgd-dense\"\neta = 0.005", "variant = \"zosgd-dense\"\neta = 1e3");
    let spec = write_spec(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = sharpzo(&["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("cold") && err.contains("step"), "{err}");
    assert!(!out.join("summary.csv").exists());
    assert!(!out.join("summary.json").exists());
}

#[test]
fn verify_subcommand_passes() {
    let o = sharpzo(&["verify"], &[]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 4, "{text}");
}

fn synthetic(losses: &[f64]) -> Vec<StepRow> {
    losses
        .iter()
        .enumerate()
        .map(|(i, &l)| StepRow {
            step: i,
            stage: if i == 0 { 0 } else { 2 },
            queries: 2 * i as u64,
            train_loss: l,
            val_metric: -l,
            sigma: f64::NAN,
            active_coords: 3,
            wall_ms: 0.0,
        })
        .collect()
}

fn save(dir: &Path, name: &str, rows: &[StepRow]) -> PathBuf {
    let path = dir.join(name);
    let mut buf = Vec::new();
    write_log(rows, &mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

#[test]
fn identical_logs_tie_at_one_half() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = synthetic(&[1.0, 0.5, 0.25]);
    let paths: Vec<_> = (0..3)
        .flat_map(|s| [save(tmp.path(), &format!("a__s{s}.csv"), &rows), save(tmp.path(), &format!("b__s{s}.csv"), &rows)])
        .collect();
    let s = compare_report(&paths, &[]).unwrap();
    assert_eq!(s.methods[0].win_rates["b"], Some(0.5));
    assert_eq!(s.methods[1].win_rates["a"], Some(0.5));
}

#[test]
fn dominating_method_wins_every_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for s in 0..4u64 {
        let base: Vec<f64> = (0..10).map(|i| (1.0 + s as f64) * 0.8f64.powi(i)).collect();
        let better: Vec<f64> = base.iter().map(|v| 0.5 * v).collect();
        paths.push(save(tmp.path(), &format!("a__s{s}.csv"), &synthetic(&better)));
        paths.push(save(tmp.path(), &format!("b__s{s}.csv"), &synthetic(&base)));
    }
    let s = compare_report(&paths, &[0.3]).unwrap();
    assert_eq!(s.methods[0].win_rates["b"], Some(1.0));
    assert_eq!(s.methods[1].win_rates["a"], Some(0.0));
}

#[test]
fn threshold_below_every_curve_is_all_sentinel() {
    let tmp = tempfile::tempdir().unwrap();
    let paths = vec![
        save(tmp.path(), "a__s0.csv", &synthetic(&[1.0, 0.5, 0.2])),
        save(tmp.path(), "b__s0.csv", &synthetic(&[1.0, 0.7, 0.1])),
    ];
    let s = compare_report(&paths, &[0.05]).unwrap();
    assert!(s.methods.iter().all(|m| m.thresholds[0].median_queries.is_none() && m.thresholds[0].reached == 0));

    let o = sharpzo(&["report", paths[0].to_str().unwrap(), paths[1].to_str().unwrap(), "--threshold", "0.05"], &[]);
    assert!(o.status.success());
}

#[test]
fn report_refuses_mismatched_objectives() {
    let tmp = tempfile::tempdir().unwrap();
    let one_seed = SPEC.replace("seeds = [0, 1, 2]", "seeds = [0]");
    let spec_a = write_spec(tmp.path(), &one_seed);
    let a = tmp.path().join("a");
    run_ok(&spec_a, &a, "1");
    let spec_b = write_spec(tmp.path(), &one_seed.replace("condition_number = 10.0", "condition_number = 20.0"));
    let b = tmp.path().join("b");
    run_ok(&spec_b, &b, "1");

    let la = a.join("logs/sharpzo__s0.csv");
    let lb = b.join("logs/cold__s0.csv");
    let o = sharpzo(&["report", la.to_str().unwrap(), lb.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("objective mismatch"));

    // Same objective across directories is accepted.
    let same = compare_report(&[la.clone(), a.join("logs/cold__s0.csv")], &[]).unwrap();
    assert_eq!(same.methods.len(), 2);
    assert!(same.l_star.is_some());
}

#[test]
fn report_numbers_match_the_run_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SPEC);
    let out = tmp.path().join("out");
    run_ok(&spec, &out, "0");
    let logs = files_with_ext(&out.join("logs"), "csv");
    // Reorder so the method order matches the run (sorted method names).
    let mut ordered: Vec<_> = logs.iter().filter(|p| p.to_str().unwrap().contains("cold")).cloned().collect();
    ordered.extend(logs.iter().filter(|p| p.to_str().unwrap().contains("sharpzo")).cloned());
    let s = compare_report(&ordered, &[0.5, -1.0]).unwrap();
    assert_eq!(s.to_csv(), fs::read(out.join("summary.csv")).unwrap());
}
