use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rankenv::io::{read_envelope_csv, write_curve_set};
use rankenv::spatial::{Model, PointPattern, SummaryFunction};
use rankenv::study::{gof_test, GofOptions, GridSpec, NullSpec};
use rankenv::{io, Seed};

fn rankenv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankenv")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rankenv(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, model: &str, seed: &str) -> PathBuf {
    let model_path = dir.join("model.json");
    fs::write(&model_path, model).unwrap();
    let out = dir.join(format!("sim{seed}"));
    ok(&["simulate", "--model", s(&model_path), "--seed", seed, "-o", s(&out)]);
    out.join("pattern.csv")
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = rankenv(&["rank-test", "-i", s(&missing), "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(rankenv(&["rank-test", "--bogus"]).status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "r,obs,sim1\n0,1,2\n1,x,3\n").unwrap();
    let out = rankenv(&["rank-test", "-i", s(&bad), "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:3:"));
}

#[test]
fn gof_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = simulate(dir.path(), r#"{"model":"poisson","intensity":150}"#, "3");
    let run = |threads: &str| {
        let out = dir.path().join(format!("gof{threads}"));
        ok(&[
            "--threads", threads, "gof", "-p", s(&pattern), "--fit", "csr", "--functions", "L,G", "--K", "60", "--nsim", "199",
            "--seed", "11", "-o", s(&out),
        ]);
        (fs::read(out.join("result.json")).unwrap(), fs::read(out.join("envelope.csv")).unwrap())
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn envelope_csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = simulate(dir.path(), r#"{"model":"poisson","intensity":100}"#, "5");
    let out = dir.path().join("gof");
    ok(&["gof", "-p", s(&pattern), "--fit", "csr", "--functions", "L", "--K", "40", "--nsim", "99", "-o", s(&out)]);
    let rows = read_envelope_csv(&out.join("envelope.csv")).unwrap();
    let copy = dir.path().join("copy.csv");
    io::write_envelope_csv(&copy, &rows).unwrap();
    assert_eq!(fs::read(out.join("envelope.csv")).unwrap(), fs::read(&copy).unwrap());
    let back = read_envelope_csv(&copy).unwrap();
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!(a.upper.to_bits(), b.upper.to_bits());
        assert_eq!(a.observed.to_bits(), b.observed.to_bits());
    }
}

#[test]
fn single_function_gof_matches_rank_test_on_its_curves() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = simulate(dir.path(), r#"{"model":"poisson","intensity":120}"#, "9");
    let gof_out = dir.path().join("gof");
    let model = dir.path().join("null.json");
    fs::write(&model, r#"{"model":"poisson","intensity":120}"#).unwrap();
    ok(&[
        "gof", "-p", s(&pattern), "--model", s(&model), "--functions", "L", "--K", "50", "--nsim", "199", "--seed", "4", "-o",
        s(&gof_out),
    ]);

    let p: PointPattern = io::read_pattern(&pattern, &pattern.with_extension("window.json")).unwrap();
    let opts = GofOptions {
        functions: vec![SummaryFunction::L],
        grid: GridSpec::new(0.0, 0.125, 50).unwrap(),
        nsim: 199,
        alpha: 0.05,
        edge: None,
    };
    let lib = gof_test(&p, &NullSpec::Known(Model::csr(120.0)), &opts, Seed::new(4)).unwrap();
    let curves = dir.path().join("curves.csv");
    write_curve_set(&curves, &lib.parts[0]).unwrap();
    let rt_out = dir.path().join("rt");
    ok(&["rank-test", "-i", s(&curves), "-o", s(&rt_out)]);

    let a: serde_json::Value = serde_json::from_slice(&fs::read(gof_out.join("result.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&fs::read(rt_out.join("result.json")).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(fs::read(gof_out.join("envelope.csv")).unwrap(), fs::read(rt_out.join("envelope.csv")).unwrap());
}

#[test]
fn shift_test_with_four_types_has_six_parts() {
    let dir = tempfile::tempdir().unwrap();
    let model = r#"{"model":"superposition","marked":true,"components":[
        {"model":"poisson","intensity":40},{"model":"poisson","intensity":40},
        {"model":"poisson","intensity":40},{"model":"poisson","intensity":40}]}"#;
    let pattern = simulate(dir.path(), model, "2");
    let out = dir.path().join("shift");
    ok(&["shift-test", "-p", s(&pattern), "--K", "30", "--nsim", "99", "-o", s(&out)]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["parts"].as_array().unwrap().len(), 6);
    assert_eq!(manifest["dimension"], 180);
    let result: serde_json::Value = serde_json::from_slice(&fs::read(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["parts"].as_array().unwrap().len(), 6);
}

#[test]
fn summary_and_fanova_commands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = simulate(dir.path(), r#"{"model":"poisson","intensity":80}"#, "6");
    let out = dir.path().join("summary");
    ok(&["summary", "-p", s(&pattern), "--K", "20", "-o", s(&out)]);
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "r,L,F,G,J");
    assert_eq!(text.lines().count(), 21);

    let groups = dir.path().join("groups.csv");
    let mut csv = String::from("group,curve_id,r,value\n");
    for c in 0..12 {
        for j in 0..10 {
            csv.push_str(&format!("g{},{c},{j},{}\n", c % 3, ((c * 31 + j * 17) % 11) as f64 / 3.0));
        }
    }
    fs::write(&groups, csv).unwrap();
    for (cmd, extra) in [("fanova", vec![]), ("groupdiff", vec!["--window-b", "3"])] {
        let out = dir.path().join(cmd);
        let mut args = vec![cmd, "-i", s(&groups), "--nsim", "99", "-o", s(&out)];
        args.extend(extra);
        let stdout = String::from_utf8(ok(&args).stdout).unwrap();
        assert!(stdout.contains("p-interval"), "{stdout}");
        assert!(out.join("result.json").exists());
    }
}
