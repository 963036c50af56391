use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use granulesim_cli::{load_config, SummaryFile};
use granulesim_core::simulation::{self, Mode};

const BIN: &str = env!("CARGO_BIN_EXE_granulesim");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn granulesim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run(config: &Path, mode: &str, out: &Path) -> Output {
    granulesim(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--mode",
        mode,
        "--out",
        out.to_str().unwrap(),
    ])
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn output_headers_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("three");
    let o = run(&configs().join("three_species.toml"), "marching", &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("radius.csv")), "t,R,sigma_a,sigma_d,u_boundary,regime");
    for t in ["0.500000", "1.000000"] {
        assert_eq!(
            header(&out.join(format!("profile_{t}.csv"))),
            "t0,r,f_1,f_2,f_3,S_1,S_2,Psi_1,Psi_2,Psi_3"
        );
    }
    let summary: SummaryFile = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.status, "ok");
    assert_eq!(summary.exit_code, 0);
    assert_eq!(summary.profiles.len(), 2);
    assert_eq!(summary.diagnostics.steps, 500);
    assert!(summary.diagnostics.max_simplex_drift < 1e-12);
    assert!(summary.diagnostics.wall_time_s > 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["marching", "picard"] {
        let a = dir.path().join(format!("{mode}_a"));
        let b = dir.path().join(format!("{mode}_b"));
        for out in [&a, &b] {
            let o = run(&configs().join("certified_picard.toml"), mode, out);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        for name in ["radius.csv", "profile_0.125000.csv", "profile_0.250000.csv"] {
            assert_eq!(
                fs::read(a.join(name)).unwrap(),
                fs::read(b.join(name)).unwrap(),
                "{mode}/{name}"
            );
        }
    }
}

#[test]
fn emitted_series_parse_back_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let path = configs().join("monod_single.toml");
    let o = run(&path, "marching", dir.path());
    assert!(o.status.success());
    let summary = simulation::run(&load_config(&path).unwrap(), Mode::Marching).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("radius.csv")).unwrap();
    let mut rows = 0;
    for (rec, row) in rdr.records().zip(&summary.radius) {
        let rec = rec.unwrap();
        let vals: Vec<f64> = (0..5).map(|k| rec[k].parse().unwrap()).collect();
        assert_eq!(vals, [row.t, row.radius, row.sigma_a, row.sigma_d, row.u_boundary]);
        assert_eq!(&rec[5], row.regime.as_str());
        rows += 1;
    }
    assert_eq!(rows, summary.radius.len());

    let p = summary.profiles.last().unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("profile_1.000000.csv")).unwrap();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.unwrap();
        let vals: Vec<f64> = rec.iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals[0], p.t0[k]);
        assert_eq!(vals[1], p.r[k]);
        assert_eq!(vals[2], p.f.row(k)[0]);
        assert_eq!(vals[3], p.s.row(k)[0]);
        assert_eq!(vals[4], p.psi.row(k)[0]);
    }
}

#[test]
fn zero_kinetics_modes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("zero_growth.toml")).unwrap();
    // the Picard grid has 128 intervals; match it with the marching step
    let cfg = dir.path().join("zero.toml");
    fs::write(&cfg, text.replace("dt = 0.01", "dt = 0.0078125")).unwrap();
    let cfg = load_config(&cfg).unwrap();
    let m = simulation::run(&cfg, Mode::Marching).unwrap();
    let p = simulation::run(&cfg, Mode::Picard).unwrap();
    assert_eq!(m.radius.len(), p.radius.len());
    for (a, b) in m.radius.iter().zip(&p.radius) {
        assert!(
            (a.radius - b.radius).abs() <= 1e-10,
            "t = {}: {} vs {}",
            a.t,
            a.radius,
            b.radius
        );
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    // malformed config
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[params]\nn = 1\n").unwrap();
    assert_eq!(run(&bad, "marching", &out).status.code(), Some(2));
    assert_eq!(
        run(&dir.path().join("missing.toml"), "marching", &out).status.code(),
        Some(2)
    );

    // snapshot outside [0, T]
    let text = fs::read_to_string(configs().join("zero_growth.toml")).unwrap();
    let snap = dir.path().join("snap.toml");
    fs::write(&snap, text.replace("snapshots = [0.5, 1.0]", "snapshots = [2.0]")).unwrap();
    assert_eq!(run(&snap, "marching", &out).status.code(), Some(2));

    // regime exit keeps the partial series
    let o = run(&configs().join("detachment.toml"), "marching", &out);
    assert_eq!(o.status.code(), Some(4));
    let summary: SummaryFile = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.status, "failed");
    assert_eq!(summary.exit_code, 4);
    assert!(summary.error.unwrap().contains("regime exit"));

    // horizon beyond the certified one: refusal with the report
    let text = fs::read_to_string(configs().join("certified_picard.toml")).unwrap();
    let long = dir.path().join("long.toml");
    fs::write(
        &long,
        text.replace("horizon = 0.25", "horizon = 5.0")
            .replace("snapshots = [0.125, 0.25]", "snapshots = []"),
    )
    .unwrap();
    let o = run(&long, "picard", &dir.path().join("long"));
    assert_eq!(o.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(
        stderr.contains("not certified") && stderr.contains("t_guaranteed"),
        "{stderr}"
    );

    // with the override the iteration is attempted; it either converges or fails numerically
    fs::write(
        &long,
        fs::read_to_string(&long)
            .unwrap()
            .replace("horizon = 5.0", "horizon = 5.0\noverride_certification = true"),
    )
    .unwrap();
    let code = run(&long, "picard", &dir.path().join("long2")).status.code();
    assert!(matches!(code, Some(0) | Some(3)), "{code:?}");
}

#[test]
fn contraction_prints_report() {
    let o = granulesim(&[
        "contraction",
        "--config",
        configs().join("certified_picard.toml").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["certified"], true);
    let lambda = v["Lambda"].as_f64().unwrap();
    assert!(lambda > 0.0 && lambda < 1.0);
    assert!(v["t_guaranteed"].as_f64().unwrap() >= 0.25);
}

#[test]
fn validate_suites_pass() {
    for suite in ["analytic", "oracle", "invariants"] {
        let o = granulesim(&["validate", "--suite", suite, "--json"]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{suite}: {}",
            String::from_utf8_lossy(&o.stdout)
        );
        let checks: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
        assert!(!checks.is_empty());
        assert!(checks.iter().all(|c| c["passed"] == true));
    }
}

#[test]
fn sweep_runs_each_config() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["zero_growth", "monod_single", "detachment"];
    let paths: Vec<String> = names
        .iter()
        .map(|n| configs().join(format!("{n}.toml")).to_str().unwrap().to_string())
        .collect();
    let mut args = vec![
        "sweep",
        "--out",
        dir.path().to_str().unwrap(),
        "--jobs",
        "2",
        "--config",
    ];
    args.extend(paths.iter().map(String::as_str));
    let o = granulesim(&args);
    // worst code across the sweep: the detachment run exits the regime
    assert_eq!(o.status.code(), Some(4));
    for n in names {
        assert!(dir.path().join(n).join("radius.csv").exists(), "{n}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 3);
}
