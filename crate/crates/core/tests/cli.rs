use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conic_flow::config::RunConfig;
use conic_flow::expansion::{laplacian_span, Expansion, ExpansionTerm};
use conic_flow::Trig;
use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("conic-flow-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn conic_flow(out: &Path, args: &[&str], overrides: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_conic-flow"));
    cmd.args(args).arg("--out").arg(out);
    for o in overrides {
        cmd.arg("--override").arg(o);
    }
    cmd.output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_CC: &[&str] = &[
    "surface.kind=football-cc",
    "grid.l_max=4",
    "flow.dt=0.005",
    "flow.t_end=0.05",
    "flow.record_every=2",
];

#[test]
fn flow_preserves_volume_and_writes_outputs() {
    let out = scratch("flow");
    let o = conic_flow(&out, &["flow", "run"], SMALL_CC);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    let mut lines = history.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "volume").unwrap();
    let vols: Vec<f64> = lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(vols.len(), 11);
    assert!(vols.iter().all(|v| (v - vols[0]).abs() <= 1e-6 * vols[0]), "{vols:?}");
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "flow");
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["surface.kind"], "football-cc");
    assert!(out.join("final_u.csv").exists() && out.join("flow_report.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (scratch("rerun-a"), scratch("rerun-b"));
    let mut overrides = SMALL_CC.to_vec();
    overrides.push("flow.perturbation.kind=random");
    for dir in [&a, &b] {
        let o = conic_flow(dir, &["--seed", "7", "flow"], &overrides);
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["history.csv", "final_u.csv", "flow_report.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn expand_recovers_coefficients_from_a_field_file() {
    let dir = scratch("expand");
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "surface.kind = conedisk\nsurface.beta = 1\nexpand.q_target = 1.6\n").unwrap();
    let config = RunConfig::load(Some(&cfg), &[]).unwrap();
    let d = config.domain().unwrap();
    let mut e = Expansion::new(1.0, 4.0);
    e.push(ExpansionTerm::constant(), 0.4);
    e.push(ExpansionTerm::harmonic(1, Trig::Cos), 0.25);
    e.push(ExpansionTerm::new(1, 1, 1, Trig::Cos).unwrap(), 0.1);
    fs::write(dir.join("u.csv"), d.field_csv(&e.synthesize(&d).unwrap())).unwrap();
    let rhs = laplacian_span(&e).unwrap().synthesize(&d).unwrap();
    fs::write(dir.join("rhs.csv"), d.field_csv(&rhs)).unwrap();

    let out = dir.join("out");
    let input = format!("expand.input={}", dir.join("u.csv").display());
    let rhs_arg = format!("expand.rhs={}", dir.join("rhs.csv").display());
    let o = conic_flow(&out, &["--config", cfg.to_str().unwrap(), "expand"], &[&input, &rhs_arg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("expansion.json"));
    let coeff = |k: u64, l: u64| {
        report["terms"]
            .as_array()
            .unwrap()
            .iter()
            .find(|t| t["j"] == 0 && t["k"] == k && t["l"] == l && t["trig"] == "cos")
            .map(|t| t["coefficient"].as_f64().unwrap())
            .unwrap()
    };
    assert!((coeff(0, 0) - 0.4).abs() < 1e-8);
    assert!((coeff(1, 1) - 0.25).abs() < 1e-8);
}

#[test]
fn neumann_gaps_decrease() {
    let out = scratch("neumann");
    let o = conic_flow(
        &out,
        &["neumann-convergence"],
        &["surface.kind=conedisk", "surface.beta=-0.5", "linear.k=8,16,32", "linear.t_end=0.02", "linear.dt=0.002"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("neumann.json"));
    assert_eq!(report["monotone_decreasing"], true);
    assert_eq!(report["gaps"].as_array().unwrap().len(), 2);
    assert!(out.join("neumann.csv").exists() && out.join("neumann_k8.csv").exists());
}

#[test]
fn config_errors_exit_with_two_and_list_every_key() {
    let out = scratch("config");
    let o = conic_flow(&out, &["flow"], &["flow.dt=-1", "grid.bogus=3"]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    let text = err["errors"].to_string();
    assert!(text.contains("flow.dt") && text.contains("grid.bogus"), "{text}");
}

#[test]
fn precondition_failures_exit_with_four_and_record_the_manifest() {
    let out = scratch("precondition");
    let o = conic_flow(&out, &["neumann-convergence"], &["surface.kind=football-cc", "grid.n_rho=64", "grid.l_max=2"]);
    assert_eq!(o.status.code(), Some(4));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "neumann-convergence");
    assert_ne!(manifest["status"], "ok");
    assert!(manifest["reason"].is_string());
}
