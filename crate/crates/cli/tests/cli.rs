use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "\
[run]
seed = 7

[params]
lambda = 4.0
omega_n_sq = 1.0
varpi = 1.0

[mesh]
box_lo = [-4.0, -2.0]
box_hi = [2.0, 2.0]
h = 0.25

[evolve]
t_final = 0.5
dt = 0.01
";

fn fsi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsi"))
        .args(args)
        .current_dir(dir)
        .env_remove("FSI_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let d = tempfile::tempdir().unwrap();
    let c = d.path().join("c.cfg");
    std::fs::write(&c, SMALL).unwrap();
    (d, c)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn steady_writes_snapshot_and_summary() {
    let (d, c) = setup();
    let o = fsi(&["steady", "--config", c.to_str().unwrap(), "--out", "o"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = d.path().join("o");
    for f in ["steady_velocity.bin", "steady_velocity.json", "steady_pressure.bin", "steady.effective.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let j = read_json(&out.join("steady.json"));
    assert_eq!(j["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(j["command"], "steady");
    let hash = j["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let echo = std::fs::read_to_string(out.join("steady.effective.toml")).unwrap();
    assert!(echo.lines().next().unwrap().contains(hash));
    let r = &j["result"];
    for k in ["lambda", "chi0", "drag", "residual", "lambda1", "lambda2"] {
        assert!(!r[k].is_null(), "{k}");
    }
    assert_eq!(r["lambda"], 4.0);
    let side = read_json(&out.join("steady_velocity.json"));
    assert_eq!(side["extra"]["config_hash"], hash);
}

#[test]
fn missing_config_names_the_path() {
    let d = tempfile::tempdir().unwrap();
    let o = fsi(&["steady", "--config", "no/such/file.cfg"], d.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/file.cfg"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&fsi(&["wiggle"], d.path())), 64);
    assert_eq!(code(&fsi(&[], d.path())), 64);
    assert_eq!(code(&fsi(&["--version"], d.path())), 0);
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let (d, c) = setup();
    let cs = c.to_str().unwrap();
    let o = fsi(&["steady", "--config", cs, "--set", "params.lamda=3"], d.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
    std::fs::write(&c, format!("{SMALL}\n[extra]\nx = 1\n")).unwrap();
    assert_eq!(code(&fsi(&["steady", "--config", cs], d.path())), 2);
    std::fs::write(&c, SMALL).unwrap();
    let o = fsi(&["steady", "--config", cs, "--set", "params.varpi=0"], d.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("varpi"));
    std::fs::write(&c, "this is not = = valid").unwrap();
    assert_eq!(code(&fsi(&["steady", "--config", cs], d.path())), 2);
}

#[test]
fn solver_failure_exit_code() {
    let (d, c) = setup();
    let o = fsi(&["steady", "--config", c.to_str().unwrap(), "--set", "newton.max_iter=1", "--out", "o"], d.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn resonance_table_with_decoupled_limit() {
    let (d, c) = setup();
    let o = fsi(
        &[
            "resonance",
            "--config",
            c.to_str().unwrap(),
            "--set",
            "params.omega_n_sq=4.0",
            "--set",
            "resonance.zeta0=2.0",
            "--set",
            "resonance.k_max=3",
            "--set",
            "resonance.varpi=[0.5, 0.0]",
            "--out",
            "o",
        ],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(d.path().join("o/resonance.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["k", "varpi", "sigma_min", "cond"]);
    let rows: Vec<Vec<String>> = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    // k = 1 is resonant: omega^2 = zeta0^2
    assert_eq!(rows[1], ["1", "0", "0", "inf"]);
    assert!(rows[0][2].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn effective_config_reproduces_outputs() {
    let (d, c) = setup();
    let o = fsi(&["evolve", "--config", c.to_str().unwrap(), "--set", "params.lambda=2", "--out", "a"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = fsi(&["evolve", "--config", "a/evolve.effective.toml", "--out", "b"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["energy.csv", "evolve.json", "evolve.effective.toml"] {
        assert_eq!(
            std::fs::read(d.path().join("a").join(f)).unwrap(),
            std::fs::read(d.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let mut r = csv::Reader::from_path(d.path().join("a/energy.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["t", "E", "normD", "normGrad", "|chi|", "|chidot|"]);
    assert_eq!(r.records().count(), 51);
}

#[test]
fn output_directory_from_environment() {
    let (d, c) = setup();
    let o = Command::new(env!("CARGO_BIN_EXE_fsi"))
        .args(["thresholds", "--config", c.to_str().unwrap()])
        .current_dir(d.path())
        .env("FSI_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let j = read_json(&d.path().join("from-env/thresholds.json"));
    assert!(j["result"]["lambda2"].as_f64().unwrap() <= j["result"]["lambda1"].as_f64().unwrap());
}

#[test]
fn spectrum_report_shape() {
    let (d, c) = setup();
    let o = fsi(&["spectrum", "--config", c.to_str().unwrap(), "--set", "spectrum.shifts=[3.0]", "--out", "o"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let j = read_json(&d.path().join("o/spectrum.json"));
    let e = j["result"]["eigenvalues"].as_array().unwrap();
    assert!(!e.is_empty());
    for x in e {
        for k in ["re", "im", "residual", "amult_hint"] {
            assert!(x[k].is_number(), "{k}");
        }
        assert!(x["re"].as_f64().unwrap() > 0.0);
    }
    assert!(j["result"]["h2"]["simplicity_margin"].is_number());
}

#[test]
fn periodic_manifest() {
    let (d, c) = setup();
    let o = fsi(&["periodic", "--config", c.to_str().unwrap(), "--set", "periodic.k_trunc=4", "--out", "o"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let j = read_json(&d.path().join("o/periodic.json"));
    let modes = j["result"]["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 4);
    assert!(j["result"]["time_residual"].as_f64().unwrap() < 1e-6);
    assert_eq!(modes[3]["w_norm"], 0.0);
    assert!(modes[0]["w_norm"].as_f64().unwrap() > 0.0);
    assert!(d.path().join("o/mode_04.bin").exists());
    let o = fsi(&["periodic", "--config", c.to_str().unwrap(), "--set", "periodic.modes=[5]", "--set", "periodic.k_trunc=4"], d.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn branch_without_crossing_is_rejected() {
    let (d, c) = setup();
    let o = fsi(&["branch", "--config", c.to_str().unwrap(), "--set", "crossing.interval=[1.0, 2.0]", "--out", "o"], d.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no sign change"));
}
