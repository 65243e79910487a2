use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const REFERENCE: &str = "\
[kernel]
type = \"exponential\"

[firing]
p = 2.0
tau = 0.2

[model]
h = 0.1
";

fn neurofield(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurofield"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("NEUROFIELD_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn check_passes_for_the_reference_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let o = neurofield(&["check"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(tmp.path().join("out/report.json"));
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn check_reports_an_infeasible_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &REFERENCE.replace("0.1", "0.3").replace("0.2", "0.3"));
    let o = neurofield(&["check"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report = json(tmp.path().join("out/report.json"));
    assert_eq!(report["existence_ready"], false);
    let o = neurofield(&["solve"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infeasible"));
}

#[test]
fn malformed_configs_fail_with_a_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &REFERENCE.replace("h = 0.1", "h = 0.1\nslope = 2"));
    let o = neurofield(&["check"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("slope") && err.contains("line 10"), "{err}");

    let cfg = write_config(tmp.path(), &REFERENCE.replace("h = 0.1", "h = 0.1\ntau = 0.25"));
    let o = neurofield(&["check"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("disagrees"));

    let o = neurofield(&["check"], &tmp.path().join("missing.toml"), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn later_stages_name_the_missing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let out = tmp.path().join("out");
    for cmd in ["spectrum", "simulate"] {
        let o = neurofield(&[cmd, "--grid-n", "100"], &cfg, &out);
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains("missing stage 'solve'"), "{}", stderr(&o));
    }
    assert_eq!(neurofield(&["solve", "--grid-n", "100"], &cfg, &out).status.code(), Some(0));
    let o = neurofield(&["simulate", "--grid-n", "100"], &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing stage 'spectrum'"));
    // a different grid invalidates the cached fixed point
    let o = neurofield(&["spectrum", "--grid-n", "120"], &cfg, &out);
    assert!(stderr(&o).contains("missing stage 'solve'"));
}

#[test]
fn sublinear_firing_cannot_be_solved() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &REFERENCE.replace("p = 2.0", "p = 0.5"));
    let o = neurofield(&["solve"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("not C^1,mu") && err.contains("theorem_B(iii)"), "{err}");
}

#[test]
fn certify_passes_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = neurofield(&["certify", "--grid-n", "200"], &cfg, &a);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(a.join("run_report.json"));
    assert_eq!(report["theorem_A"], "pass");
    assert_eq!(report["theorem_B"], "pass");
    for group in ["theorem_A", "theorem_B"] {
        for c in report["checks"][group].as_array().unwrap() {
            assert!(c["value"].is_number() && c["tolerance"].is_number(), "{c}");
        }
    }
    let hash = report["config_hash"].clone();
    for f in ["constants.json", "fixedpoint.json", "certificate.json", "dynamics.json"] {
        assert_eq!(json(a.join(f))["config_hash"], hash);
    }

    // stage by stage into a second directory
    for cmd in ["solve", "spectrum", "simulate", "certify"] {
        let o = neurofield(&[cmd, "--grid-n", "200", "--quiet"], &cfg, &b);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));

    let line = fs::read_to_string(a.join("u_star.csv")).unwrap();
    let first = line.lines().nth(1).unwrap();
    for field in first.split(',') {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{field}");
    }
}

#[test]
fn dynamics_changes_keep_the_cached_fixed_point() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), REFERENCE);
    assert_eq!(neurofield(&["certify", "--grid-n", "100"], &cfg, &out).status.code(), Some(0));
    let before = fs::read(out.join("fixedpoint.json")).unwrap();
    let cfg = write_config(tmp.path(), &format!("{REFERENCE}\n[dynamics]\ndelta = 5e-4\nsnapshot_every = 20\n"));
    let o = neurofield(&["certify", "--grid-n", "100"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("reusing the cached fixed point") && err.contains("reusing the cached spectrum"));
    assert!(!err.contains("reusing the cached dynamics"));
    assert_eq!(json(out.join("dynamics.json"))["settings"]["delta"], 5e-4);
    // reused stage files are left as written by the run that produced them
    assert_eq!(fs::read(out.join("fixedpoint.json")).unwrap(), before);
    let report = json(out.join("run_report.json"));
    assert_ne!(report["config_hash"], report["fixed_point"]["config_hash"]);
    assert_eq!(report["config_hash"], json(out.join("dynamics.json"))["config_hash"]);
    let snaps = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert!(snaps.starts_with("t,x,u\n"));
}

#[test]
fn bounds_writes_profiles_and_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let out = tmp.path().join("out");
    assert_eq!(neurofield(&["bounds", "--grid-n", "800"], &cfg, &out).status.code(), Some(0));
    let c = json(out.join("constants.json"));
    // W(b) = (1 - e^{-b}) / 2: Δ = -ln(1 - 2 level) / 2
    assert!((c["delta_minus"].as_f64().unwrap() + 0.5 * 0.8f64.ln()).abs() < 1e-8);
    assert!((c["delta_plus"].as_f64().unwrap() + 0.5 * 0.4f64.ln()).abs() < 1e-8);
    let profiles = fs::read_to_string(out.join("profiles.csv")).unwrap();
    assert_eq!(profiles.lines().next(), Some("x,u_minus,u_plus"));
    assert_eq!(profiles.lines().count(), 802);
}

#[test]
fn tabulated_kernels_load_relative_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let mut table = String::from("x,omega\n");
    for i in -2000..=2000 {
        let x = i as f64 * 0.01;
        table.push_str(&format!("{x},{}\n", 0.5 * (-x.abs()).exp()));
    }
    fs::write(tmp.path().join("kernel.csv"), table).unwrap();
    let cfg = write_config(
        tmp.path(),
        &REFERENCE.replace("type = \"exponential\"", "type = \"tabulated\"\nfile = \"kernel.csv\""),
    );
    let o = neurofield(&["bounds"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d = json(tmp.path().join("out/constants.json"))["d"].as_f64().unwrap();
    assert!((d - 1.556757655).abs() < 1e-3, "{d}");
}

#[test]
fn invalid_thread_counts_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let o = Command::new(env!("CARGO_BIN_EXE_neurofield"))
        .args(["check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .env("NEUROFIELD_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("NEUROFIELD_THREADS"));
}
