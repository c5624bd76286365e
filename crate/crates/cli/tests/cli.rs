use std::process::{Command, Output};

fn spectra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectra"))
        .args(args)
        .env("SPECTRA_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn summary(text: &str, key: &str) -> String {
    let prefix = format!("# {key}: ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .to_string()
}

#[test]
fn exit_codes() {
    assert_eq!(spectra(&["bands"]).status.code(), Some(0));
    assert_eq!(spectra(&["--help"]).status.code(), Some(0));
    assert_eq!(spectra(&["nope"]).status.code(), Some(2));
    assert_eq!(spectra(&["bands", "--v0", "wobble:1"]).status.code(), Some(2));
    assert_eq!(spectra(&["bands", "--tol", "0"]).status.code(), Some(2));
    assert_eq!(spectra(&["density", "--esteps", "0"]).status.code(), Some(2));
    let bad = Command::new(env!("CARGO_BIN_EXE_spectra"))
        .arg("bands")
        .env("SPECTRA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn gap_energy_is_skipped_not_fatal() {
    // mathieu:2 has a gap around E = 10
    let o = spectra(&["density", "--v0", "mathieu:2", "--emin", "9.9", "--emax", "10.1", "--esteps", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert_ne!(summary(&s, "skipped_outside_bands"), "0");
}

#[test]
fn free_density_matches_closed_form() {
    let o = spectra(&["density", "--emin", "1", "--emax", "9", "--esteps", "5"]);
    let s = stdout(&o);
    let err: f64 = summary(&s, "max_rel_err_closed_form").parse().unwrap();
    assert!(err < 1e-6, "{err}");
    let rows: Vec<&str> = s.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        let f: Vec<f64> = r.split(',').filter_map(|c| c.parse().ok()).collect();
        let want = f[0].sqrt() / std::f64::consts::PI;
        assert!((f[1] - want).abs() < 1e-6 * want);
    }
}

#[test]
fn output_is_deterministic() {
    let args = ["prufer", "--scenarios", "2", "--seed", "7"];
    let a = spectra(&args);
    let b = spectra(&args);
    assert_eq!(a.stdout, b.stdout);
    let c = spectra(&["prufer", "--scenarios", "2", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn config_roundtrip_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let first = stdout(&spectra(&["density", "--v0", "mathieu:1", "--esteps", "2", "--eps", "0.001,0.0001"]));
    let canon = summary(&first, "config");
    let body: String = canon
        .split_whitespace()
        .skip(1)
        .map(|kv| format!("{kv}\n"))
        .collect();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, body).unwrap();
    let again = stdout(&spectra(&["density", "--config", cfg.to_str().unwrap()]));
    assert_eq!(first, again);

    let over = stdout(&spectra(&["density", "--config", cfg.to_str().unwrap(), "--esteps", "3", "--eps", "0.01"]));
    let c = summary(&over, "config");
    assert!(c.contains("esteps=3") && c.contains("eps=0.01 ") && c.contains("v0=mathieu:1"), "{c}");
}

#[test]
fn json_and_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bands.json");
    let o = spectra(&["bands", "--v0", "mathieu:1", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["tool"], "spectra");
    assert_eq!(v["columns"][0], "index");
    assert!(v["rows"].as_array().unwrap().len() >= 2);
    assert!(v["config"].as_str().unwrap().starts_with("bands "));
    let lower = v["rows"][1]["lower"].as_f64().unwrap();
    assert!(lower > 9.0 && lower < 11.0);
}

#[test]
fn monodromy_checks_pass() {
    let s = stdout(&spectra(&["mcheck", "--samples", "20", "--esteps", "50"]));
    let det: f64 = summary(&s, "max_det_err").parse().unwrap();
    let disc: f64 = summary(&s, "max_free_discriminant_err").parse().unwrap();
    assert!(det < 1e-8 && disc < 1e-8);
}

#[test]
fn martingale_is_adapted() {
    let s = stdout(&spectra(&["martingale", "--depth", "6"]));
    assert_eq!(summary(&s, "adapted"), "true");
}

#[test]
fn mlinear_modifiers() {
    for g in ["power:1,0.9", "power:1,0.9@w=2", "power:1,0.9@E=2"] {
        let o = spectra(&["mlinear", "--g", g, "--nmax", "2", "--grid", "21", "--xmax", "20"]);
        assert_eq!(o.status.code(), Some(0), "{g}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = spectra(&["mlinear", "--g", "power:1,0.9@q=2"]);
    assert_eq!(o.status.code(), Some(2));
}
