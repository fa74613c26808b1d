use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../examples_cfg")
}

fn tbloc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbloc")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn with_config(cmd: &str, config: &str, out: &Path) -> Output {
    let cfg = examples().join(config);
    tbloc(&[cmd, "--config", cfg.to_str().unwrap()], out)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn toy_chain_gap_is_twice_the_onsite_offset() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("bands", "toy_chain_bands.toml", dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&dir.path().join("summary.json"));
    assert!((s["gap_eV"].as_f64().unwrap() - 1.0).abs() < 1e-9, "{s}");
    assert!(s["mu_eV"].as_f64().unwrap().abs() < 1e-9);
    let csv = std::fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    assert!(csv.starts_with("segment,k_fraction,band,energy_eV\n"));
    assert_eq!(csv.lines().count(), 1 + 41 * 2);
}

#[test]
fn silicon_gap_after_lattice_search() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("bands", "si_bands.toml", dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&dir.path().join("summary.json"));
    let gap = s["gap_eV"].as_f64().unwrap();
    assert!((gap - 0.98).abs() / 0.98 < 0.1, "gap {gap}");
    assert!(s["relaxed"].as_bool().unwrap());
}

#[test]
fn malformed_config_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model\nkind = \"toy\"\n").unwrap();
    let o = tbloc(&["bands", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1, column"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(examples().join("toy_chain_sites.toml")).unwrap();
    let cfg = dir.path().join("extra.toml");
    std::fs::write(&cfg, text.replace("[thermo]", "[thermo]\ntemperature = 300")).unwrap();
    let o = tbloc(&["sites", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown field `temperature`"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tbloc(&["sites"], dir.path()).status.code(), Some(2));
}

#[test]
fn default_verify_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = tbloc(&["verify"], dir.path());
    assert!(o.status.success(), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let report = json(&dir.path().join("verify.json"));
    let checks = report.as_array().unwrap();
    assert!(checks.len() >= 10);
    assert!(checks.iter().all(|c| c["pass"].as_bool().unwrap()));
    let woodbury = checks.iter().find(|c| c["name"] == "woodbury N=100").unwrap();
    assert!(woodbury["value"].as_f64().unwrap() < 1e-10);
}

#[test]
fn broken_kernel_symmetry_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(examples().join("toy_chain_sites.toml")).unwrap();
    let cfg = dir.path().join("asym.toml");
    std::fs::write(&cfg, text.replace("decay = 1.0", "decay = 1.0\nasymmetry = 0.2")).unwrap();
    let o = tbloc(&["verify", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[FAIL] kernel symmetry"), "{stdout}");
}

#[test]
fn sites_outputs_are_deterministic_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = with_config("sites", "toy_chain_sites.toml", out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let manifest = json(&a.join("manifest.json"));
    let files = manifest["files"].as_array().unwrap();
    assert!(files.len() >= 5);
    for f in files {
        let name = f["path"].as_str().unwrap();
        let (x, y) = (std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
        assert_eq!(x, y, "{name} differs between runs");
        let digest = Command::new("sha256sum").arg(a.join(name)).output();
        if let Ok(d) = digest {
            let hex = String::from_utf8_lossy(&d.stdout);
            assert!(hex.starts_with(f["sha256"].as_str().unwrap()), "{name}");
        }
    }
    assert_eq!(manifest, json(&b.join("manifest.json")));
}

#[test]
fn beta_and_mu_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = examples().join("toy_chain_sites.toml");
    let o = tbloc(&["sites", "--config", cfg.to_str().unwrap(), "--beta", "inf", "--mu", "0.1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["beta"], "inf");
    assert_eq!(s["mu_eV"].as_f64().unwrap(), 0.1);
    assert_eq!(s["contour_kind"], "occupied_circle");
}

#[test]
fn locality_on_gapped_chain_with_defect() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("locality", "toy_chain_locality.toml", dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let fits = json(&dir.path().join("fits.json"));
    let bulk = &fits["fits"]["bulk"]["dE"];
    assert!(bulk["exponent"].as_f64().unwrap() > 0.0);
    assert!(bulk["r_squared"].as_f64().unwrap() > 0.9);
    let far = fits["defect"]["far_exponent_deviation"].as_f64().unwrap();
    assert!(far < 0.1, "far deviation {far}");
    for stem in ["decay_bulk_dE", "decay_near_dF", "decay_far_d2E"] {
        assert!(dir.path().join(format!("{stem}.csv")).exists());
        assert!(dir.path().join(format!("{stem}.svg")).exists());
    }
    assert!(std::fs::read_to_string(dir.path().join("ratios.csv")).unwrap().lines().count() > 1);
}

#[test]
fn defect_split_is_low_rank_and_woodbury_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("defect", "toy_chain_defect.toml", dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&dir.path().join("summary.json"));
    assert!(s["rank"].as_u64().unwrap() <= 10);
    assert!(s["p1_frobenius"].as_f64().unwrap() <= 1e-3);
    assert!(s["woodbury_max_error"].as_f64().unwrap() < 1e-10);
    assert!(s["reconstruction_residual"].as_f64().unwrap() < 1e-13);
}

#[test]
fn combes_thomas_audit_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("ct-audit", "toy_ct.toml", dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = json(&dir.path().join("ct.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    // decay rate grows with the distance of z to the spectrum
    let rates: Vec<f64> = rows.iter().map(|r| r["exponent"].as_f64().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?}");
    assert!(rows.iter().all(|r| r["intercept_excess"].as_f64().unwrap() <= 0.0));
}
