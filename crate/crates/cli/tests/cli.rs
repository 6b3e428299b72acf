use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ddgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddgate"))
        .args(args)
        .env_remove("DDGATE_OUT")
        .env_remove("DDGATE_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_ok(config: &Path, cmd: &str, out: &Path) -> String {
    let o = ddgate(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(
        o.status.success(),
        "{cmd} failed: {}\n{}",
        String::from_utf8_lossy(&o.stderr),
        String::from_utf8_lossy(&o.stdout)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const NULL_DESIGN: &str = r#"
seed = 7
[design]
gate = "NULL"
n_pulses = 4
"#;

#[test]
fn design_is_reproducible_and_verifies() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "design.toml", NULL_DESIGN);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&cfg, "design", &a);
    run_ok(&cfg, "design", &b);
    let da = fs::read(a.join("design.json")).unwrap();
    assert_eq!(da, fs::read(b.join("design.json")).unwrap());
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );

    let v: serde_json::Value = serde_json::from_slice(&da).unwrap();
    assert!(v["fidelity"].as_f64().unwrap() >= 0.98);

    let verify = write_config(
        tmp.path(),
        "verify.toml",
        &format!("[verify]\ndesign = {:?}\n", a.join("design.json")),
    );
    let out = run_ok(&verify, "verify", &tmp.path().join("v"));
    assert!(out.contains("true"));

    // nudge the stored fidelity by one ulp
    let mut tampered = v.clone();
    let f = v["fidelity"].as_f64().unwrap();
    tampered["fidelity"] = serde_json::json!(f64::from_bits(f.to_bits() - 1));
    fs::write(a.join("design.json"), serde_json::to_string_pretty(&tampered).unwrap()).unwrap();
    let o = ddgate(&["verify", "--config", verify.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn json_lines_format() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "design.toml", NULL_DESIGN);
    let out = tmp.path().join("o");
    let o = ddgate(&[
        "design",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json-lines",
        "--workers",
        "1",
    ]);
    assert!(o.status.success());
    let line = String::from_utf8(o.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["gate"], "NULL");
}

#[test]
fn malformed_config_fails_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    for (name, body) in [
        ("syntax.toml", "[design\ngate = 1"),
        ("unknown.toml", "[design]\ngate = \"NULL\"\nn_pulses = 4\nbogus = 1\n"),
        ("gate.toml", "[design]\ngate = \"SWAP\"\nn_pulses = 4\n"),
        ("missing.toml", "seed = 1\n"),
        ("pulses.toml", "[design]\ngate = \"NULL\"\nn_pulses = 0\n"),
    ] {
        let cfg = write_config(tmp.path(), name, body);
        let o = ddgate(&["design", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{name} left output behind");
    }
    let o = ddgate(&["design"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_design_exit_code() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[design]\ngate = \"NULL\"\nn_pulses = 6\n[design.optimizer]\nmin_delay = 1.0\nmax_total_time = 2.0\nmax_init_attempts = 20\nn_starts = 2\n",
    );
    let out = tmp.path().join("out");
    let o = ddgate(&["design", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("N = 6"));
    assert!(!out.exists());
}

#[test]
fn oversize_state_bath_is_a_capacity_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[sweep]\ngates = [\"NULL\"]\nn_pulses = [4]\n[sweep.state_bath]\nn_spins = 12\n",
    );
    let o = ddgate(&["sweep", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn empty_sweep_writes_header_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[sweep]\ngates = []\nn_pulses = []\n");
    let out = tmp.path().join("o");
    run_ok(&cfg, "sweep", &out);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text, "gate,n_pulses,fidelity,gate_time_us,state_fidelity,l_2tg,seed,status\n");
}

#[test]
fn small_sweep_resumes_identically() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 3\n[sweep]\ngates = [\"CeNOTn\", \"NULL\"]\nn_pulses = [4]\n",
    );
    let out = tmp.path().join("o");
    run_ok(&cfg, "sweep", &out);
    let first = fs::read(out.join("sweep.csv")).unwrap();
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[7], "ok");
        assert!(r[2].parse::<f64>().unwrap() >= 0.98, "{r:?}");
        assert!(r[4].parse::<f64>().unwrap() >= 0.95, "{r:?}");
    }
    // drop the second row and resume
    let text = String::from_utf8(first.clone()).unwrap();
    let kept: Vec<&str> = text.lines().take(2).collect();
    fs::write(out.join("sweep.csv"), kept.join("\n") + "\n").unwrap();
    run_ok(&cfg, "sweep", &out);
    assert_eq!(fs::read(out.join("sweep.csv")).unwrap(), first);

    // a different seed may not reuse the directory
    let o = ddgate(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bath_and_coherence_exports() {
    let tmp = TempDir::new().unwrap();
    let bath_cfg = write_config(
        tmp.path(),
        "bath.toml",
        "seed = 5\n[bath]\nselect = true\n[bath.spec]\nn_spins = 12\n",
    );
    let (b1, b2) = (tmp.path().join("b1"), tmp.path().join("b2"));
    run_ok(&bath_cfg, "bath", &b1);
    run_ok(&bath_cfg, "bath", &b2);
    assert_eq!(fs::read(b1.join("bath.json")).unwrap(), fs::read(b2.join("bath.json")).unwrap());
    assert_eq!(fs::read(b1.join("fid.csv")).unwrap(), fs::read(b2.join("fid.csv")).unwrap());
    let fid = csv_rows(&b1.join("fid.csv"));
    assert_eq!(fid[0][0], "0.0");
    assert_eq!(fid[0][3], "1.0");

    // a symmetric 4-pulse sequence with a 4 us gate time
    let seq = tmp.path().join("seq.json");
    fs::write(
        &seq,
        r#"{"format_version": 1, "n_pulses": 4, "delays_us": [0.5, 1.0, 1.0, 1.0, 0.5], "label": "t4"}"#,
    )
    .unwrap();
    let coh_cfg = write_config(
        tmp.path(),
        "coh.toml",
        &format!(
            "[coherence]\nsequence = {:?}\nbath = {:?}\nrepeats = [2, 4, 8, 12]\n",
            seq,
            b1.join("bath.json")
        ),
    );
    let out = tmp.path().join("c");
    run_ok(&coh_cfg, "coherence", &out);
    let text = fs::read_to_string(out.join("coherence.csv")).unwrap();
    assert!(text.starts_with("t_us,re_L,im_L,abs_L\n"));
    let times: Vec<f64> = csv_rows(&out.join("coherence.csv"))
        .iter()
        .map(|r| r[0].parse().unwrap())
        .collect();
    assert_eq!(times, vec![8.0, 16.0, 32.0, 48.0]);

    let odd = write_config(
        tmp.path(),
        "odd.toml",
        &format!("[coherence]\nsequence = {:?}\nbath = {:?}\nrepeats = [3]\n", seq, b1.join("bath.json")),
    );
    let o = ddgate(&["coherence", "--config", odd.to_str().unwrap(), "--out", tmp.path().join("odd").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cenot_trajectory_ends_flipped() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "d.toml",
        "seed = 1\n[design]\ngate = \"CeNOTn\"\nn_pulses = 4\n",
    );
    let d = tmp.path().join("d");
    run_ok(&cfg, "design", &d);
    let traj = write_config(
        tmp.path(),
        "t.toml",
        &format!("[trajectory]\ndesign = {:?}\nbranch = 1\npsi0 = \"down\"\ndt_us = 0.01\n", d.join("design.json")),
    );
    let out = tmp.path().join("t");
    run_ok(&traj, "trajectory", &out);
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(text.starts_with("t_us,x,y,z\n"));
    let rows = csv_rows(&out.join("trajectory.csv"));
    let first_z: f64 = rows[0][3].parse().unwrap();
    let last_z: f64 = rows.last().unwrap()[3].parse().unwrap();
    assert!((first_z + 1.0).abs() < 1e-12);
    assert!(last_z > 0.97, "{last_z}");
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "design.toml", NULL_DESIGN);
    let out = tmp.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_ddgate"))
        .args(["design", "--config", cfg.to_str().unwrap()])
        .env("DDGATE_OUT", &out)
        .env("DDGATE_WORKERS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("design.json").exists());
}
