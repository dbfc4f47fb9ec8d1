use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn lzs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lzs"))
        .args(args)
        .env_remove("LZS_WORKERS")
        .output()
        .expect("run lzs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lzs-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

const TINY: [&str; 12] = [
    "--set",
    "grid.gamma_count=2",
    "--set",
    "grid.m_count=2",
    "--set",
    "grid.gamma_min=3",
    "--set",
    "grid.gamma_max=10",
    "--set",
    "grid.m_min=0.8",
    "--set",
    "grid.m_max=1.2",
];

fn with_tiny<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(&TINY);
    v
}

#[test]
fn regimes_reports_the_label() {
    let o = lzs(&["regimes", "--set", "gamma=0.2", "--set", "M=2.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("regime: AdiabaticImpulsiveLZS"), "{out}");
    assert!(out.contains("gamma: 2.00000000e-1"));
    assert!(out.contains("relativistic: false"));
}

#[test]
fn unknown_subcommand_is_a_validation_error() {
    let o = lzs(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[validation]: "), "{err}");
    assert!(err.contains("Usage:"));
}

#[test]
fn bad_value_reports_key_and_exits_1() {
    let o = lzs(&["regimes", "--set", "pulse.duration=-5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[validation]: "));
    assert!(stderr(&o).contains("pulse.duration"));

    let o = lzs(&["regimes", "--set", "pulse.durration=5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_config_file_is_a_validation_error() {
    let o = lzs(&["regimes", "--config", "/nonexistent/lzs.conf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot read config"));
}

#[test]
fn config_file_and_override_order() {
    let dir = scratch("cfgfile");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.conf");
    fs::write(&path, "[point]\ngamma = 0.2\nM = 1.0\n").unwrap();
    let p = path.to_str().unwrap();
    let o = lzs(&["regimes", "--config", p, "--set", "M=2.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("M: 2.20000000e0"));
}

#[test]
fn lz_check_passes() {
    let o = lzs(&["lz-check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.ends_with(",PASS")).count(), 7, "{out}");
}

#[test]
fn lz_check_fails_at_an_impossible_tolerance() {
    let o = lzs(&["lz-check", "--set", "lz.tolerance=1e-12"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[runtime]: "));
}

#[test]
fn resonance_csv() {
    let o = lzs(&["resonance", "--orders", "1..3", "--gamma-range", "1000..1000", "--set", "resonance.gamma_count=1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "n,gamma,M,parity");
    assert_eq!(lines.len(), 4);
    for (n, line) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let m: f64 = f[2].parse().unwrap();
        assert!((m - (n + 1) as f64).abs() < 1e-5, "{line}");
        assert_eq!(f[3], if n % 2 == 1 { "even" } else { "odd" });
    }

    let o = lzs(&["resonance", "--orders", "3..1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn trace_writes_both_files() {
    let dir = scratch("trace");
    let o = lzs(&["trace", "--set", "gamma=3", "--set", "M=1", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let wave = fs::read_to_string(dir.join("waveform.csv")).unwrap();
    let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(wave.starts_with("t_fs,A,E,k,bias_eV\n"));
    assert!(trace.starts_with("t_fs,A_norm,rho_cb,P_LZ_at_k,phase\n"));
    assert_eq!(wave.lines().count(), trace.lines().count());
    let a_max = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap().abs())
        .fold(0.0, f64::max);
    assert!((a_max - 1.0).abs() < 1e-12);
}

#[test]
fn trace_with_dephasing() {
    let dir = scratch("trace-t2");
    let o = lzs(&["trace", "--set", "gamma=3", "--set", "M=1", "--set", "dephasing.t2=2", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.join("trace.csv").exists());
}

#[test]
fn sweep_map_is_reproducible_and_resumable() {
    let dir = scratch("map");
    let d = dir.to_str().unwrap();
    let o = lzs(&with_tiny(&["sweep-map", "--out", d]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = fs::read(dir.join("map.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
    assert!(dir.join("manifest.txt").exists());
    assert!(dir.join("checkpoint.bin").exists());

    let o = lzs(&with_tiny(&["sweep-map", "--out", d, "--workers", "2"]));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first, fs::read(dir.join("map.csv")).unwrap());

    let o = lzs(&with_tiny(&["sweep-map", "--out", d, "--resume"]));
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("resumed: 4"), "{}", stdout(&o));
    assert_eq!(first, fs::read(dir.join("map.csv")).unwrap());
}

#[test]
fn resume_with_a_changed_grid_is_rejected() {
    let dir = scratch("mismatch");
    let d = dir.to_str().unwrap();
    assert_eq!(lzs(&with_tiny(&["sweep-map", "--out", d])).status.code(), Some(0));
    let o = lzs(&with_tiny(&["sweep-map", "--out", d, "--resume", "--set", "pulse.cep=1.0"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("config hash mismatch"), "{}", stderr(&o));
}

#[test]
fn manifest_reparses_as_config() {
    let dir = scratch("manifest");
    let d = dir.to_str().unwrap();
    assert_eq!(lzs(&with_tiny(&["sweep-map", "--out", d, "--set", "pulse.cep=pi/4"])).status.code(), Some(0));
    let manifest = dir.join("manifest.txt");
    let again = scratch("manifest-again");
    let o = lzs(&["sweep-map", "--config", manifest.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(dir.join("map.csv")).unwrap(), fs::read(again.join("map.csv")).unwrap());
}

#[test]
fn worker_flag_beats_environment() {
    let dir = scratch("workers");
    let d = dir.to_str().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lzs"))
        .args(with_tiny(&["sweep-map", "--out", d, "--workers", "2"]))
        .env("LZS_WORKERS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# workers: 2"), "{manifest}");

    let o = Command::new(env!("CARGO_BIN_EXE_lzs"))
        .args(with_tiny(&["sweep-map", "--out", d]))
        .env("LZS_WORKERS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let manifest = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# workers: 1"), "{manifest}");
}

#[test]
fn quarantined_cells_exit_3() {
    let dir = scratch("partial");
    let d = dir.to_str().unwrap();
    let o = lzs(&with_tiny(&[
        "current-map",
        "--out",
        d,
        "--set",
        "grid.k_scale=0",
        "--set",
        "grid.k_margin=0.05",
        "--set",
        "grid.k_points=5",
        "--set",
        "grid.k_max_extensions=0",
    ]));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[partial]: "));
    let csv = fs::read_to_string(dir.join("map.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains(",FAILED,")).count(), 4);
    assert!(dir.join("iso.csv").exists());
}
