use std::path::Path;
use std::process::{Command, Output};

fn otfs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otfs"))
        .args(args)
        .current_dir(dir)
        .env_remove("OTFS_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const QUICK_BER: &[&str] =
    &["ber", "--M", "2", "--N", "1", "--scenario", "fir:L=2", "--alphabet", "bpsk", "--frames", "500", "--snr", "0:2:16"];

#[test]
fn ber_writes_one_row_per_snr_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = otfs(dir.path(), QUICK_BER);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "snr_db,frames,bits,bit_errors,ber,precoder,detector,scenario,M,N,L_or_Q,seed,fingerprint"
    );
    assert_eq!(lines.count(), 9);
    assert!(dir.path().join("otfs-ber.manifest.json").exists());
}

#[test]
fn manifest_replay_reproduces_output_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = QUICK_BER.to_vec();
    args.extend(["--seed", "11", "--out", "a.csv"]);
    assert_eq!(code(&otfs(dir.path(), &args)), 0);
    let o = otfs(dir.path(), &["ber", "--manifest", "a.csv.manifest.json", "--out", "b.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());

    let o = otfs(dir.path(), &["ber", "--manifest", "a.csv.manifest.json", "--M", "4"]);
    assert_eq!(code(&o), 2);

    // Doppler derived from a velocity is not a short decimal; it must survive the JSON round trip.
    let v = ["ber", "--M", "2", "--N", "4", "--scenario", "bem:v=500", "--frames", "200", "--snr", "12", "--out", "v.csv"];
    assert_eq!(code(&otfs(dir.path(), &v)), 0);
    assert_eq!(code(&otfs(dir.path(), &["ber", "--manifest", "v.csv.manifest.json", "--out", "w.csv"])), 0);
    assert_eq!(std::fs::read(dir.path().join("v.csv")).unwrap(), std::fs::read(dir.path().join("w.csv")).unwrap());
}

#[test]
fn seed_from_environment_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_otfs"))
        .args(QUICK_BER)
        .args(["--out", "r.csv"])
        .current_dir(dir.path())
        .env("OTFS_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 77);
    assert_eq!(m["seed_source"], "env");
}

#[test]
fn usage_and_capacity_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&otfs(dir.path(), &["ber", "--M", "2", "--N", "1"])), 2);
    assert_eq!(code(&otfs(dir.path(), &["ber", "--M", "2", "--N", "1", "--scenario", "fir:L=0"])), 2);
    assert_eq!(code(&otfs(dir.path(), &["ber", "--M", "2", "--N", "1", "--scenario", "fir:L=2", "--snr", "10:1:5"])), 2);
    let big = ["ber", "--M", "128", "--N", "16", "--scenario", "fir:L=2", "--detector", "ml"];
    let o = otfs(dir.path(), &big);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lmmse"));
    assert_eq!(code(&otfs(dir.path(), &["precoder", "dump", "--M", "5", "--N", "1"])), 3);
}

#[test]
fn dump_theta_for_two_symbols() {
    let dir = tempfile::tempdir().unwrap();
    let o = otfs(dir.path(), &["precoder", "dump", "--M", "2", "--N", "1", "--which", "theta"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let want = [[h, 0.0], [0.5, 0.5], [h, 0.0], [-0.5, -0.5]];
    for (r, w) in rows.iter().zip(want) {
        assert!((r[2] - w[0]).abs() < 1e-12 && (r[3] - w[1]).abs() < 1e-12, "{text}");
    }
}

#[test]
fn diversity_reports_and_budget_gate() {
    let dir = tempfile::tempdir().unwrap();
    let o = otfs(dir.path(), &["diversity", "--M", "2", "--N", "2", "--scenario", "fir:L=2"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["g_d"], 2);
    assert_eq!(r["exhaustive"], true);
    assert_eq!(r["pairs_examined"], 6560);

    let o = otfs(dir.path(), &["diversity", "--M", "2", "--N", "2", "--scenario", "bem:q=2", "--precoder", "identity"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["full_diversity"], false);
    assert!(!r["worst_pairs"].as_array().unwrap().is_empty());

    let gated = ["diversity", "--M", "4", "--N", "4", "--scenario", "fir:L=2", "--require-exhaustive"];
    assert_eq!(code(&otfs(dir.path(), &gated)), 4);
}

#[test]
fn plotdata_merges_series() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = QUICK_BER.to_vec();
    a.extend(["--out", "p.csv"]);
    let mut b = QUICK_BER.to_vec();
    b.extend(["--precoder", "identity", "--out", "i.csv"]);
    assert_eq!(code(&otfs(dir.path(), &a)), 0);
    assert_eq!(code(&otfs(dir.path(), &b)), 0);
    let o = otfs(dir.path(), &["plotdata", "--in", "p.csv", "i.csv"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let header = text.lines().find(|l| l.starts_with("# snr_db")).unwrap();
    assert!(header.contains("proposed_ml_fir2_2x1") && header.contains("identity_ml_fir2_2x1"), "{header}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 9);

    std::fs::write(dir.path().join("bad.csv"), "x,y\n1,2\n").unwrap();
    assert_eq!(code(&otfs(dir.path(), &["plotdata", "--in", "bad.csv"])), 2);
}

#[test]
fn selfcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = otfs(dir.path(), &["selfcheck"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}
