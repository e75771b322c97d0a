use std::path::PathBuf;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bb84-rates"))
        .args(args)
        .output()
        .expect("run bb84-rates")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bb84-cli-it-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn rate_prints_tagging_value() {
    let out = bin(&["rate", "--model", "tagging", "--delta", "0.05", "--Delta", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let r: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("R = "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((r - 0.3350).abs() < 1e-3);
}

#[test]
fn sweep_file_crosses_zero_before_threshold() {
    let path = scratch("curve.csv");
    let out = bin(&[
        "sweep", "--model", "delta_balanced", "--delta", "0", "--Delta", "0:0.05:0.001", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("param,delta,Delta_eff,phase_rate,rate_raw,rate,feasible"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[0], f[4])
        })
        .collect();
    assert_eq!(rows.len(), 51);
    let sign_change = rows.windows(2).find(|w| w[0].1 > 0.0 && w[1].1 <= 0.0).unwrap();
    assert!((sign_change[0].0 - 0.028).abs() < 1e-12 && (sign_change[1].0 - 0.029).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&["rate", "--model", "tagging", "--delta", "0.05"]).status.code(), Some(1));
    assert_eq!(bin(&["rate", "--model", "nope", "--delta", "0.05"]).status.code(), Some(1));
    assert_eq!(
        bin(&["rate", "--model", "delta_balanced", "--delta", "0", "--Delta", "0.1"]).status.code(),
        Some(2)
    );
    assert_eq!(bin(&["verify", "--suite", "coin_leak", "--seed", "7"]).status.code(), Some(0));
    assert_eq!(bin(&["verify", "--suite", "bogus"]).status.code(), Some(1));
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_bb84-rates"))
        .env("GLLP_THREADS", "zero")
        .args(["verify", "--suite", "gap_trans"])
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));
    assert!(String::from_utf8(bad_threads.stderr).unwrap().contains("GLLP_THREADS"));
}

#[test]
fn verify_all_exit_code_matches_reports() {
    let path = scratch("verify.csv");
    let out = bin(&["verify", "--suite", "all", "--seed", "7", "--out", path.to_str().unwrap()]);
    let csv = std::fs::read_to_string(&path).unwrap();
    let all_pass = csv.lines().skip(1).all(|l| l.ends_with(",1"));
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 3 }));
}

#[test]
fn config_file_and_override() {
    let cfg = scratch("run.cfg");
    std::fs::write(&cfg, "model = tagging\ndelta = 0.05\nDelta = 0.4\n").unwrap();
    let plain = bin(&["rate", "--config", cfg.to_str().unwrap()]);
    let overridden = bin(&["rate", "--config", cfg.to_str().unwrap(), "--Delta", "0.1"]);
    assert_eq!(overridden.status.code(), Some(0));
    assert!(String::from_utf8(overridden.stdout).unwrap().contains("R = 0.335"));
    assert_ne!(plain.stdout, bin(&["rate", "--config", cfg.to_str().unwrap(), "--Delta", "0.1"]).stdout);
}

#[test]
fn wcp_and_simulate_headers() {
    let out = bin(&["wcp", "--eta_det", "0.15", "--alpha", "0.25", "--delta", "0.01", "--length", "0:40:10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("length_km,eta,mu,p0,p1,pM,pD,Delta,delta_bits,sifted_hz,rate,throughput_hz\n"));
    assert_eq!(text.lines().count(), 6);

    let out = bin(&["--format", "tsv", "simulate", "--scenario", "tagging", "--Delta", "0.2", "--q", "0.05", "--n", "20000"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("scenario\tn_pairs\tn_sifted\tbit_err\tphase_err\tdelta_hat\tdelta_p_hat\tgap_hat\tci99\n"));
}
