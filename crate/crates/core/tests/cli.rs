use std::path::Path;
use std::process::Command;

use sha2::{Digest, Sha256};

fn timebin(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_timebin"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("spawn timebin");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

#[test]
fn simulate_is_reproducible_and_analyzable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let (code, _, err) = timebin(
            d,
            &[
                "--seed",
                "11",
                "simulate",
                "--mu",
                "0.01",
                "--n-slots",
                "2000000",
            ],
        );
        assert_eq!(code, 0, "{err}");
    }
    for f in ["signal.pts", "idler.pts", "run.json", "config.toml"] {
        assert_eq!(sha(&a.join(f)), sha(&b.join(f)), "{f}");
    }

    let s = a.join("signal.pts");
    let i = a.join("idler.pts");
    let m = a.join("run.json");
    let (code, stdout, err) = timebin(
        &a,
        &[
            "analyze",
            "--signal",
            s.to_str().unwrap(),
            "--idler",
            i.to_str().unwrap(),
            "--meta",
            m.to_str().unwrap(),
        ],
    );
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("CAR"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("analysis.json")).unwrap()).unwrap();
    assert!(summary["coincidences"]["cc_count"].as_u64().unwrap() > 0);
    let hist = std::fs::read_to_string(a.join("delay_histogram.csv")).unwrap();
    assert!(hist.starts_with("delay_ps,counts"));
}

#[test]
fn analyze_reports_model_car_without_interferometers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[signal_mzi]\nenabled = false\n[idler_mzi]\nenabled = false\n\
         [experiment]\naccidental_offset_slots = 20\n",
    );
    let (code, _, err) = timebin(
        dir.path(),
        &[
            "--config",
            &cfg,
            "--seed",
            "3",
            "simulate",
            "--mu",
            "0.005",
            "--n-slots",
            "100000000",
        ],
    );
    assert_eq!(code, 0, "{err}");
    let p = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    let (code, _, err) = timebin(
        dir.path(),
        &[
            "--config",
            &cfg,
            "analyze",
            "--signal",
            &p("signal.pts"),
            "--idler",
            &p("idler.pts"),
            "--meta",
            &p("run.json"),
        ],
    );
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("analysis.json")).unwrap())
            .unwrap();
    let model = v["model"]["car"].as_f64().unwrap();
    let pull = v["car_pull_sigma"].as_f64().unwrap();
    assert!(model > 1.0);
    assert!(pull.abs() < 3.0, "pull {pull}, model {model}");
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let bad_value = write_config(d, "[signal_detector]\nefficiency = 1.5\n");
    let (code, _, err) = timebin(d, &["--config", &bad_value, "simulate"]);
    assert_eq!(code, 2);
    assert!(err.contains("signal_detector.efficiency"), "{err}");

    let unknown = write_config(d, "[source]\nmu_c = 0.01\nbogus = 1\n");
    let (code, _, err) = timebin(d, &["--config", &unknown, "simulate"]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");

    let (code, _, _) = timebin(
        d,
        &[
            "analyze",
            "--signal",
            "/nonexistent/s.pts",
            "--idler",
            "/nonexistent/i.pts",
        ],
    );
    assert_eq!(code, 3);

    let domain = write_config(
        d,
        "[experiment]\nsaturation_mu_grid = [0.3]\nsaturation_dead_slots = [5]\nsaturation_n_slots = 1000\n",
    );
    let (code, _, _) = timebin(d, &["--config", &domain, "saturation"]);
    assert_eq!(code, 4);

    let slow_tdc = write_config(d, "[signal_tdc]\nmax_rate_cps = 1e6\n");
    let args = [
        "--config",
        &slow_tdc,
        "simulate",
        "--mu",
        "0.05",
        "--n-slots",
        "1000000",
    ];
    let (code, _, err) = timebin(d, &args);
    assert_eq!(code, 5, "{err}");
    let mut allowed = args.to_vec();
    allowed.push("--allow-saturation");
    assert_eq!(timebin(d, &allowed).0, 0);

    assert_eq!(timebin(d, &["no-such-command"]).0, 2);
}

#[test]
fn saturation_and_car_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "[run]\nn_slots = 2000000\n[experiment]\nsaturation_mu_grid = [0.01, 0.1]\nsaturation_dead_slots = [0, 5]\nsaturation_n_slots = 1000000\ncar_mu_grid = [0.05]\n",
    );
    assert_eq!(
        timebin(d, &["--config", &cfg, "--threads", "2", "saturation"]).0,
        0
    );
    let sat = std::fs::read_to_string(d.join("saturation.csv")).unwrap();
    assert!(sat.starts_with("mu,dead_slots,n_slots,cc_per_pulse"));
    assert_eq!(sat.lines().count(), 5);

    assert_eq!(timebin(d, &["--config", &cfg, "car-sweep"]).0, 0);
    let car = std::fs::read_to_string(d.join("car.csv")).unwrap();
    assert_eq!(car.lines().count(), 2);
    let echo = std::fs::read_to_string(d.join("config.toml")).unwrap();
    assert!(echo.contains("car_mu_grid = [0.05]"));
}

#[test]
fn fringe_and_chsh_with_small_quota() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, stdout, err) = timebin(d, &["--quota", "3000", "fringe", "--mu", "0.01"]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.starts_with("V = "));
    let rows = std::fs::read_to_string(d.join("fringe.csv")).unwrap();
    assert_eq!(rows.lines().count(), 32);

    let cfg = write_config(d, "[experiment]\nrepeats = 2\n");
    let (code, _, err) = timebin(
        d,
        &["--config", &cfg, "--quota", "2000", "chsh", "--mu", "0.01"],
    );
    assert_eq!(code, 0, "{err}");
    assert_eq!(
        std::fs::read_to_string(d.join("chsh_rates.csv"))
            .unwrap()
            .lines()
            .count(),
        17
    );
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("chsh_summary.json")).unwrap())
            .unwrap();
    assert!(s["s"]["s"].as_f64().unwrap() > 1.5);
}

#[test]
fn tdc_calibrate_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, stdout, err) = timebin(
        d,
        &["tdc-calibrate", "--arrivals", "200000", "--dnl", "0.2"],
    );
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("max relative width error"));
    let widths = std::fs::read_to_string(d.join("tdc_widths.csv")).unwrap();
    assert_eq!(widths.lines().count(), 513);

    let (code, _, err) = timebin(d, &["bench", "--events", "100000"]);
    assert_eq!(code, 0, "{err}");
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("bench.json")).unwrap()).unwrap();
    assert!(b["timestamps_per_second"].as_f64().unwrap() > 0.0);
}
