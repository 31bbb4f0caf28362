use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrng-lab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("QRNG_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn optimum_reports_the_advantages() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["optimum"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("optimum.json")).unwrap()).unwrap();
    let adv = &report["advantage"];
    assert!((adv["discard_pct"].as_f64().unwrap() - 12.7).abs() < 0.3);
    assert!((adv["keep_pct"].as_f64().unwrap() - 5.6).abs() < 0.3);
    assert!((adv["laser_keep_gain_pct"].as_f64().unwrap() - 8.0).abs() < 0.3);
    assert_eq!(report["points"].as_array().unwrap().len(), 4);
}

#[test]
fn rawbit_family_has_one_block_per_window() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "curves",
            "rawbit",
            "--tau-cw",
            "0,1e-9,2e-9,5e-9",
            "--points",
            "50",
            "--source",
            "sps",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("rawbit_sps.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "tau_cw,lambda,lambda_click_a,lambda_bit_a,lambda_bit_total,lambda_coinc"
    );
    assert_eq!(lines.count(), 200);
    assert!(!dir.path().join("rawbit_laser.csv").exists());
}

#[test]
fn entropy_rate_curves_cover_both_sources_and_modes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["curves", "entropy-rate", "--points", "40"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["laser_discard", "laser_keep", "sps_discard", "sps_keep"] {
        let text = fs::read_to_string(dir.path().join(format!("entropy_rate_{name}.csv"))).unwrap();
        assert!(text.starts_with("lambda,outcome_rate,h_sh_cond,h_min_cond,h_sh_rate,h_min_rate\n"));
        assert_eq!(text.lines().count(), 41);
        assert!(!text.contains('\r'));
    }
}

#[test]
fn transition_and_waiting_curves() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "curves",
            "transitions",
            "--points",
            "10",
            "--mode",
            "keep",
            "--source",
            "laser",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("transitions_laser_keep.csv")).unwrap();
    assert!(text
        .starts_with("lambda,p_b_given_a,p_a_given_a,p_ab_given_a,p_a_given_ab,p_ab_given_ab\n"));

    let o = run(
        dir.path(),
        &["curves", "waiting", "--source", "sps", "--m-max", "3"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let k = fs::read_to_string(dir.path().join("waiting_sps_K.csv")).unwrap();
    assert!(k.starts_with("tau_s,value\n0.00000000e0,0.00000000e0\n"));
    assert!(dir.path().join("waiting_sps_L3.csv").exists());
}

#[test]
fn simulation_is_byte_identical_across_runs() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["simulate", "--seed", "42", "--duration", "0.01", "--jitter"];
    assert!(run(d1.path(), &args).status.success());
    assert!(run(d2.path(), &args).status.success());
    for f in [
        "events.bin",
        "tallies.json",
        "comparison_discard.csv",
        "comparison_keep.csv",
    ] {
        let (a, b) = (
            fs::read(d1.path().join(f)).unwrap(),
            fs::read(d2.path().join(f)).unwrap(),
        );
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn sps_rates_agree_with_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "simulate",
            "--duration",
            "1",
            "--events",
            "none",
            "--mode",
            "discard",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("comparison_discard.csv")).unwrap();
    for line in text
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("lambda_click") || l.starts_with("lambda_bit"))
    {
        let z: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(z.abs() < 3.0, "{line}");
    }
}

#[test]
fn extraction_pipeline_and_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(
        dir.path(),
        &["simulate", "--seed", "7", "--duration", "0.005"]
    )
    .status
    .success());
    let events = dir.path().join("events.bin");
    let o = run(
        dir.path(),
        &[
            "extract",
            "--input",
            events.to_str().unwrap(),
            "--h-min",
            "0.45",
            "--battery",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("extracted.json")).unwrap()).unwrap();
    assert_eq!(meta["m"], 1715);
    assert_eq!(meta["encoding"], "a=0,b=10,ab=11");
    let bits = fs::read(dir.path().join("extracted.bin")).unwrap();
    assert_eq!(
        bits.len(),
        (meta["output_bits"].as_u64().unwrap() as usize).div_ceil(8)
    );
    let head: String = bits[..8].iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(head, GOLDEN_HEAD);
}

/// First 8 output bytes for simulator seed 7, extractor seed 1, h_min 0.45.
const GOLDEN_HEAD: &str = "832f04d97c742023";

#[test]
fn usage_and_config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(dir.path(), &["simulate", "--duration", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(dir.path(), &["curves", "entropy", "--points", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(
            dir.path(),
            &[
                "curves",
                "entropy",
                "--lambda-min",
                "1e8",
                "--lambda-max",
                "1e7"
            ]
        )
        .status
        .code(),
        Some(2)
    );

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"chain": {"eta": 0.5}}"#).unwrap();
    let o = run(dir.path(), &["optimum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown field"));

    let events = dir.path().join("none.bin");
    fs::write(&events, []).unwrap();
    let o = run(
        dir.path(),
        &["extract", "--input", events.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--h-min"));
    let o = run(
        dir.path(),
        &[
            "extract",
            "--input",
            events.to_str().unwrap(),
            "--h-min",
            "0",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn too_few_outcomes_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["simulate", "--duration", "1e-5", "--lambda", "1e6"],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn robustness_report_has_every_sweep_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["robustness", "--parameter", "p_a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("robustness.csv")).unwrap();
    assert!(text.starts_with("parameter,value,advantage_discard,advantage_keep\n"));
    assert_eq!(text.lines().count(), 27);
    let first = text.lines().nth(1).unwrap();
    let keep: f64 = first.rsplit(',').next().unwrap().parse().unwrap();
    assert!(keep > 0.0, "{first}");
}
