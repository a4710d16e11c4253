use std::path::Path;
use std::process::{Command, Output};

const DESK: &str = r#"{
  "n_antennas": 128, "n_rf": 4, "wavelength": 0.003,
  "paths": {"count": 3, "gain_vars": [1.0, 0.01, 0.01], "angle_range": [-0.866, 0.866], "range_range": [6.0, 40.0]},
  "snr_db": 10, "seed": 1,
  "sweep": {"kind": "gain_vs_snr", "snr_grid": [0, 10], "trials": 20}
}"#;

fn xlbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlbeam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn sweep_csv_is_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "desk.json", DESK);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let res = xlbeam(&[
            "sweep", "--config", &cfg, "--seed", "7", "--threads", threads, "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        outputs.push(std::fs::read(out.join("gain_vs_snr.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("scheme,snr_db,mean_gain,median_error_m,pilots,trials\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 4);
}

#[test]
fn manifest_records_hash_seed_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "desk.json", DESK);
    let out = dir.path().join("out");
    let res = xlbeam(&["--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap(), "codebook"]);
    assert!(res.status.success());
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "codebook");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["crate_version"].is_string());
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["codebook.json", "codebook.csv"]);
    let csv = std::fs::read_to_string(out.join("codebook.csv")).unwrap();
    assert!(csv.starts_with("p,kind,q,s,theta,distance_m\n"));
    assert_eq!(csv.lines().count(), 1 + 512);
}

#[test]
fn missing_key_exits_2_with_key_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &DESK.replace(r#""seed": 1,"#, ""));
    let res = xlbeam(&["--config", &cfg, "sweep"]);
    assert_eq!(res.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("seed"));
}

#[test]
fn nested_type_error_reports_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &DESK.replace(r#""count": 3"#, r#""count": "three""#));
    let res = xlbeam(&["--config", &cfg, "report"]);
    assert_eq!(res.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["path"], "paths.count");
}

#[test]
fn report_with_default_config_gives_overhead_table() {
    let res = xlbeam(&["report"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    for line in [
        "HFBS,Q(S+1),6144,6144,true",
        "FFBS,Q,512,512,true",
        "THBT,M,128,128,true",
        "THBT+BRPSS,M+1,129,129,true",
        "TPBT,Q+K(S+1),548,,false",
        "NFBT,per block,1,1,true",
        "HFNS,per block,5,5,true",
        "FFBT-proxy,per block,3,3,true",
    ] {
        assert!(text.lines().any(|l| l == line), "missing {line}\n{text}");
    }
}

#[test]
fn train_and_refine_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "desk.json", DESK);
    let res = xlbeam(&["--config", &cfg, "train", "--scheme", "hfbs"]);
    assert!(res.status.success());
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["scheme"], "HFBS");
    assert_eq!(v["pilots"], 512);
    let gain = v["gain"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&gain));

    let coarse = write_config(dir.path(), "coarse.json", r#"{"omega": 0.1, "range": null}"#);
    let res = xlbeam(&["--config", &cfg, "refine", "--coarse", &coarse]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    for key in ["omega", "range_m", "k", "b", "refined"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn wrong_scheme_kind_is_a_config_error() {
    let res = xlbeam(&["track", "--scheme", "THBT"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn track_writes_per_block_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "track.json",
        &DESK.replace(r#""seed": 1,"#, r#""seed": 1, "tracking": {"tracker": {"max_blocks": 10}, "calibration_trials": 50},"#),
    );
    let res = xlbeam(&["--config", &cfg, "track", "--scheme", "BRPSS"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.starts_with("t_s,truth_x,truth_y,pred_x,pred_y,meas_x,meas_y,filt_x,filt_y,gain,se_bits\n"));
    assert_eq!(text.lines().count(), 11);
}
