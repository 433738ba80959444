use std::path::Path;
use std::process::Command;

use ecg_stft::synth::{write_corpus, SynthConfig};

fn ecg_stft(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ecg-stft"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn shipped_configs_validate() {
    for name in ["mitbih.json", "desk.json"] {
        let p = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs")
            .join(name);
        let cfg = ecg_stft::pipeline::PipelineConfig::load(&p).unwrap();
        cfg.validate().unwrap();
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"data_root": "nothing-here", "output_dir": "out", "split": {"paradigm": "inter_patient"}, "model": {"seed": 1}}"#,
    );

    let (code, _, err) = ecg_stft(&["census", "--config", &cfg]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("48 record(s) absent"));

    let (code, _, err) = ecg_stft(&["census", "--config", &cfg, "--records", "100,999"]);
    assert_eq!(code, 2, "{err}");

    let bad = write_config(
        dir.path(),
        r#"{"data_root": ".", "output_dir": "out", "split": {"paradigm": "inter_patient"}, "model": {"seed": 1, "lr": "fast"}}"#,
    );
    let (code, _, err) = ecg_stft(&["run", "--config", &bad]);
    assert_eq!(code, 2);
    assert!(err.contains("model.lr"), "{err}");

    let (code, out, _) = ecg_stft(&["fetch", "--records", "100"]);
    assert_eq!(code, 0);
    assert!(out.contains("https://physionet.org/files/mitdb/1.0.0/100.dat"));
}

#[test]
fn census_and_export_on_synthetic_records() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(
        &dir.path().join("data"),
        &[100, 101],
        &SynthConfig {
            duration_s: 30.0,
            ..Default::default()
        },
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"data_root": "data", "output_dir": "out", "split": {"paradigm": "intra_patient", "seed": 3}, "model": {"seed": 1}}"#,
    );
    let (code, out, err) = ecg_stft(&["census", "--config", &cfg, "--records", "100,101"]);
    assert_eq!(code, 0, "{err}");
    let rows: Vec<&str> = out.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows[1..],
        [
            "full",
            "DS1",
            "DS2",
            "intra_train",
            "intra_test",
            "full_segmented"
        ]
    );

    let other = dir.path().join("elsewhere");
    let (code, out, err) = ecg_stft(&[
        "export-spectrograms",
        "--config",
        &cfg,
        "--output",
        other.to_str().unwrap(),
        "--record",
        "101",
        "--start",
        "1",
        "--end",
        "3",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 2);
    assert!(other.join("spectrograms").is_dir());

    let (code, _, err) = ecg_stft(&[
        "export-spectrograms",
        "--config",
        &cfg,
        "--record",
        "101",
        "--end",
        "5000",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("max valid index"), "{err}");
}
