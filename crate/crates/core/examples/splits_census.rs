//! Class census and the two split paradigms on a synthetic corpus, or on
//! MIT-BIH when a directory is given.
//!
//!     cargo run --release --example splits_census -- /data/mitdb

use ecg_stft::dataset::{balance_training, filter_classes, AamiClass, BalanceMode, EXCLUDED};
use ecg_stft::pipeline::{census_rows, PipelineConfig};
use ecg_stft::stft::AugmentConfig;
use ecg_stft::synth::{write_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let (data, records) = match std::env::args().nth(1) {
        Some(d) => (std::path::PathBuf::from(d), None),
        None => {
            let recs = vec![100, 101, 106, 119, 201, 203, 208, 233];
            write_corpus(
                tmp.path(),
                &recs,
                &SynthConfig {
                    duration_s: 90.0,
                    ..Default::default()
                },
            )?;
            (tmp.path().to_path_buf(), Some(recs))
        }
    };
    let mut cfg = PipelineConfig::from_json(&format!(
        r#"{{"data_root": {:?}, "output_dir": {:?}, "split": {{"paradigm": "inter_patient", "seed": 4}}, "model": {{"seed": 0}}}}"#,
        data,
        tmp.path().join("out")
    ))?;
    cfg.records = records;

    println!(
        "{:<16}{:>8}{:>8}{:>8}{:>8}{:>8}{:>9}",
        "", "N", "S", "V", "F", "Q", "total"
    );
    for (name, c) in census_rows(&cfg)? {
        let k = [
            AamiClass::N,
            AamiClass::S,
            AamiClass::V,
            AamiClass::F,
            AamiClass::Q,
        ]
        .map(|a| c.get(a));
        println!(
            "{name:<16}{:>8}{:>8}{:>8}{:>8}{:>8}{:>9}",
            k[0],
            k[1],
            k[2],
            k[3],
            k[4],
            c.total()
        );
    }

    // Balancing touches only the training side.
    let beats: Vec<_> = cfg
        .record_list()
        .iter()
        .flat_map(|&r| {
            let atr = std::fs::read(data.join(format!("{r}.atr"))).unwrap();
            let events = ecg_stft::wfdb::read_annotations(&atr).unwrap();
            events
                .iter()
                .filter_map(|e| match ecg_stft::dataset::map_aami(e.symbol) {
                    ecg_stft::dataset::BeatLabel::Beat(class) => Some(class),
                    _ => None,
                })
                .enumerate()
                .map(|(i, class)| ecg_stft::dataset::BeatRef {
                    record: r,
                    beat_index: i,
                    class,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let split = filter_classes(
        &ecg_stft::dataset::inter_patient_split(&beats)?,
        &AamiClass::KEPT,
    );
    let balanced = balance_training(
        &split,
        BalanceMode::Oversample,
        9,
        &AugmentConfig::default(),
    )?;
    println!("inter-patient train {:?}", split.train_census());
    println!("after oversampling {:?}", balanced.train_census());
    println!(
        "test unchanged: {}",
        balanced.test_census() == split.test_census()
    );
    println!("excluded records never used: {:?}", EXCLUDED);
    Ok(())
}
