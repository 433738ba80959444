//! Checks against the published MIT-BIH Arrhythmia Database files. Ignored
//! unless run with `--ignored` and `MITBIH_DIR` pointing at the 48 records.

use std::path::PathBuf;

use ecg_stft::dataset::{all_records, map_aami, BeatLabel};
use ecg_stft::wfdb::load_record;

fn dir() -> PathBuf {
    PathBuf::from(std::env::var("MITBIH_DIR").expect("set MITBIH_DIR"))
}

#[test]
#[ignore = "needs MIT-BIH on disk (MITBIH_DIR)"]
fn record_100_annotations() {
    let rec = load_record(&dir(), "100").unwrap();
    let beats: Vec<_> = rec
        .annotations
        .iter()
        .filter(|a| matches!(map_aami(a.symbol), BeatLabel::Beat(_)))
        .collect();
    assert_eq!(beats.len(), 2_273);
    assert_eq!(beats[0].sample_index, 77);
    assert_eq!(rec.annotations[0].symbol, '+');
    assert_eq!(rec.header.n_samples, 650_000);
    assert_eq!(
        std::fs::metadata(dir().join("100.dat")).unwrap().len(),
        ecg_stft::pipeline::MITDB_DAT_BYTES
    );
}

#[test]
#[ignore = "needs MIT-BIH on disk (MITBIH_DIR)"]
fn every_record_parses_with_ordered_annotations() {
    let mut beats = 0;
    for r in all_records() {
        let rec = load_record(&dir(), &r.to_string()).unwrap();
        assert!(
            rec.annotations
                .windows(2)
                .all(|w| w[0].sample_index <= w[1].sample_index),
            "{r}"
        );
        assert!(
            rec.annotations
                .iter()
                .all(|a| (a.sample_index as usize) < rec.header.n_samples),
            "{r}"
        );
        beats += rec
            .annotations
            .iter()
            .filter(|a| matches!(map_aami(a.symbol), BeatLabel::Beat(_)))
            .count();
    }
    assert_eq!(beats, 109_494);
}
