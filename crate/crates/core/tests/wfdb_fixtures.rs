//! Reader output against files written, and values dumped, by the reference
//! Python `wfdb` package (see `data/make_fixtures.py`).

use std::path::Path;

use ecg_stft::wfdb::{adc_to_mv, encode_212, load_record, read_annotations};

#[derive(serde::Deserialize)]
struct Expected {
    n_samples: usize,
    channels: Vec<Vec<i32>>,
    adc_gain: Vec<f64>,
    baseline: Vec<i32>,
    checksum: Vec<i32>,
    ann_samples: Vec<u64>,
    ann_symbols: Vec<String>,
    ann_subtype: Vec<i8>,
    ann_chan: Vec<u8>,
    ann_aux: Vec<String>,
    long_samples: Vec<u64>,
    long_symbols: Vec<String>,
}

fn data() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data"))
}

fn expected() -> Expected {
    serde_json::from_slice(&std::fs::read(data().join("fx_expected.json")).unwrap()).unwrap()
}

#[test]
fn signals_match_reference_reader() {
    let exp = expected();
    let rec = load_record(data(), "fx").unwrap();
    assert_eq!(rec.header.n_samples, exp.n_samples);
    assert_eq!(rec.signals, exp.channels);
    for (i, s) in rec.header.signals.iter().enumerate() {
        assert_eq!(s.adc_gain, exp.adc_gain[i]);
        assert_eq!(s.baseline, exp.baseline[i]);
        assert_eq!(s.checksum, exp.checksum[i]);
        let sum: i64 = rec.signals[i].iter().map(|&v| i64::from(v)).sum();
        assert_eq!(sum as i16 as i32, s.checksum, "checksum of channel {i}");
    }
    let mv = rec.channel_mv(0).unwrap();
    assert_eq!(mv[1], adc_to_mv(52, 200.0, 1024));
}

#[test]
fn dat_bytes_re_encode_exactly() {
    let rec = load_record(data(), "fx").unwrap();
    let dat = std::fs::read(data().join("fx.dat")).unwrap();
    let mut enc = encode_212(&rec.signals);
    // the reference writer pads an odd final frame to a whole byte triple
    enc.resize(dat.len(), 0);
    assert_eq!(enc, dat);
}

#[test]
fn annotations_match_reference_reader() {
    let exp = expected();
    let rec = load_record(data(), "fx").unwrap();
    let a = &rec.annotations;
    assert_eq!(
        a.iter().map(|e| e.sample_index).collect::<Vec<_>>(),
        exp.ann_samples
    );
    assert_eq!(
        a.iter().map(|e| e.symbol.to_string()).collect::<Vec<_>>(),
        exp.ann_symbols
    );
    assert_eq!(
        a.iter().map(|e| e.subtype).collect::<Vec<_>>(),
        exp.ann_subtype
    );
    assert_eq!(
        a.iter().map(|e| e.channel).collect::<Vec<_>>(),
        exp.ann_chan
    );
    let aux: Vec<String> = a
        .iter()
        .map(|e| {
            e.aux
                .as_deref()
                .map(|b| String::from_utf8_lossy(b).into_owned())
                .unwrap_or_default()
        })
        .collect();
    assert_eq!(aux, exp.ann_aux);
}

#[test]
fn long_gaps_use_skip() {
    let exp = expected();
    let events = read_annotations(&std::fs::read(data().join("fxlong.atr")).unwrap()).unwrap();
    assert_eq!(
        events.iter().map(|e| e.sample_index).collect::<Vec<_>>(),
        exp.long_samples
    );
    assert_eq!(
        events
            .iter()
            .map(|e| e.symbol.to_string())
            .collect::<Vec<_>>(),
        exp.long_symbols
    );
}
