//! Load a WFDB record and summarize its header, signal and annotations.
//!
//!     cargo run --example read_record -- /data/mitdb 100
//!
//! Without arguments a synthetic record is written to a temp dir and read back.

use std::collections::BTreeMap;

use ecg_stft::synth::{synth_record, SynthConfig};
use ecg_stft::wfdb::load_record;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = tempfile::tempdir()?;
    let (dir, name) = match args.as_slice() {
        [dir, name] => (std::path::PathBuf::from(dir), name.clone()),
        _ => {
            synth_record(100, &SynthConfig::default()).write_to(tmp.path())?;
            (tmp.path().to_path_buf(), "100".to_string())
        }
    };
    let rec = load_record(&dir, &name)?;
    let h = &rec.header;
    println!(
        "record {} : {} signals at {} Hz, {} samples ({:.1} s)",
        h.record_name,
        h.n_signals,
        h.sampling_rate,
        h.n_samples,
        h.n_samples as f64 / h.sampling_rate
    );
    for (i, s) in h.signals.iter().enumerate() {
        let mv = rec.channel_mv(i).unwrap();
        let (lo, hi) = mv
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!(
            "  {:<5} gain {} baseline {}  range {lo:.3}..{hi:.3} mV",
            s.lead_name, s.adc_gain, s.baseline
        );
    }
    let mut symbols: BTreeMap<char, usize> = BTreeMap::new();
    for a in &rec.annotations {
        *symbols.entry(a.symbol).or_default() += 1;
    }
    println!("{} annotations: {symbols:?}", rec.annotations.len());
    for a in rec.annotations.iter().filter(|a| a.aux.is_some()).take(3) {
        println!(
            "  aux at {}: {}",
            a.sample_index,
            String::from_utf8_lossy(a.aux.as_deref().unwrap())
        );
    }
    Ok(())
}
