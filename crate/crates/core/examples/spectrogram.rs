//! Turn one beat of each class into a 224x224 grey-scale spectrogram.
//!
//!     cargo run --example spectrogram -- out_dir

use std::path::PathBuf;

use ecg_stft::dataset::{map_aami, AamiClass, BeatLabel};
use ecg_stft::dsp::{preprocess, segment_heartbeats, PreprocessConfig};
use ecg_stft::stft::{write_pgm, StftConfig, StftPlan};
use ecg_stft::synth::{synth_record, SynthConfig};
use ecg_stft::wfdb::load_record;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "spectrograms".into()),
    );
    std::fs::create_dir_all(&out)?;
    let tmp = tempfile::tempdir()?;
    synth_record(
        100,
        &SynthConfig {
            duration_s: 60.0,
            ..Default::default()
        },
    )
    .write_to(tmp.path())?;
    let rec = load_record(tmp.path(), "100")?;
    let fs = rec.header.sampling_rate;
    let x = preprocess(
        &rec.channel_mv(0).unwrap(),
        fs,
        &PreprocessConfig::default(),
    )?;
    let (pos, sym): (Vec<usize>, Vec<char>) = rec
        .annotations
        .iter()
        .filter(|a| matches!(map_aami(a.symbol), BeatLabel::Beat(_)))
        .map(|a| (a.sample_index as usize, a.symbol))
        .unzip();
    let beats = segment_heartbeats(&x, &pos, &sym, fs, 100);
    let plan = StftPlan::new(StftConfig::default())?;
    for class in [AamiClass::N, AamiClass::S, AamiClass::V, AamiClass::F] {
        let Some(b) = beats.iter().find(|b| b.aami_class == class) else {
            continue;
        };
        let spec = plan.stft(&b.samples);
        let img = plan.beat_image(&b.samples);
        let path = out.join(format!("beat_{}_{class}.pgm", b.beat_index));
        write_pgm(&img, std::fs::File::create(&path)?)?;
        println!(
            "{class}: {} samples, {} frames x {} bins -> {}",
            b.samples.len(),
            spec.n_frames,
            spec.n_bins,
            path.display()
        );
    }
    Ok(())
}
