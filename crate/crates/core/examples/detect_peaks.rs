//! Shannon-energy R-peak detection scored against reference annotations.

use ecg_stft::dataset::{map_aami, BeatLabel};
use ecg_stft::dsp::{detect_r_peaks, preprocess, PreprocessConfig};
use ecg_stft::synth::{synth_record, SynthConfig};
use ecg_stft::wfdb::load_record;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let (dir, name) = match std::env::args().nth(1) {
        Some(d) => (
            d.into(),
            std::env::args().nth(2).unwrap_or_else(|| "100".into()),
        ),
        None => {
            synth_record(
                100,
                &SynthConfig {
                    duration_s: 60.0,
                    ..Default::default()
                },
            )
            .write_to(tmp.path())?;
            (tmp.path().to_path_buf(), "100".to_string())
        }
    };
    let rec = load_record(&dir, &name)?;
    let fs = rec.header.sampling_rate;
    let end = rec.header.n_samples.min((60.0 * fs) as usize);
    let x = preprocess(
        &rec.channel_mv(0).unwrap()[..end],
        fs,
        &PreprocessConfig::default(),
    )?;
    let peaks = detect_r_peaks(&x, fs);
    let truth: Vec<usize> = rec
        .annotations
        .iter()
        .filter(|a| {
            (a.sample_index as usize) < end && matches!(map_aami(a.symbol), BeatLabel::Beat(_))
        })
        .map(|a| a.sample_index as usize)
        .collect();
    let tol = (0.05 * fs) as usize;
    let hit = |t: &usize| peaks.iter().any(|p| p.abs_diff(*t) <= tol);
    let tp = truth.iter().filter(|t| hit(t)).count();
    println!(
        "{} detections, {} annotated beats in the first {:.0} s",
        peaks.len(),
        truth.len(),
        end as f64 / fs
    );
    println!(
        "sensitivity {:.2}%  positive predictivity {:.2}%",
        100.0 * tp as f64 / truth.len() as f64,
        100.0 * tp as f64 / peaks.len() as f64
    );
    Ok(())
}
