//! Design the band-pass and baseline high-pass filters and print their responses.

use ecg_stft::dsp::{design_butterworth_highpass, design_cheby1_bandpass, highpass_baseline};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 360.0;
    let bp = design_cheby1_bandpass(4, 1.0, 6.0, 18.0, fs)?;
    let hp = design_butterworth_highpass(2, 0.5, fs)?;
    println!("{:>8} {:>12} {:>12}", "Hz", "band-pass dB", "high-pass dB");
    for f in [0.05, 0.5, 1.0, 3.0, 6.0, 10.39, 18.0, 30.0, 60.0, 179.0] {
        let db = |m: f64| 20.0 * m.max(1e-300).log10();
        println!(
            "{f:>8.2} {:>12.2} {:>12.2}",
            db(bp.magnitude(f, fs)),
            db(hp.magnitude(f, fs))
        );
    }
    let worst = bp.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
    println!("largest band-pass pole radius {worst:.6}");

    // a 0.2 Hz wander on top of a 10 Hz tone
    let x: Vec<f64> = (0..3600)
        .map(|i| {
            let t = i as f64 / fs;
            (2.0 * std::f64::consts::PI * 10.0 * t).sin()
                + 2.0 * (2.0 * std::f64::consts::PI * 0.2 * t).sin()
        })
        .collect();
    let y = highpass_baseline(&x, fs)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "mean before {:.3}, after zero-phase high-pass {:.3}",
        mean(&x[..900]),
        mean(&y[..900])
    );
    Ok(())
}
