//! Signal conditioning, R-peak detection and heartbeat segmentation.

mod detect;
mod filter;
mod segment;

use std::fmt;

pub use detect::{detect_r_peaks, detect_r_peaks_with, shannon_energy, DetectorConfig};
pub use filter::{
    design_butterworth_highpass, design_cheby1_bandpass, Biquad, BiquadCascade, FilterState,
};
pub use segment::{segment_heartbeats, Heartbeat};

#[derive(Debug, Clone, PartialEq)]
pub enum DspError {
    EmptySignal,
    WindowTooShort { samples: usize },
    InvalidBand { low: f64, high: f64, fs: f64 },
    InvalidRipple(f64),
}

impl fmt::Display for DspError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DspError::EmptySignal => write!(f, "empty signal"),
            DspError::WindowTooShort { samples } => {
                write!(
                    f,
                    "moving-average window of {samples} samples is shorter than 3"
                )
            }
            DspError::InvalidBand { low, high, fs } => {
                write!(f, "invalid band {low}-{high} Hz for sampling rate {fs} Hz")
            }
            DspError::InvalidRipple(r) => write!(f, "passband ripple must be positive, got {r} dB"),
        }
    }
}

impl std::error::Error for DspError {}

/// Cutoff of the baseline-removal high-pass.
pub const BASELINE_CUTOFF_HZ: f64 = 0.5;

/// Zero-phase 2nd-order Butterworth high-pass at 0.5 Hz.
pub fn highpass_baseline(x: &[f64], fs: f64) -> Result<Vec<f64>, DspError> {
    if x.is_empty() {
        return Err(DspError::EmptySignal);
    }
    let hp = design_butterworth_highpass(2, BASELINE_CUTOFF_HZ, fs)?;
    Ok(hp.filtfilt(x))
}

/// Odd window length (in samples) for a moving average of `window_s` seconds.
pub fn odd_window_len(window_s: f64, fs: f64) -> usize {
    let w = (window_s * fs).ceil().max(0.0) as usize;
    if w % 2 == 0 {
        w + 1
    } else {
        w
    }
}

/// Centered moving mean. Near the edges the window shrinks to the samples
/// that exist.
pub fn centered_mean(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let half = window / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Subtracts a centered moving average of `window_s` seconds.
pub fn moving_average_detrend(x: &[f64], window_s: f64, fs: f64) -> Result<Vec<f64>, DspError> {
    let w = (window_s * fs).ceil().max(0.0) as usize;
    if w < 3 {
        return Err(DspError::WindowTooShort { samples: w });
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let mean = centered_mean(x, odd_window_len(window_s, fs));
    Ok(x.iter().zip(mean).map(|(v, m)| v - m).collect())
}

/// Parameters of the conditioning chain applied before segmentation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub detrend_window_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            detrend_window_s: 0.7,
        }
    }
}

/// High-pass baseline removal followed by moving-average detrend.
pub fn preprocess(x: &[f64], fs: f64, cfg: &PreprocessConfig) -> Result<Vec<f64>, DspError> {
    let hp = highpass_baseline(x, fs)?;
    moving_average_detrend(&hp, cfg.detrend_window_s, fs)
}
