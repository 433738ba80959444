//! Heartbeat to time-frequency image conversion.
//!
//! A beat is zero-padded, transformed with a Hann-windowed short-time Fourier
//! transform, converted to decibels relative to its own maximum and resampled
//! to a fixed 224x224 grayscale raster. Row 0 of an image is frequency bin 0;
//! column 0 is the earliest frame.

mod augment;
mod image;
mod io;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

pub use augment::{augment, random_augmentation, AugmentConfig, AugmentOp, Augmentation};
pub use image::{resize_bilinear, to_image, SpectrogramImage, IMAGE_SIZE};
pub use io::{read_pgm, read_spg, write_pgm, write_spg, SPG_MAGIC};

#[derive(Debug)]
pub enum StftError {
    InvalidConfig(String),
    EmptyInput,
    BadCache(String),
    Io(std::io::Error),
}

impl fmt::Display for StftError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StftError::InvalidConfig(m) => write!(f, "invalid STFT configuration: {m}"),
            StftError::EmptyInput => write!(f, "empty input"),
            StftError::BadCache(m) => write!(f, "bad spectrogram file: {m}"),
            StftError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for StftError {}

impl From<std::io::Error> for StftError {
    fn from(e: std::io::Error) -> Self {
        StftError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    /// Window length; also the FFT length.
    pub window_len: usize,
    pub hop: usize,
    pub db_floor: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_len: 512,
            hop: 8,
            db_floor: -80.0,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), StftError> {
        if !self.window_len.is_power_of_two() || self.window_len < 2 {
            return Err(StftError::InvalidConfig(format!(
                "window_len {} is not a power of two >= 2",
                self.window_len
            )));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(StftError::InvalidConfig(format!(
                "hop {} must be in 1..={}",
                self.hop, self.window_len
            )));
        }
        if !(self.db_floor < 0.0) {
            return Err(StftError::InvalidConfig("db_floor must be negative".into()));
        }
        Ok(())
    }

    pub fn fft_len(&self) -> usize {
        self.window_len
    }

    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }
}

/// Periodic Hann window, `0.5 * (1 - cos(2 pi k / n))`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()))
        .collect()
}

/// Complex STFT, `frames x (window_len / 2 + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub n_frames: usize,
    pub n_bins: usize,
    /// Frame-major.
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn at(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.n_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.data[frame * self.n_bins..(frame + 1) * self.n_bins]
    }
}

/// Reusable transform plan; cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct StftPlan {
    cfg: StftConfig,
    window: Arc<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(cfg: StftConfig) -> Result<Self, StftError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.window_len);
        Ok(StftPlan {
            cfg,
            window: Arc::new(hann_window(cfg.window_len)),
            fft,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// The input is padded with `window_len / 2` zeros on both sides and frame
    /// `t` covers padded samples `t * hop .. t * hop + window_len`. Phases are
    /// relative to the start of each frame.
    pub fn stft(&self, x: &[f64]) -> Spectrum {
        let w = self.cfg.window_len;
        let half = w / 2;
        let mut padded = vec![0.0; x.len() + 2 * half];
        padded[half..half + x.len()].copy_from_slice(x);
        let n_frames = 1 + (padded.len() - w) / self.cfg.hop;
        let n_bins = self.cfg.n_bins();

        let mut data = Vec::with_capacity(n_frames * n_bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); w];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..n_frames {
            let start = t * self.cfg.hop;
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(padded[start + k] * self.window[k], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..n_bins]);
        }
        Spectrum {
            n_frames,
            n_bins,
            data,
        }
    }

    /// Beat to image: pad, transform, scale.
    pub fn beat_image(&self, samples: &[f64]) -> SpectrogramImage {
        let padded = pad_beat(samples, 2 * self.cfg.window_len);
        to_image(&self.stft(&padded), self.cfg.db_floor)
    }
}

/// One-shot STFT with a fresh plan.
pub fn stft(x: &[f64], cfg: &StftConfig) -> Result<Spectrum, StftError> {
    if x.is_empty() {
        return Err(StftError::EmptyInput);
    }
    Ok(StftPlan::new(*cfg)?.stft(x))
}

/// Centers `x` inside a zero buffer of at least `min_len` samples.
pub fn pad_beat(x: &[f64], min_len: usize) -> Vec<f64> {
    if x.len() >= min_len {
        return x.to_vec();
    }
    let mut out = vec![0.0; min_len];
    let left = (min_len - x.len()) / 2;
    out[left..left + x.len()].copy_from_slice(x);
    out
}
