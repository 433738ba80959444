//! Synthetic two-lead ECG records written as real WFDB files.
//!
//! Beats are sums of Gaussian P, Q, R, S and T waves. Each record number
//! seeds its own morphology so that "patients" differ, and each AAMI class
//! has a distinct shape and timing:
//!
//! * N: regular rhythm, upright P, narrow QRS;
//! * S (`A`): premature, flattened/early P, narrow QRS;
//! * V (`V`): premature, no P, wide tall QRS, inverted T;
//! * F (`F`): QRS between N and V.
//!
//! Only used for offline runs and tests; nothing here claims clinical realism.

use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::wfdb::{encode_212, symbol_to_code};

const GAIN: f64 = 200.0;
const ZERO: i32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub fs: f64,
    pub duration_s: f64,
    pub heart_rate_bpm: f64,
    /// Relative frequency of N, S, V, F beats.
    pub class_mix: [f64; 4],
    pub noise_mv: f64,
    pub baseline_mv: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            fs: 360.0,
            duration_s: 120.0,
            heart_rate_bpm: 72.0,
            class_mix: [0.55, 0.15, 0.15, 0.15],
            noise_mv: 0.02,
            baseline_mv: 0.15,
            seed: 0,
        }
    }
}

/// A complete record as file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub name: String,
    pub header: String,
    pub dat: Vec<u8>,
    pub atr: Vec<u8>,
    /// `(sample, symbol)` of every annotation written, rhythm marks included.
    pub annotations: Vec<(u64, char)>,
}

/// Encodes `(sample, code)` pairs as an MIT annotation stream.
///
/// Gaps above 1023 samples are bridged with SKIP. `aux` strings attach to the
/// annotation at the same index.
pub fn write_annotations(events: &[(u64, u8)], aux: &[Option<&[u8]>]) -> Vec<u8> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<u8>, w: u16| out.extend_from_slice(&w.to_le_bytes());
    let mut t = 0u64;
    for (i, &(sample, code)) in events.iter().enumerate() {
        assert!(sample >= t, "annotations must be sorted");
        let mut gap = sample - t;
        if gap > 1023 {
            let skip = gap as u32;
            push(&mut out, 59 << 10);
            push(&mut out, (skip >> 16) as u16);
            push(&mut out, (skip & 0xFFFF) as u16);
            gap = 0;
        }
        push(&mut out, (u16::from(code) << 10) | gap as u16);
        if let Some(Some(text)) = aux.get(i) {
            push(&mut out, (63 << 10) | text.len() as u16);
            out.extend_from_slice(text);
            if text.len() % 2 == 1 {
                out.push(0);
            }
        }
        t = sample;
    }
    push(&mut out, 0);
    out
}

/// Per-record wave shape: `(amplitude mV, center s, width s)` for P, Q, R, S, T.
#[derive(Debug, Clone, Copy)]
struct Morphology {
    waves: [(f64, f64, f64); 5],
}

impl Morphology {
    fn patient(rng: &mut ChaCha8Rng) -> Self {
        let mut j = |v: f64, rel: f64| v * (1.0 + rng.gen_range(-rel..rel));
        Morphology {
            waves: [
                (j(0.15, 0.3), -0.20, j(0.025, 0.2)),
                (j(-0.12, 0.3), -0.03, j(0.010, 0.2)),
                (j(1.10, 0.25), 0.0, j(0.011, 0.2)),
                (j(-0.25, 0.3), 0.03, j(0.011, 0.2)),
                (j(0.30, 0.3), j(0.26, 0.1), j(0.045, 0.2)),
            ],
        }
    }

    fn for_class(&self, class: usize) -> Self {
        let mut m = *self;
        match class {
            1 => {
                m.waves[0].0 *= -0.6;
                m.waves[0].1 = -0.14;
            }
            2 => {
                m.waves[0].0 = 0.0;
                m.waves[1].0 *= 0.3;
                m.waves[2].0 *= 1.5;
                m.waves[2].2 *= 3.0;
                m.waves[3].0 *= 2.2;
                m.waves[3].1 = 0.07;
                m.waves[3].2 *= 3.0;
                m.waves[4].0 *= -1.6;
                m.waves[4].2 *= 1.3;
            }
            3 => {
                m.waves[0].0 *= 0.5;
                m.waves[2].0 *= 1.2;
                m.waves[2].2 *= 1.9;
                m.waves[3].0 *= 1.5;
                m.waves[3].1 = 0.05;
                m.waves[3].2 *= 1.9;
                m.waves[4].0 *= -0.3;
            }
            _ => {}
        }
        m
    }

    fn add_to(&self, x: &mut [f64], r: usize, fs: f64, lead_gain: f64) {
        for &(a, c, w) in &self.waves {
            if a == 0.0 {
                continue;
            }
            let center = r as f64 + c * fs;
            let half = (5.0 * w * fs).ceil() as isize;
            let lo = (center as isize - half).max(0) as usize;
            let hi = ((center as isize + half).max(0) as usize).min(x.len());
            for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
                let d = (i as f64 - center) / (w * fs);
                *v += lead_gain * a * (-0.5 * d * d).exp();
            }
        }
    }
}

const SYMBOLS: [char; 4] = ['N', 'A', 'V', 'F'];

/// Builds one record. The same `(record, cfg)` always gives the same bytes.
pub fn synth_record(record: u32, cfg: &SynthConfig) -> SynthRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (u64::from(record) << 20) ^ 0x5EED);
    let fs = cfg.fs;
    let n = (cfg.duration_s * fs).round() as usize;
    let base = Morphology::patient(&mut rng);
    let shapes: Vec<Morphology> = (0..4).map(|c| base.for_class(c)).collect();
    let rr = 60.0 / cfg.heart_rate_bpm * rng.gen_range(0.9..1.1);
    let mix_total: f64 = cfg.class_mix.iter().sum();

    let mut beats: Vec<(usize, usize)> = Vec::new();
    let mut t = 0.6 + rng.gen_range(0.0..0.3);
    let mut compensate = 0.0;
    while t < cfg.duration_s - 1.0 {
        let mut u = rng.gen_range(0.0..mix_total);
        let mut class = 0;
        for (c, &w) in cfg.class_mix.iter().enumerate() {
            if u < w {
                class = c;
                break;
            }
            u -= w;
        }
        if !beats.is_empty() && class != 0 && compensate > 0.0 {
            // no two ectopics in a row
            class = 0;
        }
        let interval = match class {
            0 => rr * rng.gen_range(0.95..1.05) + compensate,
            1 => rr * rng.gen_range(0.65..0.75),
            2 => rr * rng.gen_range(0.60..0.72),
            _ => rr * rng.gen_range(0.90..0.98),
        };
        compensate = if class == 0 { 0.0 } else { rr - interval };
        if !beats.is_empty() {
            t += interval;
        }
        if t >= cfg.duration_s - 1.0 {
            break;
        }
        beats.push(((t * fs).round() as usize, class));
    }

    let wander = rng.gen_range(0.15..0.35);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, cfg.noise_mv.max(1e-12)).expect("finite");
    let mut leads = [vec![0.0; n], vec![0.0; n]];
    for (lead, gain) in [(0usize, 1.0), (1, -0.45)] {
        for &(r, class) in &beats {
            shapes[class].add_to(&mut leads[lead], r, fs, gain);
        }
        for (i, v) in leads[lead].iter_mut().enumerate() {
            let s = i as f64 / fs;
            *v += cfg.baseline_mv * (std::f64::consts::TAU * wander * s + phase).sin();
            if cfg.noise_mv > 0.0 {
                *v += noise.sample(&mut rng);
            }
        }
    }
    let adc: Vec<Vec<i32>> = leads
        .iter()
        .map(|l| {
            l.iter()
                .map(|&v| ((v * GAIN).round() as i32 + ZERO).clamp(-2048, 2047))
                .collect()
        })
        .collect();
    let dat = encode_212(&adc);

    let name = format!("{record}");
    let mut header = format!("{name} 2 {} {n}\n", fs);
    for (i, lead) in ["MLII", "V5"].iter().enumerate() {
        let checksum = adc[i].iter().fold(0i32, |a, &v| a.wrapping_add(v)) as i16;
        header.push_str(&format!(
            "{name}.dat 212 {GAIN} 11 {ZERO} {} {checksum} 0 {lead}\n",
            adc[i].first().copied().unwrap_or(0)
        ));
    }
    header.push_str("# synthetic record\n");

    let mut annotations = vec![(((0.05 * fs) as u64), '+')];
    annotations.extend(beats.iter().map(|&(r, c)| (r as u64, SYMBOLS[c])));
    let coded: Vec<(u64, u8)> = annotations
        .iter()
        .map(|&(s, sym)| (s, symbol_to_code(sym).expect("known symbol")))
        .collect();
    let mut aux = vec![None; coded.len()];
    aux[0] = Some(&b"(N"[..]);
    let atr = write_annotations(&coded, &aux);
    SynthRecord {
        name,
        header,
        dat,
        atr,
        annotations,
    }
}

impl SynthRecord {
    /// Writes `<name>.hea`, `<name>.dat` and `<name>.atr` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.hea", self.name)), &self.header)?;
        std::fs::write(dir.join(format!("{}.dat", self.name)), &self.dat)?;
        std::fs::write(dir.join(format!("{}.atr", self.name)), &self.atr)?;
        Ok(())
    }
}

/// Writes one synthetic record per number into `dir`.
pub fn write_corpus(dir: &Path, records: &[u32], cfg: &SynthConfig) -> io::Result<()> {
    for &r in records {
        synth_record(r, cfg).write_to(dir)?;
    }
    Ok(())
}
