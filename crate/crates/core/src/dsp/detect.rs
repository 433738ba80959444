use std::collections::VecDeque;

use super::{centered_mean, design_cheby1_bandpass, odd_window_len};

/// Knobs of the Shannon-energy R-peak detector.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub band_order: usize,
    pub ripple_db: f64,
    pub smoothing_s: f64,
    /// Fraction of the rolling envelope maximum a peak must reach.
    pub threshold_ratio: f64,
    pub threshold_window_s: f64,
    pub refractory_s: f64,
    /// Half-width of the search for the true R sample around an envelope peak.
    pub refine_s: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            band_low_hz: 6.0,
            band_high_hz: 18.0,
            band_order: 4,
            ripple_db: 1.0,
            smoothing_s: 0.15,
            threshold_ratio: 0.3,
            threshold_window_s: 2.0,
            refractory_s: 0.2,
            refine_s: 0.05,
        }
    }
}

/// `-x^2 ln(x^2)` of the input scaled to unit peak magnitude (0 ln 0 = 0).
pub fn shannon_energy(x: &[f64]) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return vec![0.0; x.len()];
    }
    x.iter()
        .map(|v| {
            let s = (v / peak) * (v / peak);
            if s == 0.0 {
                0.0
            } else {
                // Clamp the tiny negative values rounding can produce at s == 1.
                (-s * s.ln()).max(0.0)
            }
        })
        .collect()
}

/// Maximum over a centered window of `window` samples (shrinking at the edges).
fn rolling_max(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let half = window / 2;
    let mut out = Vec::with_capacity(n);
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..n {
        let hi = (i + half).min(n - 1);
        while next <= hi {
            while dq.back().is_some_and(|&j| x[j] <= x[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(half);
        while dq.front().is_some_and(|&j| j < lo) {
            dq.pop_front();
        }
        out.push(x[*dq.front().expect("window never empty")]);
    }
    out
}

/// Keeps peaks at least `min_gap` apart; inside a conflict the larger score wins.
fn enforce_refractory(peaks: &[usize], score: &[f64], min_gap: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::with_capacity(peaks.len());
    for &p in peaks {
        match kept.last() {
            Some(&last) if p <= last => {}
            Some(&last) if p - last < min_gap => {
                // `last` already clears its predecessor, so `p > last` does too.
                if score[p] > score[last] {
                    kept.pop();
                    kept.push(p);
                }
            }
            _ => kept.push(p),
        }
    }
    kept
}

/// R-peak detection with the default detector settings.
pub fn detect_r_peaks(x: &[f64], fs: f64) -> Vec<usize> {
    detect_r_peaks_with(x, fs, &DetectorConfig::default())
}

/// Band-pass, Shannon energy envelope, adaptive-threshold peak picking and
/// refinement to the largest band-passed sample nearby.
///
/// Returned indices are strictly increasing and at least the refractory period
/// apart.
pub fn detect_r_peaks_with(x: &[f64], fs: f64, cfg: &DetectorConfig) -> Vec<usize> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let Ok(bp) = design_cheby1_bandpass(
        cfg.band_order,
        cfg.ripple_db,
        cfg.band_low_hz,
        cfg.band_high_hz,
        fs,
    ) else {
        return Vec::new();
    };
    let filtered = bp.filtfilt(x);
    let energy = shannon_energy(&filtered);
    let envelope = centered_mean(&energy, odd_window_len(cfg.smoothing_s, fs));
    let ceiling = rolling_max(&envelope, odd_window_len(cfg.threshold_window_s, fs));
    let global_max = envelope.iter().fold(0.0f64, |m, &v| m.max(v));
    if global_max <= 0.0 {
        return Vec::new();
    }
    // Rounding noise on a flat input should never register as a beat.
    let floor = global_max * 1e-6;

    let candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| {
            let e = envelope[i];
            e > floor
                && e >= cfg.threshold_ratio * ceiling[i]
                && e > envelope[i - 1]
                && e >= envelope[i + 1]
        })
        .collect();

    let min_gap = ((cfg.refractory_s * fs).round() as usize).max(1);
    let peaks = enforce_refractory(&candidates, &envelope, min_gap);

    let reach = (cfg.refine_s * fs).round() as usize;
    let magnitude: Vec<f64> = filtered.iter().map(|v| v.abs()).collect();
    let mut refined: Vec<usize> = peaks
        .iter()
        .map(|&p| {
            let lo = p.saturating_sub(reach);
            let hi = (p + reach).min(n - 1);
            (lo..=hi)
                .max_by(|&a, &b| magnitude[a].total_cmp(&magnitude[b]).then(b.cmp(&a)))
                .unwrap_or(p)
        })
        .collect();
    refined.dedup();
    enforce_refractory(&refined, &magnitude, min_gap)
}
