use serde::{Deserialize, Serialize};

use crate::dataset::{map_aami, AamiClass, BeatLabel};

/// One heartbeat cut out around its R peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    /// Samples in millivolts.
    pub samples: Vec<f64>,
    pub r_index: usize,
    pub annotation_symbol: char,
    pub aami_class: AamiClass,
    pub patient_id: u32,
    /// Position of the beat within the record's beat annotations.
    pub beat_index: usize,
    /// Absolute sample index of the R peak in the record.
    pub r_sample: usize,
    pub rr_prev: f64,
    pub rr_next: f64,
}

/// Cuts a window of `round(1.2 * mean(rr_prev, rr_next) * fs)` samples
/// centered on every interior beat.
///
/// The first and last beats have no two-sided RR and are dropped, as are beats
/// whose window would leave the record. Symbols that are not beats under the
/// AAMI map still act as RR neighbours but are not emitted.
pub fn segment_heartbeats(
    x: &[f64],
    r_indices: &[usize],
    symbols: &[char],
    fs: f64,
    patient_id: u32,
) -> Vec<Heartbeat> {
    assert_eq!(r_indices.len(), symbols.len(), "one symbol per R position");
    let mut out = Vec::new();
    if r_indices.len() < 3 {
        return out;
    }
    for i in 1..r_indices.len() - 1 {
        let r = r_indices[i];
        let (prev, next) = (r_indices[i - 1], r_indices[i + 1]);
        if prev >= r || r >= next {
            continue;
        }
        let BeatLabel::Beat(class) = map_aami(symbols[i]) else {
            continue;
        };
        let rr_prev = (r - prev) as f64 / fs;
        let rr_next = (next - r) as f64 / fs;
        let len = (1.2 * 0.5 * (rr_prev + rr_next) * fs).round() as usize;
        let half = len / 2;
        if half > r || r - half + len > x.len() || len == 0 {
            continue;
        }
        let start = r - half;
        out.push(Heartbeat {
            samples: x[start..start + len].to_vec(),
            r_index: half,
            annotation_symbol: symbols[i],
            aami_class: class,
            patient_id,
            beat_index: i,
            r_sample: r,
            rr_prev,
            rr_next,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FS: f64 = 360.0;

    #[test]
    fn uniform_rr_window_length() {
        let r: Vec<usize> = (1..=10).map(|k| k * 288).collect();
        let beats = segment_heartbeats(&vec![0.0; 4000], &r, &['N'; 10], FS, 100);
        assert_eq!(beats.len(), 8);
        assert!(beats.iter().all(|b| b.samples.len() == 346));
        assert!(beats.iter().all(|b| b.r_index == 173));
        assert!(beats.iter().all(|b| (b.rr_prev - 0.8).abs() < 1e-12));
    }

    #[test]
    fn three_beats_give_one() {
        let beats = segment_heartbeats(&vec![0.0; 2000], &[300, 600, 900], &['N', 'V', 'N'], FS, 1);
        assert_eq!(beats.len(), 1);
        assert_eq!(beats[0].aami_class, AamiClass::V);
        assert_eq!(beats[0].beat_index, 1);
        assert_eq!(beats[0].r_sample, 600);
    }

    #[test]
    fn boundary_windows_dropped() {
        // Middle beat at 100 with RR 1 s on each side would need 216 samples before it.
        let beats = segment_heartbeats(&vec![0.0; 1000], &[0, 100, 460], &['N'; 3], FS, 1);
        assert!(beats.is_empty());
    }

    #[test]
    fn non_beat_symbols_not_emitted() {
        let beats = segment_heartbeats(
            &vec![0.0; 3000],
            &[300, 600, 900, 1200],
            &['N', '+', 'N', 'N'],
            FS,
            1,
        );
        assert_eq!(beats.len(), 1);
        assert_eq!(beats[0].beat_index, 2);
    }

    proptest! {
        #[test]
        fn windows_stay_inside_and_match_length(
            gaps in prop::collection::vec(80usize..700, 2..30),
            start in 1usize..400,
            tail in 0usize..400,
        ) {
            let mut r = vec![start];
            for g in &gaps {
                r.push(r.last().unwrap() + g);
            }
            let n = r.last().unwrap() + tail + 1;
            let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let syms = vec!['N'; r.len()];
            for b in segment_heartbeats(&x, &r, &syms, FS, 7) {
                let expect = (1.2 * (b.rr_prev + b.rr_next) / 2.0 * FS).round() as usize;
                prop_assert_eq!(b.samples.len(), expect);
                prop_assert!(b.r_index < b.samples.len());
                prop_assert_eq!(b.samples[b.r_index], b.r_sample as f64);
                prop_assert!(b.r_sample - b.r_index + b.samples.len() <= n);
            }
        }
    }
}
