use serde::{Deserialize, Serialize};

use super::Spectrum;

pub const IMAGE_SIZE: usize = 224;

/// Grayscale image with pixels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
    pub db_floor: f64,
    pub db_ceiling: f64,
    /// Set when the source spectrum had no energy at all.
    pub degenerate: bool,
}

impl SpectrogramImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        SpectrogramImage {
            height,
            width,
            pixels: vec![0.0; height * width],
            db_floor: 0.0,
            db_ceiling: 0.0,
            degenerate: false,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Rounds every pixel through `f32`, the precision of the on-disk cache.
    pub fn quantized(mut self) -> Self {
        for p in &mut self.pixels {
            *p = *p as f32 as f64;
        }
        self
    }
}

/// Bilinear resampling with pixel-center alignment; edges are clamped.
pub fn resize_bilinear(
    src: &[f64],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    let axis = |dst: usize, src_n: usize| -> Vec<(usize, usize, f64)> {
        let scale = src_n as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_n - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(src_n - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let rows = axis(dst_h, src_h);
    let cols = axis(dst_w, src_w);
    let mut out = Vec::with_capacity(dst_h * dst_w);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let top = src[r0 * src_w + c0] * (1.0 - fc) + src[r0 * src_w + c1] * fc;
            let bot = src[r1 * src_w + c0] * (1.0 - fc) + src[r1 * src_w + c1] * fc;
            out.push(top * (1.0 - fr) + bot * fr);
        }
    }
    out
}

/// Magnitude in dB relative to the spectrum maximum, clipped at `db_floor`,
/// mapped affinely onto `[0, 1]` and resampled to 224x224 (frequency rows,
/// time columns).
pub fn to_image(spec: &Spectrum, db_floor: f64) -> SpectrogramImage {
    let max = spec.data.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if max == 0.0 || !max.is_finite() {
        return SpectrogramImage {
            degenerate: true,
            db_floor,
            ..SpectrogramImage::zeros(IMAGE_SIZE, IMAGE_SIZE)
        };
    }
    // Transpose to bins x frames while scaling.
    let (h, w) = (spec.n_bins, spec.n_frames);
    let mut scaled = vec![0.0; h * w];
    for t in 0..w {
        for (k, c) in spec.frame(t).iter().enumerate() {
            let mag = c.norm();
            let db = if mag > 0.0 {
                20.0 * (mag / max).log10()
            } else {
                db_floor
            };
            let db = db.clamp(db_floor, 0.0);
            scaled[k * w + t] = (db - db_floor) / -db_floor;
        }
    }
    let mut pixels = resize_bilinear(&scaled, h, w, IMAGE_SIZE, IMAGE_SIZE);
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    SpectrogramImage {
        height: IMAGE_SIZE,
        width: IMAGE_SIZE,
        pixels,
        db_floor,
        db_ceiling: 0.0,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn spectrum(frames: usize, bins: usize, f: impl Fn(usize, usize) -> f64) -> Spectrum {
        let mut data = Vec::new();
        for t in 0..frames {
            for k in 0..bins {
                data.push(Complex64::new(f(t, k), 0.0));
            }
        }
        Spectrum {
            n_frames: frames,
            n_bins: bins,
            data,
        }
    }

    #[test]
    fn zero_spectrum_is_degenerate() {
        let img = to_image(&spectrum(10, 257, |_, _| 0.0), -80.0);
        assert!(img.degenerate);
        assert_eq!((img.height, img.width), (224, 224));
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn constant_magnitude_is_white() {
        let img = to_image(&spectrum(129, 257, |_, _| 3.0), -80.0);
        assert!(!img.degenerate);
        assert!(img.pixels.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn shape_and_range() {
        let img = to_image(
            &spectrum(7, 300, |t, k| ((t * 31 + k * 7) % 97) as f64),
            -80.0,
        );
        assert_eq!(img.pixels.len(), 224 * 224);
        assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn resize_identity_and_constant() {
        let src: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(resize_bilinear(&src, 3, 4, 3, 4), src);
        let c = resize_bilinear(&[0.25; 6], 2, 3, 224, 224);
        assert!(c.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn floor_clips_to_zero() {
        // 1e-6 relative magnitude = -120 dB, below the floor.
        let img = to_image(
            &spectrum(224, 224, |t, _| if t == 0 { 1.0 } else { 1e-6 }),
            -80.0,
        );
        assert_eq!(img.get(0, 100), 0.0);
        assert_eq!(img.get(0, 0), 1.0);
    }
}
