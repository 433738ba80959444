use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SpectrogramImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugmentOp {
    Rotate { degrees: f64 },
    FlipH,
    FlipV,
    GaussNoise { sigma: f64 },
}

/// An augmentation together with the seed that makes it reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    #[serde(flatten)]
    pub op: AugmentOp,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub noise_sigma: f64,
    pub allow_flip_h: bool,
    pub allow_flip_v: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_rotation_deg: 10.0,
            noise_sigma: 0.02,
            allow_flip_h: true,
            allow_flip_v: true,
        }
    }
}

/// Draws an operation uniformly among the enabled kinds.
pub fn random_augmentation<R: Rng>(rng: &mut R, cfg: &AugmentConfig) -> Augmentation {
    let mut kinds = vec![0u8, 3];
    if cfg.allow_flip_h {
        kinds.push(1);
    }
    if cfg.allow_flip_v {
        kinds.push(2);
    }
    kinds.sort_unstable();
    let kind = kinds[rng.gen_range(0..kinds.len())];
    let op = match kind {
        0 => AugmentOp::Rotate {
            degrees: rng.gen_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg),
        },
        1 => AugmentOp::FlipH,
        2 => AugmentOp::FlipV,
        _ => AugmentOp::GaussNoise {
            sigma: cfg.noise_sigma,
        },
    };
    Augmentation {
        op,
        seed: rng.gen(),
    }
}

/// Applies one augmentation. Shape is preserved and every output pixel lies in
/// `[0, 1]`.
pub fn augment(img: &SpectrogramImage, op: AugmentOp, seed: u64) -> SpectrogramImage {
    let (h, w) = (img.height, img.width);
    let mut out = img.clone();
    match op {
        AugmentOp::FlipH => {
            for r in 0..h {
                out.pixels[r * w..(r + 1) * w].reverse();
            }
        }
        AugmentOp::FlipV => {
            for r in 0..h {
                let src = (h - 1 - r) * w;
                out.pixels[r * w..(r + 1) * w].copy_from_slice(&img.pixels[src..src + w]);
            }
        }
        AugmentOp::Rotate { degrees } => {
            let (sin, cos) = degrees.to_radians().sin_cos();
            let cy = (h as f64 - 1.0) / 2.0;
            let cx = (w as f64 - 1.0) / 2.0;
            for r in 0..h {
                for c in 0..w {
                    // Inverse mapping: where does this output pixel come from.
                    let dy = r as f64 - cy;
                    let dx = c as f64 - cx;
                    let sy = cos * dy - sin * dx + cy;
                    let sx = sin * dy + cos * dx + cx;
                    out.pixels[r * w + c] = sample_bilinear(img, sy, sx).clamp(0.0, 1.0);
                }
            }
        }
        AugmentOp::GaussNoise { sigma } => {
            if sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, sigma).expect("finite sigma");
                for p in &mut out.pixels {
                    *p = (*p + normal.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
        }
    }
    out
}

/// Bilinear lookup with zero outside the image.
fn sample_bilinear(img: &SpectrogramImage, y: f64, x: f64) -> f64 {
    let px = |r: i64, c: i64| -> f64 {
        if r < 0 || c < 0 || r >= img.height as i64 || c >= img.width as i64 {
            0.0
        } else {
            img.get(r as usize, c as usize)
        }
    };
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (r, c) = (y0 as i64, x0 as i64);
    let top = px(r, c) * (1.0 - fx) + px(r, c + 1) * fx;
    let bot = px(r + 1, c) * (1.0 - fx) + px(r + 1, c + 1) * fx;
    top * (1.0 - fy) + bot * fy
}
