//! Seeded augmentations of a spectrogram: the same seed gives the same image.

use ecg_stft::stft::{
    augment, random_augmentation, write_pgm, AugmentConfig, AugmentOp, SpectrogramImage,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut img = SpectrogramImage::zeros(224, 224);
    for r in 0..224 {
        for c in 0..224 {
            img.pixels[r * 224 + c] = if (r / 28 + c / 28) % 2 == 0 { 0.9 } else { 0.1 };
        }
    }
    let out = std::path::PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "augmented".into()),
    );
    std::fs::create_dir_all(&out)?;
    let ops = [
        ("rotate", AugmentOp::Rotate { degrees: 10.0 }),
        ("flip_h", AugmentOp::FlipH),
        ("flip_v", AugmentOp::FlipV),
        ("noise", AugmentOp::GaussNoise { sigma: 0.05 }),
    ];
    for (name, op) in ops {
        let a = augment(&img, op, 7);
        assert_eq!(a, augment(&img, op, 7));
        let mean = a.pixels.iter().sum::<f64>() / a.pixels.len() as f64;
        write_pgm(&a, std::fs::File::create(out.join(format!("{name}.pgm")))?)?;
        println!("{name:<7} mean {mean:.4}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..4 {
        println!(
            "{}",
            serde_json::to_string(&random_augmentation(&mut rng, &AugmentConfig::default()))?
        );
    }
    Ok(())
}
