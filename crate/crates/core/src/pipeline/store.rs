//! On-disk forms of segmented beats and the spectrogram-backed image source.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::dataset::AamiClass;
use crate::dsp::Heartbeat;
use crate::model::{ImageSource, ModelError};
use crate::stft::{augment, read_spg, Augmentation};

const BEATS_MAGIC: &[u8; 4] = b"BTS1";

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Beats of one record. Samples are stored as `f32`.
pub fn write_beats<W: Write>(beats: &[Heartbeat], mut out: W) -> io::Result<()> {
    out.write_all(BEATS_MAGIC)?;
    out.write_all(&(beats.len() as u32).to_le_bytes())?;
    for b in beats {
        for v in [
            b.patient_id,
            b.beat_index as u32,
            b.r_sample as u32,
            b.r_index as u32,
            u32::from(b.annotation_symbol),
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&[b.aami_class.index() as u8])?;
        out.write_all(&b.rr_prev.to_le_bytes())?;
        out.write_all(&b.rr_next.to_le_bytes())?;
        out.write_all(&(b.samples.len() as u32).to_le_bytes())?;
        for &s in &b.samples {
            out.write_all(&(s as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_beats<R: Read>(mut input: R) -> io::Result<Vec<Heartbeat>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < 8 || &buf[..4] != BEATS_MAGIC {
        return Err(bad("not a beat file"));
    }
    let mut pos = 4;
    let mut take = |n: usize| -> io::Result<&[u8]> {
        let s = buf
            .get(pos..pos + n)
            .ok_or_else(|| bad("beat file truncated"))?;
        pos += n;
        Ok(s)
    };
    let u32_of = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let f64_of = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
    let count = u32_of(take(4)?) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let patient_id = u32_of(take(4)?);
        let beat_index = u32_of(take(4)?) as usize;
        let r_sample = u32_of(take(4)?) as usize;
        let r_index = u32_of(take(4)?) as usize;
        let symbol = char::from_u32(u32_of(take(4)?)).ok_or_else(|| bad("bad symbol"))?;
        let class = AamiClass::from_index(take(1)?[0] as usize).ok_or_else(|| bad("bad class"))?;
        let rr_prev = f64_of(take(8)?);
        let rr_next = f64_of(take(8)?);
        let n = u32_of(take(4)?) as usize;
        let raw = take(n * 4)?;
        let samples = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        out.push(Heartbeat {
            samples,
            r_index,
            annotation_symbol: symbol,
            aami_class: class,
            patient_id,
            beat_index,
            r_sample,
            rr_prev,
            rr_next,
        });
    }
    Ok(out)
}

pub fn spectrogram_file(record: u32, beat_index: usize) -> String {
    format!("{record}_{beat_index}.spg")
}

/// Images read from cached SPG files, augmented on load when the sample
/// carries a recipe.
#[derive(Debug, Clone)]
pub struct SpgSource {
    dir: PathBuf,
    items: Vec<(String, usize, Option<Augmentation>)>,
    size: (usize, usize),
}

impl SpgSource {
    pub fn new(
        dir: &Path,
        items: Vec<(String, usize, Option<Augmentation>)>,
        size: (usize, usize),
    ) -> Self {
        SpgSource {
            dir: dir.to_path_buf(),
            items,
            size,
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.1).collect()
    }
}

impl ImageSource for SpgSource {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn image_size(&self) -> (usize, usize) {
        self.size
    }

    fn label(&self, i: usize) -> usize {
        self.items[i].1
    }

    fn load_into(&self, i: usize, out: &mut [f64]) -> Result<(), ModelError> {
        let (file, _, aug) = &self.items[i];
        let path = self.dir.join(file);
        let f = std::fs::File::open(&path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        let mut img = read_spg(io::BufReader::new(f))
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        if let Some(a) = aug {
            img = augment(&img, a.op, a.seed);
        }
        if (img.height, img.width) != self.size {
            return Err(ModelError::ShapeMismatch(format!(
                "{} is {}x{}, expected {}x{}",
                path.display(),
                img.height,
                img.width,
                self.size.0,
                self.size.1
            )));
        }
        out.copy_from_slice(&img.pixels);
        Ok(())
    }
}
