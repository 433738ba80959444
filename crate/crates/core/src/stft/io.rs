//! Binary PGM export and the `SPG1` float raster cache.

use std::io::{Read, Write};

use super::{SpectrogramImage, StftError};

pub const SPG_MAGIC: &[u8; 4] = b"SPG1";

/// Writes a binary (P5) PGM with maxval 255. Frequency bin 0 is the bottom row.
pub fn write_pgm<W: Write>(img: &SpectrogramImage, mut out: W) -> Result<(), StftError> {
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    let mut buf = Vec::with_capacity(img.width * img.height);
    for r in (0..img.height).rev() {
        for c in 0..img.width {
            buf.push((img.get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a P5 PGM written by [`write_pgm`] back into image orientation.
pub fn read_pgm<R: Read>(mut input: R) -> Result<SpectrogramImage, StftError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(StftError::BadCache("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(StftError::BadCache("not an 8-bit P5 PGM".into()));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| StftError::BadCache("bad dims".into()))
    };
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let raster = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| StftError::BadCache("truncated PGM raster".into()))?;
    let mut img = SpectrogramImage::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            img.pixels[(h - 1 - r) * w + c] = raster[r * w + c] as f64 / 255.0;
        }
    }
    Ok(img)
}

/// 16-byte header (`SPG1`, u32 height, u32 width, u32 reserved) followed by
/// little-endian `f32` pixels in row-major order.
pub fn write_spg<W: Write>(img: &SpectrogramImage, mut out: W) -> Result<(), StftError> {
    let mut buf = Vec::with_capacity(16 + 4 * img.pixels.len());
    buf.extend_from_slice(SPG_MAGIC);
    buf.extend_from_slice(&(img.height as u32).to_le_bytes());
    buf.extend_from_slice(&(img.width as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for &p in &img.pixels {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_spg<R: Read>(mut input: R) -> Result<SpectrogramImage, StftError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != SPG_MAGIC {
        return Err(StftError::BadCache("missing SPG1 magic".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w) = (u32_at(4), u32_at(8));
    let body = &bytes[16..];
    if body.len() != 4 * h * w {
        return Err(StftError::BadCache(format!(
            "expected {} pixel bytes for {h}x{w}, found {}",
            4 * h * w,
            body.len()
        )));
    }
    let mut img = SpectrogramImage::zeros(h, w);
    for (p, chunk) in img.pixels.iter_mut().zip(body.chunks_exact(4)) {
        *p = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient() -> SpectrogramImage {
        let mut img = SpectrogramImage::zeros(4, 3);
        for (i, p) in img.pixels.iter_mut().enumerate() {
            *p = i as f64 / 11.0;
        }
        img
    }

    #[test]
    fn pgm_layout() {
        let img = gradient();
        let mut buf = Vec::new();
        write_pgm(&img, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n3 4\n255\n"));
        let raster = &buf[buf.len() - 12..];
        // Top row of the file is the highest frequency row of the image.
        assert_eq!(raster[0], (9.0f64 / 11.0 * 255.0).round() as u8);
        assert_eq!(raster[9], 0);
        let back = read_pgm(&buf[..]).unwrap();
        for (a, b) in back.pixels.iter().zip(&img.pixels) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn spg_header_and_round_trip() {
        let img = gradient().quantized();
        let mut buf = Vec::new();
        write_spg(&img, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SPG1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 16 + 4 * 12);
        assert_eq!(read_spg(&buf[..]).unwrap().pixels, img.pixels);
    }

    #[test]
    fn spg_rejects_garbage() {
        assert!(read_spg(&b"SPG0aaaaaaaaaaaa"[..]).is_err());
        let mut buf = Vec::new();
        write_spg(&gradient(), &mut buf).unwrap();
        buf.pop();
        assert!(read_spg(&buf[..]).is_err());
    }
}
