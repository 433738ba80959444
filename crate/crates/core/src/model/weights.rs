//! `CPW1` weight container.
//!
//! Layout: magic `CPW1`, u32 tensor count, then per tensor a u32 name length,
//! the name bytes, u32 rank, u32 dims and little-endian `f64` values. All
//! integers are little-endian.

use std::path::Path;

use super::{Model, ModelError, ModelSpec, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"CPW1";

pub fn write_weights(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * model.n_parameters());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, t) in model.names.iter().zip(&model.params) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_weights(model: &Model, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, write_weights(model))
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

pub fn load_weights(path: &Path, spec: &ModelSpec) -> Result<Model, ModelError> {
    let bytes =
        std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    read_weights(&bytes, spec)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

struct Entry {
    name: String,
    tensor: Tensor,
}

fn read_entry(cur: &mut Cursor<'_>) -> Option<Entry> {
    let len = cur.u32()? as usize;
    let name = String::from_utf8_lossy(cur.take(len)?).into_owned();
    let rank = cur.u32()? as usize;
    if rank > 8 {
        return None;
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(cur.u32()? as usize);
    }
    let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d))?;
    let raw = cur.take(count.checked_mul(8)?)?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some(Entry {
        name,
        tensor: Tensor { shape, data },
    })
}

/// Parses a container and checks it against `spec`.
///
/// A stem kernel stored with 3 input channels is accepted for a 1-channel
/// spec and collapsed by summing over the channel axis.
pub fn read_weights(bytes: &[u8], spec: &ModelSpec) -> Result<Model, ModelError> {
    if bytes.len() < 8 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let mut cur = Cursor { buf: bytes, pos: 4 };
    let count = cur.u32().ok_or(ModelError::BadMagic)? as usize;
    let expected = spec.param_shapes();
    let mut entries = Vec::new();
    for i in 0..count {
        let entry = read_entry(&mut cur).ok_or_else(|| {
            let want = expected.get(i).map_or("<extra>", |(n, _)| n.as_str());
            ModelError::ShapeMismatch(format!("entry {i} ({want}) is truncated or malformed"))
        })?;
        entries.push(entry);
    }
    if cur.pos != bytes.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} trailing bytes after {count} entries",
            bytes.len() - cur.pos
        )));
    }
    if count != expected.len() {
        let first_off = (0..count.max(expected.len()))
            .find(|&i| {
                entries.get(i).map(|e| e.name.as_str()) != expected.get(i).map(|(n, _)| n.as_str())
            })
            .unwrap_or(0);
        let offending = match (entries.get(first_off), expected.get(first_off)) {
            (_, Some((n, _))) => n.clone(),
            (Some(e), None) => e.name.clone(),
            (None, None) => String::new(),
        };
        return Err(ModelError::ShapeMismatch(format!(
            "file has {count} tensors, model expects {}; first mismatch at entry {first_off} ({offending})",
            expected.len()
        )));
    }
    let mut model = Model::new(spec.clone(), 0)?;
    for (i, (entry, (name, shape))) in entries.into_iter().zip(&expected).enumerate() {
        if &entry.name != name {
            return Err(ModelError::ShapeMismatch(format!(
                "entry {i}: found {}, expected {name}",
                entry.name
            )));
        }
        let tensor = if i == 0 && entry.tensor.shape != *shape && spec.in_channels == 1 {
            collapse_stem(entry.tensor, shape).ok_or_else(|| {
                ModelError::ShapeMismatch(format!("entry {i} ({name}): stem shape"))
            })?
        } else {
            entry.tensor
        };
        if tensor.shape != *shape {
            return Err(ModelError::ShapeMismatch(format!(
                "entry {i} ({name}): {:?} in file, {:?} expected",
                tensor.shape, shape
            )));
        }
        model.params[i] = tensor;
    }
    Ok(model)
}

fn collapse_stem(t: Tensor, want: &[usize]) -> Option<Tensor> {
    let [o, c, kh, kw] = t.shape[..] else {
        return None;
    };
    if [o, 1, kh, kw] != want[..] || c == 1 {
        return None;
    }
    let plane = kh * kw;
    let mut out = Tensor::zeros(want);
    for f in 0..o {
        for ch in 0..c {
            let src = &t.data[(f * c + ch) * plane..(f * c + ch + 1) * plane];
            for (d, s) in out.data[f * plane..(f + 1) * plane].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    Some(out)
}
