//! Model files, little-endian: magic `UCN0`, `u16` version, `u8` number of
//! layer sizes, that many `u32` sizes, then for each dense layer its
//! row-major `f32` weights followed by its `f32` biases.

use super::{Dense, ModelParams};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MODEL_MAGIC: &[u8; 4] = b"UCN0";
pub const MODEL_VERSION: u16 = 1;
const SIZES_OFFSET: u64 = 7;

pub fn write_model<W: Write>(params: &ModelParams<f32>, mut out: W) -> Result<()> {
    let arch = params.arch();
    let count = u8::try_from(arch.len())
        .map_err(|_| Error::Config(format!("{} layer sizes do not fit the header", arch.len())))?;
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&MODEL_VERSION.to_le_bytes())?;
    out.write_all(&[count])?;
    for &s in &arch {
        let s = u32::try_from(s).map_err(|_| Error::Config(format!("layer size {s} too large")))?;
        out.write_all(&s.to_le_bytes())?;
    }
    for layer in params.layers() {
        for v in layer.weights.iter().chain(&layer.biases) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Cursor<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Cursor<R> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format(self.pos, format!("truncated {what}")),
            _ => Error::Io(e),
        })?;
        self.pos += N as u64;
        Ok(buf)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        (0..n).map(|_| Ok(f32::from_le_bytes(self.take::<4>(what)?))).collect()
    }
}

pub fn read_model<R: Read>(input: R) -> Result<ModelParams<f32>> {
    let mut c = Cursor { inner: input, pos: 0 };
    if &c.take::<4>("magic")? != MODEL_MAGIC {
        return Err(Error::format(0, "bad magic, expected UCN0"));
    }
    let version = u16::from_le_bytes(c.take::<2>("version")?);
    if version != MODEL_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = c.take::<1>("layer count")?[0] as usize;
    if count < 2 {
        return Err(Error::format(6, format!("need at least 2 layer sizes, found {count}")));
    }
    let mut arch = Vec::with_capacity(count);
    for _ in 0..count {
        let at = c.pos;
        let s = u32::from_le_bytes(c.take::<4>("layer sizes")?) as usize;
        if s == 0 {
            return Err(Error::format(at, "zero layer size"));
        }
        arch.push(s);
    }
    let mut layers = Vec::with_capacity(count - 1);
    for (i, w) in arch.windows(2).enumerate() {
        let weights = c.f32s(w[0] * w[1], &format!("layer {i} weights"))?;
        let biases = c.f32s(w[1], &format!("layer {i} biases"))?;
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::format(c.pos, format!("non-finite value in layer {i}")));
        }
        layers.push(Dense {
            fan_in: w[0],
            fan_out: w[1],
            weights,
            biases,
        });
    }
    let mut trailing = [0u8; 1];
    if c.inner.read(&mut trailing)? != 0 {
        return Err(Error::format(c.pos, "trailing bytes after last layer"));
    }
    ModelParams::from_layers(layers)
}

pub fn save_model(path: &Path, params: &ModelParams<f32>) -> Result<()> {
    write_model(params, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: &Path) -> Result<ModelParams<f32>> {
    read_model(BufReader::new(File::open(path)?))
}

/// Loads a model and rejects it unless its layer sizes equal `arch`.
pub fn load_model_expecting(path: &Path, arch: &[usize]) -> Result<ModelParams<f32>> {
    let params = load_model(path)?;
    if params.arch() != arch {
        return Err(Error::format(
            SIZES_OFFSET,
            format!("shape mismatch: file has {:?}, expected {arch:?}", params.arch()),
        ));
    }
    Ok(params)
}
