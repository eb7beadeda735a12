//! IDX files: a 4-byte big-endian magic `0x00 0x00 <type> <ndims>`, one
//! big-endian `u32` per dimension, then the row-major payload.
//!
//! Datasets use unsigned bytes (`0x08`): labels are 1-D, images are 3-D
//! `(N, H, W)` (loaded as one channel) or 4-D `(N, C, H, W)`. Tensor files may
//! also use big-endian `f32` (`0x0D`) or `f64` (`0x0E`).

use std::io::Write;
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const TYPE_U8: u8 = 0x08;
const TYPE_F32: u8 = 0x0D;
const TYPE_F64: u8 = 0x0E;

fn format_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        msg: msg.into(),
    }
}

struct Parsed<'a> {
    dtype: u8,
    dims: Vec<usize>,
    payload: &'a [u8],
    payload_offset: usize,
}

fn parse(bytes: &[u8]) -> Result<Parsed<'_>> {
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "file shorter than the 4-byte magic"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(0, "magic must start with two zero bytes"));
    }
    let dtype = bytes[2];
    let width = match dtype {
        TYPE_U8 => 1,
        TYPE_F32 => 4,
        TYPE_F64 => 8,
        t => return Err(format_err(2, format!("unsupported element type 0x{t:02x}"))),
    };
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(format_err(3, "zero dimensions"));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(format_err(bytes.len(), "truncated dimension table"));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let need = dims.iter().product::<usize>() * width;
    let payload = &bytes[header..];
    if payload.len() < need {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: {} of {need} bytes present", payload.len()),
        ));
    }
    if payload.len() > need {
        return Err(format_err(header + need, "trailing bytes after payload"));
    }
    Ok(Parsed {
        dtype,
        dims,
        payload,
        payload_offset: header,
    })
}

fn values<T: Scalar>(p: &Parsed<'_>) -> Vec<T> {
    match p.dtype {
        TYPE_U8 => p.payload.iter().map(|&b| T::from_count(b as usize)).collect(),
        TYPE_F32 => p
            .payload
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_be_bytes(c.try_into().unwrap()) as f64))
            .collect(),
        _ => p
            .payload
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_be_bytes(c.try_into().unwrap())))
            .collect(),
    }
}

/// Reads any IDX file as a tensor of its declared shape (no rescaling).
pub fn read_idx_tensor<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path)?;
    let p = parse(&bytes)?;
    Tensor::new(p.dims.clone(), values(&p))
}

/// Loads an image file and its label file; pixels are scaled to `[0, 1]`.
pub fn load_idx<T: Scalar>(images: &Path, labels: &Path) -> Result<LabeledDataset<T>> {
    let img_bytes = std::fs::read(images)?;
    let lab_bytes = std::fs::read(labels)?;
    let img = parse(&img_bytes)?;
    let lab = parse(&lab_bytes)?;
    if img.dtype != TYPE_U8 || !(img.dims.len() == 3 || img.dims.len() == 4) {
        return Err(format_err(2, "images must be unsigned bytes with 3 or 4 dimensions"));
    }
    if lab.dtype != TYPE_U8 || lab.dims.len() != 1 {
        return Err(format_err(2, "labels must be a 1-D unsigned byte file"));
    }
    if img.dims[0] != lab.dims[0] {
        return Err(format_err(
            4,
            format!("{} images but {} labels", img.dims[0], lab.dims[0]),
        ));
    }
    let shape = match img.dims.as_slice() {
        &[n, h, w] => vec![n, 1, h, w],
        d => d.to_vec(),
    };
    let scale = T::one() / T::lit(255.0);
    let pixels = values::<T>(&img).into_iter().map(|v| v * scale).collect();
    let samples = Tensor::new(shape, pixels).map_err(|e| format_err(img.payload_offset, e.to_string()))?;
    LabeledDataset::new(samples, lab.payload.iter().map(|&b| b as usize).collect())
}

fn header(dtype: u8, dims: &[usize]) -> Result<Vec<u8>> {
    let mut out = vec![0, 0, dtype, dims.len() as u8];
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Validation(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    Ok(out)
}

/// Writes `[N, C, H, W]` samples in `[0, 1]` as bytes (`round(255·v)`); a
/// single channel is written as the classic 3-D layout.
pub fn write_idx_u8_images<T: Scalar>(path: &Path, samples: &Tensor<T>) -> Result<()> {
    let dims: Vec<usize> = match samples.shape() {
        &[n, 1, h, w] => vec![n, h, w],
        s => s.to_vec(),
    };
    let mut out = header(TYPE_U8, &dims)?;
    out.extend(samples.data().iter().map(|&v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = header(TYPE_U8, &[labels.len()])?;
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::Validation(format!("label {l} exceeds 255")))?);
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Writes a tensor losslessly as big-endian `f64`.
pub fn write_idx_tensor_f64<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let mut out = header(TYPE_F64, t.shape())?;
    for &v in t.data() {
        out.extend_from_slice(&v.as_f64().to_be_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}
