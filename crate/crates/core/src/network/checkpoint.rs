//! Checkpoint container.
//!
//! Layout: the magic line `AEIDC-CHECKPOINT`, one line of JSON describing the
//! architecture, seed, format version and every parameter shape, then the
//! parameters as little-endian `f64` in declaration order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::Layer;
use super::sae::{AutoencoderSpec, StackedAutoencoder, SubAe};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &str = "AEIDC-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    unit: usize,
    part: String,
    layer: usize,
    index: usize,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    seed: u64,
    architecture: AutoencoderSpec,
    params: Vec<ParamEntry>,
    payload_bytes: usize,
}

fn entries<T: Scalar>(model: &StackedAutoencoder<T>) -> Vec<ParamEntry> {
    let mut out = Vec::new();
    for (u, unit) in model.units.iter().enumerate() {
        for (part, layers) in [("encoder", &unit.encoder), ("decoder", &unit.decoder)] {
            for (l, layer) in layers.iter().enumerate() {
                for (index, p) in layer.params.iter().enumerate() {
                    out.push(ParamEntry {
                        unit: u,
                        part: part.to_string(),
                        layer: l,
                        index,
                        shape: p.shape().to_vec(),
                    });
                }
            }
        }
    }
    out
}

pub fn write_checkpoint<T: Scalar, W: Write>(model: &StackedAutoencoder<T>, mut w: W) -> Result<()> {
    let header = Header {
        version: FORMAT_VERSION,
        seed: model.seed,
        architecture: model.spec.clone(),
        params: entries(model),
        payload_bytes: model.param_count() * 8,
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Validation(e.to_string()))?;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "{json}")?;
    let mut buf = Vec::with_capacity(header.payload_bytes);
    for p in model.params() {
        for &v in p.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(model: &StackedAutoencoder<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<StackedAutoencoder<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let fmt = |offset: usize, msg: String| Error::Format {
        offset: offset as u64,
        msg,
    };
    let line_end = |from: usize| bytes[from..].iter().position(|&b| b == b'\n').map(|p| from + p);
    let magic_end = line_end(0).ok_or_else(|| fmt(0, "missing checkpoint magic line".into()))?;
    if &bytes[..magic_end] != MAGIC.as_bytes() {
        return Err(fmt(0, "bad checkpoint magic".into()));
    }
    let json_start = magic_end + 1;
    let json_end = line_end(json_start).ok_or_else(|| fmt(json_start, "unterminated header".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[json_start..json_end]).map_err(|e| fmt(json_start, format!("header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(fmt(json_start, format!("unsupported format version {}", header.version)));
    }
    let payload_start = json_end + 1;
    let payload = &bytes[payload_start..];
    if payload.len() != header.payload_bytes {
        return Err(fmt(
            payload_start,
            format!("payload has {} bytes, header declares {}", payload.len(), header.payload_bytes),
        ));
    }
    header
        .architecture
        .validate()
        .map_err(|e| fmt(json_start, format!("architecture: {e}")))?;

    let mut expected = Vec::new();
    let mut cursor = 0usize;
    let mut units = Vec::with_capacity(header.architecture.units.len());
    let mut read_layers = |u: usize, part: &str, specs: &[super::layer::LayerSpec]| -> Result<Vec<Layer<T>>> {
        let mut layers = Vec::with_capacity(specs.len());
        for (l, &spec) in specs.iter().enumerate() {
            let mut params = Vec::new();
            for (index, shape) in spec.param_shapes().into_iter().enumerate() {
                let n: usize = shape.iter().product();
                let end = cursor + n * 8;
                if end > payload.len() {
                    return Err(fmt(payload_start + cursor, "payload truncated".into()));
                }
                let data = payload[cursor..end]
                    .chunks_exact(8)
                    .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
                    .collect();
                cursor = end;
                expected.push(ParamEntry {
                    unit: u,
                    part: part.to_string(),
                    layer: l,
                    index,
                    shape: shape.clone(),
                });
                params.push(Tensor::new(shape, data)?);
            }
            layers.push(Layer::with_params(spec, params)?);
        }
        Ok(layers)
    };
    for (u, unit) in header.architecture.units.iter().enumerate() {
        let encoder = read_layers(u, "encoder", &unit.encoder)?;
        let decoder = read_layers(u, "decoder", &unit.decoder)?;
        units.push(SubAe { encoder, decoder });
    }
    let shapes_match = expected.len() == header.params.len()
        && expected.iter().zip(&header.params).all(|(a, b)| {
            a.unit == b.unit && a.part == b.part && a.layer == b.layer && a.index == b.index && a.shape == b.shape
        });
    if !shapes_match || cursor != payload.len() {
        return Err(fmt(json_start, "parameter table disagrees with the architecture".into()));
    }
    Ok(StackedAutoencoder {
        spec: header.architecture,
        units,
        seed: header.seed,
    })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<StackedAutoencoder<T>> {
    read_checkpoint(std::fs::File::open(path)?)
}
