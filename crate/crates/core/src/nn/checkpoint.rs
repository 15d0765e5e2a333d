//! Parameter checkpoint files.
//!
//! Layout (little-endian): magic `UQNN`, version `u16`, then until end of
//! file one record per tensor: name length `u16`, UTF-8 name, rank `u8`,
//! `rank` dims as `u32`, and the values as `f32`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::{write_atomic, Reader};
use crate::nn::params::{param_shapes, LayerParams, ParamSet};
use crate::nn::spec::NetworkSpec;
use crate::real::Real;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"UQNN";
pub const VERSION: u16 = 1;

pub fn encode<F: Real>(net: &NetworkSpec, params: &ParamSet<F>) -> Result<Vec<u8>> {
    params.check(net)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in params.named(net) {
        let bytes = name.as_bytes();
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Raw named tensors in file order.
pub fn decode_entries(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected UQNN"));
    }
    let at = r.offset();
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let mut entries = Vec::new();
    while !r.is_empty() {
        let start = r.offset();
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format(start + 2, "tensor name is not UTF-8"))?
            .to_owned();
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let data_at = r.offset();
        let raw = r.take(n * 4, "tensor values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::format(data_at, e.to_string()))?;
        entries.push((name, t));
    }
    Ok(entries)
}

pub fn decode<F: Real>(net: &NetworkSpec, bytes: &[u8]) -> Result<ParamSet<F>> {
    let entries = decode_entries(bytes)?;
    let shapes = param_shapes(net)?;
    let expected: usize = shapes.iter().map(Vec::len).sum();
    if entries.len() != expected {
        return Err(Error::State(format!(
            "checkpoint has {} tensors, network needs {expected}",
            entries.len()
        )));
    }
    let mut it = entries.into_iter();
    let mut layers = Vec::with_capacity(shapes.len());
    for (i, (layer_shapes, spec)) in shapes.iter().zip(&net.layers).enumerate() {
        let mut tensors = Vec::new();
        for (s, name) in layer_shapes.iter().zip(crate::nn::params::param_names(spec)) {
            let (got_name, t) = it.next().expect("counted");
            let want = format!("{i}.{name}");
            if got_name != want || t.shape() != s.as_slice() {
                return Err(Error::State(format!(
                    "checkpoint entry {got_name} {:?} does not match {want} {s:?}",
                    t.shape()
                )));
            }
            tensors.push(t.cast());
        }
        layers.push(LayerParams { tensors });
    }
    let params = ParamSet { layers };
    params.check(net)?;
    Ok(params)
}

pub fn save<F: Real>(path: &Path, net: &NetworkSpec, params: &ParamSet<F>) -> Result<()> {
    write_atomic(path, &encode(net, params)?)
}

pub fn load<F: Real>(path: &Path, net: &NetworkSpec) -> Result<ParamSet<F>> {
    decode(net, &std::fs::read(path)?)
}
