//! NPM weight file.
//!
//! ```text
//! magic   b"NPM\0"
//! version u32 = 1
//! b_max   u32
//! count   u32                      number of segments (6)
//! count x { rectify: u8, n: u32, sizes: n x u32 }
//! parameters: per segment, per layer, weights (row-major) then biases, f32
//! ```
//! All integers and floats are little-endian. Segment order is UCM 1, UCM 2,
//! DCM 1, DCM 2, action 1, action 2.

use std::io::Read;

use sha2::{Digest, Sha256};

use super::memory::{read_f32, read_u32};
use super::mlp::{DenseLayer, MlpSegment};
use super::model::{NpModel, Q_WIDTH};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NPM\0";
const VERSION: u32 = 1;
const SEGMENTS: usize = 6;

pub fn save_npm(model: &NpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + model.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.b_max as u32).to_le_bytes());
    out.extend_from_slice(&(SEGMENTS as u32).to_le_bytes());
    for seg in model.segments() {
        let sizes = seg.layer_sizes();
        out.push(seg.rectify_output() as u8);
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
    }
    for p in model.params() {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    out
}

pub fn load_npm(bytes: &[u8]) -> Result<NpModel> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::CorruptHeader("missing magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::CorruptHeader("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::CorruptHeader(format!("unsupported version {version}")));
    }
    let b_max = read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;
    if count != SEGMENTS {
        return Err(Error::CorruptHeader(format!("expected {SEGMENTS} segments, found {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(|_| Error::SizeMismatch("truncated segment header".into()))?;
        let n = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::CorruptHeader(format!("segment with {n} layer sizes")));
        }
        let sizes = (0..n).map(|_| read_u32(&mut r).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        shapes.push((flag[0] != 0, sizes));
    }
    let expected: usize = shapes.iter().map(|(_, s)| s.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>()).sum();
    if r.len() != expected * 4 {
        return Err(Error::SizeMismatch(format!("expected {} parameter bytes, found {}", expected * 4, r.len())));
    }
    let mut segments = Vec::with_capacity(count);
    for (rectify, sizes) in shapes {
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let weights = (0..inputs * outputs).map(|_| read_f32(&mut r).map(f64::from)).collect::<Result<_>>()?;
            let biases = (0..outputs).map(|_| read_f32(&mut r).map(f64::from)).collect::<Result<_>>()?;
            layers.push(DenseLayer { inputs, outputs, weights, biases });
        }
        segments.push(MlpSegment::from_layers(layers, rectify)?);
    }
    let mut it = segments.into_iter();
    let mut next = || it.next().expect("six segments parsed");
    let model = NpModel { b_max, ucm: [next(), next()], dcm: [next(), next()], action: [next(), next()] };
    validate_shapes(&model)?;
    Ok(model)
}

fn validate_shapes(m: &NpModel) -> Result<()> {
    let cm = m.cm_width();
    let check = |cond: bool, what: &str| if cond { Ok(()) } else { Err(Error::SizeMismatch(what.into())) };
    for i in 0..2 {
        check(m.ucm[i].input_width() == m.b_max + 1, "UCM input width")?;
        check(m.ucm[i].output_width() == cm, "UCM output width")?;
        check(m.dcm[i].input_width() == 2 * cm && m.dcm[i].output_width() == cm, "DCM widths")?;
        check(m.action[i].input_width() == cm && m.action[i].output_width() == Q_WIDTH, "action widths")?;
    }
    Ok(())
}

/// SHA-256 of the serialized model, hex encoded.
pub fn npm_hash(model: &NpModel) -> String {
    hex::encode(Sha256::digest(save_npm(model)))
}
