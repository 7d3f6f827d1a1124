//! Binary model checkpoints.
//!
//! ```text
//! "TARTMDL" | u32 version | u32 len | config JSON (UTF-8) | u32 tensor count |
//!   per tensor: u32 name_len | name | u32 rank | rank x u32 dims | f64 payload
//! ```
//!
//! Everything is little-endian. The JSON document is
//! `{"encoder": EncoderConfig, "meta": <caller-defined value>}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EncoderConfig, PredictorModel};
use super::tensor::Tensor;
use super::NnetError;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"TARTMDL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    encoder: EncoderConfig,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn save_model(model: &PredictorModel, path: impl AsRef<Path>) -> Result<(), NnetError> {
    save_model_with_meta(model, &serde_json::Value::Null, path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PredictorModel, NnetError> {
    load_model_with_meta(path).map(|(m, _)| m)
}

pub fn save_model_with_meta(
    model: &PredictorModel,
    meta: &serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<(), NnetError> {
    fs::write(path, encode(model, meta)).map_err(NnetError::Io)
}

pub fn load_model_with_meta(path: impl AsRef<Path>) -> Result<(PredictorModel, serde_json::Value), NnetError> {
    let bytes = fs::read(path).map_err(NnetError::Io)?;
    decode(&bytes)
}

pub fn encode(model: &PredictorModel, meta: &serde_json::Value) -> Vec<u8> {
    let header = Header { encoder: model.config, meta: meta.clone() };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(64 + json.len() + model.parameter_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    push_u32(&mut out, json.len());
    out.extend_from_slice(&json);
    push_u32(&mut out, model.params.len());
    for (name, tensor) in model.parameter_names().iter().zip(&model.params) {
        push_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        push_u32(&mut out, tensor.shape().len());
        for &dim in tensor.shape() {
            push_u32(&mut out, dim);
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn push_u32(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&u32::try_from(n).expect("checkpoint field fits in u32").to_le_bytes());
}

pub fn decode(bytes: &[u8]) -> Result<(PredictorModel, serde_json::Value), NnetError> {
    let corrupt = |msg: &str| NnetError::CorruptFile(msg.to_string());
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnetError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let json_len = cur.u32()? as usize;
    let header: Header =
        serde_json::from_slice(cur.take(json_len)?).map_err(|e| NnetError::CorruptFile(e.to_string()))?;
    let count = cur.u32()? as usize;
    let expected_names = super::model::parameter_specs(&header.encoder);
    if count != expected_names.len() {
        return Err(corrupt("tensor count does not match config"));
    }
    let mut params = Vec::with_capacity(count);
    for (expected, _) in &expected_names {
        let name_len = cur.u32()? as usize;
        if cur.take(name_len)? != expected.as_bytes() {
            return Err(NnetError::CorruptFile(format!("expected tensor {expected}")));
        }
        let rank = cur.u32()? as usize;
        let shape = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| corrupt("size overflow"))?;
        let raw = cur.take(len.checked_mul(8).ok_or_else(|| corrupt("size overflow"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        params.push(Tensor::from_vec(&shape, data).expect("length matches shape"));
    }
    if cur.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    let model = PredictorModel::from_params(header.encoder, params)
        .map_err(|e| NnetError::CorruptFile(e.to_string()))?;
    if !model.is_finite() {
        return Err(corrupt("non-finite parameter"));
    }
    Ok((model, header.meta))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnetError::CorruptFile("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, NnetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::model::Pooling;

    fn model(pooling: Pooling) -> PredictorModel {
        let cfg = EncoderConfig { n_layer: 2, d_model: 8, n_heads: 2, d_ff: 6, input_width: 5, n_targets: 3, pooling, ..Default::default() };
        PredictorModel::new(cfg, 42).unwrap()
    }

    #[test]
    fn round_trip_with_meta() {
        for pooling in [Pooling::Mean, Pooling::Cls] {
            let m = model(pooling);
            let meta = serde_json::json!({"mode": "lap", "stats": [1.5, 2.0]});
            let (back, back_meta) = decode(&encode(&m, &meta)).unwrap();
            assert_eq!(back, m);
            assert_eq!(back_meta, meta);
        }
    }

    #[test]
    fn truncation_and_version() {
        let bytes = encode(&model(Pooling::Mean), &serde_json::Value::Null);
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(NnetError::CorruptFile(_))), "cut {cut}");
        }
        let mut v99 = bytes.clone();
        v99[7..11].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(decode(&v99), Err(NnetError::VersionMismatch { found: 99, expected: 1 })));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode(&extra), Err(NnetError::CorruptFile(_))));
    }
}
