//! `MHI1` model files.
//!
//! All integers and floats are little-endian. Layout:
//!
//! ```text
//! bytes      field
//! 4          magic "MHI1"
//! 8   u64    window_size
//! 8   u64    train_seed
//! 8   f64    dropout_p
//! 8   f64    normalizer mean
//! 8   f64    normalizer std
//! 1   u8     normalizer degenerate flag (0 | 1)
//! 1   u8     model kind, ASCII 'T' or 'C'
//! 8   f64    sensor weight
//! 4   u32    sensor id length L
//! L          sensor id, UTF-8
//! 8   f64    hi_upper_bound
//! 8   f64    burn_in_hi_mean
//! 8   f64    burn_in_hi_std
//! 4   u32    layer count (always 5)
//! per layer:
//!   1   u8   tag: 1 enc1, 2 enc2, 3 dec1, 4 dec2, 5 dense output
//!   4   u32  tensor count (3 for LSTM layers W, U, b; 2 for dense W, b)
//!   per tensor:
//!     1   u8       rank r
//!     8·r u64      dims
//!     8·Π dims f64 values, row-major
//! ```
//!
//! Files must end exactly after the last tensor.

use std::fs;
use std::path::Path;

use crate::component::{ComponentModel, ModelKind, Normalizer, SensorSpec};
use crate::error::{Error, Result};
use crate::nn::{DaeParams, LstmLayerParams, Tensor};

pub const MAGIC: &[u8; 4] = b"MHI1";

const TAG_ENC1: u8 = 1;
const TAG_ENC2: u8 = 2;
const TAG_DEC1: u8 = 3;
const TAG_DEC2: u8 = 4;
const TAG_DENSE: u8 = 5;

fn put_tensor(buf: &mut Vec<u8>, t: &Tensor) {
    buf.push(t.shape().len() as u8);
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_layer(buf: &mut Vec<u8>, tag: u8, tensors: &[&Tensor]) {
    buf.push(tag);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        put_tensor(buf, t);
    }
}

pub fn encode(model: &ComponentModel) -> Vec<u8> {
    let mut buf = Vec::with_capacity(4096);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(model.dae.window_size as u64).to_le_bytes());
    buf.extend_from_slice(&model.train_seed.to_le_bytes());
    buf.extend_from_slice(&model.dae.dropout_p.to_le_bytes());
    buf.extend_from_slice(&model.normalizer.mean.to_le_bytes());
    buf.extend_from_slice(&model.normalizer.std.to_le_bytes());
    buf.push(model.normalizer.degenerate as u8);
    buf.push(model.spec.model_kind.as_char() as u8);
    buf.extend_from_slice(&model.spec.weight.to_le_bytes());
    let id = model.spec.sensor_id.as_bytes();
    buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
    buf.extend_from_slice(id);
    buf.extend_from_slice(&model.hi_upper_bound.to_le_bytes());
    buf.extend_from_slice(&model.burn_in_hi_mean.to_le_bytes());
    buf.extend_from_slice(&model.burn_in_hi_std.to_le_bytes());

    buf.extend_from_slice(&5u32.to_le_bytes());
    let d = &model.dae;
    for (tag, layer) in [
        (TAG_ENC1, &d.enc1),
        (TAG_ENC2, &d.enc2),
        (TAG_DEC1, &d.dec1),
        (TAG_DEC2, &d.dec2),
    ] {
        put_layer(&mut buf, tag, &[&layer.w, &layer.u, &layer.b]);
    }
    put_layer(&mut buf, TAG_DENSE, &[&d.out_w, &d.out_b]);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated file: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u8()? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::Format(format!("tensor rank {rank} out of range")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u64()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| Error::Format(format!("tensor shape {shape:?} exceeds the remaining file")))?;
        let raw = self.take(len * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::from_vec(&shape, values).map_err(|e| Error::Format(e.to_string()))
    }

    fn layer(&mut self, expect_tag: u8, expect_tensors: u32) -> Result<Vec<Tensor>> {
        let tag = self.u8()?;
        if tag != expect_tag {
            return Err(Error::Format(format!("expected layer tag {expect_tag}, found {tag}")));
        }
        let count = self.u32()?;
        if count != expect_tensors {
            return Err(Error::Format(format!(
                "layer {tag} holds {count} tensors, expected {expect_tensors}"
            )));
        }
        (0..count).map(|_| self.tensor()).collect()
    }
}

fn lstm_from(tensors: Vec<Tensor>, name: &str) -> Result<LstmLayerParams> {
    let mut it = tensors.into_iter();
    let (w, u, b) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    let [input_dim, gates] = w.shape() else {
        return Err(Error::Format(format!("{name}: W must be rank 2")));
    };
    if gates % 4 != 0 {
        return Err(Error::Format(format!("{name}: gate width {gates} not divisible by 4")));
    }
    let layer = LstmLayerParams {
        units: gates / 4,
        input_dim: *input_dim,
        w,
        u,
        b,
    };
    layer
        .check_shapes()
        .map_err(|e| Error::Format(format!("{name}: {e}")))?;
    Ok(layer)
}

pub fn decode(bytes: &[u8]) -> Result<ComponentModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected \"MHI1\"".into()));
    }
    let window_size = r.u64()? as usize;
    let train_seed = r.u64()?;
    let dropout_p = r.f64()?;
    let mean = r.f64()?;
    let std = r.f64()?;
    let degenerate = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad degenerate flag {other}"))),
    };
    let model_kind = match r.u8()? {
        b'T' => ModelKind::T,
        b'C' => ModelKind::C,
        other => return Err(Error::Format(format!("unknown model kind byte {other:#x}"))),
    };
    let weight = r.f64()?;
    let id_len = r.u32()? as usize;
    let sensor_id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|_| Error::Format("sensor id is not UTF-8".into()))?
        .to_string();
    let hi_upper_bound = r.f64()?;
    let burn_in_hi_mean = r.f64()?;
    let burn_in_hi_std = r.f64()?;

    let layers = r.u32()?;
    if layers != 5 {
        return Err(Error::Format(format!("expected 5 layers, found {layers}")));
    }
    let enc1 = lstm_from(r.layer(TAG_ENC1, 3)?, "enc1")?;
    let enc2 = lstm_from(r.layer(TAG_ENC2, 3)?, "enc2")?;
    let dec1 = lstm_from(r.layer(TAG_DEC1, 3)?, "dec1")?;
    let dec2 = lstm_from(r.layer(TAG_DEC2, 3)?, "dec2")?;
    let mut dense = r.layer(TAG_DENSE, 2)?.into_iter();
    let (out_w, out_b) = (dense.next().unwrap(), dense.next().unwrap());
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let dae = DaeParams {
        window_size,
        dropout_p,
        enc1,
        enc2,
        dec1,
        dec2,
        out_w,
        out_b,
    };
    dae.validate()
        .map_err(|e| Error::Format(format!("shape mismatch: {e}")))?;
    Ok(ComponentModel {
        spec: SensorSpec {
            sensor_id,
            model_kind,
            weight,
        },
        dae,
        normalizer: Normalizer { mean, std, degenerate },
        hi_upper_bound,
        burn_in_hi_mean,
        burn_in_hi_std,
        train_seed,
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &ComponentModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ComponentModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads a model and checks it was trained for `window_size`.
pub fn load_model_for_window(path: impl AsRef<Path>, window_size: usize) -> Result<ComponentModel> {
    let m = load_model(path.as_ref())?;
    if m.dae.window_size != window_size {
        return Err(Error::Config(format!(
            "model file {} has window_size {}, configuration expects {}",
            path.as_ref().display(),
            m.dae.window_size,
            window_size
        )));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> ComponentModel {
        ComponentModel {
            spec: SensorSpec::new("T50", ModelKind::T).with_weight(0.6),
            dae: DaeParams::init(8, &mut ChaCha8Rng::seed_from_u64(17)),
            normalizer: Normalizer {
                mean: 1408.93,
                std: 9.0,
                degenerate: false,
            },
            hi_upper_bound: 1.25,
            burn_in_hi_mean: 0.4,
            burn_in_hi_std: 0.138,
            train_seed: 42,
        }
    }

    #[test]
    fn round_trip() {
        let m = sample();
        let bytes = encode(&m);
        assert_eq!(&bytes[..4], MAGIC);
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&sample());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn every_truncation_fails() {
        let bytes = encode(&sample());
        for cut in [0, 3, 4, 20, 60, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Format(_))), "cut at {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_architecture_rejected() {
        let mut m = sample();
        m.dae.enc1 = LstmLayerParams::zeros(1, 6);
        assert!(matches!(decode(&encode(&m)), Err(Error::Format(_))));
    }

    #[test]
    fn window_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mhi");
        save_model(&path, &sample()).unwrap();
        assert!(load_model_for_window(&path, 8).is_ok());
        let err = load_model_for_window(&path, 1024).unwrap_err();
        assert!(err.to_string().contains("window_size 8"), "{err}");
    }
}
