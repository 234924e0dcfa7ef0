//! Binary weight file.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! "TPW1"  u32 version
//! config: u64 vocab_size, embed_dim, layer_sizes[3], num_classes, max_len,
//!         seed, batch_size, epochs; f64 dropout_rate, lr, beta1, beta2, epsilon
//! u64 epoch
//! u32 tensor count, then per tensor: u64 length, f64 values
//!     (order as ModelParams::tensors)
//! adam: u64 t, then m tensors and v tensors in the same framing
//! rng:  32-byte seed, u64 stream, u128 word position
//! 32-byte SHA-256 of everything above
//! ```

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use super::{build_model, ModelConfig, ModelError, ModelState};
use crate::tensor::AdamConfig;

pub const MAGIC: &[u8; 4] = b"TPW1";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

pub fn save_model(model: &ModelState, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelState, ModelError> {
    decode(&std::fs::read(path)?)
}

pub(crate) fn encode(model: &ModelState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let c = &model.config;
    let ints = [
        c.vocab_size,
        c.embed_dim,
        c.layer_sizes[0],
        c.layer_sizes[1],
        c.layer_sizes[2],
        c.num_classes,
        c.max_len,
    ];
    for v in ints {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(c.batch_size as u64).to_le_bytes());
    out.extend_from_slice(&(c.epochs as u64).to_le_bytes());
    for v in [c.dropout_rate, c.adam.lr, c.adam.beta1, c.adam.beta2, c.adam.epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.epoch.to_le_bytes());

    let tensors = model.params.tensors();
    write_tensors(&mut out, &tensors);
    out.extend_from_slice(&model.adam.t.to_le_bytes());
    write_tensors(&mut out, &model.adam.m.iter().map(Vec::as_slice).collect::<Vec<_>>());
    write_tensors(&mut out, &model.adam.v.iter().map(Vec::as_slice).collect::<Vec<_>>());

    out.extend_from_slice(&model.rng.get_seed());
    out.extend_from_slice(&model.rng.get_stream().to_le_bytes());
    out.extend_from_slice(&model.rng.get_word_pos().to_le_bytes());

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn write_tensors(out: &mut Vec<u8>, tensors: &[&[f64]]) {
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in *t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<ModelState, ModelError> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 8 + CHECKSUM_LEN {
        return Err(ModelError::ChecksumMismatch);
    }
    let (body, digest) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(ModelError::ChecksumMismatch);
    }

    let mut r = Reader { buf: body, pos: 8 };
    let mut ints = [0usize; 7];
    for v in &mut ints {
        *v = r.usize()?;
    }
    let seed = r.u64()?;
    let batch_size = r.usize()?;
    let epochs = r.usize()?;
    let mut reals = [0.0f64; 5];
    for v in &mut reals {
        *v = r.f64()?;
    }
    let config = ModelConfig {
        vocab_size: ints[0],
        embed_dim: ints[1],
        layer_sizes: [ints[2], ints[3], ints[4]],
        num_classes: ints[5],
        max_len: ints[6],
        seed,
        batch_size,
        epochs,
        dropout_rate: reals[0],
        adam: AdamConfig {
            lr: reals[1],
            beta1: reals[2],
            beta2: reals[3],
            epsilon: reals[4],
        },
    };
    let mut model = build_model(config).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    model.epoch = r.u64()?;

    let shapes: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
    let params = r.tensors(&shapes)?;
    for (dst, src) in model.params.tensors_mut().into_iter().zip(&params) {
        dst.copy_from_slice(src);
    }
    model.adam.t = r.u64()?;
    model.adam.m = r.tensors(&shapes)?;
    model.adam.v = r.tensors(&shapes)?;

    let mut rng_seed = [0u8; 32];
    rng_seed.copy_from_slice(r.take(32)?);
    let stream = r.u64()?;
    let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
    let mut rng = ChaCha8Rng::from_seed(rng_seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    model.rng = rng;

    if r.pos != body.len() {
        return Err(ModelError::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(model)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::Corrupt(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize, ModelError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| ModelError::Corrupt(format!("size {v} too large")))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensors(&mut self, shapes: &[usize]) -> Result<Vec<Vec<f64>>, ModelError> {
        let count = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        if count != shapes.len() {
            return Err(ModelError::Corrupt(format!("expected {} tensors, found {count}", shapes.len())));
        }
        shapes
            .iter()
            .enumerate()
            .map(|(i, &expected)| {
                let len = self.usize()?;
                if len != expected {
                    return Err(ModelError::Corrupt(format!("tensor {i} has {len} values, expected {expected}")));
                }
                (0..len).map(|_| self.f64()).collect()
            })
            .collect()
    }
}
