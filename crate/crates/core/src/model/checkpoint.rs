//! Binary checkpoint format (all integers and floats little-endian):
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 4 | magic `FLCK` |
//! | 4  | 4 | format version (u32, currently 1) |
//! | 8  | 4 | layers (u32) |
//! | 12 | 4 | heads (u32) |
//! | 16 | 4 | hidden (u32) |
//! | 20 | 4 | context (u32) |
//! | 24 | 4 | vocab (u32) |
//! | 28 | 4 | precision bits (u32) |
//! | 32 | 4 | block norm (u32, 0 = pre, 1 = post) |
//! | 36 | 8 | step (u64) |
//! | 44 | 8 | seed (u64) |
//! | 52 | 8 | parameter count (u64) |
//! | 60 | 4·P | parameters as f32, tensors in declaration order |
//!
//! Optimizer moments are not stored.

use std::io::{Read, Write};

use super::config::{BlockNorm, ModelConfig};
use super::transformer::Transformer;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FLCK";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 60;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Transformer<f32>,
    pub step: u64,
    pub seed: u64,
}

pub fn write_checkpoint<W: Write>(model: &Transformer<f32>, step: u64, seed: u64, mut w: W) -> Result<()> {
    let c = model.config();
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        c.layers as u32,
        c.heads as u32,
        c.hidden as u32,
        c.context as u32,
        c.vocab as u32,
        c.precision_bits,
        match c.block_norm {
            BlockNorm::Pre => 0,
            BlockNorm::Post => 1,
        },
    ] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    header.extend_from_slice(&step.to_le_bytes());
    header.extend_from_slice(&seed.to_le_bytes());
    header.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    debug_assert_eq!(header.len(), HEADER_LEN);
    w.write_all(&header)?;
    let mut body = Vec::with_capacity(4 * model.param_count());
    for p in &model.params {
        body.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&body)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", u32_at(4))));
    }
    let config = ModelConfig {
        layers: u32_at(8) as usize,
        heads: u32_at(12) as usize,
        hidden: u32_at(16) as usize,
        context: u32_at(20) as usize,
        vocab: u32_at(24) as usize,
        precision_bits: u32_at(28),
        block_norm: match u32_at(32) {
            0 => BlockNorm::Pre,
            1 => BlockNorm::Post,
            x => return Err(Error::Checkpoint(format!("unknown block norm tag {x}"))),
        },
    };
    config.validate()?;
    let (step, seed, count) = (u64_at(36), u64_at(44), u64_at(52) as usize);
    if count != config.param_count() {
        return Err(Error::Checkpoint(format!(
            "header declares {count} parameters, config implies {}",
            config.param_count()
        )));
    }
    let mut body = vec![0u8; 4 * count];
    r.read_exact(&mut body)?;
    let params = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Checkpoint {
        model: Transformer::from_params(config, params),
        step,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn round_trip_and_layout() {
        let cfg = ModelConfig {
            layers: 1,
            heads: 1,
            hidden: 4,
            context: 8,
            vocab: 5,
            precision_bits: 16,
            block_norm: BlockNorm::Post,
        };
        let m: Transformer<f32> = Transformer::init(cfg, &mut seeded(1)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, 42, 7, &mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 4 * cfg.param_count());
        assert_eq!(&buf[..4], b"FLCK");
        assert_eq!(u64::from_le_bytes(buf[36..44].try_into().unwrap()), 42);
        let first = f32::from_le_bytes(buf[60..64].try_into().unwrap());
        assert_eq!(first, m.params[0]);
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.model.params, m.params);
        assert_eq!(*back.model.config(), cfg);
        assert_eq!((back.step, back.seed), (42, 7));
        buf[0] = b'X';
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
