//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SKCK"
//! 4       4     format version (u32)
//! 8       16    height, width, channels, blocks (u32 each)
//! 24      12    curriculum stage m, iteration, i_max (u32 each)
//! 36      8     optimizer step count (u64)
//! 44      8     parameter count P (u64)
//! 52      4P    parameters (f32), in NetShape::tensors order
//! ..      8     momentum buffer count V (u64, 0 or P)
//! ..      4V    momentum buffer (f32)
//! ..      4     CRC-32 of every preceding byte
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{NetShape, Network, NetworkError, Sgd};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SKCK";
const HEADER_LEN: usize = 52;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint format version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(&'static str),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub stage_m: u32,
    pub iteration: u32,
    pub i_max: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub optimizer: Option<Sgd<f32>>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.network.shape();
        let params = self.network.params();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len() + 16);
        out.extend_from_slice(MAGIC);
        for v in [
            CHECKPOINT_VERSION,
            shape.height as u32,
            shape.width as u32,
            shape.channels as u32,
            shape.blocks as u32,
            self.meta.stage_m,
            self.meta.iteration,
            self.meta.i_max,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let steps = self.optimizer.as_ref().map_or(0, |o| o.steps);
        out.extend_from_slice(&steps.to_le_bytes());
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let velocity: &[f32] = self.optimizer.as_ref().map_or(&[], |o| &o.velocity);
        out.extend_from_slice(&(velocity.len() as u64).to_le_bytes());
        for v in velocity {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Decodes a checkpoint. The optimizer, when present, gets `learning_rate`
    /// and `momentum` from the caller since they are run configuration.
    pub fn from_bytes(
        bytes: &[u8],
        learning_rate: f64,
        momentum: f64,
    ) -> Result<Self, CheckpointError> {
        if bytes.len() < HEADER_LEN + 12 {
            return Err(CheckpointError::CorruptFile("truncated"));
        }
        if &bytes[..4] != MAGIC {
            return Err(CheckpointError::CorruptFile("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(CheckpointError::CorruptFile("checksum mismatch"));
        }
        let mut r = Reader { buf: body, at: 4 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: version });
        }
        let shape = NetShape::new(
            r.u32()? as usize,
            r.u32()? as usize,
            r.u32()? as usize,
            r.u32()? as usize,
        );
        let meta = CheckpointMeta {
            stage_m: r.u32()?,
            iteration: r.u32()?,
            i_max: r.u32()?,
        };
        let steps = r.u64()?;
        let count = r.u64()? as usize;
        if count != shape.param_count() {
            return Err(CheckpointError::CorruptFile(
                "parameter count does not match shape",
            ));
        }
        let params = r.f32s(count)?;
        let vcount = r.u64()? as usize;
        if vcount != 0 && vcount != count {
            return Err(CheckpointError::CorruptFile("momentum buffer size"));
        }
        let velocity = r.f32s(vcount)?;
        if r.at != body.len() {
            return Err(CheckpointError::CorruptFile("trailing bytes"));
        }
        let optimizer = (vcount > 0).then(|| {
            let mut opt = Sgd::new(count, learning_rate, momentum);
            opt.velocity = velocity;
            opt.steps = steps;
            opt
        });
        Ok(Checkpoint {
            network: Network::from_params(shape, params)?,
            optimizer,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        // write-then-rename so a crash never leaves a half-written file
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, learning_rate: f64, momentum: f64) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?, learning_rate, momentum)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(CheckpointError::CorruptFile("truncated"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or(CheckpointError::CorruptFile("size overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
