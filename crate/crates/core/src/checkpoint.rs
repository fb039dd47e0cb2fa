//! Binary policy checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes   "RBOT"
//! version      u32       1
//! kind         u8        0 avoidance, 1 recovery, 2 point-mass
//! obs_dim      u32
//! action_dim   u32
//! actor        u32 layer count L, then L + 1 u32 layer widths
//! critic       u32 layer count L, then L + 1 u32 layer widths
//! weights      f32 × n   actor then critic; per layer the in × out
//!                        row-major weight block followed by the biases
//! log_std      f32 × action_dim
//! obs mean     f32 × obs_dim
//! obs var      f32 × obs_dim
//! obs clip     f32
//! updates      u64       PPO updates applied
//! obs count    f64       samples seen by the normalizer
//! lr           f64       current learning rate
//! ```

use std::path::Path;

use crate::rl::{Mlp, PolicyKind, PolicyParams, RunningNorm};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RBOT";
pub const VERSION: u32 = 1;

/// Largest layer width accepted when reading, to reject garbage headers
/// before allocating.
const MAX_WIDTH: u32 = 1 << 16;
const MAX_LAYERS: u32 = 64;

pub fn to_bytes(params: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(params.kind.code());
    out.extend_from_slice(&(params.obs_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(params.action_dim() as u32).to_le_bytes());
    for net in [&params.actor, &params.critic] {
        out.extend_from_slice(&(net.num_layers() as u32).to_le_bytes());
        for d in &net.dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
    }
    let floats = params
        .actor
        .params
        .iter()
        .chain(&params.critic.params)
        .chain(&params.log_std)
        .chain(&params.obs_norm.mean)
        .chain(&params.obs_norm.var)
        .chain(std::iter::once(&params.obs_norm.clip));
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&params.update_count.to_le_bytes());
    out.extend_from_slice(&params.obs_norm.count.to_le_bytes());
    out.extend_from_slice(&params.learning_rate.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::DimensionMismatch(format!("checkpoint truncated: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::DimensionMismatch("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let layers = self.u32()?;
        if layers == 0 || layers > MAX_LAYERS {
            return Err(Error::DimensionMismatch(format!("implausible layer count {layers}")));
        }
        (0..=layers)
            .map(|_| {
                let d = self.u32()?;
                if d == 0 || d > MAX_WIDTH {
                    return Err(Error::DimensionMismatch(format!("implausible layer width {d}")));
                }
                Ok(d as usize)
            })
            .collect()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<PolicyParams> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::UnsupportedFormat);
    }
    r.pos = 4;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: VERSION });
    }
    let kind = PolicyKind::from_code(r.u8()?).ok_or(Error::UnsupportedFormat)?;
    let obs_dim = r.u32()? as usize;
    let action_dim = r.u32()? as usize;
    let actor_dims = r.dims()?;
    let critic_dims = r.dims()?;
    if actor_dims[0] != obs_dim || critic_dims[0] != obs_dim || actor_dims.last() != Some(&action_dim) || critic_dims.last() != Some(&1)
    {
        return Err(Error::DimensionMismatch(format!(
            "header dims obs {obs_dim} / action {action_dim} disagree with actor {actor_dims:?} / critic {critic_dims:?}"
        )));
    }
    let mut actor = Mlp::<f32>::zeros(&actor_dims);
    let mut critic = Mlp::<f32>::zeros(&critic_dims);
    actor.params = r.f32s(actor.params.len())?;
    critic.params = r.f32s(critic.params.len())?;
    let log_std = r.f32s(action_dim)?;
    let mean = r.f32s(obs_dim)?;
    let var = r.f32s(obs_dim)?;
    let clip = r.f32s(1)?[0];
    let update_count = r.u64()?;
    let count = r.f64()?;
    let learning_rate = r.f64()?;
    if r.pos != bytes.len() {
        return Err(Error::DimensionMismatch(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    Ok(PolicyParams {
        kind,
        actor,
        critic,
        log_std,
        obs_norm: RunningNorm { mean, var, count, clip },
        update_count,
        learning_rate,
    })
}

/// Write atomically: a temporary sibling is renamed over `path`.
pub fn save(params: &PolicyParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("rbot.tmp");
    std::fs::write(&tmp, to_bytes(params))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<PolicyParams> {
    from_bytes(&std::fs::read(path)?)
}
