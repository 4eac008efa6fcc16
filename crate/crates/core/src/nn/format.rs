//! `WAGW` weight files.
//!
//! Layout (little-endian): magic, u32 version, u32 spec-JSON length, spec
//! JSON, 64-byte hex spec digest, u64 init seed, u64 parameter count, f32
//! parameters in tensor order, f32 input scales.

use std::io::{Read, Write};

use super::{Network, NetworkSpec, Plan};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"WAGW";
const VERSION: u32 = 1;
const MAX_SPEC_BYTES: usize = 1 << 16;
const MAX_PARAMS: usize = 1 << 28;

pub fn write_weights(net: &Network, mut out: impl Write) -> Result<()> {
    let spec = serde_json::to_vec(net.spec())?;
    out.write_all(WEIGHTS_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(spec.len() as u32).to_le_bytes())?;
    out.write_all(&spec)?;
    out.write_all(net.spec().digest().as_bytes())?;
    out.write_all(&net.init_seed().to_le_bytes())?;
    out.write_all(&(net.params().len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity((net.params().len() + net.input_scale().len()) * 4);
    for v in net.params().iter().chain(net.input_scale()) {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(input: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    input
        .read_exact(&mut b)
        .map_err(|_| Error::format("WAGW", format!("truncated {what}")))?;
    Ok(b)
}

pub fn read_weights(mut input: impl Read) -> Result<Network> {
    let bad = |why: &str| Error::format("WAGW", why);
    if &take::<4>(&mut input, "magic")? != WEIGHTS_MAGIC {
        return Err(bad("bad magic"));
    }
    if u32::from_le_bytes(take(&mut input, "version")?) != VERSION {
        return Err(bad("unsupported version"));
    }
    let spec_len = u32::from_le_bytes(take(&mut input, "header")?) as usize;
    if spec_len > MAX_SPEC_BYTES {
        return Err(bad("spec too large"));
    }
    let mut spec_bytes = vec![0u8; spec_len];
    input.read_exact(&mut spec_bytes).map_err(|_| bad("truncated spec"))?;
    let spec: NetworkSpec = serde_json::from_slice(&spec_bytes).map_err(|e| bad(&format!("spec: {e}")))?;
    spec.check()?;
    let digest = take::<64>(&mut input, "digest")?;
    if digest != spec.digest().as_bytes() {
        return Err(bad("spec digest mismatch"));
    }
    let seed = u64::from_le_bytes(take(&mut input, "seed")?);
    let count = u64::from_le_bytes(take(&mut input, "parameter count")?) as usize;
    // Reject absurd specs before sizing anything from them.
    let layers = spec.conv_channels.len() + spec.hidden.len();
    if layers > 64 || spec.kernel > 4096 || spec.length > 1 << 20 || spec.in_channels > 1 << 16 {
        return Err(bad("spec dimensions out of range"));
    }
    let widest = spec
        .conv_channels
        .iter()
        .chain(&spec.hidden)
        .chain([&spec.embedding, &spec.outputs, &spec.pooled_length])
        .max()
        .copied()
        .unwrap_or(0);
    if widest > 1 << 16 {
        return Err(bad("spec dimensions out of range"));
    }
    let expected = Plan::new(&spec).total;
    if count != expected || count > MAX_PARAMS {
        return Err(bad("parameter count does not match spec"));
    }
    let total = count + spec.in_channels;
    let mut buf = Vec::new();
    input
        .take(total as u64 * 4 + 1)
        .read_to_end(&mut buf)
        .map_err(|_| bad("read failed"))?;
    if buf.len() != total * 4 {
        return Err(bad("payload length does not match header"));
    }
    let values: Vec<f64> = buf
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let (params, scale) = values.split_at(count);
    Network::from_parts(spec, params.to_vec(), scale.to_vec(), seed)
}
