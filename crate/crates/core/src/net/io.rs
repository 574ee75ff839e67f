//! `FMH1` model container.
//!
//! ```text
//! "FMH1"
//! u32 hash_bits, u32 classes, u32 input_len, u32 input_channels, u32 latent
//! u32 conv_count, then per stage: u32 out_channels, u8 pool (0 max, 1 avg)
//! u32 tensor_count, then per tensor:
//!     u16 name_len, name (UTF-8), u8 ndim, ndim x u32 dims,
//!     prod(dims) x f32, row-major
//! ```
//! All integers and floats little-endian. Tensors appear in layout order.

use super::{Architecture, ConvSpec, Layout, Network, Pool};
use crate::bytes::Reader;
use crate::error::Result;

pub const MODEL_MAGIC: &[u8; 4] = b"FMH1";

pub fn encode_model(net: &Network<f32>) -> Vec<u8> {
    let arch = net.arch();
    let mut out = Vec::with_capacity(64 + net.params().len() * 4);
    out.extend_from_slice(MODEL_MAGIC);
    for v in [
        arch.hash_bits,
        arch.classes,
        arch.input_len,
        arch.input_channels,
        arch.latent,
        arch.conv.len(),
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for c in &arch.conv {
        out.extend_from_slice(&(c.out_channels as u32).to_le_bytes());
        out.push(match c.pool {
            Pool::Max => 0,
            Pool::Avg => 1,
        });
    }
    let layout = net.layout();
    out.extend_from_slice(&(layout.slots().len() as u32).to_le_bytes());
    for slot in layout.slots() {
        out.extend_from_slice(&(slot.name.len() as u16).to_le_bytes());
        out.extend_from_slice(slot.name.as_bytes());
        out.push(slot.shape.len() as u8);
        for d in &slot.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in &net.params()[slot.range()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Upper bound on any single dimension a model file may declare.
const MAX_DIM: u32 = 1 << 20;

pub fn decode_model(data: &[u8]) -> Result<Network<f32>> {
    let mut r = Reader::new("model file", data);
    r.expect(MODEL_MAGIC)?;
    let dim = |r: &mut Reader| -> Result<usize> {
        let v = r.u32()?;
        if v > MAX_DIM {
            return Err(r.error(format!("dimension {v} too large")));
        }
        Ok(v as usize)
    };
    let hash_bits = dim(&mut r)?;
    let classes = dim(&mut r)?;
    let input_len = dim(&mut r)?;
    let input_channels = dim(&mut r)?;
    let latent = dim(&mut r)?;
    let n_conv = dim(&mut r)?;
    if n_conv > 16 {
        return Err(r.error(format!("{n_conv} conv stages")));
    }
    let mut conv = Vec::with_capacity(n_conv);
    for _ in 0..n_conv {
        let out_channels = dim(&mut r)?;
        let pool = match r.u8()? {
            0 => Pool::Max,
            1 => Pool::Avg,
            p => return Err(r.error(format!("unknown pool kind {p}"))),
        };
        conv.push(ConvSpec { out_channels, pool });
    }
    let arch = Architecture {
        input_len,
        input_channels,
        conv,
        latent,
        hash_bits,
        classes,
    };
    arch.validate()?;

    // Reject before allocating: the declared tensors must fit in the input.
    let mut declared: u128 = 0;
    let mut cin = arch.input_channels as u128;
    for c in &arch.conv {
        declared += 3 * cin * c.out_channels as u128 + c.out_channels as u128;
        cin = c.out_channels as u128;
    }
    let flat = (arch.input_len >> arch.conv.len()) as u128 * cin;
    let lat = arch.latent as u128;
    declared += flat * lat + lat + (lat + 1) * (arch.hash_bits as u128 + arch.classes as u128);
    if declared * 4 > r.remaining() as u128 {
        return Err(r.error(format!("{declared} parameters do not fit in the file")));
    }

    let layout = Layout::new(&arch);
    let count = r.u32()? as usize;
    if count != layout.slots().len() {
        return Err(r.error(format!(
            "expected {} tensors, found {count}",
            layout.slots().len()
        )));
    }
    let mut params = Vec::with_capacity(layout.total());
    for slot in layout.slots() {
        let name_len = r.u16()? as usize;
        let name = r.take(name_len)?;
        if name != slot.name.as_bytes() {
            return Err(r.error(format!(
                "expected tensor `{}`, found `{}`",
                slot.name,
                String::from_utf8_lossy(name)
            )));
        }
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        if shape != slot.shape {
            return Err(r.error(format!(
                "tensor `{}` has shape {shape:?}, expected {:?}",
                slot.name, slot.shape
            )));
        }
        params.extend(r.f32s(slot.len())?);
    }
    r.finish()?;
    Network::from_parts(arch, params)
}
