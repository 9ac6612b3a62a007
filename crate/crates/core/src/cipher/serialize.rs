//! Binary ciphertext format.
//!
//! ```text
//! magic "HESIMD1" (7) | version u8 | backend id u8 | B u32 | S u32 |
//! level u32 | key fingerprint (16) | B x f64
//! ```
//!
//! All integers and floats are little-endian.

use super::evaluator::Ciphertext;
use super::keys::KeyFingerprint;
use crate::error::{Error, Result};

pub const CT_MAGIC: &[u8; 7] = b"HESIMD1";
pub const CT_VERSION: u8 = 1;
pub const BACKEND_REFERENCE: u8 = 0;
pub const CT_HEADER_LEN: usize = 7 + 1 + 1 + 4 + 4 + 4 + 16;

/// Serialized size of a ciphertext with `slots` slots.
pub fn ct_encoded_len(slots: usize) -> usize {
    CT_HEADER_LEN + 8 * slots
}

pub fn ct_serialize(c: &Ciphertext) -> Vec<u8> {
    let mut out = Vec::with_capacity(ct_encoded_len(c.slots.len()));
    ct_write(c, &mut out);
    out
}

pub fn ct_write(c: &Ciphertext, out: &mut Vec<u8>) {
    out.extend_from_slice(CT_MAGIC);
    out.push(CT_VERSION);
    out.push(BACKEND_REFERENCE);
    out.extend_from_slice(&(c.slots.len() as u32).to_le_bytes());
    out.extend_from_slice(&c.segment.to_le_bytes());
    out.extend_from_slice(&c.level.to_le_bytes());
    out.extend_from_slice(&c.key.0);
    for s in &c.slots {
        out.extend_from_slice(&s.to_le_bytes());
    }
}

pub fn ct_deserialize(bytes: &[u8]) -> Result<Ciphertext> {
    let (c, used) = ct_read(bytes)?;
    if used != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after ciphertext",
            bytes.len() - used
        )));
    }
    Ok(c)
}

/// Parses one ciphertext from the front of `bytes`, returning it and the
/// number of bytes consumed.
pub fn ct_read(bytes: &[u8]) -> Result<(Ciphertext, usize)> {
    if bytes.len() < CT_HEADER_LEN {
        return Err(Error::format("truncated ciphertext header"));
    }
    if &bytes[..7] != CT_MAGIC {
        return Err(Error::format("bad ciphertext magic"));
    }
    if bytes[7] != CT_VERSION {
        return Err(Error::format(format!(
            "unsupported ciphertext version {}",
            bytes[7]
        )));
    }
    if bytes[8] != BACKEND_REFERENCE {
        return Err(Error::format(format!("unknown backend id {}", bytes[8])));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let b = u(9) as usize;
    let segment = u(13);
    let level = u(17);
    if segment == 0 || b % segment as usize != 0 {
        return Err(Error::format(format!(
            "segment width {segment} does not divide {b}"
        )));
    }
    let mut fp = [0u8; 16];
    fp.copy_from_slice(&bytes[21..37]);
    let total = ct_encoded_len(b);
    if bytes.len() < total {
        return Err(Error::format(format!(
            "truncated ciphertext body: need {total} bytes, have {}",
            bytes.len()
        )));
    }
    let slots = bytes[CT_HEADER_LEN..total]
        .chunks_exact(8)
        .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    Ok((
        Ciphertext {
            slots,
            level,
            key: KeyFingerprint(fp),
            segment,
        },
        total,
    ))
}
