use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Backend parameters: ring dimension `R`, ciphertext size `B = R/2`,
/// segment width `S = floor(sqrt(B))`, multiplicative level budget and the
/// standard deviation of the simulated per-operation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeParams {
    pub ring_dim: u32,
    pub ct_size: u32,
    pub slot_size: u32,
    pub level_budget: u32,
    pub noise_sigma: f64,
}

pub const DEFAULT_RING_DIM: u32 = 1 << 11;
pub const DEFAULT_LEVEL_BUDGET: u32 = 30;

impl Default for HeParams {
    fn default() -> Self {
        HeParams {
            ring_dim: DEFAULT_RING_DIM,
            ct_size: DEFAULT_RING_DIM / 2,
            slot_size: 32,
            level_budget: DEFAULT_LEVEL_BUDGET,
            noise_sigma: 0.0,
        }
    }
}

impl HeParams {
    /// Derives `B` and `S` from the ring dimension and validates the result.
    pub fn from_ring_dim(ring_dim: u32, level_budget: u32, noise_sigma: f64) -> Result<Self> {
        let ct_size = ring_dim / 2;
        let p = HeParams {
            ring_dim,
            ct_size,
            slot_size: isqrt(ct_size),
            level_budget,
            noise_sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Params(msg));
        if self.ring_dim < 2 || !self.ring_dim.is_power_of_two() {
            return bad(format!(
                "ring dimension {} is not a power of two",
                self.ring_dim
            ));
        }
        if self.ct_size != self.ring_dim / 2 {
            return bad(format!(
                "ciphertext size {} must be half the ring dimension {}",
                self.ct_size, self.ring_dim
            ));
        }
        if self.slot_size != isqrt(self.ct_size) {
            return bad(format!(
                "slot size {} must be floor(sqrt({})) = {}",
                self.slot_size,
                self.ct_size,
                isqrt(self.ct_size)
            ));
        }
        if self.ct_size % self.slot_size != 0 {
            return bad(format!(
                "slot size {} does not divide ciphertext size {}",
                self.slot_size, self.ct_size
            ));
        }
        if self.level_budget < 1 {
            return bad("level budget must be at least 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise sigma {} must be finite and >= 0",
                self.noise_sigma
            ));
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.ct_size as usize
    }

    pub fn segment(&self) -> usize {
        self.slot_size as usize
    }

    pub fn segments(&self) -> usize {
        (self.ct_size / self.slot_size) as usize
    }

    /// Digest of everything that makes two ciphertexts arithmetically
    /// compatible. The simulated noise level is not part of it.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"hetrain-params");
        h.update(self.ring_dim.to_le_bytes());
        h.update(self.ct_size.to_le_bytes());
        h.update(self.slot_size.to_le_bytes());
        h.update(self.level_budget.to_le_bytes());
        h.finalize().into()
    }

    pub(crate) fn to_bytes(self) -> [u8; 24] {
        let mut out = [0u8; 24];
        out[0..4].copy_from_slice(&self.ring_dim.to_le_bytes());
        out[4..8].copy_from_slice(&self.ct_size.to_le_bytes());
        out[8..12].copy_from_slice(&self.slot_size.to_le_bytes());
        out[12..16].copy_from_slice(&self.level_budget.to_le_bytes());
        out[16..24].copy_from_slice(&self.noise_sigma.to_le_bytes());
        out
    }

    pub(crate) fn from_bytes(b: &[u8; 24]) -> Result<Self> {
        let u = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let p = HeParams {
            ring_dim: u(0),
            ct_size: u(4),
            slot_size: u(8),
            level_budget: u(12),
            noise_sigma: f64::from_le_bytes(b[16..24].try_into().unwrap()),
        };
        p.validate()?;
        Ok(p)
    }
}

fn isqrt(n: u32) -> u32 {
    let mut r = (n as f64).sqrt() as u32;
    while (r as u64) * (r as u64) > n as u64 {
        r -= 1;
    }
    while ((r + 1) as u64) * ((r + 1) as u64) <= n as u64 {
        r += 1;
    }
    r
}
