use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::keys::{KeyFingerprint, PublicKey, SecretKey};
use super::params::HeParams;
use crate::error::{Error, Result};

/// A packed ciphertext: `B` slots, a remaining multiplicative level, the
/// fingerprint of the key it was encrypted under and the segment width of
/// the parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub(crate) slots: Vec<f64>,
    pub(crate) level: u32,
    pub(crate) key: KeyFingerprint,
    pub(crate) segment: u32,
}

impl Ciphertext {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn key_fingerprint(&self) -> KeyFingerprint {
        self.key
    }

    /// Number of slots `B`.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn segment(&self) -> usize {
        self.segment as usize
    }
}

/// Reference SIMD backend.
///
/// Slots are stored as binary64 values and every operation is exact unless
/// `noise_sigma > 0`, in which case Gaussian noise is added to every slot on
/// encryption, multiplication and bootstrapping. Levels are tracked exactly
/// as a leveled CKKS implementation would.
#[derive(Debug)]
pub struct Evaluator {
    params: HeParams,
    noise: Option<(Normal<f64>, Mutex<ChaCha8Rng>)>,
}

impl Clone for Evaluator {
    fn clone(&self) -> Self {
        Evaluator {
            params: self.params,
            noise: self.noise.as_ref().map(|(dist, rng)| {
                (
                    *dist,
                    Mutex::new(rng.lock().expect("noise rng poisoned").clone()),
                )
            }),
        }
    }
}

impl Evaluator {
    pub fn new(params: HeParams) -> Result<Self> {
        Self::with_noise_seed(params, 0)
    }

    pub fn with_noise_seed(params: HeParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let noise = if params.noise_sigma > 0.0 {
            let dist = Normal::new(0.0, params.noise_sigma)
                .map_err(|e| Error::Params(format!("noise model: {e}")))?;
            Some((dist, Mutex::new(ChaCha8Rng::seed_from_u64(seed))))
        } else {
            None
        };
        Ok(Evaluator { params, noise })
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn slots(&self) -> usize {
        self.params.slots()
    }

    fn perturb(&self, slots: &mut [f64]) {
        if let Some((dist, rng)) = &self.noise {
            let mut rng = rng.lock().expect("noise rng poisoned");
            for s in slots.iter_mut() {
                *s += dist.sample(&mut *rng);
            }
        }
    }

    fn check_own(&self, c: &Ciphertext) -> Result<()> {
        if c.slots.len() != self.slots() || c.segment != self.params.slot_size {
            return Err(Error::Incompatible(format!(
                "ciphertext has B={} S={}, evaluator has B={} S={}",
                c.slots.len(),
                c.segment,
                self.params.ct_size,
                self.params.slot_size
            )));
        }
        Ok(())
    }

    fn check_pair(&self, a: &Ciphertext, b: &Ciphertext) -> Result<()> {
        self.check_own(a)?;
        self.check_own(b)?;
        if a.key != b.key {
            return Err(Error::Incompatible(
                "operands are under different keys".into(),
            ));
        }
        Ok(())
    }

    fn require_level(op: &'static str, level: u32, needed: u32) -> Result<()> {
        if level < needed {
            return Err(Error::LevelExhausted {
                op,
                needed,
                available: level,
            });
        }
        Ok(())
    }

    /// Encrypts `v`, zero-padded to `B` slots, at the full level budget.
    pub fn encrypt(&self, pk: &PublicKey, v: &[f64]) -> Result<Ciphertext> {
        if pk.params().fingerprint() != self.params.fingerprint() {
            return Err(Error::Incompatible(
                "public key was generated for other parameters".into(),
            ));
        }
        let b = self.slots();
        if v.len() > b {
            return Err(Error::capacity(format!(
                "vector of length {} does not fit in {b} slots",
                v.len()
            )));
        }
        let mut slots = vec![0.0; b];
        slots[..v.len()].copy_from_slice(v);
        self.perturb(&mut slots);
        Ok(Ciphertext {
            slots,
            level: self.params.level_budget,
            key: pk.fingerprint(),
            segment: self.params.slot_size,
        })
    }

    pub fn decrypt(&self, sk: &SecretKey, c: &Ciphertext) -> Result<Vec<f64>> {
        decrypt(sk, c)
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_pair(a, b)?;
        Ok(zip_with(a, b, |x, y| x + y))
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_pair(a, b)?;
        Ok(zip_with(a, b, |x, y| x - y))
    }

    /// In-place accumulate `acc += c` (no level cost).
    pub fn add_assign(&self, acc: &mut Ciphertext, c: &Ciphertext) -> Result<()> {
        self.check_pair(acc, c)?;
        for (x, y) in acc.slots.iter_mut().zip(&c.slots) {
            *x += y;
        }
        acc.level = acc.level.min(c.level);
        Ok(())
    }

    pub fn mult(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_pair(a, b)?;
        Self::require_level("mult", a.level.min(b.level), 1)?;
        let mut out = zip_with(a, b, |x, y| x * y);
        out.level -= 1;
        self.perturb(&mut out.slots);
        Ok(out)
    }

    pub fn square(&self, c: &Ciphertext) -> Result<Ciphertext> {
        self.mult(c, c)
    }

    /// Slot-wise product with a plaintext vector zero-padded to `B`.
    pub fn mult_plain(&self, c: &Ciphertext, p: &[f64]) -> Result<Ciphertext> {
        self.check_own(c)?;
        if p.len() > c.slots.len() {
            return Err(Error::capacity(format!(
                "plaintext of length {} exceeds {} slots",
                p.len(),
                c.slots.len()
            )));
        }
        Self::require_level("mult_plain", c.level, 1)?;
        let mut slots: Vec<f64> = c.slots.iter().zip(p).map(|(x, y)| x * y).collect();
        slots.resize(c.slots.len(), 0.0);
        self.perturb(&mut slots);
        Ok(Ciphertext {
            slots,
            level: c.level - 1,
            key: c.key,
            segment: c.segment,
        })
    }

    /// Product with a plaintext scalar broadcast to every slot.
    pub fn mult_scalar(&self, c: &Ciphertext, s: f64) -> Result<Ciphertext> {
        self.check_own(c)?;
        Self::require_level("mult_plain", c.level, 1)?;
        let mut slots: Vec<f64> = c.slots.iter().map(|x| x * s).collect();
        self.perturb(&mut slots);
        Ok(Ciphertext {
            slots,
            level: c.level - 1,
            key: c.key,
            segment: c.segment,
        })
    }

    /// Adds a plaintext scalar to every slot (no level cost).
    pub fn add_scalar(&self, c: &Ciphertext, s: f64) -> Result<Ciphertext> {
        self.check_own(c)?;
        let mut out = c.clone();
        out.slots.iter_mut().for_each(|x| *x += s);
        Ok(out)
    }

    /// Cyclic left shift by `k` slots; negative `k` shifts right.
    pub fn rotate(&self, c: &Ciphertext, k: i64) -> Result<Ciphertext> {
        self.check_own(c)?;
        Ok(rotate_slots(c, k))
    }

    /// Restores the level budget. Accumulated noise is kept.
    pub fn bootstrap(&self, c: &Ciphertext) -> Result<Ciphertext> {
        self.check_own(c)?;
        let mut out = c.clone();
        out.level = self.params.level_budget;
        self.perturb(&mut out.slots);
        Ok(out)
    }
}

pub fn decrypt(sk: &SecretKey, c: &Ciphertext) -> Result<Vec<f64>> {
    if sk.fingerprint() != c.key {
        return Err(Error::KeyMismatch);
    }
    if c.slots.len() != sk.params().slots() {
        return Err(Error::Incompatible(format!(
            "ciphertext has {} slots, key parameters expect {}",
            c.slots.len(),
            sk.params().slots()
        )));
    }
    if c.level > sk.params().level_budget {
        return Err(Error::format(format!(
            "corrupt ciphertext: level {} exceeds budget {}",
            c.level,
            sk.params().level_budget
        )));
    }
    Ok(c.slots.clone())
}

fn zip_with(a: &Ciphertext, b: &Ciphertext, f: impl Fn(f64, f64) -> f64) -> Ciphertext {
    Ciphertext {
        slots: a
            .slots
            .iter()
            .zip(&b.slots)
            .map(|(&x, &y)| f(x, y))
            .collect(),
        level: a.level.min(b.level),
        key: a.key,
        segment: a.segment,
    }
}

pub(crate) fn rotate_slots(c: &Ciphertext, k: i64) -> Ciphertext {
    let n = c.slots.len();
    let shift = k.rem_euclid(n as i64) as usize;
    let mut slots = Vec::with_capacity(n);
    slots.extend_from_slice(&c.slots[shift..]);
    slots.extend_from_slice(&c.slots[..shift]);
    Ciphertext {
        slots,
        level: c.level,
        key: c.key,
        segment: c.segment,
    }
}
