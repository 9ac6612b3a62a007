use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};

use super::params::HeParams;
use crate::error::{Error, Result};

/// 128-bit identifier binding ciphertexts to the key pair that made them.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyFingerprint(pub [u8; 16]);

impl fmt::Debug for KeyFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyFingerprint({self})")
    }
}

impl fmt::Display for KeyFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Secret key of the reference backend.
///
/// The reference backend keeps slot values in the clear; the key only gates
/// which ciphertexts a holder may decrypt. A lattice backend would carry the
/// actual secret polynomial here.
#[derive(Clone, PartialEq)]
pub struct SecretKey {
    token: [u8; 16],
    params: HeParams,
    fingerprint: KeyFingerprint,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey")
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublicKey {
    params: HeParams,
    fingerprint: KeyFingerprint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyPair {
    pub secret: SecretKey,
    pub public: PublicKey,
}

fn fingerprint_of(token: &[u8; 16], params: &HeParams) -> KeyFingerprint {
    let mut h = Sha256::new();
    h.update(b"hetrain-key");
    h.update(token);
    h.update(params.fingerprint());
    let digest = h.finalize();
    let mut fp = [0u8; 16];
    fp.copy_from_slice(&digest[..16]);
    KeyFingerprint(fp)
}

/// Draws a fresh secret key for `params`.
pub fn sk_gen<R: Rng + ?Sized>(params: &HeParams, rng: &mut R) -> Result<SecretKey> {
    params.validate()?;
    let mut token = [0u8; 16];
    rng.fill_bytes(&mut token);
    Ok(SecretKey::from_token(token, *params))
}

/// Derives the public key; deterministic in `sk`.
pub fn pk_gen(sk: &SecretKey) -> PublicKey {
    PublicKey {
        params: sk.params,
        fingerprint: sk.fingerprint,
    }
}

impl KeyPair {
    pub fn generate<R: Rng + ?Sized>(params: &HeParams, rng: &mut R) -> Result<Self> {
        let secret = sk_gen(params, rng)?;
        let public = pk_gen(&secret);
        Ok(KeyPair { secret, public })
    }
}

impl SecretKey {
    fn from_token(token: [u8; 16], params: HeParams) -> Self {
        SecretKey {
            fingerprint: fingerprint_of(&token, &params),
            token,
            params,
        }
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        self.fingerprint
    }

    pub fn public_key(&self) -> PublicKey {
        pk_gen(self)
    }
}

impl PublicKey {
    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        self.fingerprint
    }
}

// Key files: "HEKEY001", kind byte (0 secret, 1 public), params (24 bytes),
// fingerprint (16 bytes), then the 16-byte token for secret keys.
const KEY_MAGIC: &[u8; 8] = b"HEKEY001";
const KIND_SECRET: u8 = 0;
const KIND_PUBLIC: u8 = 1;

fn key_header(kind: u8, params: &HeParams, fp: &KeyFingerprint) -> Vec<u8> {
    let mut out = Vec::with_capacity(65);
    out.extend_from_slice(KEY_MAGIC);
    out.push(kind);
    out.extend_from_slice(&params.to_bytes());
    out.extend_from_slice(&fp.0);
    out
}

fn parse_key_header(bytes: &[u8], kind: u8) -> Result<(HeParams, KeyFingerprint, &[u8])> {
    if bytes.len() < 49 || &bytes[..8] != KEY_MAGIC {
        return Err(Error::format("not a key file (bad magic or truncated)"));
    }
    if bytes[8] != kind {
        let want = if kind == KIND_SECRET {
            "secret"
        } else {
            "public"
        };
        return Err(Error::format(format!("expected a {want} key file")));
    }
    let params = HeParams::from_bytes(bytes[9..33].try_into().unwrap())?;
    let mut fp = [0u8; 16];
    fp.copy_from_slice(&bytes[33..49]);
    Ok((params, KeyFingerprint(fp), &bytes[49..]))
}

impl SecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = key_header(KIND_SECRET, &self.params, &self.fingerprint);
        out.extend_from_slice(&self.token);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, fp, rest) = parse_key_header(bytes, KIND_SECRET)?;
        if rest.len() != 16 {
            return Err(Error::format("secret key file has wrong length"));
        }
        let sk = SecretKey::from_token(rest.try_into().unwrap(), params);
        if sk.fingerprint != fp {
            return Err(Error::format(
                "secret key fingerprint does not match its token",
            ));
        }
        Ok(sk)
    }
}

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        key_header(KIND_PUBLIC, &self.params, &self.fingerprint)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, fingerprint, rest) = parse_key_header(bytes, KIND_PUBLIC)?;
        if !rest.is_empty() {
            return Err(Error::format("public key file has trailing bytes"));
        }
        Ok(PublicKey {
            params,
            fingerprint,
        })
    }
}
