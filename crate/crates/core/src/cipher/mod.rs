//! SIMD ciphertext layer: parameters, keys, homomorphic slot arithmetic and
//! the ciphertext wire format.
//!
//! The [`Evaluator`] is the reference backend. It keeps slot values as exact
//! binary64 numbers and enforces the level discipline of a leveled scheme:
//! ciphertext and plaintext multiplications consume one level, additions and
//! rotations are free and bootstrapping restores the full budget.

mod evaluator;
mod keys;
mod params;
mod serialize;

pub use evaluator::{decrypt, Ciphertext, Evaluator};
pub use keys::{pk_gen, sk_gen, KeyFingerprint, KeyPair, PublicKey, SecretKey};
pub use params::{HeParams, DEFAULT_LEVEL_BUDGET, DEFAULT_RING_DIM};
pub use serialize::{
    ct_deserialize, ct_encoded_len, ct_read, ct_serialize, ct_write, BACKEND_REFERENCE,
    CT_HEADER_LEN, CT_MAGIC, CT_VERSION,
};
