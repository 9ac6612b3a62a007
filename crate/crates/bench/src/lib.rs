//! Shared fixtures for the benchmarks: default parameters, a key pair, the
//! default network and a handful of encrypted synthetic samples.

use hetrain_core::data::{encrypt_dataset, synth_generate, EncryptedDataset};
use hetrain_core::henn::{cheb_fit_silu, encrypt_model, init_model, EncryptedModel, NetworkSpec};
use hetrain_core::{Evaluator, HeParams, KeyPair};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub struct Fixture {
    pub ev: Evaluator,
    pub keys: KeyPair,
    pub spec: NetworkSpec,
    pub model: EncryptedModel,
    pub data: EncryptedDataset,
}

impl Fixture {
    /// `per_class` synthetic samples of each of the five classes.
    pub fn new(per_class: usize) -> Self {
        let params = HeParams::default();
        let keys = KeyPair::generate(&params, &mut ChaCha20Rng::seed_from_u64(1))
            .expect("default params are valid");
        let ev = Evaluator::new(params).expect("default params are valid");
        let spec = NetworkSpec::default();
        let act = cheb_fit_silu(15, (-8.0, 8.0)).expect("fit");
        let plain = init_model(&spec, act, params.segment(), 1).expect("default net fits");
        let model = encrypt_model(&ev, &plain, &keys.public).expect("encrypt model");
        let d = synth_generate(spec.output_dim(), spec.input_dim(), per_class, 1);
        let data =
            encrypt_dataset(&ev, &d, &keys.public, spec.output_axis()).expect("encrypt data");
        Fixture {
            ev,
            keys,
            spec,
            model,
            data,
        }
    }
}
