//! End to end through the public API on a small ring: preprocess, encrypt,
//! train, save, reload and predict.

use hetrain_core::data::{encrypt_dataset, encrypt_features, evaluate, preprocess, synth_generate};
use hetrain_core::henn::{
    cheb_fit_silu, decrypt_model, encrypt_model, init_model, model_from_bytes, model_to_bytes,
    predict_encrypted, train, ModelFile, NetworkSpec,
};
use hetrain_core::{Evaluator, HeParams, KeyPair, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[test]
fn small_pipeline() {
    let he = HeParams::from_ring_dim(512, 30, 1e-7).unwrap();
    let kp = KeyPair::generate(&he, &mut ChaCha20Rng::seed_from_u64(11)).unwrap();
    let ev = Evaluator::with_noise_seed(he, 3).unwrap();
    let spec = NetworkSpec::new(vec![6, 8, 3]).unwrap();
    let cfg = TrainConfig {
        rounds: 3,
        batch: 8,
        lr: 0.5,
        dims: spec.dims().to_vec(),
        degree: 9,
        domain: (-6.0, 6.0),
        he,
        ..TrainConfig::default()
    };

    let raw = synth_generate(3, 6, 20, 4);
    let (tr, te) = preprocess(&raw, 20, 5).unwrap();
    assert_eq!(tr.len() + te.len(), 60);
    let data = encrypt_dataset(&ev, &tr, &kp.public, spec.output_axis()).unwrap();

    let act = cheb_fit_silu(cfg.degree, cfg.domain).unwrap();
    let init = init_model(&spec, act, he.segment(), cfg.init_seed).unwrap();
    let enc = encrypt_model(&ev, &init, &kp.public).unwrap();
    let (model, trace) = train(&ev, enc, &data, &cfg, None).unwrap();
    assert_eq!(trace.rounds.len(), 3);
    assert_eq!(trace.rounds[2].iterations, 3 * tr.len().div_ceil(8));

    let bytes = model_to_bytes(&ModelFile::Encrypted(model.clone()));
    let ModelFile::Encrypted(back) = model_from_bytes(&bytes).unwrap() else {
        panic!("expected an encrypted model");
    };
    assert_eq!(back, model);

    let plain = decrypt_model(&kp.secret, &back).unwrap();
    let xs: Vec<_> = te
        .features
        .iter()
        .map(|x| encrypt_features(&ev, &kp.public, x).unwrap())
        .collect();
    let enc_preds = predict_encrypted(&ev, &kp.secret, &back, &xs).unwrap();
    let plain_preds: Vec<usize> = te.features.iter().map(|x| plain.predict(x)).collect();
    let agree = enc_preds
        .iter()
        .zip(&plain_preds)
        .filter(|(a, b)| a == b)
        .count();
    assert!(agree * 10 >= te.len() * 9, "{agree}/{}", te.len());

    let report = evaluate(&plain_preds, &te.labels, 3).unwrap();
    assert!(report.accuracy > 1.0 / 3.0, "accuracy {}", report.accuracy);
}
