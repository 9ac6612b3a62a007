//! Encrypted forward pass, MSE loss, backpropagation and SGD.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::activation::Powers;
use super::model::{argmax, decrypt_model, EncryptedModel};
use crate::cipher::{decrypt, Evaluator, SecretKey};
use crate::config::TrainConfig;
use crate::data::{evaluate, Dataset, EncryptedDataset, EncryptedSample};
use crate::error::{Error, Result};
use crate::packing::{he_bias_add, he_outer, matvec, matvec_transposed, unpack1d, Packed};

/// Intermediate values of one encrypted forward pass. `deriv` holds
/// `p'(pre)` per layer and is only filled by [`forward_train`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub pre: Vec<Packed>,
    pub act: Vec<Packed>,
    pub deriv: Vec<Packed>,
}

impl ForwardPass {
    pub fn output(&self) -> &Packed {
        self.act.last().expect("model has at least one layer")
    }
}

fn forward_impl(
    ev: &Evaluator,
    m: &EncryptedModel,
    x: &Packed,
    with_deriv: bool,
) -> Result<ForwardPass> {
    let k = m.layers.len();
    let mut fp = ForwardPass {
        pre: Vec::with_capacity(k),
        act: Vec::with_capacity(k),
        deriv: Vec::with_capacity(k),
    };
    let p = &m.activation;
    for layer in &m.layers {
        let input = fp.act.last().unwrap_or(x);
        let z = he_bias_add(ev, &matvec(ev, &layer.weights, input)?, &layer.bias)?;
        let powers = Powers::compute(ev, &z.ct, p.degree())?;
        fp.act.push(Packed {
            ct: powers.eval(ev, p.coeffs())?,
            layout: z.layout,
        });
        if with_deriv {
            fp.deriv.push(Packed {
                ct: powers.eval(ev, p.derivative_coeffs())?,
                layout: z.layout,
            });
        }
        fp.pre.push(z);
    }
    Ok(fp)
}

/// Encrypted forward pass: `h_k = p(W_k h_{k-1} + b_k)` with `x` packed on
/// axis 0. Returns every pre-activation and activation.
pub fn forward(ev: &Evaluator, m: &EncryptedModel, x: &Packed) -> Result<ForwardPass> {
    forward_impl(ev, m, x, false)
}

/// Like [`forward`], also evaluating the activation derivative at every
/// pre-activation for use by [`backward`].
pub fn forward_train(ev: &Evaluator, m: &EncryptedModel, x: &Packed) -> Result<ForwardPass> {
    forward_impl(ev, m, x, true)
}

fn check_pairs(preds: &[Packed], labels: &[Packed]) -> Result<()> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::Batch(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    for (a, y) in preds.iter().zip(labels) {
        if a.layout != y.layout {
            return Err(Error::layout("prediction and label layouts differ"));
        }
    }
    Ok(())
}

/// `(1/bsz) sum_i (y_i - a_i)^2`, slot-wise.
pub fn mse_loss(ev: &Evaluator, preds: &[Packed], labels: &[Packed], bsz: usize) -> Result<Packed> {
    check_pairs(preds, labels)?;
    if bsz != preds.len() {
        return Err(Error::Batch(format!(
            "batch size {bsz} but {} pairs",
            preds.len()
        )));
    }
    let mut acc: Option<crate::Ciphertext> = None;
    for (a, y) in preds.iter().zip(labels) {
        let sq = ev.square(&ev.sub(&y.ct, &a.ct)?)?;
        match &mut acc {
            Some(acc) => ev.add_assign(acc, &sq)?,
            None => acc = Some(sq),
        }
    }
    Ok(Packed {
        ct: ev.mult_scalar(&acc.expect("nonempty batch"), 1.0 / bsz as f64)?,
        layout: preds[0].layout,
    })
}

/// `(2/bsz) (a - y)`: the descent direction of [`mse_loss`] for one sample.
pub fn loss_grad(ev: &Evaluator, pred: &Packed, label: &Packed, bsz: usize) -> Result<Packed> {
    check_pairs(std::slice::from_ref(pred), std::slice::from_ref(label))?;
    Ok(Packed {
        ct: ev.mult_scalar(&ev.sub(&pred.ct, &label.ct)?, 2.0 / bsz as f64)?,
        layout: pred.layout,
    })
}

/// Gradient of one layer, packed like the layer's own parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Packed,
    pub bias: Packed,
}

/// Backpropagates `lgrad` through a [`forward_train`] pass of input `x`.
///
/// Slots outside the logical regions may hold junk (activation padding is
/// `p(0)`); [`sgd_update`] masks it away.
pub fn backward(
    ev: &Evaluator,
    m: &EncryptedModel,
    x: &Packed,
    fp: &ForwardPass,
    lgrad: &Packed,
) -> Result<Vec<LayerGrad>> {
    let k = m.layers.len();
    if fp.deriv.len() != k {
        return Err(Error::layout(
            "backward needs a forward pass with derivatives",
        ));
    }
    let mut grads = Vec::with_capacity(k);
    let mut delta = Packed {
        ct: ev.mult(&lgrad.ct, &fp.deriv[k - 1].ct)?,
        layout: fp.deriv[k - 1].layout,
    };
    for i in (0..k).rev() {
        let input = if i == 0 { x } else { &fp.act[i - 1] };
        grads.push(LayerGrad {
            weights: he_outer(ev, &delta, input)?,
            bias: delta.clone(),
        });
        if i > 0 {
            let back = matvec_transposed(ev, &m.layers[i].weights, &delta)?;
            delta = Packed {
                ct: ev.mult(&back.ct, &fp.deriv[i - 1].ct)?,
                layout: back.layout,
            };
        }
    }
    grads.reverse();
    Ok(grads)
}

fn add_grads(ev: &Evaluator, acc: &mut [LayerGrad], g: &[LayerGrad]) -> Result<()> {
    for (a, b) in acc.iter_mut().zip(g) {
        ev.add_assign(&mut a.weights.ct, &b.weights.ct)?;
        ev.add_assign(&mut a.bias.ct, &b.bias.ct)?;
    }
    Ok(())
}

/// Summed gradient of a mini-batch. Samples run in parallel; the reduction
/// is sequential in batch order so results do not depend on scheduling.
pub fn batch_gradients(
    ev: &Evaluator,
    m: &EncryptedModel,
    batch: &[&EncryptedSample],
) -> Result<Vec<LayerGrad>> {
    let bsz = batch.len();
    if bsz == 0 {
        return Err(Error::Batch("empty batch".into()));
    }
    let per_sample = batch
        .par_iter()
        .map(|s| {
            let fp = forward_train(ev, m, &s.x)?;
            let lg = loss_grad(ev, fp.output(), &s.y, bsz)?;
            backward(ev, m, &s.x, &fp, &lg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = per_sample.into_iter();
    let mut acc = it.next().expect("nonempty batch");
    for g in it {
        add_grads(ev, &mut acc, &g)?;
    }
    Ok(acc)
}

/// `theta <- Bootstrap(theta - lr * grad)` for every parameter. The step
/// multiplies by `lr` times the parameter's logical mask, which also clears
/// junk in padding slots, so it costs a single level.
pub fn sgd_update(
    ev: &Evaluator,
    m: &EncryptedModel,
    grads: &[LayerGrad],
    lr: f64,
) -> Result<EncryptedModel> {
    if grads.len() != m.layers.len() {
        return Err(Error::layout(format!(
            "{} layer gradients for {} layers",
            grads.len(),
            m.layers.len()
        )));
    }
    let step = |p: &Packed, g: &Packed| -> Result<Packed> {
        if p.layout != g.layout {
            return Err(Error::layout(
                "gradient layout differs from parameter layout",
            ));
        }
        let scaled: Vec<f64> = p.layout.mask().iter().map(|v| v * lr).collect();
        let delta = ev.mult_plain(&g.ct, &scaled)?;
        Ok(Packed {
            ct: ev.bootstrap(&ev.sub(&p.ct, &delta)?)?,
            layout: p.layout,
        })
    };
    let mut out = m.clone();
    for (layer, g) in out.layers.iter_mut().zip(grads) {
        layer.weights = step(&layer.weights, &g.weights)?;
        layer.bias = step(&layer.bias, &g.bias)?;
    }
    Ok(out)
}

/// Sample order of one epoch: a permutation of `0..n` drawn from stream
/// `epoch` of a ChaCha8 generator seeded with `seed`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Mini-batch schedule shared by encrypted and plaintext training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub batch: usize,
    pub lr: f64,
    pub shuffle_seed: u64,
}

impl Schedule {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Schedule {
            batch: cfg.batch,
            lr: cfg.lr,
            shuffle_seed: cfg.shuffle_seed,
        }
    }

    /// Batches of one epoch; the last one may be short.
    pub fn batches(&self, n: usize, epoch: u64) -> Vec<Vec<usize>> {
        epoch_order(n, self.shuffle_seed, epoch)
            .chunks(self.batch.max(1))
            .map(<[usize]>::to_vec)
            .collect()
    }
}

/// Key holder's view during training: decrypts the model after every epoch
/// and scores it on `test`. This breaks the privacy model and exists only
/// to draw training curves.
pub struct Probe<'a> {
    pub sk: &'a SecretKey,
    pub test: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    /// 1-based round (epoch) number.
    pub round: usize,
    /// Parameter updates performed so far.
    pub iterations: usize,
    /// Mean per-sample loss over the epoch, `sum_c (a_c - y_c)^2`.
    pub loss: Option<f64>,
    /// Per-class accuracy on the probe set.
    pub accuracy: Option<f64>,
    pub hit_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub rounds: Vec<RoundStats>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut s = String::from("round,iterations,loss,accuracy,hit_rate\n");
        for r in &self.rounds {
            s += &format!(
                "{},{},{},{},{}\n",
                r.round,
                r.iterations,
                opt(r.loss),
                opt(r.accuracy),
                opt(r.hit_rate)
            );
        }
        s
    }
}

fn probe_scores(sk: &SecretKey, m: &EncryptedModel, test: &Dataset) -> Result<(f64, f64)> {
    let plain = decrypt_model(sk, m)?;
    let preds: Vec<usize> = test.features.iter().map(|x| plain.predict(x)).collect();
    let r = evaluate(&preds, &test.labels, test.num_classes())?;
    Ok((r.accuracy, r.hit_rate))
}

/// Runs the given epochs of mini-batch SGD. Epoch numbers select the
/// shuffle stream, so a worker resuming at epoch `e` sees the same order a
/// single run would. `iterations` is the update count carried in.
pub fn train_epochs(
    ev: &Evaluator,
    mut model: EncryptedModel,
    data: &EncryptedDataset,
    sched: &Schedule,
    epochs: Range<u64>,
    probe: Option<&Probe>,
    mut iterations: usize,
) -> Result<(EncryptedModel, Vec<RoundStats>)> {
    if data.is_empty() {
        return Err(Error::Batch("cannot train on an empty dataset".into()));
    }
    let mut stats = Vec::new();
    for epoch in epochs {
        let mut loss_sum = 0.0;
        for idx in sched.batches(data.len(), epoch) {
            let batch: Vec<&EncryptedSample> = idx.iter().map(|&i| &data.samples[i]).collect();
            if let Some(p) = probe {
                loss_sum += batch_loss(ev, p.sk, &model, &batch)? * batch.len() as f64;
            }
            let grads = batch_gradients(ev, &model, &batch)?;
            model = sgd_update(ev, &model, &grads, sched.lr)?;
            iterations += 1;
        }
        let (loss, scores) = match probe {
            Some(p) => (
                Some(loss_sum / data.len() as f64),
                Some(probe_scores(p.sk, &model, p.test)?),
            ),
            None => (None, None),
        };
        stats.push(RoundStats {
            round: epoch as usize + 1,
            iterations,
            loss,
            accuracy: scores.map(|s| s.0),
            hit_rate: scores.map(|s| s.1),
        });
    }
    Ok((model, stats))
}

fn batch_loss(
    ev: &Evaluator,
    sk: &SecretKey,
    m: &EncryptedModel,
    batch: &[&EncryptedSample],
) -> Result<f64> {
    let preds = batch
        .par_iter()
        .map(|s| Ok(forward(ev, m, &s.x)?.act.pop().expect("one layer")))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Packed> = batch.iter().map(|s| s.y.clone()).collect();
    let l = mse_loss(ev, &preds, &labels, batch.len())?;
    Ok(unpack1d(&decrypt(sk, &l.ct)?, &l.layout)?.iter().sum())
}

/// `cfg.rounds` epochs over `data` with batch `cfg.batch`; one round is one
/// epoch.
pub fn train(
    ev: &Evaluator,
    model: EncryptedModel,
    data: &EncryptedDataset,
    cfg: &TrainConfig,
    probe: Option<&Probe>,
) -> Result<(EncryptedModel, TrainTrace)> {
    if data.is_empty() {
        return Err(Error::Batch("cannot train on an empty dataset".into()));
    }
    let (m, rounds) = train_epochs(
        ev,
        model,
        data,
        &Schedule::from_config(cfg),
        0..cfg.rounds as u64,
        probe,
        0,
    )?;
    Ok((m, TrainTrace { rounds }))
}

/// Encrypted inference: class index of each sample after decrypting the
/// encrypted forward output.
pub fn predict_encrypted(
    ev: &Evaluator,
    sk: &SecretKey,
    m: &EncryptedModel,
    xs: &[Packed],
) -> Result<Vec<usize>> {
    xs.par_iter()
        .map(|x| {
            let out = forward(ev, m, x)?.act.pop().expect("one layer");
            Ok(argmax(&unpack1d(&decrypt(sk, &out.ct)?, &out.layout)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::cipher::{HeParams, KeyPair};
    use crate::data::{encrypt_dataset, synth_generate};
    use crate::henn::activation::{cheb_fit_silu, ActivationPoly};
    use crate::henn::depth::DepthAudit;
    use crate::henn::model::{encrypt_model, init_model, NetworkSpec, PlainLayer, PlainModel};
    use crate::henn::plain::plain_train_epochs;
    use crate::matrix::Matrix;
    use crate::packing::{pack1d, Axis, PackedLayout};

    fn small(level_budget: u32) -> (Evaluator, KeyPair) {
        let p = HeParams::from_ring_dim(128, level_budget, 0.0).unwrap();
        let kp = KeyPair::generate(&p, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        (Evaluator::new(p).unwrap(), kp)
    }

    fn enc_vec(ev: &Evaluator, kp: &KeyPair, v: &[f64], axis: Axis) -> Packed {
        let (s, b) = (ev.params().segment(), ev.slots());
        Packed {
            ct: ev
                .encrypt(&kp.public, &pack1d(v, axis, s, b).unwrap())
                .unwrap(),
            layout: PackedLayout::vector(v.len(), axis, s, b).unwrap(),
        }
    }

    fn open(kp: &KeyPair, p: &Packed) -> Vec<f64> {
        unpack1d(&decrypt(&kp.secret, &p.ct).unwrap(), &p.layout).unwrap()
    }

    fn linear(w: Vec<Vec<f64>>, b: Vec<f64>) -> PlainModel {
        let spec = NetworkSpec::new(vec![w[0].len(), w.len()]).unwrap();
        PlainModel {
            spec,
            layers: vec![PlainLayer {
                weights: Matrix::from_rows(&w),
                bias: b,
            }],
            activation: ActivationPoly::identity(),
        }
    }

    #[test]
    fn identity_network_forward() {
        let (ev, kp) = small(10);
        let m = encrypt_model(
            &ev,
            &linear(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]),
            &kp.public,
        )
        .unwrap();
        let x = enc_vec(&ev, &kp, &[5.0, 6.0], Axis::Horizontal);
        let out = forward(&ev, &m, &x).unwrap();
        assert_eq!(out.output().axis(), Axis::Vertical);
        assert_eq!(open(&kp, out.output()), vec![5.0, 6.0]);
    }

    #[test]
    fn zero_input_gives_poly_of_zero() {
        let params = HeParams::default();
        let kp = KeyPair::generate(&params, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let ev = Evaluator::new(params).unwrap();
        let p = cheb_fit_silu(15, (-8.0, 8.0)).unwrap();
        let m = init_model(&NetworkSpec::default(), p.clone(), 32, 5).unwrap();
        let em = encrypt_model(&ev, &m, &kp.public).unwrap();
        let x = enc_vec(&ev, &kp, &[0.0; 21], Axis::Horizontal);
        let fp = forward(&ev, &em, &x).unwrap();
        let y0 = p.eval(0.0);
        for v in open(&kp, &fp.act[0]) {
            assert!((v - y0).abs() < 1e-12);
        }
        let plain = m.forward(&[0.0; 21]);
        for (a, b) in open(&kp, fp.output()).iter().zip(plain) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_examples() {
        let (ev, kp) = small(10);
        let a = enc_vec(&ev, &kp, &[1.0, 0.0], Axis::Vertical);
        let y = enc_vec(&ev, &kp, &[0.0, 1.0], Axis::Vertical);
        let l = mse_loss(&ev, std::slice::from_ref(&a), std::slice::from_ref(&y), 1).unwrap();
        assert_eq!(open(&kp, &l), vec![1.0, 1.0]);
        let l2 = mse_loss(&ev, &[a.clone(), a.clone()], &[y.clone(), y.clone()], 2).unwrap();
        assert_eq!(open(&kp, &l2), vec![1.0, 1.0]);
        assert_eq!(
            open(
                &kp,
                &mse_loss(&ev, std::slice::from_ref(&a), std::slice::from_ref(&a), 1).unwrap()
            ),
            vec![0.0, 0.0]
        );
        assert!(mse_loss(&ev, std::slice::from_ref(&a), &[], 1).is_err());

        assert_eq!(
            open(&kp, &loss_grad(&ev, &a, &y, 1).unwrap()),
            vec![2.0, -2.0]
        );
        assert_eq!(
            open(&kp, &loss_grad(&ev, &a, &y, 2).unwrap()),
            vec![1.0, -1.0]
        );
        assert_eq!(
            open(&kp, &loss_grad(&ev, &a, &a, 1).unwrap()),
            vec![0.0, 0.0]
        );
        let h = enc_vec(&ev, &kp, &[1.0, 0.0], Axis::Horizontal);
        assert!(matches!(loss_grad(&ev, &h, &y, 1), Err(Error::Layout(_))));
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let (ev, kp) = small(10);
        let m = linear(vec![vec![0.5, -1.0], vec![2.0, 0.25]], vec![0.1, -0.3]);
        let em = encrypt_model(&ev, &m, &kp.public).unwrap();
        let (x, y) = ([0.4, -0.7], [1.0, 0.0]);
        let xs = enc_vec(&ev, &kp, &x, Axis::Horizontal);
        let ys = enc_vec(&ev, &kp, &y, Axis::Vertical);
        let fp = forward_train(&ev, &em, &xs).unwrap();
        let lg = loss_grad(&ev, fp.output(), &ys, 1).unwrap();
        let g = backward(&ev, &em, &xs, &fp, &lg).unwrap();
        let a = m.forward(&x);
        let gw = crate::packing::unpack2d(
            &decrypt(&kp.secret, &g[0].weights.ct).unwrap(),
            &g[0].weights.layout,
        )
        .unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let expect = 2.0 * (a[r] - y[r]) * x[c];
                assert!((gw[(r, c)] - expect).abs() < 1e-12);
            }
        }
        let gb = open(&kp, &g[0].bias);
        for r in 0..2 {
            assert!((gb[r] - 2.0 * (a[r] - y[r])).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let (ev, kp) = small(30);
        let spec = NetworkSpec::new(vec![3, 4, 2]).unwrap();
        let m = init_model(&spec, cheb_fit_silu(3, (-4.0, 4.0)).unwrap(), 8, 1).unwrap();
        let em = encrypt_model(&ev, &m, &kp.public).unwrap();
        let x = enc_vec(&ev, &kp, &[0.3, 0.1, 0.9], Axis::Horizontal);
        let fp = forward_train(&ev, &em, &x).unwrap();
        let out = fp.output().clone();
        let lg = Packed {
            ct: ev.mult_plain(&out.ct, &vec![0.0; 64]).unwrap(),
            layout: out.layout,
        };
        let g = backward(&ev, &em, &x, &fp, &lg).unwrap();
        for lg in &g {
            assert!(decrypt(&kp.secret, &lg.weights.ct)
                .unwrap()
                .iter()
                .all(|&v| v == 0.0));
            assert!(decrypt(&kp.secret, &lg.bias.ct)
                .unwrap()
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn sgd_examples() {
        let (ev, kp) = small(10);
        let m = linear(vec![vec![1.0]], vec![0.5]);
        let em = encrypt_model(&ev, &m, &kp.public).unwrap();
        let grad = encrypt_model(&ev, &linear(vec![vec![2.0]], vec![0.0]), &kp.public).unwrap();
        let grads: Vec<LayerGrad> = grad
            .layers
            .iter()
            .map(|l| LayerGrad {
                weights: l.weights.clone(),
                bias: l.bias.clone(),
            })
            .collect();
        let stepped = sgd_update(&ev, &em, &grads, 0.5).unwrap();
        let plain = decrypt_model(&kp.secret, &stepped).unwrap();
        assert_eq!(plain.layers[0].weights[(0, 0)], 0.0);
        assert_eq!(plain.layers[0].bias, vec![0.5]);
        assert_eq!(stepped.min_level(), 10);
        // lr = 0 leaves the parameters alone
        let still = sgd_update(&ev, &em, &grads, 0.0).unwrap();
        assert_eq!(decrypt_model(&kp.secret, &still).unwrap().layers, m.layers);
    }

    #[test]
    fn update_clears_padding_junk() {
        let (ev, kp) = small(10);
        let m = linear(vec![vec![1.0, 2.0]], vec![0.0]);
        let em = encrypt_model(&ev, &m, &kp.public).unwrap();
        let junk = ev.encrypt(&kp.public, &vec![3.0; 64]).unwrap();
        let grads = vec![LayerGrad {
            weights: Packed {
                ct: junk.clone(),
                layout: em.layers[0].weights.layout,
            },
            bias: Packed {
                ct: junk,
                layout: em.layers[0].bias.layout,
            },
        }];
        let out = sgd_update(&ev, &em, &grads, 1.0).unwrap();
        let w = decrypt(&kp.secret, &out.layers[0].weights.ct).unwrap();
        let mask = out.layers[0].weights.layout.mask();
        for (v, m) in w.iter().zip(mask) {
            if m == 0.0 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn depth_audit_matches_observed_levels() {
        let big = 60;
        let params = HeParams {
            level_budget: big,
            ..HeParams::default()
        };
        let kp = KeyPair::generate(&params, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let ev = Evaluator::new(params).unwrap();
        let spec = NetworkSpec::default();
        let m = init_model(&spec, cheb_fit_silu(15, (-8.0, 8.0)).unwrap(), 32, 2).unwrap();
        let em = encrypt_model(&ev, &m, &kp.public).unwrap();
        let d = synth_generate(5, 21, 1, 1);
        let ed = encrypt_dataset(&ev, &d, &kp.public, spec.output_axis()).unwrap();
        let s = &ed.samples[0];
        let fp = forward_train(&ev, &em, &s.x).unwrap();
        let audit = DepthAudit::new(&spec, 15);
        for (k, (z, a)) in audit.forward.iter().enumerate() {
            assert_eq!(big - fp.pre[k].ct.level(), *z);
            assert_eq!(big - fp.act[k].ct.level(), *a);
        }
        let lg = loss_grad(&ev, fp.output(), &s.y, 1).unwrap();
        assert_eq!(big - lg.ct.level(), audit.loss_grad);
        let g = backward(&ev, &em, &s.x, &fp, &lg).unwrap();
        for (k, lg) in g.iter().enumerate() {
            assert_eq!(big - lg.weights.ct.level(), audit.weight_grad[k]);
            assert_eq!(big - lg.bias.ct.level(), audit.delta[k]);
        }
        let deepest = g
            .iter()
            .flat_map(|l| [l.weights.ct.level(), l.bias.ct.level()])
            .min()
            .unwrap();
        assert_eq!(big - deepest + 1, audit.step_depth());
        assert!(audit.step_depth() <= HeParams::default().level_budget);
    }

    #[test]
    fn budget_below_audit_fails_in_first_step() {
        let params = HeParams {
            level_budget: 28,
            ..HeParams::default()
        };
        let kp = KeyPair::generate(&params, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let ev = Evaluator::new(params).unwrap();
        let spec = NetworkSpec::default();
        let m = init_model(&spec, cheb_fit_silu(15, (-8.0, 8.0)).unwrap(), 32, 2).unwrap();
        let em = encrypt_model(&ev, &m, &kp.public).unwrap();
        let ed = encrypt_dataset(
            &ev,
            &synth_generate(5, 21, 2, 1),
            &kp.public,
            spec.output_axis(),
        )
        .unwrap();
        let cfg = TrainConfig {
            rounds: 1,
            he: params,
            ..TrainConfig::default()
        };
        let e = train(&ev, em, &ed, &cfg, None).unwrap_err();
        assert!(matches!(e, Error::LevelExhausted { .. }), "{e}");
    }

    #[test]
    fn zero_rounds_and_determinism() {
        let (ev, kp) = small(30);
        let spec = NetworkSpec::new(vec![4, 5, 2]).unwrap();
        let m = init_model(&spec, cheb_fit_silu(7, (-4.0, 4.0)).unwrap(), 8, 1).unwrap();
        let em = encrypt_model(&ev, &m, &kp.public).unwrap();
        let mut d = synth_generate(2, 4, 6, 3);
        d.classes.truncate(2);
        let ed = encrypt_dataset(&ev, &d, &kp.public, spec.output_axis()).unwrap();
        let mut cfg = TrainConfig {
            rounds: 0,
            batch: 4,
            lr: 0.3,
            ..TrainConfig::default()
        };
        let (same, trace) = train(&ev, em.clone(), &ed, &cfg, None).unwrap();
        assert_eq!(same, em);
        assert!(trace.rounds.is_empty());
        cfg.rounds = 2;
        let (a, ta) = train(&ev, em.clone(), &ed, &cfg, None).unwrap();
        let (b, _) = train(&ev, em.clone(), &ed, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            ta.rounds.iter().map(|r| r.iterations).collect::<Vec<_>>(),
            vec![3, 6]
        );
        let empty = ed.subset(&[]);
        assert!(matches!(
            train(&ev, em, &empty, &cfg, None),
            Err(Error::Batch(_))
        ));
    }

    #[test]
    fn separable_toy_loss_decreases() {
        let (ev, kp) = small(30);
        // two well separated clusters in the plane
        let rows: Vec<Vec<f64>> = (0..16)
            .map(|i| {
                let t = i as f64 / 16.0;
                if i % 2 == 0 {
                    vec![0.1 + 0.1 * t, 0.2]
                } else {
                    vec![0.8, 0.7 + 0.1 * t]
                }
            })
            .collect();
        let labels = (0..16).map(|i| i % 2).collect();
        let d = Dataset::new(rows, labels, vec!["a".into(), "b".into()]).unwrap();
        let spec = NetworkSpec::new(vec![2, 2]).unwrap();
        let m = init_model(&spec, ActivationPoly::identity(), 8, 4).unwrap();
        let sched = Schedule {
            batch: 16,
            lr: 0.1,
            shuffle_seed: 1,
        };
        let (_, plain) = plain_train_epochs(m.clone(), &d, &sched, 0..5, None).unwrap();
        let em = encrypt_model(&ev, &m, &kp.public).unwrap();
        let ed = encrypt_dataset(&ev, &d, &kp.public, spec.output_axis()).unwrap();
        let probe = Probe {
            sk: &kp.secret,
            test: &d,
        };
        let (_, stats) = train_epochs(&ev, em, &ed, &sched, 0..5, Some(&probe), 0).unwrap();
        let losses: Vec<f64> = stats.iter().map(|s| s.loss.unwrap()).collect();
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
        for (p, e) in plain.iter().zip(&stats) {
            assert!((p.loss.unwrap() - e.loss.unwrap()).abs() < 1e-12);
        }
    }
}
