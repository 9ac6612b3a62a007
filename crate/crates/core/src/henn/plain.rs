//! Plaintext mirror of the encrypted training loop, used as the reference
//! for parity checks and for gradient checking.

use std::ops::Range;

use super::model::{PlainLayer, PlainModel};
use super::train::{RoundStats, Schedule};
use crate::data::{evaluate, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-sample loss `sum_c (a_c - y_c)^2`, averaged over the samples.
pub fn plain_loss(m: &PlainModel, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            m.forward(x)
                .iter()
                .zip(y)
                .map(|(a, y)| (a - y) * (a - y))
                .sum::<f64>()
        })
        .sum();
    total / xs.len() as f64
}

/// Gradient of [`plain_loss`] with respect to every layer's parameters.
pub fn plain_gradients(m: &PlainModel, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Vec<PlainLayer> {
    let bsz = xs.len() as f64;
    let mut acc: Vec<PlainLayer> = m
        .layers
        .iter()
        .map(|l| PlainLayer {
            weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
            bias: vec![0.0; l.bias.len()],
        })
        .collect();
    let p = &m.activation;
    for (x, y) in xs.iter().zip(ys) {
        let tr = m.forward_trace(x);
        let k = m.layers.len();
        let mut delta: Vec<f64> = tr.act[k - 1]
            .iter()
            .zip(y)
            .zip(&tr.pre[k - 1])
            .map(|((a, y), z)| 2.0 / bsz * (a - y) * p.eval_derivative(*z))
            .collect();
        for i in (0..k).rev() {
            let input = if i == 0 { x } else { &tr.act[i - 1] };
            let g = &mut acc[i];
            for (r, d) in delta.iter().enumerate() {
                for (c, h) in input.iter().enumerate() {
                    g.weights[(r, c)] += d * h;
                }
                g.bias[r] += d;
            }
            if i > 0 {
                delta = m.layers[i]
                    .weights
                    .matvec_transposed(&delta)
                    .iter()
                    .zip(&tr.pre[i - 1])
                    .map(|(v, z)| v * p.eval_derivative(*z))
                    .collect();
            }
        }
    }
    acc
}

pub fn plain_sgd_update(m: &mut PlainModel, grads: &[PlainLayer], lr: f64) {
    for (l, g) in m.layers.iter_mut().zip(grads) {
        for (w, d) in l
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(g.weights.as_slice())
        {
            *w -= lr * d;
        }
        for (b, d) in l.bias.iter_mut().zip(&g.bias) {
            *b -= lr * d;
        }
    }
}

/// Same epochs, batches and update rule as the encrypted trainer. When
/// `test` is given each epoch is scored on it.
pub fn plain_train_epochs(
    mut m: PlainModel,
    data: &Dataset,
    sched: &Schedule,
    epochs: Range<u64>,
    test: Option<&Dataset>,
) -> Result<(PlainModel, Vec<RoundStats>)> {
    if data.is_empty() {
        return Err(Error::Batch("cannot train on an empty dataset".into()));
    }
    let ys: Vec<Vec<f64>> = (0..data.len()).map(|i| data.one_hot(i)).collect();
    let mut stats = Vec::new();
    let mut iterations = 0;
    for epoch in epochs {
        let mut loss_sum = 0.0;
        for idx in sched.batches(data.len(), epoch) {
            let bx: Vec<Vec<f64>> = idx.iter().map(|&i| data.features[i].clone()).collect();
            let by: Vec<Vec<f64>> = idx.iter().map(|&i| ys[i].clone()).collect();
            loss_sum += plain_loss(&m, &bx, &by) * idx.len() as f64;
            let g = plain_gradients(&m, &bx, &by);
            plain_sgd_update(&mut m, &g, sched.lr);
            iterations += 1;
        }
        let scores = match test {
            Some(t) => {
                let preds: Vec<usize> = t.features.iter().map(|x| m.predict(x)).collect();
                let r = evaluate(&preds, &t.labels, t.num_classes())?;
                Some((r.accuracy, r.hit_rate))
            }
            None => None,
        };
        stats.push(RoundStats {
            round: epoch as usize + 1,
            iterations,
            loss: Some(loss_sum / data.len() as f64),
            accuracy: scores.map(|s| s.0),
            hit_rate: scores.map(|s| s.1),
        });
    }
    Ok((m, stats))
}
