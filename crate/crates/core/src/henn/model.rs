use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::activation::ActivationPoly;
use crate::cipher::{Evaluator, PublicKey, SecretKey};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::packing::{pack1d, pack2d, unpack1d, unpack2d, Axis, Packed, PackedLayout};

pub const DEFAULT_DIMS: [usize; 4] = [21, 32, 16, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Layer widths, input first: `[21, 32, 16, 5]` is three layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    dims: Vec<usize>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            dims: DEFAULT_DIMS.to_vec(),
        }
    }
}

impl NetworkSpec {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Params("a network needs at least one layer".into()));
        }
        if dims.contains(&0) {
            return Err(Error::Params("layer widths must be positive".into()));
        }
        Ok(NetworkSpec { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerSpec> + '_ {
        self.dims.windows(2).map(|w| LayerSpec {
            in_dim: w[0],
            out_dim: w[1],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Axis of the packed output of the last layer (and of the labels).
    pub fn output_axis(&self) -> Axis {
        weight_axis(self.num_layers() - 1).flip()
    }

    pub fn check_capacity(&self, segment: usize) -> Result<()> {
        match self.dims.iter().find(|&&d| d > segment) {
            Some(d) => Err(Error::capacity(format!(
                "layer width {d} exceeds segment width {segment}"
            ))),
            None => Ok(()),
        }
    }
}

/// Weight axis of the layer at zero-based `index`: odd-numbered layers
/// (1st, 3rd, ...) are packed horizontally, even-numbered ones vertically.
pub fn weight_axis(index: usize) -> Axis {
    if index % 2 == 0 {
        Axis::Horizontal
    } else {
        Axis::Vertical
    }
}

pub fn bias_axis(index: usize) -> Axis {
    weight_axis(index).flip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlainLayer {
    /// `out_dim x in_dim`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlainModel {
    pub spec: NetworkSpec,
    pub layers: Vec<PlainLayer>,
    pub activation: ActivationPoly,
}

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
pub fn init_model(
    spec: &NetworkSpec,
    activation: ActivationPoly,
    segment: usize,
    seed: u64,
) -> Result<PlainModel> {
    spec.check_capacity(segment)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let layers = spec
        .layers()
        .map(|l| {
            let bound = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
            let w = (0..l.in_dim * l.out_dim)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            PlainLayer {
                weights: Matrix::from_vec(l.out_dim, l.in_dim, w),
                bias: vec![0.0; l.out_dim],
            }
        })
        .collect();
    Ok(PlainModel {
        spec: spec.clone(),
        layers,
        activation,
    })
}

/// Pre-activations and activations of one plaintext forward pass.
#[derive(Debug, Clone)]
pub struct PlainTrace {
    pub pre: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
}

impl PlainModel {
    pub fn forward_trace(&self, x: &[f64]) -> PlainTrace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = act.last().map_or(x, Vec::as_slice);
            let z: Vec<f64> = layer
                .weights
                .matvec(input)
                .iter()
                .zip(&layer.bias)
                .map(|(a, b)| a + b)
                .collect();
            act.push(z.iter().map(|&v| self.activation.eval(v)).collect());
            pre.push(z);
        }
        PlainTrace { pre, act }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).act.pop().unwrap_or_default()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.forward(x))
    }

    /// Flattened parameters, layer by layer, weights row-major then bias.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.as_mut_slice() {
                *w = it.next().expect("too few parameters");
            }
            for b in &mut l.bias {
                *b = it.next().expect("too few parameters");
            }
        }
        assert!(it.next().is_none(), "too many parameters");
    }
}

pub fn predict_plain(m: &PlainModel, x: &[f64]) -> usize {
    m.predict(x)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedLayer {
    pub weights: Packed,
    pub bias: Packed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedModel {
    pub spec: NetworkSpec,
    pub layers: Vec<EncryptedLayer>,
    pub activation: ActivationPoly,
}

impl EncryptedModel {
    /// Smallest level over all parameter ciphertexts.
    pub fn min_level(&self) -> u32 {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.ct.level(), l.bias.ct.level()])
            .min()
            .unwrap_or(0)
    }
}

pub fn layer_layouts(
    spec: &NetworkSpec,
    segment: usize,
    slots: usize,
) -> Result<Vec<(PackedLayout, PackedLayout)>> {
    spec.layers()
        .enumerate()
        .map(|(k, l)| {
            Ok((
                PackedLayout::matrix(l.out_dim, l.in_dim, weight_axis(k), segment, slots)?,
                PackedLayout::vector(l.out_dim, bias_axis(k), segment, slots)?,
            ))
        })
        .collect()
}

pub fn encrypt_model(ev: &Evaluator, m: &PlainModel, pk: &PublicKey) -> Result<EncryptedModel> {
    let (s, b) = (ev.params().segment(), ev.slots());
    m.spec.check_capacity(s)?;
    let layouts = layer_layouts(&m.spec, s, b)?;
    let layers = m
        .layers
        .iter()
        .zip(layouts)
        .map(|(layer, (wl, bl))| {
            Ok(EncryptedLayer {
                weights: Packed {
                    ct: ev.encrypt(pk, &pack2d(&layer.weights, wl.axis, s, b)?)?,
                    layout: wl,
                },
                bias: Packed {
                    ct: ev.encrypt(pk, &pack1d(&layer.bias, bl.axis, s, b)?)?,
                    layout: bl,
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(EncryptedModel {
        spec: m.spec.clone(),
        layers,
        activation: m.activation.clone(),
    })
}

pub fn decrypt_model(sk: &SecretKey, m: &EncryptedModel) -> Result<PlainModel> {
    let layers = m
        .layers
        .iter()
        .map(|l| {
            Ok(PlainLayer {
                weights: unpack2d(
                    &crate::cipher::decrypt(sk, &l.weights.ct)?,
                    &l.weights.layout,
                )?,
                bias: unpack1d(&crate::cipher::decrypt(sk, &l.bias.ct)?, &l.bias.layout)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PlainModel {
        spec: m.spec.clone(),
        layers,
        activation: m.activation.clone(),
    })
}
