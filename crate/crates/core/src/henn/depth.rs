//! Static multiplicative-depth audit of one training step.

use super::activation::poly_level_cost;
use super::model::{weight_axis, NetworkSpec};
use crate::cipher::HeParams;
use crate::error::{Error, Result};
use crate::packing::Axis;

fn matvec_cost(w: Axis) -> u32 {
    match w {
        Axis::Horizontal => 2,
        Axis::Vertical => 1,
    }
}

fn transposed_cost(w: Axis) -> u32 {
    match w {
        Axis::Horizontal => 1,
        Axis::Vertical => 2,
    }
}

/// Levels consumed below a fresh ciphertext at each stage of a step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthAudit {
    /// `(pre-activation, activation)` per layer.
    pub forward: Vec<(u32, u32)>,
    pub loss_grad: u32,
    /// Backpropagated error per layer.
    pub delta: Vec<u32>,
    /// Weight gradient per layer.
    pub weight_grad: Vec<u32>,
    /// Deepest parameter just before bootstrap.
    pub update: u32,
}

impl DepthAudit {
    pub fn new(spec: &NetworkSpec, degree: usize) -> Self {
        let k = spec.num_layers();
        let act = poly_level_cost(degree);
        let der = poly_level_cost(degree.saturating_sub(1).max(1));
        let mut forward = Vec::with_capacity(k);
        let mut deriv = Vec::with_capacity(k);
        let mut h = 0;
        for i in 0..k {
            let z = h + matvec_cost(weight_axis(i));
            forward.push((z, z + act));
            deriv.push(z + der);
            h = z + act;
        }
        let loss_grad = h + 1;
        let mut delta = vec![0; k];
        delta[k - 1] = loss_grad.max(deriv[k - 1]) + 1;
        for i in (0..k - 1).rev() {
            let back = delta[i + 1] + transposed_cost(weight_axis(i + 1));
            delta[i] = back.max(deriv[i]) + 1;
        }
        let weight_grad: Vec<u32> = (0..k)
            .map(|i| {
                let input = if i == 0 { 0 } else { forward[i - 1].1 };
                delta[i].max(input) + 1
            })
            .collect();
        let update = weight_grad.iter().chain(&delta).max().copied().unwrap_or(0) + 1;
        DepthAudit {
            forward,
            loss_grad,
            delta,
            weight_grad,
            update,
        }
    }

    /// Levels needed between bootstraps for one forward, backward and update.
    pub fn step_depth(&self) -> u32 {
        self.update
    }

    /// Levels needed by encrypted inference.
    pub fn inference_depth(&self) -> u32 {
        self.forward.last().map_or(0, |f| f.1)
    }

    /// Errors when a training step cannot fit in the budget of `params`.
    pub fn check(&self, params: &HeParams) -> Result<()> {
        if self.update > params.level_budget {
            return Err(Error::LevelExhausted {
                op: "training step",
                needed: self.update,
                available: params.level_budget,
            });
        }
        Ok(())
    }
}
