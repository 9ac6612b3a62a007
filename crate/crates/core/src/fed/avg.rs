use crate::cipher::{Ciphertext, Evaluator};
use crate::error::{Error, Result};
use crate::henn::EncryptedModel;

/// Encrypted FedAvg: every parameter becomes `Bootstrap((1/M) sum_m theta_m)`.
pub fn fedavg(ev: &Evaluator, models: &[EncryptedModel]) -> Result<EncryptedModel> {
    let first = models
        .first()
        .ok_or_else(|| Error::Protocol("fedavg needs at least one model".into()))?;
    for m in &models[1..] {
        let same_layouts = m.layers.len() == first.layers.len()
            && m.layers.iter().zip(&first.layers).all(|(a, b)| {
                a.weights.layout == b.weights.layout && a.bias.layout == b.bias.layout
            });
        if m.spec != first.spec || m.activation != first.activation || !same_layouts {
            return Err(Error::Incompatible(
                "models to average have different shapes".into(),
            ));
        }
    }
    let inv = 1.0 / models.len() as f64;
    let mean = |pick: &dyn Fn(&EncryptedModel) -> &Ciphertext| -> Result<Ciphertext> {
        let mut acc = pick(first).clone();
        for m in &models[1..] {
            ev.add_assign(&mut acc, pick(m))?;
        }
        ev.bootstrap(&ev.mult_scalar(&acc, inv)?)
    };
    let mut out = first.clone();
    for (k, layer) in out.layers.iter_mut().enumerate() {
        layer.weights.ct = mean(&|m| &m.layers[k].weights.ct)?;
        layer.bias.ct = mean(&|m| &m.layers[k].bias.ct)?;
    }
    Ok(out)
}
