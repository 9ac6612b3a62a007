//! Model files.
//!
//! ```text
//! "HEMODEL1" | version u8 | payload kind u8 (0 plain, 1 encrypted)
//! layer count u32 | dims (count + 1) x u32 | per layer: weight axis u8, bias axis u8
//! degree u32 | domain 2 x f64 | coefficients (degree + 1) x f64
//! plain:     per layer weights (row-major) then bias, f64 LE
//! encrypted: segment u32 | slots u32 | per layer weight ct, bias ct
//! ```

use std::path::Path;

use super::activation::ActivationPoly;
use super::model::{
    bias_axis, layer_layouts, weight_axis, EncryptedLayer, EncryptedModel, NetworkSpec, PlainLayer,
    PlainModel,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::packing::{Axis, Packed};
use crate::wire::{Reader, Writer};

const MODEL_MAGIC: &[u8; 8] = b"HEMODEL1";
const MODEL_VERSION: u8 = 1;
const KIND_PLAIN: u8 = 0;
const KIND_ENCRYPTED: u8 = 1;

/// Contents of a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Plain(PlainModel),
    Encrypted(EncryptedModel),
}

fn put_header(out: &mut Vec<u8>, kind: u8, spec: &NetworkSpec, act: &ActivationPoly) {
    out.extend_from_slice(MODEL_MAGIC);
    out.put_u8(MODEL_VERSION);
    out.put_u8(kind);
    out.put_u32(spec.num_layers() as u32);
    for d in spec.dims() {
        out.put_u32(*d as u32);
    }
    for k in 0..spec.num_layers() {
        out.put_u8(weight_axis(k).as_u8());
        out.put_u8(bias_axis(k).as_u8());
    }
    out.put_u32(act.degree() as u32);
    out.put_f64(act.domain().0);
    out.put_f64(act.domain().1);
    out.put_f64s(act.coeffs());
}

pub fn model_to_bytes(m: &ModelFile) -> Vec<u8> {
    let mut out = Vec::new();
    match m {
        ModelFile::Plain(p) => {
            put_header(&mut out, KIND_PLAIN, &p.spec, &p.activation);
            for l in &p.layers {
                out.put_f64s(l.weights.as_slice());
                out.put_f64s(&l.bias);
            }
        }
        ModelFile::Encrypted(e) => {
            put_header(&mut out, KIND_ENCRYPTED, &e.spec, &e.activation);
            let first = &e.layers[0].weights.layout;
            out.put_u32(first.segment as u32);
            out.put_u32(first.slots as u32);
            for l in &e.layers {
                out.put_ct(&l.weights.ct);
                out.put_ct(&l.bias.ct);
            }
        }
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelFile> {
    let mut r = Reader::new(bytes);
    r.expect(MODEL_MAGIC, "model")?;
    let version = r.u8()?;
    if version != MODEL_VERSION {
        return Err(Error::format(format!(
            "unsupported model version {version}"
        )));
    }
    let kind = r.u8()?;
    let layers = r.u32()? as usize;
    if layers == 0 || layers > 1024 {
        return Err(Error::format(format!("implausible layer count {layers}")));
    }
    let dims = (0..=layers)
        .map(|_| Ok(r.u32()? as usize))
        .collect::<Result<Vec<_>>>()?;
    let spec = NetworkSpec::new(dims).map_err(|e| Error::format(e.to_string()))?;
    for k in 0..layers {
        let w = Axis::from_u8(r.u8()?).map_err(|e| Error::format(e.to_string()))?;
        let b = Axis::from_u8(r.u8()?).map_err(|e| Error::format(e.to_string()))?;
        if w != weight_axis(k) || b != bias_axis(k) {
            return Err(Error::format(format!(
                "layer {k} axes ({}, {}) break the alternation rule",
                w.as_u8(),
                b.as_u8()
            )));
        }
    }
    let degree = r.u32()? as usize;
    if degree > 4096 {
        return Err(Error::format(format!(
            "implausible activation degree {degree}"
        )));
    }
    let domain = (r.f64()?, r.f64()?);
    let activation = ActivationPoly::from_coeffs(r.f64s(degree + 1)?, domain);
    let model = match kind {
        KIND_PLAIN => {
            let layers = spec
                .layers()
                .map(|l| {
                    Ok(PlainLayer {
                        weights: Matrix::from_vec(
                            l.out_dim,
                            l.in_dim,
                            r.f64s(l.out_dim * l.in_dim)?,
                        ),
                        bias: r.f64s(l.out_dim)?,
                    })
                })
                .collect::<Result<_>>()?;
            ModelFile::Plain(PlainModel {
                spec,
                layers,
                activation,
            })
        }
        KIND_ENCRYPTED => {
            let segment = r.u32()? as usize;
            let slots = r.u32()? as usize;
            let layouts =
                layer_layouts(&spec, segment, slots).map_err(|e| Error::format(e.to_string()))?;
            let layers = layouts
                .into_iter()
                .map(|(wl, bl)| {
                    let w = r.ciphertext()?;
                    let b = r.ciphertext()?;
                    if w.len() != slots
                        || b.len() != slots
                        || w.segment() != segment
                        || b.segment() != segment
                    {
                        return Err(Error::format(
                            "ciphertext geometry disagrees with model header",
                        ));
                    }
                    Ok(EncryptedLayer {
                        weights: Packed { ct: w, layout: wl },
                        bias: Packed { ct: b, layout: bl },
                    })
                })
                .collect::<Result<_>>()?;
            ModelFile::Encrypted(EncryptedModel {
                spec,
                layers,
                activation,
            })
        }
        k => return Err(Error::format(format!("unknown model payload kind {k}"))),
    };
    r.finish()?;
    Ok(model)
}

pub fn save_model(path: &Path, m: &ModelFile) -> Result<()> {
    std::fs::write(path, model_to_bytes(m))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    model_from_bytes(&std::fs::read(path)?)
}
