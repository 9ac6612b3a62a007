use rayon::prelude::*;

use super::dataset::{one_hot, Dataset};
use crate::cipher::{decrypt, Evaluator, PublicKey, SecretKey};
use crate::error::{Error, Result};
use crate::packing::{pack1d, unpack1d, Axis, Dims, Packed, PackedLayout};
use crate::wire::{Reader, Writer};

/// One encrypted sample: features packed horizontally, one-hot label packed
/// on the output axis of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedSample {
    pub x: Packed,
    pub y: Packed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedDataset {
    pub x_layout: PackedLayout,
    pub y_layout: PackedLayout,
    pub samples: Vec<EncryptedSample>,
}

impl EncryptedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> EncryptedDataset {
        EncryptedDataset {
            x_layout: self.x_layout,
            y_layout: self.y_layout,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

/// Packs and encrypts one feature row on the horizontal axis.
pub fn encrypt_features(ev: &Evaluator, pk: &PublicKey, row: &[f64]) -> Result<Packed> {
    let (s, b) = (ev.params().segment(), ev.slots());
    let layout = PackedLayout::vector(row.len(), Axis::Horizontal, s, b)?;
    Ok(Packed {
        ct: ev.encrypt(pk, &pack1d(row, Axis::Horizontal, s, b)?)?,
        layout,
    })
}

/// Encrypts every row: features on axis 0, one-hot labels on `label_axis`.
pub fn encrypt_dataset(
    ev: &Evaluator,
    d: &Dataset,
    pk: &PublicKey,
    label_axis: Axis,
) -> Result<EncryptedDataset> {
    let (s, b) = (ev.params().segment(), ev.slots());
    let x_layout = PackedLayout::vector(d.num_features(), Axis::Horizontal, s, b)?;
    let y_layout = PackedLayout::vector(d.num_classes(), label_axis, s, b)?;
    let samples = (0..d.len())
        .into_par_iter()
        .map(|i| {
            Ok(EncryptedSample {
                x: Packed {
                    ct: ev.encrypt(pk, &pack1d(&d.features[i], Axis::Horizontal, s, b)?)?,
                    layout: x_layout,
                },
                y: Packed {
                    ct: ev.encrypt(
                        pk,
                        &pack1d(&one_hot(d.labels[i], d.num_classes()), label_axis, s, b)?,
                    )?,
                    layout: y_layout,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncryptedDataset {
        x_layout,
        y_layout,
        samples,
    })
}

/// Rows of plaintext values.
pub type Rows = Vec<Vec<f64>>;

/// Decrypted feature rows and one-hot labels.
pub fn decrypt_dataset(sk: &SecretKey, d: &EncryptedDataset) -> Result<(Rows, Rows)> {
    d.samples
        .iter()
        .map(|s| {
            Ok((
                unpack1d(&decrypt(sk, &s.x.ct)?, &s.x.layout)?,
                unpack1d(&decrypt(sk, &s.y.ct)?, &s.y.layout)?,
            ))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

// "HEDATA01" | version u8 | count u32 | segment u32 | slots u32 |
// x axis u8 | x len u32 | y axis u8 | y len u32 | count x (x ct, y ct)
const DATA_MAGIC: &[u8; 8] = b"HEDATA01";
const DATA_VERSION: u8 = 1;

fn put_layout(out: &mut Vec<u8>, l: &PackedLayout) {
    out.put_u8(l.axis.as_u8());
    out.put_u32(l.len() as u32);
}

fn get_layout(r: &mut Reader, segment: usize, slots: usize) -> Result<PackedLayout> {
    let axis = Axis::from_u8(r.u8()?).map_err(|e| Error::format(e.to_string()))?;
    let n = r.u32()? as usize;
    PackedLayout::vector(n, axis, segment, slots).map_err(|e| Error::format(e.to_string()))
}

impl EncryptedDataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DATA_MAGIC);
        out.put_u8(DATA_VERSION);
        out.put_u32(self.samples.len() as u32);
        out.put_u32(self.x_layout.segment as u32);
        out.put_u32(self.x_layout.slots as u32);
        put_layout(&mut out, &self.x_layout);
        put_layout(&mut out, &self.y_layout);
        for s in &self.samples {
            out.put_ct(&s.x.ct);
            out.put_ct(&s.y.ct);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect(DATA_MAGIC, "dataset")?;
        let version = r.u8()?;
        if version != DATA_VERSION {
            return Err(Error::format(format!(
                "unsupported dataset version {version}"
            )));
        }
        let count = r.u32()? as usize;
        let segment = r.u32()? as usize;
        let slots = r.u32()? as usize;
        let x_layout = get_layout(&mut r, segment, slots)?;
        let y_layout = get_layout(&mut r, segment, slots)?;
        if !matches!(x_layout.dims, Dims::Vector(_)) || x_layout.axis != Axis::Horizontal {
            return Err(Error::format("features must be packed on axis 0"));
        }
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let x = r.ciphertext()?;
            let y = r.ciphertext()?;
            if x.len() != slots || y.len() != slots {
                return Err(Error::format(
                    "ciphertext size disagrees with dataset header",
                ));
            }
            samples.push(EncryptedSample {
                x: Packed {
                    ct: x,
                    layout: x_layout,
                },
                y: Packed {
                    ct: y,
                    layout: y_layout,
                },
            });
        }
        r.finish()?;
        Ok(EncryptedDataset {
            x_layout,
            y_layout,
            samples,
        })
    }
}
