//! Row/column SIMD packing of vectors and matrices and the packed
//! homomorphic matrix-vector product built on it.
//!
//! A ciphertext of `B` slots is viewed as `B/S` segments of `S` slots; slot
//! `g*S + j` is position `j` of segment `g`.
//!
//! * Horizontal (axis 0) vectors are zero-padded to `S` and replicated into
//!   every segment: slot `(g, j)` holds `x[j]`.
//! * Vertical (axis 1) vectors repeat each element across a segment:
//!   slot `(g, j)` holds `x[g]`.
//! * Matrices are padded to `S x S` and flattened row-major, transposed first
//!   when packed vertically.
//!
//! Multiplying a horizontal matrix by a horizontal vector and summing within
//! segments gives the product as a vertical vector; the vertical case sums
//! across segments and lands horizontally. Layers therefore alternate axes.

use crate::cipher::{Ciphertext, Evaluator};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Axis 0: replicated rows.
    Horizontal,
    /// Axis 1: repeated elements, transposed matrices.
    Vertical,
}

impl Axis {
    pub fn from_u8(v: u8) -> Result<Axis> {
        match v {
            0 => Ok(Axis::Horizontal),
            1 => Ok(Axis::Vertical),
            other => Err(Error::layout(format!("axis must be 0 or 1, got {other}"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Axis::Horizontal => 0,
            Axis::Vertical => 1,
        }
    }

    pub fn flip(self) -> Axis {
        match self {
            Axis::Horizontal => Axis::Vertical,
            Axis::Vertical => Axis::Horizontal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dims {
    Vector(usize),
    /// `(rows, cols)` of the logical matrix.
    Matrix(usize, usize),
}

/// Where a logical vector or matrix lives inside a ciphertext.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PackedLayout {
    pub axis: Axis,
    pub dims: Dims,
    pub segment: usize,
    pub slots: usize,
}

fn check_geometry(segment: usize, slots: usize) -> Result<()> {
    if segment == 0 || slots == 0 || slots % segment != 0 {
        return Err(Error::layout(format!(
            "segment width {segment} must divide ciphertext size {slots}"
        )));
    }
    Ok(())
}

impl PackedLayout {
    pub fn vector(len: usize, axis: Axis, segment: usize, slots: usize) -> Result<Self> {
        let l = PackedLayout {
            axis,
            dims: Dims::Vector(len),
            segment,
            slots,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn matrix(
        rows: usize,
        cols: usize,
        axis: Axis,
        segment: usize,
        slots: usize,
    ) -> Result<Self> {
        let l = PackedLayout {
            axis,
            dims: Dims::Matrix(rows, cols),
            segment,
            slots,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        check_geometry(self.segment, self.slots)?;
        let (s, b) = (self.segment, self.slots);
        match (self.dims, self.axis) {
            (Dims::Vector(n), Axis::Horizontal) if n > s => Err(Error::capacity(format!(
                "horizontal vector of length {n} exceeds segment width {s}"
            ))),
            (Dims::Vector(n), Axis::Vertical) if n > b / s => Err(Error::capacity(format!(
                "vertical vector of length {n} exceeds segment count {}",
                b / s
            ))),
            (Dims::Matrix(m, n), _) if m.max(n) > s => Err(Error::capacity(format!(
                "{m}x{n} matrix exceeds segment width {s}"
            ))),
            (Dims::Matrix(..), _) if s * s > b => Err(Error::capacity(format!(
                "{s}x{s} padded matrix does not fit in {b} slots"
            ))),
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        match self.dims {
            Dims::Vector(n) => n,
            Dims::Matrix(m, n) => m * n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Plaintext with 1 in every slot that belongs to the logical region
    /// (including replicas) and 0 elsewhere.
    pub fn mask(&self) -> Vec<f64> {
        match self.dims {
            Dims::Vector(n) => pack1d(&vec![1.0; n], self.axis, self.segment, self.slots),
            Dims::Matrix(m, n) => pack2d(
                &Matrix::from_vec(m, n, vec![1.0; m * n]),
                self.axis,
                self.segment,
                self.slots,
            ),
        }
        .expect("validated layout")
    }
}

/// Packs a vector along `axis` into `slots` values.
pub fn pack1d(x: &[f64], axis: Axis, segment: usize, slots: usize) -> Result<Vec<f64>> {
    PackedLayout::vector(x.len(), axis, segment, slots)?;
    let mut out = vec![0.0; slots];
    match axis {
        Axis::Horizontal => {
            for seg in out.chunks_exact_mut(segment) {
                seg[..x.len()].copy_from_slice(x);
            }
        }
        Axis::Vertical => {
            for (seg, &v) in out.chunks_exact_mut(segment).zip(x) {
                seg.fill(v);
            }
        }
    }
    Ok(out)
}

/// Packs an `m x n` matrix: transpose for the vertical axis, pad to `S x S`,
/// flatten row-major, pad to `slots`.
pub fn pack2d(w: &Matrix, axis: Axis, segment: usize, slots: usize) -> Result<Vec<f64>> {
    PackedLayout::matrix(w.rows(), w.cols(), axis, segment, slots)?;
    let src = match axis {
        Axis::Horizontal => w.clone(),
        Axis::Vertical => w.transpose(),
    };
    let mut out = vec![0.0; slots];
    for i in 0..src.rows() {
        out[i * segment..i * segment + src.cols()].copy_from_slice(src.row(i));
    }
    Ok(out)
}

fn check_unpack(v: &[f64], layout: &PackedLayout) -> Result<()> {
    layout
        .validate()
        .map_err(|e| Error::layout(e.to_string()))?;
    if v.len() != layout.slots {
        return Err(Error::layout(format!(
            "expected {} slots, got {}",
            layout.slots,
            v.len()
        )));
    }
    Ok(())
}

/// Reads a packed vector back out of its slots. Padding and replicas are
/// ignored.
pub fn unpack1d(v: &[f64], layout: &PackedLayout) -> Result<Vec<f64>> {
    check_unpack(v, layout)?;
    let Dims::Vector(n) = layout.dims else {
        return Err(Error::layout("unpack1d needs a vector layout"));
    };
    Ok(match layout.axis {
        Axis::Horizontal => v[..n].to_vec(),
        Axis::Vertical => (0..n).map(|g| v[g * layout.segment]).collect(),
    })
}

pub fn unpack2d(v: &[f64], layout: &PackedLayout) -> Result<Matrix> {
    check_unpack(v, layout)?;
    let Dims::Matrix(m, n) = layout.dims else {
        return Err(Error::layout("unpack2d needs a matrix layout"));
    };
    let s = layout.segment;
    let mut w = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            w[(i, j)] = match layout.axis {
                Axis::Horizontal => v[i * s + j],
                Axis::Vertical => v[j * s + i],
            };
        }
    }
    Ok(w)
}

fn check_power_of_two_segments(c: &Ciphertext, segment: usize) -> Result<()> {
    check_geometry(segment, c.len())?;
    if !segment.is_power_of_two() || !(c.len() / segment).is_power_of_two() {
        return Err(Error::layout(format!(
            "segment sums need power-of-two S and B/S (S={segment}, B={})",
            c.len()
        )));
    }
    Ok(())
}

/// Sums each segment and broadcasts the sum to every slot of that segment.
///
/// Rotate-and-add over strides 1..S/2 leaves each segment total in the
/// segment head; a head mask (one plaintext multiplication) clears the rest
/// and a second rotate-and-add pass spreads the head forward. Costs one level.
pub fn sum_cols(ev: &Evaluator, c: &Ciphertext, segment: usize) -> Result<Ciphertext> {
    check_power_of_two_segments(c, segment)?;
    if c.level() < 1 {
        return Err(Error::LevelExhausted {
            op: "sum_cols",
            needed: 1,
            available: c.level(),
        });
    }
    let mut acc = c.clone();
    let mut stride = 1;
    while stride < segment {
        let r = ev.rotate(&acc, stride as i64)?;
        ev.add_assign(&mut acc, &r)?;
        stride *= 2;
    }
    let heads: Vec<f64> = (0..c.len())
        .map(|i| if i % segment == 0 { 1.0 } else { 0.0 })
        .collect();
    acc = ev.mult_plain(&acc, &heads)?;
    let mut stride = 1;
    while stride < segment {
        let r = ev.rotate(&acc, -(stride as i64))?;
        ev.add_assign(&mut acc, &r)?;
        stride *= 2;
    }
    Ok(acc)
}

/// Element-wise sum across segments: slot `(g, j)` of the result is the sum
/// of slot `j` over all segments. Rotations only, no level cost.
pub fn sum_rows(ev: &Evaluator, c: &Ciphertext, segment: usize) -> Result<Ciphertext> {
    check_power_of_two_segments(c, segment)?;
    let mut acc = c.clone();
    let mut stride = segment;
    while stride < c.len() {
        let r = ev.rotate(&acc, stride as i64)?;
        ev.add_assign(&mut acc, &r)?;
        stride *= 2;
    }
    Ok(acc)
}

/// Encrypted `W * x` for raw ciphertexts. `w_ct` must be `pack2d(W, axis)`
/// and `x_ct` must be `pack1d(x, axis)` for the same `axis`; the result is
/// `W * x` packed on the opposite axis.
pub fn he_matvec(
    ev: &Evaluator,
    w_ct: &Ciphertext,
    x_ct: &Ciphertext,
    w_axis: Axis,
    segment: usize,
) -> Result<Ciphertext> {
    let prod = ev.mult(w_ct, x_ct)?;
    match w_axis {
        Axis::Horizontal => sum_cols(ev, &prod, segment),
        Axis::Vertical => sum_rows(ev, &prod, segment),
    }
}

/// Encrypted `W^T * g` where `g` is packed on the output axis of `W`. The
/// result lands on the axis of `W` itself.
pub fn he_matvec_transposed(
    ev: &Evaluator,
    w_ct: &Ciphertext,
    g_ct: &Ciphertext,
    w_axis: Axis,
    segment: usize,
) -> Result<Ciphertext> {
    let prod = ev.mult(g_ct, w_ct)?;
    match w_axis {
        Axis::Horizontal => sum_rows(ev, &prod, segment),
        Axis::Vertical => sum_cols(ev, &prod, segment),
    }
}

/// A ciphertext together with the layout of what it holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Packed {
    pub ct: Ciphertext,
    pub layout: PackedLayout,
}

impl Packed {
    pub fn axis(&self) -> Axis {
        self.layout.axis
    }
}

fn matrix_dims(p: &Packed) -> Result<(usize, usize)> {
    match p.layout.dims {
        Dims::Matrix(m, n) => Ok((m, n)),
        Dims::Vector(_) => Err(Error::layout("expected a packed matrix")),
    }
}

fn vector_len(p: &Packed) -> Result<usize> {
    match p.layout.dims {
        Dims::Vector(n) => Ok(n),
        Dims::Matrix(..) => Err(Error::layout("expected a packed vector")),
    }
}

/// Layout-checked `W * x`.
pub fn matvec(ev: &Evaluator, w: &Packed, x: &Packed) -> Result<Packed> {
    let (m, n) = matrix_dims(w)?;
    let len = vector_len(x)?;
    if w.axis() != x.axis() {
        return Err(Error::layout(format!(
            "weight packed on axis {} but input on axis {}",
            w.axis().as_u8(),
            x.axis().as_u8()
        )));
    }
    if len != n {
        return Err(Error::layout(format!(
            "{m}x{n} matrix times vector of length {len}"
        )));
    }
    let ct = he_matvec(ev, &w.ct, &x.ct, w.axis(), w.layout.segment)?;
    Ok(Packed {
        ct,
        layout: PackedLayout {
            axis: w.axis().flip(),
            dims: Dims::Vector(m),
            ..w.layout
        },
    })
}

/// Layout-checked `W^T * g`.
pub fn matvec_transposed(ev: &Evaluator, w: &Packed, g: &Packed) -> Result<Packed> {
    let (m, n) = matrix_dims(w)?;
    let len = vector_len(g)?;
    if g.axis() != w.axis().flip() || len != m {
        return Err(Error::layout(format!(
            "transposed product of {m}x{n} axis-{} matrix with length-{len} axis-{} vector",
            w.axis().as_u8(),
            g.axis().as_u8()
        )));
    }
    let ct = he_matvec_transposed(ev, &w.ct, &g.ct, w.axis(), w.layout.segment)?;
    Ok(Packed {
        ct,
        layout: PackedLayout {
            axis: w.axis(),
            dims: Dims::Vector(n),
            ..w.layout
        },
    })
}

/// Adds a bias packed on the same axis as `y`.
pub fn he_bias_add(ev: &Evaluator, y: &Packed, b: &Packed) -> Result<Packed> {
    if y.layout.axis != b.layout.axis || y.layout.dims != b.layout.dims {
        return Err(Error::layout(format!(
            "bias layout {:?} on axis {} does not match output {:?} on axis {}",
            b.layout.dims,
            b.axis().as_u8(),
            y.layout.dims,
            y.axis().as_u8()
        )));
    }
    Ok(Packed {
        ct: ev.add(&y.ct, &b.ct)?,
        layout: y.layout,
    })
}

/// Slot-wise `h ⊙ g` for `h` on a weight's axis and `g` on its output axis:
/// the outer product `g h^T` in the weight's own packed layout.
pub fn he_outer(ev: &Evaluator, g: &Packed, h: &Packed) -> Result<Packed> {
    let m = vector_len(g)?;
    let n = vector_len(h)?;
    if g.axis() != h.axis().flip() {
        return Err(Error::layout(
            "outer product operands must be on opposite axes",
        ));
    }
    let layout = PackedLayout::matrix(m, n, h.axis(), h.layout.segment, h.layout.slots)?;
    Ok(Packed {
        ct: ev.mult(&h.ct, &g.ct)?,
        layout,
    })
}
