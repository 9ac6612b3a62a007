//! Polynomial stand-in for SiLU, fitted by Chebyshev interpolation and
//! evaluated slot-wise on ciphertexts.

use std::f64::consts::PI;

use crate::cipher::{Ciphertext, Evaluator};
use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 15;
pub const DEFAULT_DOMAIN: (f64, f64) = (-8.0, 8.0);

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Activation polynomial in the monomial basis, ascending powers of `x`,
/// together with its derivative.
#[derive(Debug, Clone)]
pub struct ActivationPoly {
    coeffs: Vec<f64>,
    deriv: Vec<f64>,
    domain: (f64, f64),
    fit_error: f64,
}

impl ActivationPoly {
    /// Uses `coeffs` (ascending powers) as-is. `fit_error` is left at 0.
    pub fn from_coeffs(coeffs: Vec<f64>, domain: (f64, f64)) -> Self {
        let coeffs = if coeffs.is_empty() { vec![0.0] } else { coeffs };
        let deriv = derivative(&coeffs);
        ActivationPoly {
            coeffs,
            deriv,
            domain,
            fit_error: 0.0,
        }
    }

    pub fn identity() -> Self {
        Self::from_coeffs(vec![0.0, 1.0], (-1.0, 1.0))
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn derivative_coeffs(&self) -> &[f64] {
        &self.deriv
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Max |p(x) - SiLU(x)| over the fit grid, 0 for hand-built polynomials.
    pub fn fit_error(&self) -> f64 {
        self.fit_error
    }

    pub fn eval(&self, x: f64) -> f64 {
        horner(&self.coeffs, x)
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        horner(&self.deriv, x)
    }
}

// The fit error is a diagnostic of how the coefficients were obtained and is
// not stored in model files.
impl PartialEq for ActivationPoly {
    fn eq(&self, other: &Self) -> bool {
        self.coeffs == other.coeffs && self.domain == other.domain
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

/// Chebyshev interpolation of SiLU at the `d + 1` Chebyshev nodes of
/// `[a, b]`, converted to monomial coefficients in `x`.
pub fn cheb_fit_silu(degree: usize, domain: (f64, f64)) -> Result<ActivationPoly> {
    let (a, b) = domain;
    if degree < 1 {
        return Err(Error::Params("activation degree must be at least 1".into()));
    }
    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Params(format!(
            "invalid activation domain [{a}, {b}]"
        )));
    }
    let n = degree + 1;
    let half_width = (b - a) / 2.0;
    let mid = (a + b) / 2.0;
    let samples: Vec<f64> = (0..n)
        .map(|j| silu(half_width * (PI * (j as f64 + 0.5) / n as f64).cos() + mid))
        .collect();
    let mut cheb: Vec<f64> = (0..n)
        .map(|k| {
            let s: f64 = samples
                .iter()
                .enumerate()
                .map(|(j, f)| f * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                .sum();
            2.0 * s / n as f64
        })
        .collect();
    cheb[0] /= 2.0;

    // Chebyshev series in t -> monomials in t, via T_{k+1} = 2t T_k - T_{k-1}.
    let mut in_t = vec![0.0; n];
    let mut prev = vec![0.0; n];
    let mut cur = vec![0.0; n];
    prev[0] = 1.0;
    if n > 1 {
        cur[1] = 1.0;
    }
    for (k, ck) in cheb.iter().enumerate() {
        let tk = match k {
            0 => &prev,
            1 => &cur,
            _ => {
                let mut next = vec![0.0; n];
                for i in 0..n - 1 {
                    next[i + 1] += 2.0 * cur[i];
                }
                for i in 0..n {
                    next[i] -= prev[i];
                }
                prev = std::mem::replace(&mut cur, next);
                &cur
            }
        };
        for (acc, t) in in_t.iter_mut().zip(tk) {
            *acc += ck * t;
        }
    }

    // t = alpha x + beta  =>  t^k = sum_i C(k,i) alpha^i beta^(k-i) x^i.
    let alpha = 1.0 / half_width;
    let beta = -mid / half_width;
    let mut coeffs = vec![0.0; n];
    for (k, mk) in in_t.iter().enumerate() {
        let mut binom = 1.0;
        for (i, c) in coeffs.iter_mut().enumerate().take(k + 1) {
            *c += mk * binom * alpha.powi(i as i32) * beta.powi((k - i) as i32);
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
    }

    let mut poly = ActivationPoly::from_coeffs(coeffs, domain);
    const GRID: usize = 4000;
    poly.fit_error = (0..=GRID)
        .map(|i| a + (b - a) * i as f64 / GRID as f64)
        .map(|x| (poly.eval(x) - silu(x)).abs())
        .fold(0.0, f64::max);
    Ok(poly)
}

fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Levels consumed by [`poly_eval_ct`] for a polynomial of degree `d`:
/// `ceil(log2 d)` for the power ladder plus one for the coefficient products.
pub fn poly_level_cost(degree: usize) -> u32 {
    ceil_log2(degree.max(1)) + 1
}

/// `x^1 ..= x^d` with `x^k` at depth `ceil(log2 k)`.
pub struct Powers {
    powers: Vec<Ciphertext>,
}

impl Powers {
    pub fn compute(ev: &Evaluator, x: &Ciphertext, degree: usize) -> Result<Self> {
        let degree = degree.max(1);
        let needed = ceil_log2(degree) + 1;
        if x.level() < needed {
            return Err(Error::LevelExhausted {
                op: "poly_eval",
                needed,
                available: x.level(),
            });
        }
        let mut powers: Vec<Ciphertext> = Vec::with_capacity(degree);
        powers.push(x.clone());
        for k in 2..=degree {
            let next = if k.is_power_of_two() {
                ev.square(&powers[k / 2 - 1])?
            } else {
                let high = 1 << (usize::BITS - 1 - k.leading_zeros());
                ev.mult(&powers[high - 1], &powers[k - high - 1])?
            };
            powers.push(next);
        }
        Ok(Powers { powers })
    }

    /// Evaluates `sum c_k x^k`; `coeffs.len() - 1` must not exceed the
    /// computed degree.
    pub fn eval(&self, ev: &Evaluator, coeffs: &[f64]) -> Result<Ciphertext> {
        assert!(
            coeffs.len() <= self.powers.len() + 1,
            "polynomial degree exceeds powers"
        );
        let mut acc = ev.mult_scalar(&self.powers[0], coeffs.get(1).copied().unwrap_or(0.0))?;
        for (p, c) in self.powers.iter().zip(coeffs.iter().skip(1)).skip(1) {
            let term = ev.mult_scalar(p, *c)?;
            ev.add_assign(&mut acc, &term)?;
        }
        ev.add_scalar(&acc, coeffs[0])
    }
}

/// Slot-wise `p(x)`.
pub fn poly_eval_ct(ev: &Evaluator, c: &Ciphertext, p: &ActivationPoly) -> Result<Ciphertext> {
    Powers::compute(ev, c, p.degree())?.eval(ev, p.coeffs())
}
