//! Double-double arithmetic for high-precision reference evaluations.
//!
//! A value is the unevaluated sum `hi + lo` of two `f64`s with `|lo| <= ulp(hi)/2`,
//! giving roughly 106 bits of significand. Finite-difference oracles evaluate
//! losses this way so that `L(θ+h) - L(θ-h)` carries no cancellation noise.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::Result;
use crate::nn::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct DoubleF64 {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: DoubleF64 = DoubleF64 {
    hi: std::f64::consts::LN_2,
    lo: 2.3190468138462996e-17,
};

impl DoubleF64 {
    pub const ZERO: DoubleF64 = DoubleF64 { hi: 0.0, lo: 0.0 };
    pub const ONE: DoubleF64 = DoubleF64 { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        Self::renorm(p, e + self.lo * b)
    }

    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Self {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        // x = k ln2 + r, then exp(r) = (exp(r / 32))^32.
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2.mul_f64(k)).ldexp(-5);
        let mut term = Self::ONE;
        let mut sum = Self::ONE;
        for i in 1..=24 {
            term = term * r / Self::new(i as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..5 {
            sum = sum * sum;
        }
        sum.ldexp(k as i32)
    }

    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return Self::new(f64::NAN);
        }
        let mut y = Self::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Self::ONE;
        }
        y
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl From<f64> for DoubleF64 {
    fn from(x: f64) -> Self {
        Self::new(x)
    }
}

impl Add for DoubleF64 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Self::renorm(s, e + f)
    }
}

impl Neg for DoubleF64 {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleF64 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleF64 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        Self::renorm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for DoubleF64 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o.mul_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o.mul_f64(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::new(q3)
    }
}

impl std::iter::Sum for DoubleF64 {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

/// Scalar-loop forward pass of `net` in double-double precision for one sample.
pub fn forward_exact(net: &Network, input: &[f64], head_extras: &[&[f64]]) -> Result<Vec<Vec<DoubleF64>>> {
    // Shape validation is shared with the fast path.
    net.predict_one(input, head_extras)?;
    let slope = DoubleF64::new(net.spec().leaky_slope);
    let mut x: Vec<DoubleF64> = input.iter().map(|&v| v.into()).collect();
    for layer in &net.params().trunk {
        x = affine_exact(&layer.weight, &layer.bias, &x)
            .into_iter()
            .map(|z| if z.hi > 0.0 { z } else { slope * z })
            .collect();
    }
    Ok(net
        .params()
        .heads
        .iter()
        .enumerate()
        .map(|(k, head)| {
            let mut h = x.clone();
            if let Some(e) = head_extras.get(k) {
                h.extend(e.iter().map(|&v| DoubleF64::new(v)));
            }
            affine_exact(&head.weight, &head.bias, &h)
        })
        .collect())
}

fn affine_exact(w: &ndarray::Array2<f64>, b: &ndarray::Array1<f64>, x: &[DoubleF64]) -> Vec<DoubleF64> {
    (0..w.ncols())
        .map(|j| {
            let mut acc = DoubleF64::new(b[j]);
            for (i, xi) in x.iter().enumerate() {
                acc = acc + xi.mul_f64(w[[i, j]]);
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: DoubleF64, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn arithmetic_recovers_lost_bits() {
        let third = DoubleF64::ONE / DoubleF64::new(3.0);
        let back = third * DoubleF64::new(3.0) - DoubleF64::ONE;
        assert!(back.to_f64().abs() < 1e-31);
        let tiny = DoubleF64::new(1.0) + DoubleF64::new(1e-20) - DoubleF64::new(1.0);
        assert!((tiny.to_f64() - 1e-20).abs() < 1e-35);
    }

    #[test]
    fn exp_and_ln_agree_with_f64_and_each_other() {
        for &x in &[-20.0, -1.0, -1e-3, 0.0, 0.5, 1.0, 3.7, 40.0] {
            let e = DoubleF64::new(x).exp();
            assert!(close(e, f64::exp(x), 1e-15), "exp({x})");
            let back = e.ln() - DoubleF64::new(x);
            assert!(back.to_f64().abs() < 1e-28, "ln(exp({x})) off by {}", back.to_f64());
        }
        let e1 = DoubleF64::ONE.exp();
        // e to 32 digits: 2.7182818284590452353602874713527
        let e_ref = DoubleF64 {
            hi: std::f64::consts::E,
            lo: 1.4456468917292502e-16,
        };
        let err = (e1 - e_ref).to_f64().abs();
        assert!(err < 5e-30, "{err:e}");
    }
}
