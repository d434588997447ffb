//! Second-order forward-mode jets in three variables.
//!
//! A [`Jet2`] carries the value, gradient and Hessian of a scalar function at
//! a point. Arithmetic propagates all three exactly (up to round-off), which is
//! the truncated Taylor algebra of nested dual numbers of order two.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Index into the packed upper triangle `[xx, xy, xz, yy, yz, zz]`.
#[inline]
const fn tri(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    match (a, b) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

/// Value, gradient and symmetric Hessian of a scalar at a point.
///
/// The Hessian is stored as a packed upper triangle, so `hess(i, j)` and
/// `hess(j, i)` read the same slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 3],
    hess: [f64; 6],
}

impl Jet2 {
    pub const fn constant(value: f64) -> Self {
        Self { value, grad: [0.0; 3], hess: [0.0; 6] }
    }

    /// The coordinate function `x_axis` evaluated at `value`.
    pub fn variable(axis: usize, value: f64) -> Self {
        let mut grad = [0.0; 3];
        grad[axis] = 1.0;
        Self { value, grad, hess: [0.0; 6] }
    }

    pub fn from_parts(value: f64, grad: [f64; 3], hess: [[f64; 3]; 3]) -> Self {
        let mut packed = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                packed[tri(i, j)] = hess[i][j];
            }
        }
        Self { value, grad, hess: packed }
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[tri(i, j)]
    }

    pub fn hessian(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.hess(i, j);
            }
        }
        out
    }

    /// Partial derivative along `axis`, as a jet one order lower. The Hessian
    /// of the result would need third derivatives and is poisoned with NaN.
    pub fn partial(&self, axis: usize) -> Self {
        let mut grad = [0.0; 3];
        for (j, g) in grad.iter_mut().enumerate() {
            *g = self.hess(axis, j);
        }
        Self { value: self.grad[axis], grad, hess: [f64::NAN; 6] }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }

    /// Chain rule for a univariate function with derivatives `d1`, `d2` at
    /// `self.value`.
    #[inline]
    pub fn chain(&self, f0: f64, d1: f64, d2: f64) -> Self {
        let g = self.grad;
        let mut grad = [0.0; 3];
        for i in 0..3 {
            grad[i] = d1 * g[i];
        }
        let mut hess = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                let k = tri(i, j);
                hess[k] = d1 * self.hess[k] + d2 * g[i] * g[j];
            }
        }
        Self { value: f0, grad, hess }
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = *self;
        out.value *= c;
        out.grad.iter_mut().for_each(|g| *g *= c);
        out.hess.iter_mut().for_each(|h| *h *= c);
        out
    }

    pub fn recip(&self) -> Self {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn powi(&self, n: i32) -> Self {
        match n {
            0 => Self::constant(1.0),
            1 => *self,
            _ if n < 0 => self.powi(-n).recip(),
            _ => {
                // repeated squaring keeps the product rule exact
                let mut base = *self;
                let mut acc = Self::constant(1.0);
                let mut e = n as u32;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = acc * base;
                    }
                    base = base * base;
                    e >>= 1;
                }
                acc
            }
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, o: Jet2) -> Jet2 {
        let mut r = self;
        r.value += o.value;
        for i in 0..3 {
            r.grad[i] += o.grad[i];
        }
        for k in 0..6 {
            r.hess[k] += o.hess[k];
        }
        r
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, o: Jet2) -> Jet2 {
        let mut r = self;
        r.value -= o.value;
        for i in 0..3 {
            r.grad[i] -= o.grad[i];
        }
        for k in 0..6 {
            r.hess[k] -= o.hess[k];
        }
        r
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    #[inline]
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, o: Jet2) -> Jet2 {
        let (a, b) = (self, o);
        let mut grad = [0.0; 3];
        for i in 0..3 {
            grad[i] = a.value * b.grad[i] + b.value * a.grad[i];
        }
        let mut hess = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                let k = tri(i, j);
                hess[k] = a.value * b.hess[k]
                    + b.value * a.hess[k]
                    + a.grad[i] * b.grad[j]
                    + a.grad[j] * b.grad[i];
            }
        }
        Jet2 { value: a.value * b.value, grad, hess }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[inline]
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}
