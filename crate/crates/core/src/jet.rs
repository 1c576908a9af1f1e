//! Second-order forward-mode differentiation over the five per-step
//! variables `(x, y, ψ, v, ω)`.
//!
//! Feature formulas are written once against [`Real`] and evaluated either on
//! plain `f64` or on [`Jet`], which carries the gradient and Hessian along.

use core::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::Float;

pub const LOCAL_DIM: usize = 5;

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn atan(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    fn square(self) -> Self {
        self * self
    }

    /// `|self|`, with derivative `sign(self)` (taken as `+1` at zero).
    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Real for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        Float::exp(self)
    }
    fn atan(self) -> Self {
        Float::atan(self)
    }
    fn sin(self) -> Self {
        Float::sin(self)
    }
    fn cos(self) -> Self {
        Float::cos(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; LOCAL_DIM],
    pub h: [[f64; LOCAL_DIM]; LOCAL_DIM],
}

impl Jet {
    pub fn variable(value: f64, index: usize) -> Self {
        let mut g = [0.0; LOCAL_DIM];
        g[index] = 1.0;
        Self { v: value, g, h: [[0.0; LOCAL_DIM]; LOCAL_DIM] }
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v`.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Jet { v: f, g: [0.0; LOCAL_DIM], h: [[0.0; LOCAL_DIM]; LOCAL_DIM] };
        for i in 0..LOCAL_DIM {
            out.g[i] = df * self.g[i];
            for j in 0..LOCAL_DIM {
                out.h[i][j] = d2f * self.g[i] * self.g[j] + df * self.h[i][j];
            }
        }
        out
    }

    fn map(self, f: impl Fn(f64, f64) -> f64, other: Self) -> Self {
        let mut out = self;
        out.v = f(self.v, other.v);
        for i in 0..LOCAL_DIM {
            out.g[i] = f(self.g[i], other.g[i]);
            for j in 0..LOCAL_DIM {
                out.h[i][j] = f(self.h[i][j], other.h[i][j]);
            }
        }
        out
    }

    fn scale(self, s: f64) -> Self {
        let mut out = self;
        out.v *= s;
        for i in 0..LOCAL_DIM {
            out.g[i] *= s;
            for j in 0..LOCAL_DIM {
                out.h[i][j] *= s;
            }
        }
        out
    }

    fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        self.map(|a, b| a + b, rhs)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self.map(|a, b| a - b, rhs)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut out = Jet { v: self.v * rhs.v, g: [0.0; LOCAL_DIM], h: [[0.0; LOCAL_DIM]; LOCAL_DIM] };
        for i in 0..LOCAL_DIM {
            out.g[i] = self.g[i] * rhs.v + self.v * rhs.g[i];
            for j in 0..LOCAL_DIM {
                out.h[i][j] = self.h[i][j] * rhs.v + self.v * rhs.h[i][j] + self.g[i] * rhs.g[j] + rhs.g[i] * self.g[j];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.v += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.v -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self.scale(1.0 / rhs)
    }
}

impl Real for Jet {
    fn constant(v: f64) -> Self {
        Jet { v, g: [0.0; LOCAL_DIM], h: [[0.0; LOCAL_DIM]; LOCAL_DIM] }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = Float::exp(self.v);
        self.chain(e, e, e)
    }
    fn atan(self) -> Self {
        let t = self.v;
        let d = 1.0 / (1.0 + t * t);
        self.chain(Float::atan(t), d, -2.0 * t * d * d)
    }
    fn sin(self) -> Self {
        let (s, c) = Float::sin_cos(self.v);
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = Float::sin_cos(self.v);
        self.chain(c, -s, -c)
    }
}
