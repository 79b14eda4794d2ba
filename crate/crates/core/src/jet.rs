//! Second-order forward-mode derivatives in three variables.
//!
//! A [`Jet`] carries a value together with its exact gradient and Hessian,
//! so composite expressions are differentiated analytically.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Value, gradient and symmetric Hessian (`xx, xy, xz, yy, yz, zz`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
    pub h: [f64; 6],
}

const IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

impl Jet {
    pub const ZERO: Jet = Jet {
        v: 0.0,
        g: [0.0; 3],
        h: [0.0; 6],
    };

    pub fn constant(v: f64) -> Self {
        Jet { v, ..Jet::ZERO }
    }

    /// The independent variable `x_axis` with value `v`.
    pub fn variable(v: f64, axis: usize) -> Self {
        let mut g = [0.0; 3];
        g[axis] = 1.0;
        Jet { v, g, h: [0.0; 6] }
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[IDX[i][j]]
    }

    pub fn trace(&self) -> f64 {
        self.h[0] + self.h[3] + self.h[5]
    }

    pub fn scale(self, s: f64) -> Self {
        Jet {
            v: self.v * s,
            g: self.g.map(|x| x * s),
            h: self.h.map(|x| x * s),
        }
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let g = self.g;
        let outer = [
            g[0] * g[0],
            g[0] * g[1],
            g[0] * g[2],
            g[1] * g[1],
            g[1] * g[2],
            g[2] * g[2],
        ];
        let mut h = [0.0; 6];
        for k in 0..6 {
            h[k] = f1 * self.h[k] + f2 * outer[k];
        }
        Jet {
            v: f0,
            g: g.map(|x| f1 * x),
            h,
        }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn powi3(self) -> Self {
        let v = self.v;
        self.chain(v * v * v, 3.0 * v * v, 6.0 * v)
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        let mut r = self;
        r += o;
        r
    }
}

impl AddAssign for Jet {
    #[inline]
    fn add_assign(&mut self, o: Jet) {
        self.v += o.v;
        for k in 0..3 {
            self.g[k] += o.g[k];
        }
        for k in 0..6 {
            self.h[k] += o.h[k];
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self, o);
        let mut h = [0.0; 6];
        let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            h[k] = a.v * b.h[k] + b.v * a.h[k] + a.g[i] * b.g[j] + a.g[j] * b.g[i];
        }
        Jet {
            v: a.v * b.v,
            g: [0, 1, 2].map(|i| a.v * b.g[i] + b.v * a.g[i]),
            h,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}
