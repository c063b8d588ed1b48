//! Truncated bivariate Taylor arithmetic (total degree ≤ 4) with complex
//! coefficients, used to evaluate derivatives of closed-form beams exactly.

use num_complex::Complex64 as C64;
use std::ops::{Add, Mul, Neg, Sub};

pub const DEG: usize = 4;
const N: usize = (DEG + 1) * (DEG + 2) / 2;

fn idx(i: usize, j: usize) -> usize {
    // graded ordering: all terms of total degree k come after degree k-1
    let k = i + j;
    k * (k + 1) / 2 + j
}

/// Coefficients c_ij of a ↦ Σ c_ij a^i b^j around a base point (t₀, y₀).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    c: [C64; N],
}

impl Jet2 {
    pub fn constant(v: C64) -> Self {
        let mut c = [C64::new(0.0, 0.0); N];
        c[0] = v;
        Jet2 { c }
    }

    pub fn real(v: f64) -> Self {
        Self::constant(C64::new(v, 0.0))
    }

    /// The first variable t around t0.
    pub fn var_t(t0: f64) -> Self {
        let mut j = Self::real(t0);
        j.c[idx(1, 0)] = C64::new(1.0, 0.0);
        j
    }

    /// The second variable y around y0.
    pub fn var_y(y0: f64) -> Self {
        let mut j = Self::real(y0);
        j.c[idx(0, 1)] = C64::new(1.0, 0.0);
        j
    }

    pub fn coeff(&self, i: usize, j: usize) -> C64 {
        if i + j > DEG {
            C64::new(0.0, 0.0)
        } else {
            self.c[idx(i, j)]
        }
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    /// ∂_t^i ∂_y^j at the base point.
    pub fn derivative(&self, i: usize, j: usize) -> C64 {
        self.coeff(i, j) * (factorial(i) * factorial(j))
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut c = self.c;
        c.iter_mut().for_each(|v| *v *= a);
        Jet2 { c }
    }

    /// Σ_k f_k (x − x₀)^k, with f_k the Taylor coefficients of an outer function at x₀.
    pub fn compose(&self, f: &[C64; DEG + 1]) -> Self {
        let mut x = *self;
        x.c[0] = C64::new(0.0, 0.0);
        let mut out = Self::constant(f[0]);
        let mut pow = Self::real(1.0);
        for fk in f.iter().skip(1) {
            pow = pow * x;
            out = out + pow.scale(*fk);
        }
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        let mut f = [C64::new(0.0, 0.0); DEG + 1];
        for (k, v) in f.iter_mut().enumerate() {
            *v = e / factorial(k);
        }
        self.compose(&f)
    }

    pub fn recip(&self) -> Self {
        let a = self.c[0];
        let mut f = [C64::new(0.0, 0.0); DEG + 1];
        for (k, v) in f.iter_mut().enumerate() {
            *v = (-1.0f64).powi(k as i32) / a.powi(k as i32 + 1);
        }
        self.compose(&f)
    }

    /// Principal branch power z^p.
    pub fn powc(&self, p: C64) -> Self {
        let a = self.c[0];
        let mut f = [C64::new(0.0, 0.0); DEG + 1];
        let mut coef = C64::new(1.0, 0.0);
        for (k, v) in f.iter_mut().enumerate() {
            // binomial(p, k) a^{p-k}
            *v = coef * a.powc(p - k as f64);
            coef = coef * (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&f)
    }

    /// Transversal Laplacian ∂_t² + ∂_y²; lowers the valid degree by two.
    pub fn laplacian(&self) -> Self {
        let mut out = Self::real(0.0);
        for k in 0..=DEG - 2 {
            for i in 0..=k {
                let j = k - i;
                out.c[idx(i, j)] = self.coeff(i + 2, j) * ((i + 2) * (i + 1)) as f64
                    + self.coeff(i, j + 2) * ((j + 2) * (j + 1)) as f64;
            }
        }
        out
    }

    /// Drops terms above total degree `d`.
    pub fn truncate(&self, d: usize) -> Self {
        let mut out = *self;
        for k in d + 1..=DEG {
            for i in 0..=k {
                out.c[idx(i, k - i)] = C64::new(0.0, 0.0);
            }
        }
        out
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        let mut c = self.c;
        c.iter_mut().zip(o.c).for_each(|(a, b)| *a += b);
        Jet2 { c }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let mut c = [C64::new(0.0, 0.0); N];
        for k1 in 0..=DEG {
            for i1 in 0..=k1 {
                let a = self.c[idx(i1, k1 - i1)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for k2 in 0..=DEG - k1 {
                    for i2 in 0..=k2 {
                        c[idx(i1 + i2, k1 - i1 + k2 - i2)] += a * o.c[idx(i2, k2 - i2)];
                    }
                }
            }
        }
        Jet2 { c }
    }
}

/// Jet of the smooth bump χ(u) with u itself a jet.
pub fn chi_jet(u: &Jet2) -> Jet2 {
    let u0 = u.value().re;
    let a0 = u0.abs() - 1.0;
    if a0 <= 0.0 {
        return Jet2::real(1.0);
    }
    if a0 >= 1.0 {
        return Jet2::real(0.0);
    }
    let a = u.scale(C64::new(u0.signum(), 0.0)) - Jet2::real(1.0);
    let psi = |x: Jet2| (-x.recip()).exp();
    let p = psi(Jet2::real(1.0) - a);
    let q = psi(a);
    p * (p + q).recip()
}
