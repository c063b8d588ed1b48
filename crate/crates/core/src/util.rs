//! Small numerical utilities: seeded randomness, smooth cutoffs, quadrature.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_vec_c(n: usize, seed: u64) -> Vec<C64> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| C64::new(r.sample(StandardNormal), r.sample(StandardNormal)))
        .collect()
}

fn psi(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth bump: 1 on [-1, 1], 0 outside [-2, 2].
pub fn chi(u: f64) -> f64 {
    let a = u.abs() - 1.0;
    if a <= 0.0 {
        return 1.0;
    }
    if a >= 1.0 {
        return 0.0;
    }
    let p = psi(1.0 - a);
    p / (p + psi(a))
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Composite Gauss-Legendre quadrature of `f` over [a, b].
pub fn integrate<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> C64 {
    if b <= a {
        return C64::new(0.0, 0.0);
    }
    let (x, w) = gauss_legendre(order);
    let hp = (b - a) / panels as f64;
    let mut acc = C64::new(0.0, 0.0);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * hp;
        for (xi, wi) in x.iter().zip(&w) {
            acc += f(c + 0.5 * hp * xi) * (0.5 * hp * wi);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn chi_plateau_and_support() {
        assert_eq!(chi(0.3), 1.0);
        assert_eq!(chi(-1.0), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert!((chi(1.5) - 0.5).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn chi_is_even_and_bounded(u in -3.0f64..3.0) {
            let c = chi(u);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!((c - chi(-u)).abs() < 1e-15);
        }
    }
}
