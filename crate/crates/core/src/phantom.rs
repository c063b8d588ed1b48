//! Closed-form potentials used as ground truth.

use crate::error::{Error, Result};
use crate::forward::Potential;
use crate::mesh::Domain;
use crate::util::chi;

#[derive(Clone, Debug, PartialEq)]
pub struct Bump {
    pub centre: [f64; 3],
    pub width: f64,
    pub amplitude: f64,
    /// χ(|x − c|/cutoff) vanishes beyond twice this radius.
    pub cutoff: f64,
}

impl Bump {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let r2 = (0..3).map(|a| (x[a] - self.centre[a]).powi(2)).sum::<f64>();
        self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp() * chi(r2.sqrt() / self.cutoff)
    }

    pub fn support_radius(&self) -> f64 {
        2.0 * self.cutoff
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Zero,
    Constant(f64),
    Bumps(Vec<Bump>),
    /// c·sin²(πx₁/X₁)(1 + y/(2r)): nonzero on the lateral face, zero on the caps.
    Lateral { amplitude: f64, x1_extent: f64, radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub name: String,
    pub shape: Shape,
}

pub const NAMES: [&str; 5] = ["zero", "constant", "gauss-bump", "two-bumps", "boundary-nonzero"];

impl Phantom {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match &self.shape {
            Shape::Zero => 0.0,
            Shape::Constant(c) => *c,
            Shape::Bumps(b) => b.iter().map(|b| b.eval(x)).sum(),
            Shape::Lateral { amplitude, x1_extent, radius } => {
                amplitude * (std::f64::consts::PI * x[0] / x1_extent).sin().powi(2) * (1.0 + 0.5 * x[1] / radius)
            }
        }
    }

    pub fn sample(&self, d: &Domain) -> Potential {
        Potential::from_fn(d, |x| self.eval(x))
    }

    /// q̂(k, y) = ∫₀^{X₁} e^{−ik(x₁ − X₁/2)} q(x₁, y) dx₁ by quadrature.
    pub fn fourier_slice(&self, k: f64, y: [f64; 2], x1_extent: f64) -> num_complex::Complex64 {
        let c = 0.5 * x1_extent;
        crate::util::integrate(
            |x1| num_complex::Complex64::new(0.0, -k * (x1 - c)).exp() * self.eval([x1, y[0], y[1]]),
            0.0,
            x1_extent,
            32,
            8,
        )
    }

    /// Whether q vanishes on a neighbourhood of ∂M (zero extension is exact).
    pub fn vanishes_near_boundary(&self, d: &Domain) -> bool {
        match &self.shape {
            Shape::Zero => true,
            Shape::Constant(c) => *c == 0.0,
            Shape::Bumps(b) => b.iter().all(|b| {
                let rho = b.centre[1].hypot(b.centre[2]);
                let rad = b.support_radius();
                b.centre[0] - rad > 0.0 && b.centre[0] + rad < d.x1_extent && rho + rad < d.transversal_radius
            }),
            Shape::Lateral { amplitude, .. } => *amplitude == 0.0,
        }
    }
}

/// Library phantom by name; `c0` sets the constant phantom's value.
pub fn make_phantom(name: &str, d: &Domain, c0: f64) -> Result<Phantom> {
    let shape = match name {
        "zero" => Shape::Zero,
        "constant" => Shape::Constant(c0),
        "gauss-bump" => Shape::Bumps(vec![Bump { centre: [0.5, 0.2, 0.1], width: 0.15, amplitude: 0.05, cutoff: 0.22 }]),
        "two-bumps" => Shape::Bumps(vec![
            Bump { centre: [0.35, -0.2, 0.15], width: 0.1, amplitude: 0.04, cutoff: 0.15 },
            Bump { centre: [0.65, 0.25, -0.1], width: 0.1, amplitude: -0.03, cutoff: 0.15 },
        ]),
        "boundary-nonzero" => Shape::Lateral { amplitude: 0.02, x1_extent: d.x1_extent, radius: d.transversal_radius },
        _ => return Err(Error::UnknownPhantom(name.to_string())),
    };
    Ok(Phantom { name: name.to_string(), shape })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_domain, DomainConfig};

    fn domain() -> Domain {
        build_domain(&DomainConfig { x1_extent: 1.0, transversal_radius: 0.8, n1: 16, n_perp: 33 }).unwrap()
    }

    #[test]
    fn library_basics() {
        let d = domain();
        assert!(make_phantom("zero", &d, 0.0).unwrap().sample(&d).is_zero());
        let c = make_phantom("constant", &d, 1e-2).unwrap().sample(&d);
        assert!(c.values.iter().all(|&v| v == 0.01));
        assert!(matches!(make_phantom("shepp", &d, 0.0), Err(Error::UnknownPhantom(_))));
    }

    #[test]
    fn gauss_bump_vanishes_on_the_boundary() {
        let d = domain();
        let p = make_phantom("gauss-bump", &d, 0.0).unwrap();
        assert!(p.vanishes_near_boundary(&d));
        for b in &d.boundary_nodes {
            assert!(p.eval(b.pos).abs() <= 1e-9);
        }
        assert!((p.eval([0.5, 0.2, 0.1]) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn boundary_nonzero_is_flagged() {
        let d = domain();
        let p = make_phantom("boundary-nonzero", &d, 0.0).unwrap();
        assert!(!p.vanishes_near_boundary(&d));
        assert!(make_phantom("two-bumps", &d, 0.0).unwrap().vanishes_near_boundary(&d));
    }

    #[test]
    fn fourier_slice_of_constant_is_a_sinc() {
        let d = domain();
        let p = make_phantom("constant", &d, 0.5).unwrap();
        for k in [0.0f64, 1.5, 6.0] {
            let exact = if k == 0.0 { 0.5 } else { (k / 2.0).sin() / k };
            let v = p.fourier_slice(k, [0.1, 0.2], 1.0);
            assert!((v.re - exact).abs() < 1e-13 && v.im.abs() < 1e-13, "k = {k}: {v}");
        }
    }
}
