//! Gaussian-beam quasimodes on the transversal disk and the complex
//! geometric optics fields u₀, u₁, u₂ with their Green-operator remainders.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::carleman::{CarlemanParams, GreenPair};
use crate::error::{Error, Result};
use crate::forward::{Forward, Potential};
use crate::jet::{chi_jet, Jet2};
use crate::mesh::{Domain, Geodesic, ScalarField};
use crate::util::{chi, gauss_legendre};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeamKind {
    /// Paired with e^{−sx₁} (u₀, u₁).
    V,
    /// Paired with e^{sx₁} (u₂).
    W,
}

/// Closed-form beam on a chord: amplitude h^{−1/4}π^{−1/4} a(t) χ(y/δ) and
/// phase κt + s·H(t)y²/2 with H = 1/(t − L/2 − iβ) solving the Riccati equation
/// H' + H² = 0 of the flat disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamShape {
    pub geodesic: Geodesic,
    pub h: f64,
    pub lambda: f64,
    /// Waist parameter of the Hessian.
    pub beta: f64,
    /// Cutoff width.
    pub delta: f64,
}

impl BeamShape {
    /// `radius` is the radius of the disk the beam is focused on (β is half the chord inside it).
    pub fn new(g: &Geodesic, p: &CarlemanParams, radius: f64) -> Result<Self> {
        if !g.non_tangential || g.offset.abs() >= 1.0 {
            return Err(Error::Tangential(g.offset.abs()));
        }
        let half = (radius * radius - g.offset * g.offset).max(0.0).sqrt();
        Ok(BeamShape {
            geodesic: *g,
            h: p.h,
            lambda: p.lambda,
            beta: half.max(0.25 * radius),
            delta: 6.0 * p.h.sqrt(),
        })
    }

    pub fn s(&self) -> C64 {
        C64::new(1.0 / self.h, self.lambda)
    }

    fn norm_const(&self) -> f64 {
        self.h.powf(-0.25) * PI.powf(-0.25)
    }

    /// Beam value at chord coordinates (t, y) with plane-wave number κ.
    pub fn eval(&self, t: f64, y: f64, kappa: C64) -> C64 {
        let c = chi(y / self.delta);
        if c == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let tp = t - 0.5 * self.geodesic.length;
        let b = self.beta;
        let hess = C64::new(tp, -b).inv();
        let amp = b.powf(0.25) * C64::new(b, tp).powc(C64::new(-0.5, 0.0));
        let phase = kappa * t + self.s() * hess * (0.5 * y * y);
        (C64::i() * phase).exp() * amp * (c * self.norm_const())
    }

    /// Taylor jet of the beam at (t, y).
    pub fn jet(&self, t: f64, y: f64, kappa: C64) -> Jet2 {
        let tj = Jet2::var_t(t);
        let yj = Jet2::var_y(y);
        let tp = tj - Jet2::real(0.5 * self.geodesic.length);
        let b = self.beta;
        let hess = (tp - Jet2::constant(C64::new(0.0, b))).recip();
        let amp = (Jet2::real(b) + tp.scale(C64::i())).powc(C64::new(-0.5, 0.0)).scale(C64::new(b.powf(0.25), 0.0));
        let phase = tj.scale(kappa) + (hess * yj * yj).scale(self.s() * 0.5);
        let cut = chi_jet(&yj.scale(C64::new(1.0 / self.delta, 0.0)));
        (phase.scale(C64::i())).exp() * amp * cut.scale(C64::new(self.norm_const(), 0.0))
    }

    /// Transversal point → chord coordinates.
    pub fn frame(&self, x: [f64; 2]) -> (f64, f64) {
        self.geodesic.frame(x)
    }
}

/// Discrete plane-wave number: 4 sinh²(s·dx₁/2)/dx₁² = Σ_j 4 sin²(κ τ_j dy/2)/dy².
pub fn kappa_grid(s: C64, theta: f64, dx1: f64, dy: f64) -> C64 {
    let lhs = (s * (0.5 * dx1)).sinh().powi(2) * (4.0 / (dx1 * dx1));
    let (sn, cs) = theta.sin_cos();
    let mut k = s;
    for _ in 0..60 {
        let f = ((k * (cs * dy * 0.5)).sin().powi(2) + (k * (sn * dy * 0.5)).sin().powi(2)) * (4.0 / (dy * dy)) - lhs;
        let df = ((k * (cs * dy)).sin() * (2.0 * cs) + (k * (sn * dy)).sin() * (2.0 * sn)) / dy;
        let step = f / df;
        k -= step;
        if step.norm() < 1e-15 * k.norm() {
            break;
        }
    }
    k
}

/// Beam sampled on every node of a domain.
#[derive(Clone, Debug)]
pub struct GaussianBeam {
    pub shape: BeamShape,
    pub kind: BeamKind,
    pub kappa: C64,
    pub field: ScalarField,
}

pub fn gaussian_beam(d: &Domain, g: &Geodesic, p: &CarlemanParams, kind: BeamKind) -> Result<GaussianBeam> {
    let shape = BeamShape::new(g, p, d.transversal_radius)?;
    let kappa = kappa_grid(p.s(), g.theta, d.dx1, d.dy);
    let field = ScalarField::from_fn(d, |x| {
        let (t, y) = shape.frame([x[1], x[2]]);
        shape.eval(t, y, kappa)
    });
    Ok(GaussianBeam { shape, kind, kappa, field })
}

impl GaussianBeam {
    /// Max |beam| over nodes farther than 3δ from the chord.
    pub fn outside_tube(&self, d: &Domain) -> f64 {
        d.pos
            .iter()
            .zip(&self.field.values)
            .filter(|(x, _)| self.shape.frame([x[1], x[2]]).1.abs() > 3.0 * self.shape.delta)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }
}

/// Gauss-Legendre quadrature over the part of the disk of radius `radius`
/// inside the cutoff strip, in chord coordinates.
fn strip_quadrature<F: FnMut(f64, f64, f64)>(shape: &BeamShape, radius: f64, panels: usize, mut f: F) {
    let g = &shape.geodesic;
    let (x, w) = gauss_legendre(8);
    let ylo = (-2.0 * shape.delta).max(-radius - g.offset);
    let yhi = (2.0 * shape.delta).min(radius - g.offset);
    if yhi <= ylo {
        return;
    }
    let hy = (yhi - ylo) / panels as f64;
    for py in 0..panels {
        for (xi, wi) in x.iter().zip(&w) {
            let y = ylo + (py as f64 + 0.5 + 0.5 * xi) * hy;
            let wy = 0.5 * hy * wi;
            let rr = radius * radius - (g.offset + y).powi(2);
            if rr <= 0.0 {
                continue;
            }
            let half = rr.sqrt();
            let (a, b) = (0.5 * g.length - half, 0.5 * g.length + half);
            let ht = (b - a) / panels as f64;
            for pt in 0..panels {
                for (xj, wj) in x.iter().zip(&w) {
                    let t = a + (pt as f64 + 0.5 + 0.5 * xj) * ht;
                    f(t, y, wy * 0.5 * ht * wj);
                }
            }
        }
    }
}

/// ‖e^{sx₁}(h²Δ)²e^{−sx₁}v‖_{L²(M)} = h⁴‖(Δ′ + s²)²v‖ · √X₁, evaluated with exact derivatives.
pub fn beam_residual(shape: &BeamShape, radius: f64, x1_extent: f64) -> f64 {
    let s = shape.s();
    let s2 = s * s;
    let h4 = shape.h.powi(4);
    let mut acc = 0.0;
    strip_quadrature(shape, radius, 48, |t, y, w| {
        let j = shape.jet(t, y, s);
        let first = j.laplacian() + j.truncate(2).scale(s2);
        let second = first.laplacian().value() + first.value() * s2;
        acc += w * (second * h4).norm_sqr();
    });
    (acc * x1_extent).sqrt()
}

/// Semiclassical H¹ norm (‖v‖² + ‖h∇v‖²)^{1/2} over M.
pub fn h1_scl_norm(shape: &BeamShape, radius: f64, x1_extent: f64) -> f64 {
    let s = shape.s();
    let h = shape.h;
    let mut acc = 0.0;
    strip_quadrature(shape, radius, 48, |t, y, w| {
        let j = shape.jet(t, y, s);
        let v = j.value().norm_sqr();
        let g = j.derivative(1, 0).norm_sqr() + j.derivative(0, 1).norm_sqr();
        acc += w * (v + h * h * g);
    });
    (acc * x1_extent).sqrt()
}

/// Slice integral ∫_{M₀} v w̄ ψ and the line integral ∫₀^L e^{−2λt} ψ(γ(t)) dt.
pub fn concentration_check<F: Fn([f64; 2]) -> f64>(v: &BeamShape, w: &BeamShape, psi: F) -> (f64, f64) {
    let s = v.s();
    let mut slice = C64::new(0.0, 0.0);
    strip_quadrature(v, 1.0, 64, |t, y, wt| {
        let x = point(&v.geodesic, t, y);
        let p = psi(x);
        if p != 0.0 {
            slice += v.eval(t, y, s) * w.eval(t, y, s).conj() * (p * wt);
        }
    });
    let g = &v.geodesic;
    let line = crate::util::integrate(
        |t| C64::new((-2.0 * v.lambda * t).exp() * psi(g.point(t)), 0.0),
        0.0,
        g.length,
        64,
        8,
    );
    (slice.re, line.re)
}

fn point(g: &Geodesic, t: f64, y: f64) -> [f64; 2] {
    let x = g.point(t);
    let n = g.normal();
    [x[0] + y * n[0], x[1] + y * n[1]]
}

/// A CGO field with its remainder r̃ and diagnostics.
#[derive(Clone, Debug)]
pub struct Cgo {
    pub field: ScalarField,
    pub remainder: ScalarField,
    /// h⁴‖(Δ_h² + q)u‖ / ‖u‖ over interior nodes.
    pub pde_residual: f64,
    pub remainder_norm: f64,
    pub iterations: usize,
}

fn interior_norm(d: &Domain, v: &[C64]) -> f64 {
    (v[..d.n_interior].iter().map(|z| z.norm_sqr()).sum::<f64>() * d.node_weight()).sqrt()
}

fn relative_residual(fwd: &Forward, q: &Potential, u: &ScalarField, h: f64) -> f64 {
    let d = &fwd.domain;
    let r = fwd.apply(q, u);
    let nr = (r.iter().map(|z| z.norm_sqr()).sum::<f64>() * d.node_weight()).sqrt();
    h.powi(4) * nr / interior_norm(d, &u.values)
}

/// u = e^{∓sx₁}(beam + r̃) with r̃ = e^{±iλx₁} G²_{±φ} r and
/// r = −e^{∓iλx₁} e^{±sx₁} h⁴ Δ_h²(e^{∓sx₁} beam); sign + gives u₀, − gives u₂.
/// All beams share one blocked G² application.
fn build_conjugated(fwd: &Forward, pair: &GreenPair, p: &CarlemanParams, beams: &[&GaussianBeam], sign: f64) -> Vec<Cgo> {
    let d = &fwd.domain;
    let n2 = d.n_interior;
    let n0 = d.n_nodes();
    let h = p.h;
    let s = p.s();
    let x1c = d.x1_centred();
    let e: Vec<C64> = x1c.iter().map(|&x| (-s * (sign * x)).exp()).collect();
    let zero = Potential::zero(d);
    let mut block = Mat::<f64>::zeros(n0, 2 * beams.len());
    for (b, beam) in beams.iter().enumerate() {
        let ev = ScalarField { values: e.iter().zip(&beam.field.values).map(|(a, b)| a * b).collect() };
        let aev = fwd.apply(&zero, &ev);
        for k in 0..n2 {
            let r = -aev[k] * (h.powi(4) * (sign * x1c[k] / h).exp());
            block[(k, 2 * b)] = r.re;
            block[(k, 2 * b + 1)] = r.im;
        }
    }
    let g2 = pair.operator(sign).squared_block(&block);
    beams
        .iter()
        .enumerate()
        .map(|(b, beam)| {
            let rt: Vec<C64> = (0..n0)
                .map(|k| C64::new(g2[(k, 2 * b)], g2[(k, 2 * b + 1)]) * C64::new(0.0, sign * p.lambda * x1c[k]).exp())
                .collect();
            let field = ScalarField {
                values: (0..n0).map(|k| e[k] * (beam.field.values[k] + rt[k])).collect(),
            };
            let remainder = ScalarField { values: rt };
            Cgo {
                pde_residual: relative_residual(fwd, &zero, &field, h),
                remainder_norm: interior_norm(d, &remainder.values),
                field,
                remainder,
                iterations: 0,
            }
        })
        .collect()
}

pub fn build_u0(fwd: &Forward, pair: &GreenPair, p: &CarlemanParams, beam: &GaussianBeam) -> Cgo {
    build_conjugated(fwd, pair, p, &[beam], 1.0).pop().unwrap()
}

pub fn build_u2(fwd: &Forward, pair: &GreenPair, p: &CarlemanParams, beam: &GaussianBeam) -> Cgo {
    build_conjugated(fwd, pair, p, &[beam], -1.0).pop().unwrap()
}

/// u₀ for several beams at the same (h, λ).
pub fn build_u0_batch(fwd: &Forward, pair: &GreenPair, p: &CarlemanParams, beams: &[&GaussianBeam]) -> Vec<Cgo> {
    build_conjugated(fwd, pair, p, beams, 1.0)
}

/// u₂ from u₀ through the reflection x₁ ↦ X₁ − x₁, exact when the grid is symmetric.
pub fn reflect_x1(d: &Domain, u: &ScalarField) -> Result<ScalarField> {
    let last = d.dims[0] - 1;
    let mut out = ScalarField::zeros(d);
    for (n, c) in d.cells.iter().enumerate() {
        let m = d.node_at([last - c[0], c[1], c[2]], [0, 0, 0]).ok_or(Error::Domain("grid not symmetric in x1".into()))?;
        out.values[n] = u.values[m];
    }
    Ok(out)
}

/// u₁ = u₀ + T y with (1 + h⁴ q T) y = −h⁴ q u₀, T = e^{−φ/h} G_φ² e^{φ/h}.
pub fn build_u1(fwd: &Forward, pair: &GreenPair, q: &Potential, p: &CarlemanParams, u0: &Cgo) -> Result<Cgo> {
    crate::trace::touch("u1");
    if !q.is_zero() {
        crate::trace::touch("potential");
    }
    let d = &fwd.domain;
    let n2 = d.n_interior;
    let h4 = p.h.powi(4);
    let g = pair.operator(1.0);
    if q.is_zero() {
        return Ok(Cgo {
            field: u0.field.clone(),
            remainder: ScalarField::zeros(d),
            pde_residual: u0.pde_residual,
            remainder_norm: 0.0,
            iterations: 0,
        });
    }
    let source = |u: &[C64]| -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); d.n_nodes()];
        for k in 0..n2 {
            y[k] = -u[k] * (h4 * q.values[k]);
        }
        y
    };
    let mut u = u0.field.values.clone();
    let mut last = f64::INFINITY;
    let mut iterations = 0;
    let scale = crate::linalg::norm2_c(&u0.field.values);
    for it in 1..=60 {
        let ty = g.transported_squared_c(&source(&u));
        let next: Vec<C64> = u0.field.values.iter().zip(&ty).map(|(a, b)| a + b).collect();
        let change = crate::linalg::diff_norm_c(&next, &u) / scale;
        u = next;
        iterations = it;
        if change < 1e-15 {
            break;
        }
        if change > last && it > 3 {
            return Err(Error::Ladder(change));
        }
        last = change;
    }
    let field = ScalarField { values: u };
    let x1c = d.x1_centred();
    let s = p.s();
    let remainder = ScalarField {
        values: (0..d.n_nodes())
            .map(|k| (field.values[k] - u0.field.values[k]) * (s * x1c[k]).exp())
            .collect(),
    };
    Ok(Cgo {
        pde_residual: relative_residual(fwd, q, &field, p.h),
        remainder_norm: interior_norm(d, &remainder.values),
        field,
        remainder,
        iterations,
    })
}

/// ‖(1 + h⁴ T q) u₁ − u₀‖ / ‖u₀‖.
pub fn fixed_point_residual(fwd: &Forward, pair: &GreenPair, q: &Potential, p: &CarlemanParams, u0: &ScalarField, u1: &ScalarField) -> f64 {
    let d = &fwd.domain;
    let h4 = p.h.powi(4);
    let mut src = vec![C64::new(0.0, 0.0); d.n_nodes()];
    for k in 0..d.n_interior {
        src[k] = u1.values[k] * (h4 * q.values[k]);
    }
    let t = pair.operator(1.0).transported_squared_c(&src);
    let r: Vec<C64> = (0..d.n_nodes()).map(|k| u1.values[k] + t[k] - u0.values[k]).collect();
    crate::linalg::norm2_c(&r) / crate::linalg::norm2_c(&u0.values)
}
