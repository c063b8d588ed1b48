//! Boundary values of q from ΔΛ with a family of fields concentrating at a
//! lateral boundary point and oscillating along a tangent direction.
//!
//! In boundary normal coordinates (s₁, s₂, x_n) around x₀ = (x₁⁰, r cos φ₀, r sin φ₀),
//! with s₁ = x₁ − x₁⁰, s₂ = r(φ − φ₀) and x_n = r − |x′| the depth,
//! v_λ = λ^{−α−1/2} η_ℓ(s/λ^α) e^{(i/λ)(τ′·s′) − x_n/λ}. Then
//! q(x₀) = 2 lim ⟨ΔΛ f_λ, f̄_λ⟩ with f_λ the collar values of v_λ + r₁.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::forward::{CollarJet, DtnAction, Forward};
use crate::linalg::{norm2_c, Csr, SparseSolver};
use crate::mesh::{Domain, ScalarField};
use crate::util::{chi, integrate};

/// Concentration exponent.
pub const ALPHA: f64 = 1.0 / 3.0;
/// Minimum grid points per oscillation wavelength 2πλ.
pub const POINTS_PER_WAVELENGTH: f64 = 8.0;

fn profile(rho: f64) -> f64 {
    (-0.5 * rho * rho).exp() * chi(rho)
}

/// c with ∫_{ℝ²} (c·profile(|y|))² dy = 1.
fn eta_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let m = integrate(|r| C64::new(2.0 * PI * r * profile(r).powi(2), 0.0), 0.0, 2.0, 32, 10).re;
        1.0 / m.sqrt()
    })
}

/// Gaussian-times-bump profile, supported in |y| ≤ 2, normalised on the plane y_n = 0.
pub fn eta(y: [f64; 3]) -> f64 {
    eta_constant() * profile((y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatoryFamily {
    pub x1_0: f64,
    pub phi0: f64,
    /// Angle of τ′ in the (s₂, s₁) tangent plane: 0 runs around the circle, π/2 along x₁.
    pub psi: f64,
    /// Chart scale ℓ: η_ℓ(y) = η(y/ℓ)/ℓ.
    pub scale: f64,
    pub lambda: f64,
}

impl OscillatoryFamily {
    pub fn x0(&self, r: f64) -> [f64; 3] {
        [self.x1_0, r * self.phi0.cos(), r * self.phi0.sin()]
    }

    pub fn support_radius(&self) -> f64 {
        2.0 * self.scale * self.lambda.powf(ALPHA)
    }

    /// Boundary normal coordinates (s₁, s₂, x_n) of a point.
    pub fn chart(&self, x: [f64; 3], r: f64) -> [f64; 3] {
        let rho = x[1].hypot(x[2]);
        let mut dphi = x[2].atan2(x[1]) - self.phi0;
        dphi -= 2.0 * PI * (dphi / (2.0 * PI)).round();
        [x[0] - self.x1_0, r * dphi, r - rho]
    }

    pub fn eval(&self, x: [f64; 3], r: f64) -> C64 {
        let s = self.chart(x, r);
        let la = self.lambda.powf(ALPHA);
        let y = [s[0] / (la * self.scale), s[1] / (la * self.scale), s[2] / (la * self.scale)];
        let e = eta(y);
        if e == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let amp = self.lambda.powf(-ALPHA - 0.5) * e / self.scale;
        let (sn, cs) = self.psi.sin_cos();
        let phase = (cs * s[1] + sn * s[0]) / self.lambda;
        C64::from_polar(amp * (-s[2] / self.lambda).exp(), phase)
    }

    /// Grid spacing along τ′.
    pub fn spacing(&self, d: &Domain) -> f64 {
        let (sn, cs) = self.psi.sin_cos();
        cs.abs() * d.dy + sn.abs() * d.dx1
    }

    pub fn resolved(&self, d: &Domain) -> bool {
        2.0 * PI * self.lambda / self.spacing(d) >= POINTS_PER_WAVELENGTH
    }
}

/// v_λ sampled on every node; rejects families whose support leaves the chart.
pub fn oscillatory_field(d: &Domain, fam: &OscillatoryFamily) -> Result<ScalarField> {
    let r = d.transversal_radius;
    let rad = fam.support_radius();
    let margin = 3.0 * d.dx1;
    if fam.lambda <= 0.0 || fam.scale <= 0.0 {
        return Err(Error::Domain("family needs λ > 0 and ℓ > 0".into()));
    }
    if fam.x1_0 - rad < margin || fam.x1_0 + rad > d.x1_extent - margin {
        return Err(Error::ChartOverflow(format!("support radius {rad:.3} reaches a cap at x1 = {}", fam.x1_0)));
    }
    if rad > 0.5 * r {
        return Err(Error::ChartOverflow(format!("support radius {rad:.3} exceeds half the radius {r}")));
    }
    Ok(ScalarField::from_fn(d, |x| fam.eval(x, r)))
}

/// Dirichlet Laplacian on V1 with the outer ghost layer held at zero.
pub struct HarmonicCorrector {
    lap: Csr,
    solver: SparseSolver,
    v1: Vec<usize>,
}

impl HarmonicCorrector {
    pub fn new(fwd: &Forward) -> Result<Self> {
        let d = &fwd.domain;
        let n1 = d.v1.len();
        let mut map = vec![usize::MAX; d.n_nodes()];
        for (k, &n) in d.v1.iter().enumerate() {
            map[n] = k;
        }
        let rows: Vec<usize> = (0..n1).collect();
        let a = fwd.lap.select(&rows, &map, n1).scale(-1.0);
        let solver = SparseSolver::new(&a).map_err(|e| Error::Linear(format!("Laplace solve: {e}")))?;
        Ok(HarmonicCorrector { lap: fwd.lap.clone(), solver, v1: d.v1.clone() })
    }

    /// r₁ with L(v + r₁) = 0 on V1 rows and r₁ = 0 on the outer layer.
    pub fn correct(&self, d: &Domain, v: &ScalarField) -> ScalarField {
        let lv = self.lap.matvec_c(&v.values);
        let r = self.solver.solve_c(&lv);
        let mut out = ScalarField::zeros(d);
        for (k, &n) in self.v1.iter().enumerate() {
            out.values[n] = r[k];
        }
        out
    }

    /// ‖L(v + r₁)‖ / ‖Lv‖ over V1 rows.
    pub fn residual(&self, v: &ScalarField, r1: &ScalarField) -> f64 {
        let w = v.add(r1);
        let lv = norm2_c(&self.lap.matvec_c(&v.values));
        if lv == 0.0 {
            return norm2_c(&self.lap.matvec_c(&w.values));
        }
        norm2_c(&self.lap.matvec_c(&w.values)) / lv
    }
}

pub fn harmonic_correction(fwd: &Forward, v: &ScalarField) -> Result<ScalarField> {
    Ok(HarmonicCorrector::new(fwd)?.correct(&fwd.domain, v))
}

/// Dominant wavelength of v along the lateral ring through x₀.
pub fn ring_wavelength(d: &Domain, fam: &OscillatoryFamily) -> f64 {
    let r = d.transversal_radius;
    let n = 4096;
    let len = 2.0 * PI * r;
    let mut buf: Vec<C64> = (0..n)
        .map(|k| {
            let phi = fam.phi0 + (k as f64 / n as f64 - 0.5) * 2.0 * PI;
            fam.eval([fam.x1_0, r * phi.cos(), r * phi.sin()], r)
        })
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf.iter().map(|z| z.norm()).collect();
    let (k, _) = mag.iter().enumerate().fold((0, 0.0), |b, (i, &m)| if m > b.1 { (i, m) } else { b });
    let at = |i: isize| mag[i.rem_euclid(n as isize) as usize];
    let (a, b, c) = (at(k as isize - 1), at(k as isize), at(k as isize + 1));
    let den = a - 2.0 * b + c;
    let shift = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    let mut freq = k as f64 + shift;
    if freq > n as f64 / 2.0 {
        freq -= n as f64;
    }
    len / freq.abs()
}

#[derive(Clone, Debug)]
pub struct BoundaryEstimate {
    pub lambdas: Vec<f64>,
    /// 2⟨ΔΛ f_λ, f̄_λ⟩ per λ.
    pub values: Vec<C64>,
    pub resolved: Vec<bool>,
    /// Linear extrapolation to λ = 0 over the last two accepted values.
    pub extrapolated: f64,
    pub warning: Option<String>,
}

impl BoundaryEstimate {
    pub fn last(&self) -> C64 {
        *self.values.last().unwrap()
    }
}

/// Per-λ estimates of q(x₀) with λ decreasing.
pub fn boundary_value(
    fwd: &Forward,
    dtn: &dyn DtnAction,
    corrector: &HarmonicCorrector,
    base: &OscillatoryFamily,
    lambdas: &[f64],
) -> Result<BoundaryEstimate> {
    let d = &fwd.domain;
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("λ sequence must be strictly decreasing".into()));
    }
    let mut values = Vec::new();
    let mut resolved = Vec::new();
    for &lambda in lambdas {
        let fam = OscillatoryFamily { lambda, ..*base };
        let v = oscillatory_field(d, &fam)?;
        let w = v.add(&corrector.correct(d, &v));
        let f = CollarJet::of_field(d, &w);
        let y = dtn.apply_c(&f.values);
        let pair: C64 = y.iter().zip(&f.values).enumerate().map(|(i, (a, b))| a * b.conj() * dtn.weight_at(i)).sum();
        values.push(pair * 2.0);
        resolved.push(fam.resolved(d));
    }
    let mut warning = None;
    if resolved.iter().any(|r| !r) {
        warning = Some(format!("fewer than {POINTS_PER_WAVELENGTH} grid points per wavelength 2πλ for some λ"));
    }
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let steps: Vec<f64> = re.windows(2).map(|w| w[1] - w[0]).collect();
    if steps.windows(2).any(|s| s[0] * s[1] < 0.0) {
        warning.get_or_insert_with(|| "per-λ estimates are not monotone".into());
    }
    let accepted: Vec<usize> = (0..lambdas.len()).filter(|&k| resolved[k]).collect();
    let extrapolated = match accepted.as_slice() {
        [] => re[re.len() - 1],
        [k] => re[*k],
        ks => {
            let (a, b) = (ks[ks.len() - 2], ks[ks.len() - 1]);
            re[b] + (re[b] - re[a]) * lambdas[b] / (lambdas[a] - lambdas[b])
        }
    };
    Ok(BoundaryEstimate { lambdas: lambdas.to_vec(), values, resolved, extrapolated, warning })
}

/// Lateral boundary points (x₁, φ) whose support stays 3.5 cells from the caps.
pub fn lateral_sample_points(d: &Domain, planes: usize, angles: usize, rad: f64) -> Vec<(f64, f64)> {
    let lo = 3.5 * d.dx1 + rad;
    let hi = d.x1_extent - 3.5 * d.dx1 - rad;
    if hi < lo {
        return Vec::new();
    }
    (0..planes)
        .flat_map(|i| {
            let x1 = if planes == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (planes - 1) as f64 };
            (0..angles).map(move |a| (x1, 2.0 * PI * a as f64 / angles as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::Potential;
    use crate::mesh::{build_domain, DomainConfig};

    fn family(lambda: f64) -> OscillatoryFamily {
        OscillatoryFamily { x1_0: 0.5, phi0: 0.4, psi: 0.0, scale: 0.15, lambda }
    }

    #[test]
    fn eta_is_normalised_on_the_tangent_plane() {
        // plain Riemann sum over the square [−2, 2]²
        let n = 800;
        let h = 4.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [-2.0 + (i as f64 + 0.5) * h, -2.0 + (j as f64 + 0.5) * h, 0.0];
                s += eta(y).powi(2) * h * h;
            }
        }
        assert!((s - 1.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn wavelength_matches_two_pi_lambda() {
        let d = build_domain(&DomainConfig { x1_extent: 1.0, transversal_radius: 0.8, n1: 8, n_perp: 17 }).unwrap();
        for lambda in [0.2, 0.1, 0.05] {
            let w = ring_wavelength(&d, &family(lambda));
            assert!((w / (2.0 * PI * lambda) - 1.0).abs() < 0.05, "{lambda}: {w}");
        }
    }

    #[test]
    fn support_stays_near_x0() {
        let d = build_domain(&DomainConfig { x1_extent: 1.0, transversal_radius: 0.8, n1: 16, n_perp: 25 }).unwrap();
        let fam = family(0.1);
        let v = oscillatory_field(&d, &fam).unwrap();
        let x0 = fam.x0(0.8);
        for (p, z) in d.pos.iter().zip(&v.values) {
            if z.norm() > 0.0 {
                let dist = ((p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2) + (p[2] - x0[2]).powi(2)).sqrt();
                assert!(dist <= 4.0 * 0.1f64.powf(ALPHA));
            }
        }
    }

    #[test]
    fn oversized_support_is_a_chart_overflow() {
        let d = build_domain(&DomainConfig { x1_extent: 1.0, transversal_radius: 0.8, n1: 8, n_perp: 17 }).unwrap();
        let fam = OscillatoryFamily { x1_0: 0.1, ..family(0.1) };
        assert!(matches!(oscillatory_field(&d, &fam), Err(Error::ChartOverflow(_))));
    }

    #[test]
    fn correction_of_a_harmonic_field_vanishes() {
        let d = build_domain(&DomainConfig { x1_extent: 1.0, transversal_radius: 0.8, n1: 8, n_perp: 17 }).unwrap();
        let fwd = Forward::new(&d);
        // x₁ + 2y − z is discretely harmonic
        let v = ScalarField::from_fn(&d, |x| C64::new(x[0] + 2.0 * x[1] - x[2], 0.0));
        let r1 = harmonic_correction(&fwd, &v).unwrap();
        assert!(r1.values.iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn zero_potential_gives_zero_estimates() {
        let d = build_domain(&DomainConfig { x1_extent: 1.0, transversal_radius: 0.8, n1: 10, n_perp: 17 }).unwrap();
        let fwd = Forward::new(&d);
        let dl = crate::forward::assemble_dtn_difference(&fwd, &Potential::zero(&d)).unwrap();
        let hc = HarmonicCorrector::new(&fwd).unwrap();
        let est = boundary_value(&fwd, &dl, &hc, &family(0.2), &[0.2, 0.1]).unwrap();
        assert!(est.values.iter().all(|v| v.norm() == 0.0));
    }
}
