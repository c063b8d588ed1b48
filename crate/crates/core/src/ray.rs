//! Pairing data, attenuated ray transforms of the x₁-Fourier slices and
//! their inversion.
//!
//! For a chord γ of the unit disk and λ ∈ ℝ the beam data converge to
//! ∫₀^L q̂(2λ, γ(t)) e^{−2λt} dt, with q̂(k, x′) = ∫ e^{−ik x₁c} q dx₁ and x₁c
//! the centred coordinate.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::carleman::{CarlemanParams, GreenPair, PerturbationOperator};
use crate::cgo::{build_u0, build_u0_batch, gaussian_beam, reflect_x1, BeamKind, GaussianBeam};
use crate::error::{Error, Result};
use crate::forward::{range_finder, CollarJet, DtnAction, Forward, Potential};
use crate::linalg::{join_complex, split_complex};
use crate::mesh::{chord, Domain, Geodesic};
use crate::trace::neumann_series_solve;

/// Beams built per blocked Green application.
const BATCH: usize = 48;

/// Σ_c w_c (ΔΛ f₁)_c conj(f₂)_c, i.e. ⟨ΔΛ γu₁, γū₂⟩ for f₂ = γu₂.
pub fn pairing_data(dtn: &dyn DtnAction, f1: &CollarJet, f2: &CollarJet) -> Result<C64> {
    let n = dtn.dim();
    if f1.len() != n || f2.len() != n {
        return Err(Error::Dimension { expected: n, got: if f1.len() != n { f1.len() } else { f2.len() } });
    }
    let y = dtn.apply_c(&f1.values);
    Ok(y.iter().zip(&f2.values).enumerate().map(|(i, (a, b))| a * b.conj() * dtn.weight_at(i)).sum())
}

#[derive(Clone, Copy, Debug)]
pub struct BeamDatum {
    pub value: C64,
    /// Decay rate of |beam|² along the chord actually realised on the grid.
    pub attenuation: f64,
    pub trace_terms: usize,
}

/// One sinogram entry: recover γu₁ from ΔΛ and pair it with γu₂.
pub fn beam_data(fwd: &Forward, dtn: &dyn DtnAction, pair: &GreenPair, p: &CarlemanParams, g: &Geodesic) -> Result<BeamDatum> {
    let d = &fwd.domain;
    let beam = gaussian_beam(d, g, p, BeamKind::V)?;
    let u0 = build_u0(fwd, pair, p, &beam);
    let u2 = reflect_x1(d, &u0.field)?;
    let op = PerturbationOperator { fwd, dtn, green: pair.operator(1.0) };
    let b = CollarJet::of_field(d, &u0.field);
    let (f, terms) = neumann_series_solve(|x| op.apply(x), &b.values, 1e-12, 30)?;
    let value = pairing_data(dtn, &CollarJet { values: f }, &CollarJet::of_field(d, &u2))?;
    Ok(BeamDatum { value, attenuation: beam.kappa.im, trace_terms: terms })
}

/// Batched beam data at one h.
///
/// With W = e^{x₁c/h} on the collar, g = W f solves (I + h⁴WSΔΛW⁻¹) g = W γu₀,
/// whose entries are balanced against the e^{∓x₁c/h} growth of the beams.
/// ΔΛW⁻¹ ≈ Q B is compressed per h, so S is applied only to the r basis
/// columns: g = Wb − U (I + BU)⁻¹ B Wb with U = h⁴WSQ. The final pairing uses
/// the uncompressed ΔΛ.
pub struct BeamDataEngine<'a> {
    fwd: &'a Forward,
    exact: &'a dyn DtnAction,
    pub pair: GreenPair,
    balance: Vec<f64>,
    u: Mat<f64>,
    b: Mat<f64>,
    small: faer::linalg::solvers::PartialPivLu<f64>,
    /// Spectral radius of h⁴SΔΛ (eigenvalues of the small r × r factor).
    pub contraction: f64,
    /// Relative range-finder residual of the compressed ΔΛW⁻¹.
    pub compression_residual: f64,
}

fn scale_rows(m: &Mat<f64>, w: &[f64], inverse: bool) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| if inverse { m[(i, j)] / w[i] } else { m[(i, j)] * w[i] })
}

impl<'a> BeamDataEngine<'a> {
    pub fn new(fwd: &'a Forward, exact: &'a dyn DtnAction, pair: GreenPair, tol: f64, seed: u64) -> Result<Self> {
        let d = &fwd.domain;
        let n2 = d.n_interior;
        let nc = d.n_collar();
        if exact.dim() != nc {
            return Err(Error::Dimension { expected: nc, got: exact.dim() });
        }
        let balance: Vec<f64> = pair.weight()[n2..n2 + nc].to_vec();
        let (q, compression_residual) =
            range_finder(&|f| exact.apply_block(&scale_rows(f, &balance, true)), nc, tol, 32, nc, seed);
        let r = q.ncols();
        let b = scale_rows(&exact.apply_block(&q), &balance, true).transpose().to_owned();
        let h4 = pair.h().powi(4);
        let g = pair.operator(1.0);
        let mut u = Mat::<f64>::zeros(nc, r);
        for start in (0..r).step_by(64) {
            let w = 64.min(r - start);
            let e = Mat::<f64>::from_fn(d.n_nodes(), w, |i, j| if i >= n2 { q[(i - n2, start + j)] } else { 0.0 });
            let t = g.transported_squared_block(&e);
            for j in 0..w {
                for i in 0..nc {
                    u[(i, start + j)] = t[(n2 + i, j)] * h4 * balance[i];
                }
            }
        }
        let m = &b * &u;
        let contraction = if r == 0 {
            0.0
        } else {
            m.as_ref().eigenvalues().map_err(|_| Error::Linear("eigenvalues of the compressed perturbation".into()))?
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        };
        let mut k = m;
        for i in 0..r {
            k[(i, i)] += 1.0;
        }
        let small = k.partial_piv_lu();
        Ok(BeamDataEngine { fwd, exact, pair, balance, u, b, small, contraction, compression_residual })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn h(&self) -> f64 {
        self.pair.h()
    }

    /// Solves K F = B for a block of real collar columns.
    pub fn recover_block(&self, rhs: &Mat<f64>) -> Mat<f64> {
        if self.rank() == 0 {
            return rhs.clone();
        }
        let wb = scale_rows(rhs, &self.balance, false);
        let y = self.small.solve(&(&self.b * &wb));
        scale_rows(&(&wb - &self.u * &y), &self.balance, true)
    }

    /// Beam data for every chord at one λ.
    pub fn sweep(&self, lambda: f64, chords: &[Geodesic]) -> Result<Vec<BeamDatum>> {
        self.sweep_corrected(lambda, chords, None)
    }

    /// As `sweep`, minus Σ w q_ext u₀ ū₂ for a known potential q_ext, so the
    /// values pair q − q_ext instead of q.
    pub fn sweep_corrected(&self, lambda: f64, chords: &[Geodesic], known: Option<&Potential>) -> Result<Vec<BeamDatum>> {
        let d = &self.fwd.domain;
        let wv = d.node_weight();
        let p = CarlemanParams::new(self.h(), lambda, 1.0)?;
        let mut out = Vec::with_capacity(chords.len());
        for group in chords.chunks(BATCH) {
            let beams: Vec<GaussianBeam> = group.iter().map(|g| gaussian_beam(d, g, &p, BeamKind::V)).collect::<Result<_>>()?;
            let refs: Vec<&GaussianBeam> = beams.iter().collect();
            let u0 = build_u0_batch(self.fwd, &self.pair, &p, &refs);
            let b: Vec<Vec<C64>> = u0.iter().map(|u| CollarJet::of_field(d, &u.field).values).collect();
            let f = join_complex(&self.recover_block(&split_complex(&b)));
            let lf = join_complex(&self.exact.apply_block(&split_complex(&f)));
            for ((u, beam), y) in u0.iter().zip(&beams).zip(&lf) {
                let u2 = reflect_x1(d, &u.field)?;
                let g2 = CollarJet::of_field(d, &u2);
                let mut value: C64 = y.iter().zip(&g2.values).enumerate().map(|(i, (a, c))| a * c.conj() * self.exact.weight_at(i)).sum();
                if let Some(qe) = known {
                    value -= (0..d.n_interior).map(|v| u.field.values[v] * u2.values[v].conj() * (qe.values[v] * wv)).sum::<C64>();
                }
                out.push(BeamDatum { value, attenuation: beam.kappa.im, trace_terms: 0 });
            }
        }
        Ok(out)
    }
}

/// Richardson step for an error expansion c·h^order.
pub fn richardson(h1: f64, v1: C64, h2: f64, v2: C64, order: f64) -> C64 {
    let ratio = (h1 / h2).powf(order);
    v2 + (v2 - v1) / (ratio - 1.0)
}

/// Chebyshev points of the first kind on (−1, 1), descending.
pub fn chebyshev_offsets(n: usize) -> Vec<f64> {
    (0..n).map(|k| ((2 * k + 1) as f64 * PI / (2 * n) as f64).cos()).collect()
}

/// Angle-major chord list with θ_a = 2πa/A.
pub fn chord_grid(angles: usize, offsets: &[f64]) -> Vec<Geodesic> {
    (0..angles)
        .flat_map(|a| {
            let th = 2.0 * PI * a as f64 / angles as f64;
            offsets.iter().map(move |&p| chord(th, p))
        })
        .collect()
}

/// ∫₀^L f(γ(t)) e^{−2λt} dt.
pub fn attenuated_xray_forward<F: Fn([f64; 2]) -> C64>(f: F, g: &Geodesic, lambda: f64) -> Result<C64> {
    if !g.non_tangential {
        return Err(Error::Tangential(g.offset));
    }
    Ok(crate::util::integrate(|t| f(g.point(t)) * (-2.0 * lambda * t).exp(), 0.0, g.length, 16, 8))
}

/// Sinogram values at one λ, angle-major over (θ_a, p_k).
#[derive(Clone, Debug)]
pub struct SinogramSlice {
    pub lambda: f64,
    /// Attenuation μ in ∫ f e^{μt} dt (μ = −2λ in the continuum).
    pub mu: f64,
    pub angles: usize,
    pub offsets: Vec<f64>,
    pub values: Vec<C64>,
}

impl SinogramSlice {
    pub fn zeros(lambda: f64, angles: usize, offsets: &[f64]) -> Self {
        SinogramSlice {
            lambda,
            mu: -2.0 * lambda,
            angles,
            offsets: offsets.to_vec(),
            values: vec![C64::new(0.0, 0.0); angles * offsets.len()],
        }
    }

    pub fn theta(&self, a: usize) -> f64 {
        2.0 * PI * a as f64 / self.angles as f64
    }

    pub fn at(&self, a: usize, k: usize) -> C64 {
        self.values[a * self.offsets.len() + k]
    }

    /// Index of the reversed chord (θ + π, −p).
    pub fn reversed(&self, a: usize, k: usize) -> Result<(usize, usize)> {
        let n = self.offsets.len();
        if self.angles % 2 != 0 || (self.offsets[k] + self.offsets[n - 1 - k]).abs() > 1e-12 {
            return Err(Error::GridAsymmetry);
        }
        Ok(((a + self.angles / 2) % self.angles, n - 1 - k))
    }

    /// Slice at −λ for a real potential: v(−λ, γ) = e^{2λL} conj v(λ, γ̄).
    pub fn mirrored(&self) -> Result<SinogramSlice> {
        let n = self.offsets.len();
        let mut out = SinogramSlice { lambda: -self.lambda, mu: -self.mu, ..self.clone() };
        for a in 0..self.angles {
            for k in 0..n {
                let (ar, kr) = self.reversed(a, k)?;
                let len = 2.0 * (1.0 - self.offsets[k].powi(2)).max(0.0).sqrt();
                out.values[a * n + k] = (-self.mu * len).exp() * self.at(ar, kr).conj();
            }
        }
        Ok(out)
    }
}

/// Attenuated sinogram over a λ grid, measured at one h (0 for exact data).
#[derive(Clone, Debug)]
pub struct AttenuatedSinogram {
    pub h: f64,
    pub slices: Vec<SinogramSlice>,
}

impl AttenuatedSinogram {
    pub fn lambdas(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.lambda).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "h,lambda,mu,theta,offset,re,im")?;
        }
        for s in &self.slices {
            for a in 0..s.angles {
                for (k, p) in s.offsets.iter().enumerate() {
                    let v = s.at(a, k);
                    writeln!(w, "{},{},{},{},{},{:e},{:e}", self.h, s.lambda, s.mu, s.theta(a), p, v.re, v.im)?;
                }
            }
        }
        Ok(())
    }

    /// Reads sinograms written by `write_csv`, one per h in file order.
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Vec<Self>> {
        let mut rows: Vec<[f64; 7]> = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("sinogram line {}: '{line}'", n + 1)))?;
            let row: [f64; 7] = f.try_into().map_err(|_| Error::Format(format!("sinogram line {}: expected 7 columns", n + 1)))?;
            rows.push(row);
        }
        let mut out: Vec<AttenuatedSinogram> = Vec::new();
        let mut start = 0;
        while start < rows.len() {
            let (h, lambda) = (rows[start][0], rows[start][1]);
            let end = rows[start..].iter().position(|r| r[0] != h || r[1] != lambda).map_or(rows.len(), |k| start + k);
            let block = &rows[start..end];
            let theta0 = block[0][3];
            let k = block.iter().take_while(|r| r[3] == theta0).count();
            if block.len() % k != 0 {
                return Err(Error::Format(format!("slice h = {h}, λ = {lambda} is not a full angle × offset grid")));
            }
            let offsets: Vec<f64> = block[..k].iter().map(|r| r[4]).collect();
            let mut s = SinogramSlice::zeros(lambda, block.len() / k, &offsets);
            s.mu = block[0][2];
            s.values = block.iter().map(|r| C64::new(r[5], r[6])).collect();
            match out.last_mut() {
                Some(last) if last.h == h => last.slices.push(s),
                _ => out.push(AttenuatedSinogram { h, slices: vec![s] }),
            }
            start = end;
        }
        Ok(out)
    }
}

/// Inverts every slice of each sinogram with its own attenuation and, for
/// two sinograms at h₁ > h₂, extrapolates the images at order 1 in h.
/// A slice at −λ reuses conj of the +λ image when that slice is present.
pub fn invert_ladder(sinos: &[AttenuatedSinogram], n: usize) -> Result<Vec<TransversalImage>> {
    let per_h: Vec<Vec<TransversalImage>> = sinos
        .iter()
        .map(|s| {
            let lams = s.lambdas();
            let mut imgs: Vec<Option<TransversalImage>> = vec![None; lams.len()];
            for (i, sl) in s.slices.iter().enumerate() {
                if sl.lambda >= 0.0 || !lams.contains(&-sl.lambda) {
                    imgs[i] = Some(invert_attenuated(sl, n)?);
                }
            }
            for i in 0..lams.len() {
                if imgs[i].is_none() {
                    let j = lams.iter().position(|&l| l == -lams[i]).unwrap();
                    imgs[i] = imgs[j].as_ref().map(TransversalImage::conj);
                }
            }
            Ok(imgs.into_iter().map(Option::unwrap).collect())
        })
        .collect::<Result<_>>()?;
    match (sinos, per_h.as_slice()) {
        (_, [one]) => Ok(one.clone()),
        ([s1, s2], [a, b]) => {
            if s1.lambdas() != s2.lambdas() || s1.h <= s2.h {
                return Err(Error::Domain("extrapolation needs matching λ grids at h₁ > h₂".into()));
            }
            Ok(a.iter()
                .zip(b)
                .map(|(i1, i2)| TransversalImage {
                    n: i2.n,
                    values: i1.values.iter().zip(&i2.values).map(|(&v1, &v2)| richardson(s1.h, v1, s2.h, v2, 1.0)).collect(),
                })
                .collect())
        }
        _ => Err(Error::Domain(format!("expected one or two sinograms, got {}", sinos.len()))),
    }
}

/// Forward slice of a transversal field by quadrature.
pub fn sinogram_of<F: Fn([f64; 2]) -> C64>(f: F, lambda: f64, angles: usize, offsets: &[f64]) -> Result<SinogramSlice> {
    let mut s = SinogramSlice::zeros(lambda, angles, offsets);
    for (i, g) in chord_grid(angles, offsets).iter().enumerate() {
        s.values[i] = attenuated_xray_forward(&f, g, lambda)?;
    }
    Ok(s)
}

/// Field on the n × n pixel grid over [−1, 1]², zero outside the unit disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TransversalImage {
    pub n: usize,
    pub values: Vec<C64>,
}

impl TransversalImage {
    pub fn zeros(n: usize) -> Self {
        TransversalImage { n, values: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn from_fn<F: Fn([f64; 2]) -> C64>(n: usize, f: F) -> Self {
        let mut img = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let x = img.centre(i, j);
                if x[0] * x[0] + x[1] * x[1] < 1.0 {
                    img.values[i * n + j] = f(x);
                }
            }
        }
        img
    }

    pub fn centre(&self, i: usize, j: usize) -> [f64; 2] {
        let h = 2.0 / self.n as f64;
        [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h]
    }

    pub fn conj(&self) -> Self {
        TransversalImage { n: self.n, values: self.values.iter().map(|z| z.conj()).collect() }
    }

    /// Bilinear interpolation at a point of the disk.
    pub fn sample(&self, x: [f64; 2]) -> C64 {
        let n = self.n;
        let h = 2.0 / n as f64;
        let fi = ((x[0] + 1.0) / h - 0.5).clamp(0.0, (n - 1) as f64);
        let fj = ((x[1] + 1.0) / h - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = (fi.floor() as usize).min(n - 2);
        let j0 = (fj.floor() as usize).min(n - 2);
        let (a, b) = (fi - i0 as f64, fj - j0 as f64);
        let v = |i: usize, j: usize| self.values[i * n + j];
        v(i0, j0) * ((1.0 - a) * (1.0 - b)) + v(i0 + 1, j0) * (a * (1.0 - b)) + v(i0, j0 + 1) * ((1.0 - a) * b) + v(i0 + 1, j0 + 1) * (a * b)
    }

    /// Relative L² difference over pixels inside radius `rho`.
    pub fn relative_error(&self, reference: &TransversalImage, rho: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let x = self.centre(i, j);
                if x[0] * x[0] + x[1] * x[1] <= rho * rho {
                    let k = i * self.n + j;
                    num += (self.values[k] - reference.values[k]).norm_sqr();
                    den += reference.values[k].norm_sqr();
                }
            }
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

fn barycentric_chebyshev(nodes: &[f64], values: &[C64], x: f64) -> C64 {
    let n = nodes.len();
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for k in 0..n {
        let w = if k % 2 == 0 { 1.0 } else { -1.0 } * ((2 * k + 1) as f64 * PI / (2 * n) as f64).sin();
        let dx = x - nodes[k];
        if dx.abs() < 1e-14 {
            return values[k];
        }
        num += values[k] * (w / dx);
        den += w / dx;
    }
    num / den
}

/// Constant-attenuation inversion (filtered backprojection at μ = 0):
/// f(x) = (1/4π) ∫₀^{2π} e^{−μ x·τ} (H_μ T)(θ, x·n) dθ, with T the exponential
/// Radon data ∫ f e^{μs} ds (s along τ, from the chord midpoint) and H_μ the
/// ramp filter restricted to |σ| ≥ |μ|.
pub fn invert_attenuated(slice: &SinogramSlice, n: usize) -> Result<TransversalImage> {
    let k = slice.offsets.len();
    if slice.angles < 2 || k < 2 || n < 2 {
        return Err(Error::Domain("sinogram too small to invert".into()));
    }
    if slice.values.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        return Ok(TransversalImage::zeros(n));
    }
    let mu = slice.mu;
    let m = (2 * k).max(128);
    let du = 2.0 / m as f64;
    let nfft = (4 * m).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);
    let filter: Vec<f64> = (0..nfft)
        .map(|j| {
            let fj = if j < nfft / 2 { j as f64 } else { j as f64 - nfft as f64 };
            let sigma = 2.0 * PI * fj / (nfft as f64 * du);
            if sigma.abs() >= mu.abs() {
                sigma.abs()
            } else {
                0.0
            }
        })
        .collect();
    let u = |i: usize| -1.0 + (i as f64 + 0.5) * du;
    let filtered: Vec<Vec<C64>> = (0..slice.angles)
        .map(|a| {
            let t: Vec<C64> = (0..k)
                .map(|j| {
                    let len = 2.0 * (1.0 - slice.offsets[j].powi(2)).max(0.0).sqrt();
                    slice.at(a, j) * (-0.5 * mu * len).exp()
                })
                .collect();
            let mut buf = vec![C64::new(0.0, 0.0); nfft];
            for (i, b) in buf.iter_mut().enumerate().take(m) {
                *b = barycentric_chebyshev(&slice.offsets, &t, u(i));
            }
            fwd.process(&mut buf);
            buf.iter_mut().zip(&filter).for_each(|(b, f)| *b *= *f / nfft as f64);
            inv.process(&mut buf);
            buf.truncate(m);
            buf
        })
        .collect();
    let dtheta = 2.0 * PI / slice.angles as f64;
    let mut img = TransversalImage::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let x = img.centre(i, j);
            if x[0] * x[0] + x[1] * x[1] >= 1.0 {
                continue;
            }
            let mut acc = C64::new(0.0, 0.0);
            for (a, h) in filtered.iter().enumerate() {
                let (sn, cs) = slice.theta(a).sin_cos();
                let along = x[0] * cs + x[1] * sn;
                let p = -x[0] * sn + x[1] * cs;
                let fi = ((p + 1.0) / du - 0.5).clamp(0.0, (m - 1) as f64);
                let i0 = (fi.floor() as usize).min(m - 2);
                let w = fi - i0 as f64;
                acc += (h[i0] * (1.0 - w) + h[i0 + 1] * w) * (-mu * along).exp();
            }
            img.values[i * n + j] = acc * (dtheta / (4.0 * PI));
        }
    }
    Ok(img)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Window {
    /// Flat on the inner (1 − α) fraction, cosine taper to zero one step past the last sample.
    Tukey(f64),
    Rect,
    /// Keep only the zero frequency: the x₁ average.
    Delta,
}

impl Window {
    fn weight(&self, k: f64, kmax: f64, dk: f64) -> f64 {
        match *self {
            Window::Rect => 1.0,
            Window::Delta => f64::from(k == 0.0),
            Window::Tukey(alpha) => {
                let edge = kmax + dk;
                let flat = (1.0 - alpha) * edge;
                let a = k.abs();
                if a <= flat {
                    1.0
                } else if a >= edge {
                    0.0
                } else {
                    0.5 * (1.0 + (PI * (a - flat) / (edge - flat)).cos())
                }
            }
        }
    }
}

/// Checks that λ grid is uniform and symmetric about 0.
pub fn check_lambda_grid(lambdas: &[f64]) -> Result<f64> {
    let n = lambdas.len();
    if n == 1 && lambdas[0] == 0.0 {
        return Ok(0.0);
    }
    if n < 2 {
        return Err(Error::GridAsymmetry);
    }
    let step = lambdas[1] - lambdas[0];
    let tol = 1e-9 * step.abs().max(1e-300);
    let uniform = lambdas.windows(2).all(|w| (w[1] - w[0] - step).abs() <= tol);
    let symmetric = (0..n).all(|j| (lambdas[j] + lambdas[n - 1 - j]).abs() <= tol);
    if !(step > 0.0 && uniform && symmetric) {
        return Err(Error::GridAsymmetry);
    }
    Ok(step)
}

/// q(x₁, x′) from the slices q̂(2λ_j, x′) by windowed Fourier synthesis,
/// returned on the interior nodes of `d`.
pub fn fourier_x1_invert(d: &Domain, lambdas: &[f64], slices: &[TransversalImage], window: Window) -> Result<Vec<f64>> {
    if lambdas.len() != slices.len() {
        return Err(Error::Dimension { expected: lambdas.len(), got: slices.len() });
    }
    let step = check_lambda_grid(lambdas)?;
    let x1c = d.x1_centred();
    if window == Window::Delta {
        let j = lambdas.iter().position(|&l| l == 0.0).ok_or(Error::GridAsymmetry)?;
        return Ok((0..d.n_interior)
            .map(|v| slices[j].sample([d.pos[v][1], d.pos[v][2]]).re / d.x1_extent)
            .collect());
    }
    let dk = 2.0 * step;
    let kmax = 2.0 * lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let weights: Vec<f64> = lambdas.iter().map(|l| window.weight(2.0 * l, kmax, dk)).collect();
    Ok((0..d.n_interior)
        .map(|v| {
            let y = [d.pos[v][1], d.pos[v][2]];
            let sum: C64 = lambdas
                .iter()
                .zip(slices)
                .zip(&weights)
                .filter(|(_, &w)| w != 0.0)
                .map(|((l, s), w)| s.sample(y) * C64::new(0.0, 2.0 * l * x1c[v]).exp() * *w)
                .sum();
            sum.re * dk / (2.0 * PI)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(x: [f64; 2], c: [f64; 2], s: f64) -> f64 {
        (-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (2.0 * s * s)).exp()
    }

    #[test]
    fn closed_forms_for_unit_field() {
        let g = chord(0.7, 0.3);
        let one = |_: [f64; 2]| C64::new(1.0, 0.0);
        let v = attenuated_xray_forward(one, &g, 0.0).unwrap();
        assert!((v.re - g.length).abs() < 1e-12);
        let lam = 0.8;
        let v = attenuated_xray_forward(one, &g, lam).unwrap();
        let exact = (1.0 - (-2.0 * lam * g.length).exp()) / (2.0 * lam);
        assert!((v.re - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn tangential_chord_is_rejected() {
        let g = chord(0.0, 1.0);
        assert!(matches!(attenuated_xray_forward(|_| C64::new(1.0, 0.0), &g, 0.0), Err(Error::Tangential(_))));
    }

    #[test]
    fn zero_sinogram_inverts_to_zero() {
        let s = SinogramSlice::zeros(0.3, 8, &chebyshev_offsets(8));
        let img = invert_attenuated(&s, 16).unwrap();
        assert!(img.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn gaussian_centre_is_recovered_by_fbp() {
        let f = |x: [f64; 2]| C64::new(bump(x, [0.0, 0.0], 0.2), 0.0);
        let s = sinogram_of(f, 0.0, 90, &chebyshev_offsets(64)).unwrap();
        let img = invert_attenuated(&s, 64).unwrap();
        let c = img.sample([0.0, 0.0]);
        assert!((c.re - 1.0).abs() < 0.03, "{c}");
    }

    #[test]
    fn attenuated_round_trip_on_offcentre_bump() {
        let f = |x: [f64; 2]| C64::new(bump(x, [0.25, -0.1], 0.18), 0.0);
        let s = sinogram_of(f, 0.3, 90, &chebyshev_offsets(64)).unwrap();
        let img = invert_attenuated(&s, 64).unwrap();
        let exact = TransversalImage::from_fn(64, f);
        let err = img.relative_error(&exact, 0.95);
        assert!(err < 0.1, "{err}");
    }

    #[test]
    fn mirrored_slice_matches_direct_forward() {
        let f = |x: [f64; 2]| C64::new(bump(x, [0.2, 0.3], 0.2), 0.0);
        let offs = chebyshev_offsets(12);
        let s = sinogram_of(f, 0.6, 10, &offs).unwrap();
        let m = s.mirrored().unwrap();
        let direct = sinogram_of(f, -0.6, 10, &offs).unwrap();
        for (a, b) in m.values.iter().zip(&direct.values) {
            assert!((a - b).norm() <= 1e-10 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn lambda_grid_must_be_symmetric() {
        assert!(check_lambda_grid(&[-1.0, 0.0, 1.0]).is_ok());
        assert!(matches!(check_lambda_grid(&[-1.0, 0.0, 2.0]), Err(Error::GridAsymmetry)));
        assert!(matches!(check_lambda_grid(&[0.0, 1.0, 2.0]), Err(Error::GridAsymmetry)));
    }

    #[test]
    fn richardson_removes_linear_term() {
        let f = |h: f64| C64::new(2.0 + 3.0 * h, -h);
        let v = richardson(0.1, f(0.1), 0.05, f(0.05), 1.0);
        assert!((v - C64::new(2.0, 0.0)).norm() < 1e-12);
    }
}
