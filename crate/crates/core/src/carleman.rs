//! Conjugated operator P_φ = e^{φ/h}(−h²Δ)e^{−φ/h} with φ = x₁, its Green
//! operators G_{±φ}, the single layer S_φ and the boundary operator
//! K = I + h⁴ S_φ (Λ_q − Λ₀).

use std::sync::Arc;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{CollarJet, DtnAction, DtnMatrix, Forward, Potential};
use crate::linalg::{join_complex, power_norm, power_spectral_radius, split_complex, Csr, SparseSolver};
use crate::mesh::{Domain, ScalarField};

const BLOCK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarlemanParams {
    pub h: f64,
    pub lambda: f64,
    pub sign: f64,
}

impl CarlemanParams {
    pub fn new(h: f64, lambda: f64, sign: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Domain(format!("semiclassical parameter h = {h} outside (0, 1)")));
        }
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::Domain(format!("sign must be ±1, got {sign}")));
        }
        Ok(CarlemanParams { h, lambda, sign })
    }

    /// s = 1/h + iλ
    pub fn s(&self) -> C64 {
        C64::new(1.0 / self.h, self.lambda)
    }

    pub fn flipped(&self) -> Self {
        CarlemanParams { sign: -self.sign, ..*self }
    }
}

/// e^{sign·(x₁ − c)/h} at every node, c the gauge centre.
fn weight(d: &Domain, h: f64, sign: f64, centre: f64) -> Vec<f64> {
    d.pos.iter().map(|p| (sign * (p[0] - centre) / h).exp()).collect()
}

/// Exact discrete conjugation −h² D L D⁻¹ with D = e^{sign·x₁/h}: rows V1, columns all nodes.
pub fn conjugated_matrix(fwd: &Forward, h: f64, sign: f64, centre: f64) -> Csr {
    let d = &fwd.domain;
    let w = weight(d, h, sign, centre);
    let left: Vec<f64> = d.v1.iter().map(|&n| -h * h * w[n]).collect();
    let right: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
    fwd.lap.scaled(&left, &right)
}

fn scatter_v1(d: &Domain, rows: &[C64]) -> ScalarField {
    let mut out = ScalarField::zeros(d);
    for (r, &n) in d.v1.iter().enumerate() {
        out.values[n] = rows[r];
    }
    out
}

/// P_φ u on V1 nodes (zero on the outer ghost layer), exact conjugation.
pub fn conjugated_apply(fwd: &Forward, p: &CarlemanParams, u: &ScalarField) -> ScalarField {
    let m = conjugated_matrix(fwd, p.h, p.sign, 0.5 * fwd.domain.x1_extent);
    scatter_v1(&fwd.domain, &m.matvec_c(&u.values))
}

/// The expanded form −h²Δ_h u + 2·sign·h ∂₁u − u with central differences.
pub fn conjugated_apply_expanded(fwd: &Forward, p: &CarlemanParams, u: &ScalarField) -> ScalarField {
    let d = &fwd.domain;
    let lu = fwd.lap.matvec_c(&u.values);
    let rows: Vec<C64> = d
        .v1
        .iter()
        .enumerate()
        .map(|(r, &n)| {
            let c = d.cells[n];
            let up = d.node_at(c, [1, 0, 0]).unwrap();
            let dn = d.node_at(c, [-1, 0, 0]).unwrap();
            let d1 = (u.values[up] - u.values[dn]) / (2.0 * d.dx1);
            -lu[r] * (p.h * p.h) + d1 * (2.0 * p.sign * p.h) - u.values[n]
        })
        .collect();
    scatter_v1(d, &rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GreenKind {
    /// Right inverse with G_φ P_φ = I on compact supports and G_φᵀ = G_{−φ}.
    Compatible,
    /// P_r⁺, the minimal-norm solution of the interior equations.
    MinimalNorm,
}

struct Side {
    p: Csr,
    pt: Csr,
    normal: SparseSolver,
}

struct PairInner {
    h: f64,
    kind: GreenKind,
    centre: f64,
    plus: Side,
    minus: Side,
    v1: Vec<usize>,
    n0: usize,
    weight_plus: Vec<f64>,
}

/// Factorizations shared by G_φ and G_{−φ}.
#[derive(Clone)]
pub struct GreenPair {
    inner: Arc<PairInner>,
}

impl GreenPair {
    pub fn new(fwd: &Forward, h: f64, kind: GreenKind) -> Result<Self> {
        Self::with_gauge(fwd, h, kind, 0.5 * fwd.domain.x1_extent)
    }

    /// Gauge centre `centre` for the exponential weights.
    pub fn with_gauge(fwd: &Forward, h: f64, kind: GreenKind, centre: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Domain(format!("semiclassical parameter h = {h} outside (0, 1)")));
        }
        let side = |sign: f64| -> Result<Side> {
            let p = conjugated_matrix(fwd, h, sign, centre);
            let normal = SparseSolver::new(&p.gram())
                .map_err(|e| Error::Linear(format!("interior operator lost surjectivity: {e}")))?;
            Ok(Side { pt: p.transpose(), p, normal })
        };
        let d = &fwd.domain;
        Ok(GreenPair {
            inner: Arc::new(PairInner {
                h,
                kind,
                centre,
                plus: side(1.0)?,
                minus: side(-1.0)?,
                v1: d.v1.clone(),
                n0: d.n_nodes(),
                weight_plus: weight(d, h, 1.0, centre),
            }),
        })
    }

    pub fn h(&self) -> f64 {
        self.inner.h
    }

    pub fn kind(&self) -> GreenKind {
        self.inner.kind
    }

    pub fn operator(&self, sign: f64) -> GreenOperator {
        GreenOperator { pair: self.clone(), sign }
    }

    pub fn gauge_centre(&self) -> f64 {
        self.inner.centre
    }

    /// e^{x₁/h} in the gauge of this pair.
    pub fn weight(&self) -> &[f64] {
        &self.inner.weight_plus
    }
}

/// G_φ (sign = +1) or G_{−φ} (sign = −1).
#[derive(Clone)]
pub struct GreenOperator {
    pair: GreenPair,
    pub sign: f64,
}

impl GreenOperator {
    fn sides(&self) -> (&Side, &Side) {
        let i = &self.pair.inner;
        if self.sign > 0.0 {
            (&i.plus, &i.minus)
        } else {
            (&i.minus, &i.plus)
        }
    }

    pub fn h(&self) -> f64 {
        self.pair.h()
    }

    pub fn dim(&self) -> usize {
        self.pair.inner.n0
    }

    pub fn adjoint(&self) -> GreenOperator {
        GreenOperator { pair: self.pair.clone(), sign: -self.sign }
    }

    /// Interior rows of P_φ (V1 × all nodes).
    pub fn conjugated(&self) -> &Csr {
        &self.sides().0.p
    }

    /// Applies G to every column of a real block on all nodes.
    pub fn apply_block(&self, f: &Mat<f64>) -> Mat<f64> {
        let inner = &self.pair.inner;
        let (own, other) = self.sides();
        let restrict = |m: &Mat<f64>| Mat::<f64>::from_fn(inner.v1.len(), m.ncols(), |i, j| m[(inner.v1[i], j)]);
        match inner.kind {
            GreenKind::MinimalNorm => {
                let mut y = restrict(f);
                own.normal.solve_in_place(&mut y);
                own.pt.mul_dense(y.as_ref())
            }
            GreenKind::Compatible => {
                let mut a = other.p.mul_dense(f.as_ref());
                other.normal.solve_in_place(&mut a);
                let ba = other.pt.mul_dense(a.as_ref());
                let mut res = restrict(&(f - &ba));
                own.normal.solve_in_place(&mut res);
                let mut out = own.pt.mul_dense(res.as_ref());
                for j in 0..out.ncols() {
                    for (r, &n) in inner.v1.iter().enumerate() {
                        out[(n, j)] += a[(r, j)];
                    }
                }
                out
            }
        }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let m = Mat::<f64>::from_fn(f.len(), 1, |i, _| f[i]);
        self.apply_block(&m).col(0).iter().copied().collect()
    }

    pub fn apply_c(&self, f: &[C64]) -> Vec<C64> {
        join_complex(&self.apply_block(&split_complex(&[f.to_vec()]))).pop().unwrap()
    }

    pub fn squared_block(&self, f: &Mat<f64>) -> Mat<f64> {
        self.apply_block(&self.apply_block(f))
    }

    pub fn squared_c(&self, f: &[C64]) -> Vec<C64> {
        join_complex(&self.squared_block(&split_complex(&[f.to_vec()]))).pop().unwrap()
    }

    /// Operator 2-norm by power iteration with the adjoint G_{−φ}.
    pub fn norm(&self, iters: usize) -> f64 {
        let adj = self.adjoint();
        power_norm(self.dim(), |x| self.apply(x), |x| adj.apply(x), iters, 5)
    }

    pub fn squared_norm(&self, iters: usize) -> f64 {
        let adj = self.adjoint();
        power_norm(
            self.dim(),
            |x| self.apply(&self.apply(x)),
            |x| adj.apply(&adj.apply(x)),
            iters,
            6,
        )
    }

    /// T y = e^{−sign·x₁/h} G² e^{sign·x₁/h} y; inverts h⁴Δ_h² on the interior.
    pub fn transported_squared_block(&self, f: &Mat<f64>) -> Mat<f64> {
        let w = &self.pair.inner.weight_plus;
        let e = |n: usize| if self.sign > 0.0 { w[n] } else { 1.0 / w[n] };
        let g = Mat::<f64>::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)] * e(i));
        let z = self.squared_block(&g);
        Mat::<f64>::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] / e(i))
    }

    pub fn transported_squared_c(&self, f: &[C64]) -> Vec<C64> {
        join_complex(&self.transported_squared_block(&split_complex(&[f.to_vec()]))).pop().unwrap()
    }
}

pub fn green_apply(g: &GreenOperator, v: &ScalarField) -> ScalarField {
    ScalarField { values: g.apply_c(&v.values) }
}

pub fn green_squared_apply(g: &GreenOperator, v: &ScalarField) -> ScalarField {
    ScalarField { values: g.squared_c(&v.values) }
}

/// Dense single layer on collar nodes, with (h, λ) metadata.
#[derive(Clone, Debug)]
pub struct SingleLayer {
    pub entries: Mat<f64>,
    pub h: f64,
    pub lambda: f64,
}

impl SingleLayer {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn apply(&self, a: &[C64]) -> Vec<C64> {
        crate::linalg::dense_matvec_c(self.entries.as_ref(), a)
    }
}

/// S_φ = e^{−φ/h} (γ ∘ (γ ∘ G_φ²)*)* e^{φ/h}, assembled through the chain
/// M₁ = γ G²_{−φ} γ* (columns over collar point sources), S = D⁻¹ M₁ᵀ D.
pub fn single_layer(fwd: &Forward, pair: &GreenPair, p: &CarlemanParams) -> SingleLayer {
    let d = &fwd.domain;
    let n2 = d.n_interior;
    let nc = d.n_collar();
    let n0 = d.n_nodes();
    let gm = pair.operator(-p.sign);
    let starts: Vec<usize> = (0..nc).step_by(BLOCK).collect();
    let blocks: Vec<(usize, Mat<f64>)> = starts
        .par_iter()
        .map(|&start| {
            let w = BLOCK.min(nc - start);
            let e = Mat::<f64>::from_fn(n0, w, |i, j| if i == n2 + start + j { 1.0 } else { 0.0 });
            let z = gm.squared_block(&e);
            (start, Mat::<f64>::from_fn(nc, w, |i, j| z[(n2 + i, j)]))
        })
        .collect();
    let mut m1 = Mat::<f64>::zeros(nc, nc);
    for (start, blk) in blocks {
        for j in 0..blk.ncols() {
            for i in 0..nc {
                m1[(i, start + j)] = blk[(i, j)];
            }
        }
    }
    let w = pair.weight();
    let dc = |i: usize| if p.sign > 0.0 { w[n2 + i] } else { 1.0 / w[n2 + i] };
    let entries = Mat::<f64>::from_fn(nc, nc, |i, j| m1[(j, i)] / dc(i) * dc(j));
    SingleLayer { entries, h: pair.h(), lambda: p.lambda }
}

/// ‖P_φ G_φ f − f|_{V1}‖ / ‖f|_{V1}‖ for a random source f.
pub fn right_inverse_residual(g: &GreenOperator, d: &Domain, seed: u64) -> f64 {
    let f = crate::util::random_vec(d.n_nodes(), seed);
    let pu = g.conjugated().matvec(&g.apply(&f));
    let fv: Vec<f64> = d.v1.iter().map(|&n| f[n]).collect();
    let e: Vec<f64> = pu.iter().zip(&fv).map(|(a, b)| a - b).collect();
    crate::linalg::norm2(&e) / crate::linalg::norm2(&fv)
}

/// |⟨G_φ f, w⟩ − ⟨f, G_{−φ} w⟩| / |⟨G_φ f, w⟩| for random f, w.
pub fn adjoint_residual(g: &GreenOperator, d: &Domain, seed: u64) -> f64 {
    let f = crate::util::random_vec(d.n_nodes(), seed);
    let w = crate::util::random_vec(d.n_nodes(), seed + 1);
    let lhs = crate::linalg::dot(&g.apply(&f), &w);
    let rhs = crate::linalg::dot(&f, &g.adjoint().apply(&w));
    (lhs - rhs).abs() / lhs.abs().max(1e-300)
}

/// Matrix-free S_φ a = γ T γ* a (four sparse solves per application).
pub fn single_layer_apply(fwd: &Forward, g: &GreenOperator, a: &[C64]) -> Vec<C64> {
    let d = &fwd.domain;
    let f = CollarJet { values: a.to_vec() }.to_field(d);
    let z = g.transported_squared_c(&f.values);
    z[d.n_interior..].to_vec()
}

/// ‖S(Λ_q−Λ₀)F − γ T(q P_q F)‖ / ‖γ T(q P_q F)‖ over a batch of random collar jets.
pub fn check_factorization(
    fwd: &Forward,
    q: &Potential,
    dl: &DtnMatrix,
    s: &SingleLayer,
    g: &GreenOperator,
    batch: usize,
    seed: u64,
) -> Result<f64> {
    let d = &fwd.domain;
    let n2 = d.n_interior;
    let nc = d.n_collar();
    if q.is_zero() {
        return Ok(0.0);
    }
    let solver = crate::forward::ClampedSolver::new(fwd, q)?;
    let f = Mat::<f64>::from_fn(nc, batch, |i, j| crate::util::random_vec(nc, seed + j as u64)[i]);
    let lhs = &s.entries * (&dl.entries * &f);
    let ext = solver.extend_block(fwd, &f);
    let src = Mat::<f64>::from_fn(d.n_nodes(), batch, |i, j| if i < n2 { q.values[i] * ext[(i, j)] } else { 0.0 });
    let t = g.transported_squared_block(&src);
    let rhs = Mat::<f64>::from_fn(nc, batch, |i, j| t[(n2 + i, j)]);
    let den = rhs.norm_l2();
    if den == 0.0 {
        return Ok((&lhs - &rhs).norm_l2());
    }
    Ok((&lhs - &rhs).norm_l2() / den)
}

/// K = I + h⁴ S_φ ΔΛ with its diagnostics and LU factors.
pub struct BoundaryOperator {
    pub k: Mat<f64>,
    pub h: f64,
    pub perturbation_norm: f64,
    pub spectral_radius: f64,
    /// Norm of the perturbation conjugated by e^{x₁/h} on the collar.
    pub weighted_norm: f64,
    pub condition: f64,
    pub warning: Option<String>,
    lu: faer::linalg::solvers::PartialPivLu<f64>,
}

pub fn boundary_operator(dl: &DtnMatrix, s: &SingleLayer, pair: &GreenPair, n_interior: usize) -> BoundaryOperator {
    let h = s.h;
    let nc = dl.dim();
    let h4 = h.powi(4);
    let mut kp = &s.entries * &dl.entries;
    for j in 0..nc {
        for i in 0..nc {
            kp[(i, j)] *= h4;
        }
    }
    let kpt = kp.transpose().to_owned();
    let mv = |m: &Mat<f64>, x: &[f64]| crate::linalg::dense_matvec(m.as_ref(), x);
    let perturbation_norm = power_norm(nc, |x| mv(&kp, x), |x| mv(&kpt, x), 60, 3);
    let spectral_radius = power_spectral_radius(nc, |x| mv(&kp, x), 60, 4);
    let w = pair.weight();
    let kw = Mat::<f64>::from_fn(nc, nc, |i, j| kp[(i, j)] * w[n_interior + i] / w[n_interior + j]);
    let kwt = kw.transpose().to_owned();
    let weighted_norm = power_norm(nc, |x| mv(&kw, x), |x| mv(&kwt, x), 60, 5);
    let mut k = kp;
    for i in 0..nc {
        k[(i, i)] += 1.0;
    }
    let lu = k.partial_piv_lu();
    let kt = k.transpose().to_owned();
    let smax = power_norm(nc, |x| mv(&k, x), |x| mv(&kt, x), 40, 6);
    let inv = lu.inverse();
    let invt = inv.transpose().to_owned();
    let imax = power_norm(nc, |x| mv(&inv, x), |x| mv(&invt, x), 40, 7);
    let warning = (perturbation_norm >= 1.0)
        .then(|| format!("‖h⁴SΔΛ‖ = {perturbation_norm:.3e} ≥ 1 at h = {h}; shrink h"));
    BoundaryOperator {
        k,
        h,
        perturbation_norm,
        spectral_radius,
        weighted_norm,
        condition: smax * imax,
        warning,
        lu,
    }
}

impl BoundaryOperator {
    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        let b = split_complex(&[rhs.to_vec()]);
        join_complex(&self.lu.solve(&b)).pop().unwrap()
    }

    /// h⁴ S ΔΛ x
    pub fn perturbation(&self, x: &[C64]) -> Vec<C64> {
        let kx = crate::linalg::dense_matvec_c(self.k.as_ref(), x);
        kx.iter().zip(x).map(|(a, b)| a - b).collect()
    }

    pub fn is_identity(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| self.k[(i, j)] == if i == j { 1.0 } else { 0.0 }))
    }
}

/// Matrix-free perturbation h⁴ S ΔΛ for callers that cannot afford the dense single layer.
pub struct PerturbationOperator<'a> {
    pub fwd: &'a Forward,
    pub dtn: &'a dyn DtnAction,
    pub green: GreenOperator,
}

impl PerturbationOperator<'_> {
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let y = self.dtn.apply_c(x);
        let h4 = self.green.h().powi(4);
        single_layer_apply(self.fwd, &self.green, &y).into_iter().map(|v| v * h4).collect()
    }
}
