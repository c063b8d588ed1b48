//! Clamped problem for Δ² + q, Poisson extension and the discrete
//! Dirichlet-to-Neumann map on collar jets.
//!
//! The 13-point operator is Δ_h² = LᵀL with L the 7-point Laplacian on the
//! first ghost layer V1. Cauchy data of a field are its values on the two
//! ghost layers (the collar). The DtN map is the Schur complement of LᵀL onto
//! the collar, which is exactly the weak form
//! ⟨Λ_q f, g⟩ = Σ (Lu)(Lv) + Σ q u v for the Poisson extension u of f and any
//! extension v of g.

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dense_matvec_c, power_norm, Csr, SparseSolver};
use crate::mesh::{Domain, ScalarField};

/// Columns processed per block in dense assemblies.
const BLOCK: usize = 128;

/// Real potential sampled on interior nodes; zero outside M.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub values: Vec<f64>,
}

impl Potential {
    pub fn zero(d: &Domain) -> Self {
        Potential { values: vec![0.0; d.n_interior] }
    }

    pub fn constant(d: &Domain, c: f64) -> Self {
        Potential { values: vec![c; d.n_interior] }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64>(d: &Domain, f: F) -> Self {
        Potential { values: d.pos[..d.n_interior].iter().map(|&p| f(p)).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Nodal values of a field on the collar (two ghost layers around the interior).
#[derive(Clone, Debug, PartialEq)]
pub struct CollarJet {
    pub values: Vec<C64>,
}

impl CollarJet {
    pub fn zeros(d: &Domain) -> Self {
        CollarJet { values: vec![C64::new(0.0, 0.0); d.n_collar()] }
    }

    pub fn of_field(d: &Domain, u: &ScalarField) -> Self {
        CollarJet { values: u.collar(d).to_vec() }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> C64>(d: &Domain, f: F) -> Self {
        CollarJet { values: d.pos[d.n_interior..].iter().map(|&p| f(p)).collect() }
    }

    pub fn random(d: &Domain, seed: u64) -> Self {
        CollarJet { values: crate::util::random_vec_c(d.n_collar(), seed) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn conj(&self) -> Self {
        CollarJet { values: self.values.iter().map(|v| v.conj()).collect() }
    }

    /// Extends by zero into the interior.
    pub fn to_field(&self, d: &Domain) -> ScalarField {
        let mut v = vec![C64::new(0.0, 0.0); d.n_interior];
        v.extend_from_slice(&self.values);
        ScalarField { values: v }
    }
}

/// 7-point Laplacian: rows on V1 (in `d.v1` order), columns on all nodes.
pub fn laplacian(d: &Domain) -> Csr {
    let a = 1.0 / (d.dx1 * d.dx1);
    let b = 1.0 / (d.dy * d.dy);
    let mut trip = Vec::with_capacity(7 * d.v1.len());
    for (r, &n) in d.v1.iter().enumerate() {
        let c = d.cells[n];
        trip.push((r, n, -2.0 * a - 4.0 * b));
        for (off, w) in [
            ([1, 0, 0], a),
            ([-1, 0, 0], a),
            ([0, 1, 0], b),
            ([0, -1, 0], b),
            ([0, 0, 1], b),
            ([0, 0, -1], b),
        ] {
            let m = d.node_at(c, off).expect("V1 neighbour outside V0");
            trip.push((r, m, w));
        }
    }
    Csr::from_triplets(d.v1.len(), d.n_nodes(), &trip)
}

/// The assembled biharmonic operator split into interior/collar blocks.
pub struct Forward {
    pub domain: Domain,
    pub lap: Csr,
    /// LᵀL on all nodes.
    pub full: Csr,
    pub a_ii: Csr,
    pub a_ic: Csr,
    pub a_cc: Csr,
    pub a_ci: Csr,
}

impl Forward {
    pub fn new(domain: &Domain) -> Self {
        let lap = laplacian(domain);
        let full = lap.normal();
        let n2 = domain.n_interior;
        let n0 = domain.n_nodes();
        let interior: Vec<usize> = (0..n2).collect();
        let collar: Vec<usize> = (n2..n0).collect();
        let map_i: Vec<usize> = (0..n0).map(|j| if j < n2 { j } else { usize::MAX }).collect();
        let map_c: Vec<usize> = (0..n0).map(|j| if j >= n2 { j - n2 } else { usize::MAX }).collect();
        let a_ii = full.select(&interior, &map_i, n2);
        let a_ic = full.select(&interior, &map_c, n0 - n2);
        let a_cc = full.select(&collar, &map_c, n0 - n2);
        let a_ci = a_ic.transpose();
        Forward { domain: domain.clone(), lap, full, a_ii, a_ic, a_cc, a_ci }
    }

    /// Δ_h² + q applied on interior rows.
    pub fn apply(&self, q: &Potential, u: &ScalarField) -> Vec<C64> {
        let mut y = self.full.matvec_c(&u.values);
        y.truncate(self.domain.n_interior);
        for (k, v) in y.iter_mut().enumerate() {
            *v += u.values[k] * q.values[k];
        }
        y
    }
}

/// Factorized interior operator A_II + Q with the invertibility check.
pub struct ClampedSolver {
    pub q: Potential,
    pub matrix: Csr,
    pub solver: SparseSolver,
    pub sigma_min: f64,
}

impl ClampedSolver {
    pub fn new(fwd: &Forward, q: &Potential) -> Result<Self> {
        if q.values.len() != fwd.domain.n_interior {
            return Err(Error::Dimension { expected: fwd.domain.n_interior, got: q.values.len() });
        }
        if q.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("potential has non-finite values".into()));
        }
        if !q.is_zero() {
            crate::trace::touch("potential");
        }
        let matrix = fwd.a_ii.add_diagonal(&q.values);
        let norm = matrix.max_abs() * 25.0;
        let threshold = 1e-10 * norm;
        let solver = SparseSolver::new(&matrix).map_err(|_| Error::Singular { sigma_min: 0.0, threshold })?;
        // smallest singular value from the largest one of the inverse
        let n = matrix.nrows;
        let inv_norm = power_norm(n, |x| solver.solve(x), |x| solver.solve(x), 40, 17);
        let sigma_min = 1.0 / inv_norm;
        if !(sigma_min > threshold) {
            return Err(Error::Singular { sigma_min, threshold });
        }
        Ok(ClampedSolver { q: q.clone(), matrix, solver, sigma_min })
    }

    /// Interior values with the collar fixed to `f` and interior right-hand side `rhs`.
    pub fn solve(&self, fwd: &Forward, f: &CollarJet, rhs: &[C64]) -> Vec<C64> {
        let af = fwd.a_ic.matvec_c(&f.values);
        let b: Vec<C64> = rhs.iter().zip(&af).map(|(r, a)| r - a).collect();
        let mut x = self.solver.solve_c(&b);
        for _ in 0..2 {
            let ax = self.matrix.matvec_c(&x);
            let res: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = self.solver.solve_c(&res);
            x.iter_mut().zip(&dx).for_each(|(p, q)| *p += q);
        }
        x
    }

    /// Poisson extensions of the columns of a dense collar block: −(A_II+Q)⁻¹ A_IC F.
    pub fn extend_block(&self, fwd: &Forward, block: &Mat<f64>) -> Mat<f64> {
        let mut x = fwd.a_ic.mul_dense(block.as_ref());
        for j in 0..x.ncols() {
            for i in 0..x.nrows() {
                x[(i, j)] = -x[(i, j)];
            }
        }
        self.solver.solve_in_place(&mut x);
        x
    }
}

/// Solution of (Δ²+q)u = rhs in M with collar values f.
pub fn solve_clamped(fwd: &Forward, q: &Potential, f: &CollarJet, rhs: &ScalarField) -> Result<ScalarField> {
    let d = &fwd.domain;
    if f.len() != d.n_collar() {
        return Err(Error::Dimension { expected: d.n_collar(), got: f.len() });
    }
    let s = ClampedSolver::new(fwd, q)?;
    let mut v = s.solve(fwd, f, rhs.interior(d));
    v.extend_from_slice(&f.values);
    Ok(ScalarField { values: v })
}

/// The field with (Δ²+q)u = 0 in M and collar values g.
pub fn poisson(fwd: &Forward, q: &Potential, g: &CollarJet) -> Result<ScalarField> {
    solve_clamped(fwd, q, g, &ScalarField::zeros(&fwd.domain))
}

pub fn poisson_with(fwd: &Forward, s: &ClampedSolver, g: &CollarJet) -> ScalarField {
    let d = &fwd.domain;
    let mut v = s.solve(fwd, g, &vec![C64::new(0.0, 0.0); d.n_interior]);
    v.extend_from_slice(&g.values);
    ScalarField { values: v }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtnKind {
    /// Λ_q
    Full,
    /// Λ_q − Λ₀
    Difference,
}

/// Dense DtN matrix on collar nodes with its pairing weights.
///
/// ⟨Λf, g⟩ = Σ_c w_c g_c (Λf)_c.
#[derive(Clone, Debug)]
pub struct DtnMatrix {
    pub entries: Mat<f64>,
    pub weights: Vec<f64>,
    pub kind: DtnKind,
}

impl DtnMatrix {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, f: &CollarJet) -> Vec<C64> {
        dense_matvec_c(self.entries.as_ref(), &f.values)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.as_ref().col_iter().all(|c| c.iter().all(|&v| v == 0.0))
    }

    /// Max |Λ - Λᵀ| relative to max |Λ|.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0f64;
        let mut a = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                m = m.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
                a = a.max(self.entries[(i, j)].abs());
            }
        }
        if a == 0.0 {
            0.0
        } else {
            m / a
        }
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.entries
            .as_ref()
            .singular_values()
            .map(|s| s.into_iter().collect())
            .unwrap_or_default()
    }
}

/// Λ_q = A_CC − A_CI (A_II+Q)⁻¹ A_IC, assembled block by block.
pub fn assemble_dtn(fwd: &Forward, q: &Potential) -> Result<DtnMatrix> {
    let s = ClampedSolver::new(fwd, q)?;
    let d = &fwd.domain;
    let nc = d.n_collar();
    let mut entries = Mat::<f64>::zeros(nc, nc);
    for (i, j, v) in (0..nc).flat_map(|i| fwd.a_cc.row(i).map(move |(j, v)| (i, j, v))) {
        entries[(i, j)] = v;
    }
    let cols: Vec<Mat<f64>> = (0..nc)
        .step_by(BLOCK)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&start| {
            let w = BLOCK.min(nc - start);
            let e = Mat::<f64>::from_fn(nc, w, |i, j| if i == start + j { 1.0 } else { 0.0 });
            let x = s.extend_block(fwd, &e);
            fwd.a_ci.mul_dense(x.as_ref())
        })
        .collect();
    for (b, blk) in cols.iter().enumerate() {
        let start = b * BLOCK;
        for j in 0..blk.ncols() {
            for i in 0..nc {
                entries[(i, start + j)] += blk[(i, j)];
            }
        }
    }
    Ok(DtnMatrix { entries, weights: vec![d.node_weight(); nc], kind: DtnKind::Full })
}

/// Λ_q − Λ₀ = A_CI A_II⁻¹ Q (A_II+Q)⁻¹ A_IC, without forming either map.
pub fn assemble_dtn_difference(fwd: &Forward, q: &Potential) -> Result<DtnMatrix> {
    let d = &fwd.domain;
    let nc = d.n_collar();
    let weights = vec![d.node_weight(); nc];
    if q.is_zero() {
        return Ok(DtnMatrix { entries: Mat::zeros(nc, nc), weights, kind: DtnKind::Difference });
    }
    let op = DtnOperator::new(fwd, q)?;
    let mut entries = Mat::<f64>::zeros(nc, nc);
    let blocks: Vec<(usize, Mat<f64>)> = (0..nc)
        .step_by(BLOCK)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&start| {
            let w = BLOCK.min(nc - start);
            let e = Mat::<f64>::from_fn(nc, w, |i, j| if i == start + j { 1.0 } else { 0.0 });
            (start, op.apply_block(&e))
        })
        .collect();
    for (start, blk) in blocks {
        for j in 0..blk.ncols() {
            for i in 0..nc {
                entries[(i, start + j)] = blk[(i, j)];
            }
        }
    }
    Ok(DtnMatrix { entries, weights, kind: DtnKind::Difference })
}

/// Matrix-free Λ_q − Λ₀ (two sparse solves per application).
pub struct DtnOperator<'a> {
    fwd: &'a Forward,
    pub q: Potential,
    pub with_q: ClampedSolver,
    pub free: ClampedSolver,
}

impl<'a> DtnOperator<'a> {
    pub fn new(fwd: &'a Forward, q: &Potential) -> Result<Self> {
        let with_q = ClampedSolver::new(fwd, q)?;
        let free = ClampedSolver::new(fwd, &Potential::zero(&fwd.domain))?;
        Ok(DtnOperator { fwd, q: q.clone(), with_q, free })
    }

    pub fn apply_block(&self, f: &Mat<f64>) -> Mat<f64> {
        let mut x = self.with_q.extend_block(self.fwd, f);
        for j in 0..x.ncols() {
            for i in 0..x.nrows() {
                x[(i, j)] *= -self.q.values[i];
            }
        }
        self.free.solver.solve_in_place(&mut x);
        self.fwd.a_ci.mul_dense(x.as_ref())
    }

    pub fn apply(&self, f: &CollarJet) -> Vec<C64> {
        let m = crate::linalg::split_complex(&[f.values.clone()]);
        let y = self.apply_block(&m);
        crate::linalg::join_complex(&y).pop().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.fwd.domain.n_collar()
    }

    pub fn weight(&self) -> f64 {
        self.fwd.domain.node_weight()
    }

    /// ⟨(Λ_q − Λ₀) f, g⟩ with bilinear pairing.
    pub fn pairing(&self, f: &CollarJet, g: &CollarJet) -> C64 {
        let y = self.apply(f);
        y.iter().zip(&g.values).map(|(a, b)| a * b).sum::<C64>() * self.weight()
    }
}

/// Anything that applies Λ_q − Λ₀ to blocks of real collar vectors.
pub trait DtnAction: Sync {
    fn dim(&self) -> usize;
    fn apply_block(&self, f: &Mat<f64>) -> Mat<f64>;
    /// Pairing weight of collar node `i`.
    fn weight_at(&self, i: usize) -> f64;

    fn apply_c(&self, f: &[C64]) -> Vec<C64> {
        let y = self.apply_block(&crate::linalg::split_complex(&[f.to_vec()]));
        crate::linalg::join_complex(&y).pop().unwrap()
    }
}

impl DtnAction for DtnMatrix {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn apply_block(&self, f: &Mat<f64>) -> Mat<f64> {
        &self.entries * f
    }

    fn weight_at(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

impl DtnAction for DtnOperator<'_> {
    fn dim(&self) -> usize {
        self.fwd.domain.n_collar()
    }

    fn apply_block(&self, f: &Mat<f64>) -> Mat<f64> {
        DtnOperator::apply_block(self, f)
    }

    fn weight_at(&self, _: usize) -> f64 {
        self.fwd.domain.node_weight()
    }
}

/// Orthonormal basis of the range of an n-column operator, grown in blocks of
/// `block` Gaussian probes until a fresh probe is captured to `tol`
/// relative, or `max_rank` is reached. Returns the basis and that residual.
pub fn range_finder(
    op: &dyn Fn(&Mat<f64>) -> Mat<f64>,
    n: usize,
    tol: f64,
    block: usize,
    max_rank: usize,
    seed: u64,
) -> (Mat<f64>, f64) {
    use rand::Rng;
    let mut rng = crate::util::rng(seed);
    let mut gauss = |cols: usize| Mat::<f64>::from_fn(n, cols, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let mut basis = Mat::<f64>::zeros(n, 0);
    let mut image = op(&gauss(block));
    let residual = loop {
        let scale = image.norm_l2();
        if scale == 0.0 {
            break 0.0;
        }
        // component of the new image outside the current range
        let mut fresh = image.clone();
        for _ in 0..2 {
            if basis.ncols() > 0 {
                let c = basis.transpose() * &fresh;
                fresh = &fresh - &basis * &c;
            }
        }
        let residual = fresh.norm_l2() / scale;
        if residual <= tol || basis.ncols() >= max_rank {
            break residual;
        }
        let qf = fresh.as_ref().qr().compute_thin_Q();
        let mut grown = Mat::<f64>::zeros(n, basis.ncols() + qf.ncols());
        grown.as_mut().submatrix_mut(0, 0, n, basis.ncols()).copy_from(&basis);
        grown.as_mut().submatrix_mut(0, basis.ncols(), n, qf.ncols()).copy_from(&qf);
        basis = grown;
        image = op(&gauss(block));
    };
    (basis, residual)
}

/// Λ_q − Λ₀ ≈ Q C Qᵀ with orthonormal Q, from a randomized range finder.
#[derive(Clone, Debug)]
pub struct LowRankDtn {
    pub basis: Mat<f64>,
    pub core: Mat<f64>,
    pub weights: Vec<f64>,
    /// Relative residual on a fresh probe block.
    pub residual: f64,
}

impl LowRankDtn {
    /// Grows the range in blocks of `block` columns until a fresh probe is
    /// captured to `tol` relative, or `max_rank` is reached.
    pub fn compress(op: &dyn DtnAction, tol: f64, block: usize, max_rank: usize, seed: u64) -> Self {
        let n = op.dim();
        let weights: Vec<f64> = (0..n).map(|i| op.weight_at(i)).collect();
        let (basis, residual) = range_finder(&|f| op.apply_block(f), n, tol, block, max_rank, seed);
        let core = if basis.ncols() == 0 {
            Mat::zeros(0, 0)
        } else {
            let aq = op.apply_block(&basis);
            let c = basis.transpose() * &aq;
            // the difference map is symmetric; keep the symmetric part
            Mat::<f64>::from_fn(c.nrows(), c.ncols(), |i, j| 0.5 * (c[(i, j)] + c[(j, i)]))
        };
        LowRankDtn { basis, core, weights, residual }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

impl DtnAction for LowRankDtn {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn apply_block(&self, f: &Mat<f64>) -> Mat<f64> {
        if self.rank() == 0 {
            return Mat::zeros(self.dim(), f.ncols());
        }
        &self.basis * (&self.core * (self.basis.transpose() * f))
    }

    fn weight_at(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

/// ⟨Λf, g⟩ = Σ w g (Λf); bilinear, conjugate g yourself for the sesquilinear form.
pub fn dtn_pairing(lam: &dyn DtnAction, f: &CollarJet, g: &CollarJet) -> Result<C64> {
    let n = lam.dim();
    if f.len() != n || g.len() != n {
        return Err(Error::Dimension { expected: n, got: if f.len() != n { f.len() } else { g.len() } });
    }
    let y = lam.apply_c(&f.values);
    Ok(y.iter().zip(&g.values).enumerate().map(|(i, (a, b))| a * b * lam.weight_at(i)).sum())
}

/// Volume side of the integral identity: Σ_M w q u v.
pub fn volume_pairing(d: &Domain, q: &Potential, u: &ScalarField, v: &ScalarField) -> C64 {
    let w = d.node_weight();
    (0..d.n_interior).map(|k| u.values[k] * v.values[k] * (q.values[k] * w)).sum()
}

/// |⟨(Λ_q−Λ₀)f, g⟩ − ∫ q u^f v^g| / (1 + |∫ q u^f v^g|).
pub fn verify_integral_identity(fwd: &Forward, dl: &dyn DtnAction, q: &Potential, f: &CollarJet, g: &CollarJet) -> Result<f64> {
    let lhs = dtn_pairing(dl, f, g)?;
    let u = poisson(fwd, q, f)?;
    let v = poisson(fwd, &Potential::zero(&fwd.domain), g)?;
    let rhs = volume_pairing(&fwd.domain, q, &u, &v);
    Ok((lhs - rhs).norm() / (1.0 + rhs.norm()))
}

/// Taylor lift of a physical boundary jet (γ₀u, γ₁u) to collar values:
/// u(x) ≈ g0(b) + d·g1(b) with b the nearest boundary point and d the signed
/// outward distance.
pub fn lift_jet(d: &Domain, jet: &crate::mesh::BoundaryJet) -> CollarJet {
    use crate::mesh::Face;
    let r = d.transversal_radius;
    let nt = d.n_theta;
    let lat0 = d.boundary_nodes.iter().position(|b| b.face == Face::Lateral).unwrap();
    let ncap = lat0 / 2;
    let lateral = |vals: &[C64], x1: f64, th: f64| -> C64 {
        let fi = (x1 / d.dx1 - 0.5).clamp(0.0, (d.n1 - 1) as f64);
        let i0 = (fi.floor() as usize).min(d.n1 - 2);
        let ti = i0 + 1;
        let a = fi - i0 as f64;
        let ft = th.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * nt as f64;
        let m0 = (ft.floor() as usize) % nt;
        let m1 = (m0 + 1) % nt;
        let b = ft - ft.floor();
        let at = |i: usize, m: usize| vals[lat0 + i * nt + m];
        at(i0, m0) * ((1.0 - a) * (1.0 - b)) + at(ti, m0) * (a * (1.0 - b)) + at(i0, m1) * ((1.0 - a) * b) + at(ti, m1) * (a * b)
    };
    let cap = |vals: &[C64], high: bool, y: f64, z: f64| -> C64 {
        let off = if high { ncap } else { 0 };
        let mut best = (f64::INFINITY, 0usize);
        for k in 0..ncap {
            let p = d.boundary_nodes[off + k].pos;
            let dd = (p[1] - y).powi(2) + (p[2] - z).powi(2);
            if dd < best.0 {
                best = (dd, off + k);
            }
        }
        vals[best.1]
    };
    let values = d.pos[d.n_interior..]
        .iter()
        .map(|&p| {
            let rho = (p[1] * p[1] + p[2] * p[2]).sqrt();
            let th = p[2].atan2(p[1]);
            let dl = rho - r;
            let dc0 = -p[0];
            let dc1 = p[0] - d.x1_extent;
            if dl >= dc0.max(dc1) {
                let x1 = p[0].clamp(0.0, d.x1_extent);
                lateral(&jet.g0, x1, th) + lateral(&jet.g1, x1, th) * dl
            } else {
                let high = dc1 > dc0;
                let dist = dc0.max(dc1);
                let s = if rho > r { r / rho } else { 1.0 };
                let (y, z) = (p[1] * s, p[2] * s);
                cap(&jet.g0, high, y, z) + cap(&jet.g1, high, y, z) * dist
            }
        })
        .collect();
    CollarJet { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_domain, DomainConfig};
    use crate::util::random_vec;
    use faer::linalg::solvers::Solve;

    fn small() -> Domain {
        build_domain(&DomainConfig { x1_extent: 0.5, transversal_radius: 0.4, n1: 8, n_perp: 9 }).unwrap()
    }

    fn bump(d: &Domain) -> Potential {
        Potential::from_fn(d, |p| 3.0 * (-((p[0] - 0.25).powi(2) + (p[1] - 0.1).powi(2) + p[2] * p[2]) / 0.02).exp())
    }

    #[test]
    fn laplacian_kills_linear_functions() {
        let d = small();
        let l = laplacian(&d);
        let u: Vec<f64> = d.pos.iter().map(|p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2]).collect();
        assert!(l.matvec(&u).iter().all(|v| v.abs() < 1e-9));
        let u: Vec<f64> = d.pos.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
        assert!(l.matvec(&u).iter().all(|v| (v - 4.0).abs() < 1e-8));
    }

    #[test]
    fn operator_is_thirteen_point_on_interior() {
        let d = small();
        let f = Forward::new(&d);
        for i in 0..d.n_interior {
            assert_eq!(f.full.row(i).count(), 25);
        }
    }

    #[test]
    fn clamped_zero_data_gives_zero() {
        let d = small();
        let fwd = Forward::new(&d);
        let u = solve_clamped(&fwd, &Potential::zero(&d), &CollarJet::zeros(&d), &ScalarField::zeros(&d)).unwrap();
        assert!(u.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn cubic_in_x1_is_reproduced() {
        let d = small();
        let fwd = Forward::new(&d);
        let w = ScalarField::from_fn(&d, |p| C64::new(p[0].powi(3), 0.0));
        let u = poisson(&fwd, &Potential::zero(&d), &CollarJet::of_field(&d, &w)).unwrap();
        let err = u.sub(&w).values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn constant_potential_matches_dense_lu() {
        let d = small();
        let fwd = Forward::new(&d);
        let c0 = 5.0;
        let q = Potential::constant(&d, c0);
        let w = ScalarField::from_fn(&d, |p| C64::new((3.0 * p[0]).sin() * p[1], 0.0));
        let rhs = w.scale(C64::new(c0, 0.0));
        let u = solve_clamped(&fwd, &q, &CollarJet::zeros(&d), &rhs).unwrap();
        let n = d.n_interior;
        let a = Mat::<f64>::from_fn(n, n, |i, j| {
            let mut v = fwd.a_ii.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1);
            if i == j {
                v += c0;
            }
            v
        });
        let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs.values[i].re);
        let x = a.partial_piv_lu().solve(&b);
        for i in 0..n {
            assert!((x[(i, 0)] - u.values[i].re).abs() < 1e-9 * (1.0 + x[(i, 0)].abs()));
        }
    }

    #[test]
    fn dtn_symmetric_and_difference_consistent() {
        let d = small();
        let fwd = Forward::new(&d);
        let q = bump(&d);
        let l0 = assemble_dtn(&fwd, &Potential::zero(&d)).unwrap();
        assert!(l0.asymmetry() < 1e-10);
        let lq = assemble_dtn(&fwd, &q).unwrap();
        let dl = assemble_dtn_difference(&fwd, &q).unwrap();
        let nc = d.n_collar();
        let mut m = 0.0f64;
        for j in 0..nc {
            for i in 0..nc {
                m = m.max((lq.entries[(i, j)] - l0.entries[(i, j)] - dl.entries[(i, j)]).abs());
            }
        }
        assert!(m < 1e-6 * l0.entries.norm_max(), "{m}");
        assert!(dl.asymmetry() < 1e-10);
    }

    #[test]
    fn zero_potential_difference_vanishes() {
        let d = small();
        let fwd = Forward::new(&d);
        let dl = assemble_dtn_difference(&fwd, &Potential::zero(&d)).unwrap();
        assert!(dl.is_zero());
        let f = CollarJet::random(&d, 1);
        assert_eq!(dtn_pairing(&dl, &f, &f).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn integral_identity_holds() {
        let d = small();
        let fwd = Forward::new(&d);
        let q = bump(&d);
        let dl = assemble_dtn_difference(&fwd, &q).unwrap();
        for s in 0..4 {
            let f = CollarJet::random(&d, 10 + s);
            let g = CollarJet::random(&d, 20 + s);
            let r = verify_integral_identity(&fwd, &dl, &q, &f, &g).unwrap();
            assert!(r < 1e-8, "{r}");
        }
        let f = CollarJet { values: random_vec(d.n_collar(), 3).into_iter().map(|v| C64::new(v, 0.0)).collect() };
        assert!(dtn_pairing(&dl, &f, &f).unwrap().im.abs() < 1e-10);
    }

    #[test]
    fn matrix_free_matches_dense() {
        let d = small();
        let fwd = Forward::new(&d);
        let q = bump(&d);
        let dl = assemble_dtn_difference(&fwd, &q).unwrap();
        let op = DtnOperator::new(&fwd, &q).unwrap();
        let f = CollarJet::random(&d, 4);
        let a = dl.apply(&f);
        let b = op.apply(&f);
        let e = crate::linalg::diff_norm_c(&a, &b) / crate::linalg::norm2_c(&a);
        assert!(e < 1e-10, "{e}");
    }

    #[test]
    fn difference_is_linear_in_small_potential() {
        let d = small();
        let fwd = Forward::new(&d);
        let n1 = assemble_dtn_difference(&fwd, &Potential::constant(&d, 1e-3)).unwrap().entries.norm_l2();
        let n2 = assemble_dtn_difference(&fwd, &Potential::constant(&d, 2e-3)).unwrap().entries.norm_l2();
        assert!((n2 / n1 - 2.0).abs() < 0.1);
    }

    #[test]
    fn negative_resonant_potential_is_reported() {
        let d = small();
        let fwd = Forward::new(&d);
        // shift by the smallest eigenvalue of A_II makes the operator singular
        let s = ClampedSolver::new(&fwd, &Potential::zero(&d)).unwrap();
        let shift = s.sigma_min;
        let q = Potential::constant(&d, -shift);
        match ClampedSolver::new(&fwd, &q) {
            Err(Error::Singular { .. }) => {}
            Err(e) => panic!("unexpected {e}"),
            Ok(c) => assert!(c.sigma_min < 1e-6 * shift),
        }
    }

    #[test]
    fn lift_of_smooth_jet_is_close() {
        let d = small();
        let w = ScalarField::from_fn(&d, |p| C64::new((p[0] + 0.5 * p[1]).exp(), 0.0));
        let jet = d.boundary_jet(&w);
        let lift = lift_jet(&d, &jet);
        let exact = CollarJet::of_field(&d, &w);
        let e = crate::linalg::diff_norm_c(&lift.values, &exact.values) / crate::linalg::norm2_c(&exact.values);
        assert!(e < 0.1, "{e}");
    }
}
