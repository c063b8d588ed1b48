//! Computational domain M = [0, X₁] × D_r on a Cartesian grid that is
//! cell-centred in x₁, with an embedded-boundary mask for the disk, two ghost
//! layers, boundary sample points and chord geodesics of the unit disk.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::fd_weights;

/// Margin of ghost cells around the interior index box.
const GHOST: i64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainConfig {
    pub x1_extent: f64,
    pub transversal_radius: f64,
    pub n1: usize,
    pub n_perp: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig { x1_extent: 1.0, transversal_radius: 0.8, n1: 16, n_perp: 33 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    CapLow,
    CapHigh,
    Lateral,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryNode {
    pub pos: [f64; 3],
    pub normal: [f64; 3],
    pub face: Face,
    /// x₁ plane index for lateral nodes, transversal grid index (j, k) for caps.
    pub plane: usize,
    pub ring: usize,
    pub jk: (usize, usize),
}

/// Node classes: interior (V2), first ghost layer (V1 \ V2), outer ghost layer (V0 \ V1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Interior,
    Inner,
    Outer,
}

#[derive(Clone, Debug)]
pub struct Domain {
    pub x1_extent: f64,
    pub transversal_radius: f64,
    pub ambient_radius: f64,
    pub n1: usize,
    pub n_perp: usize,
    pub dx1: f64,
    pub dy: f64,
    /// Box dimensions including ghost margins.
    pub dims: [usize; 3],
    /// Box cell -> node index, or -1.
    pub index: Vec<i64>,
    /// Node -> box coordinates.
    pub cells: Vec<[usize; 3]>,
    pub pos: Vec<[f64; 3]>,
    pub layer: Vec<Layer>,
    /// Number of interior nodes; interior nodes come first in node order.
    pub n_interior: usize,
    /// Node indices of V1 (interior and first ghost layer), in node order.
    pub v1: Vec<usize>,
    pub boundary_nodes: Vec<BoundaryNode>,
    pub quad_weights_boundary: Vec<f64>,
    /// Boundary weights with corner-adjacent nodes zeroed (duality pairings).
    pub pairing_weights: Vec<f64>,
    pub n_theta: usize,
    pub conformal_factor: Vec<f64>,
}

pub fn build_domain(cfg: &DomainConfig) -> Result<Domain> {
    let r = cfg.transversal_radius;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("transversal radius {r} must be positive")));
    }
    if r >= 1.0 {
        return Err(Error::NotCompact(r));
    }
    if !(cfg.x1_extent > 0.0) {
        return Err(Error::Domain(format!("x1 extent {} must be positive", cfg.x1_extent)));
    }
    if cfg.n1 < 8 || cfg.n_perp < 8 {
        return Err(Error::Domain(format!(
            "grid {}x{}^2 too coarse for the 13-point biharmonic stencil (need >= 8)",
            cfg.n1, cfg.n_perp
        )));
    }
    let dx1 = cfg.x1_extent / cfg.n1 as f64;
    let dy = 2.0 * r / (cfg.n_perp - 1) as f64;
    let g = GHOST as usize;
    let dims = [cfg.n1 + 2 * g, cfg.n_perp + 2 * g, cfg.n_perp + 2 * g];
    let ncell = dims[0] * dims[1] * dims[2];
    let flat = |c: [usize; 3]| (c[0] * dims[1] + c[1]) * dims[2] + c[2];
    let coord = |c: [usize; 3]| {
        [
            (c[0] as f64 - GHOST as f64 + 0.5) * dx1,
            -r + (c[1] as f64 - GHOST as f64) * dy,
            -r + (c[2] as f64 - GHOST as f64) * dy,
        ]
    };
    let tol = 1e-9 * dy * dy;
    let mut class = vec![0u8; ncell];
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let c = [i, j, k];
                let x = coord(c);
                let inside_x1 = i >= g && i < g + cfg.n1;
                if inside_x1 && x[1] * x[1] + x[2] * x[2] <= r * r + tol {
                    class[flat(c)] = 3;
                }
            }
        }
    }
    let dilate = |class: &mut Vec<u8>, from: u8, to: u8| {
        let snapshot = class.clone();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    if snapshot[flat([i, j, k])] != 0 {
                        continue;
                    }
                    let nb = neighbours([i, j, k], dims);
                    if nb.iter().flatten().any(|&c| snapshot[flat(c)] >= from) {
                        class[flat([i, j, k])] = to;
                    }
                }
            }
        }
    };
    dilate(&mut class, 3, 2);
    dilate(&mut class, 2, 1);

    let mut index = vec![-1i64; ncell];
    let mut cells = Vec::new();
    for pass in [true, false] {
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let cl = class[flat([i, j, k])];
                    if cl == 0 || (cl == 3) != pass {
                        continue;
                    }
                    index[flat([i, j, k])] = cells.len() as i64;
                    cells.push([i, j, k]);
                }
            }
        }
    }
    let pos: Vec<[f64; 3]> = cells.iter().map(|&c| coord(c)).collect();
    let layer: Vec<Layer> = cells
        .iter()
        .map(|&c| match class[flat(c)] {
            3 => Layer::Interior,
            2 => Layer::Inner,
            _ => Layer::Outer,
        })
        .collect();
    let n_interior = layer.iter().filter(|l| **l == Layer::Interior).count();
    let v1: Vec<usize> = (0..cells.len()).filter(|&n| layer[n] != Layer::Outer).collect();

    // boundary samples
    let mut boundary_nodes = Vec::new();
    let mut quad = Vec::new();
    let mut pairing = Vec::new();
    for (face, x1, nx) in [(Face::CapLow, 0.0, -1.0), (Face::CapHigh, cfg.x1_extent, 1.0)] {
        for j in g..g + cfg.n_perp {
            for k in g..g + cfg.n_perp {
                if class[flat([g, j, k])] != 3 {
                    continue;
                }
                let x = coord([g, j, k]);
                boundary_nodes.push(BoundaryNode {
                    pos: [x1, x[1], x[2]],
                    normal: [nx, 0.0, 0.0],
                    face,
                    plane: 0,
                    ring: 0,
                    jk: (j, k),
                });
                quad.push(dy * dy);
                let rho = (x[1] * x[1] + x[2] * x[2]).sqrt();
                pairing.push(if rho > r - dy { 0.0 } else { dy * dy });
            }
        }
    }
    let n_theta = ((2.0 * PI * r / dy).round() as usize).max(16);
    for i in 0..cfg.n1 {
        let x1 = (i as f64 + 0.5) * dx1;
        for m in 0..n_theta {
            let th = 2.0 * PI * m as f64 / n_theta as f64;
            let (s, c) = th.sin_cos();
            boundary_nodes.push(BoundaryNode {
                pos: [x1, r * c, r * s],
                normal: [0.0, c, s],
                face: Face::Lateral,
                plane: i,
                ring: m,
                jk: (0, 0),
            });
            let w = 2.0 * PI * r / n_theta as f64 * dx1;
            quad.push(w);
            pairing.push(if x1 < dx1 || x1 > cfg.x1_extent - dx1 { 0.0 } else { w });
        }
    }
    let n0 = cells.len();
    Ok(Domain {
        x1_extent: cfg.x1_extent,
        transversal_radius: r,
        ambient_radius: 1.0,
        n1: cfg.n1,
        n_perp: cfg.n_perp,
        dx1,
        dy,
        dims,
        index,
        cells,
        pos,
        layer,
        n_interior,
        v1,
        boundary_nodes,
        quad_weights_boundary: quad,
        pairing_weights: pairing,
        n_theta,
        conformal_factor: vec![1.0; n0],
    })
}

fn neighbours(c: [usize; 3], dims: [usize; 3]) -> [Option<[usize; 3]>; 6] {
    let mut out = [None; 6];
    let mut n = 0;
    for ax in 0..3 {
        for d in [-1i64, 1] {
            let v = c[ax] as i64 + d;
            if v >= 0 && (v as usize) < dims[ax] {
                let mut cc = c;
                cc[ax] = v as usize;
                out[n] = Some(cc);
            }
            n += 1;
        }
    }
    out
}

impl Domain {
    pub fn config(&self) -> DomainConfig {
        DomainConfig {
            x1_extent: self.x1_extent,
            transversal_radius: self.transversal_radius,
            n1: self.n1,
            n_perp: self.n_perp,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.cells.len()
    }

    pub fn n_collar(&self) -> usize {
        self.cells.len() - self.n_interior
    }

    /// Volume weight of one node (uniform).
    pub fn node_weight(&self) -> f64 {
        self.dx1 * self.dy * self.dy
    }

    pub fn quad_weights_volume(&self) -> Vec<f64> {
        vec![self.node_weight(); self.n_interior]
    }

    pub fn volume(&self) -> f64 {
        self.n_interior as f64 * self.node_weight()
    }

    /// Node at box coordinates offset from `c`, if it exists.
    pub fn node_at(&self, c: [usize; 3], off: [i64; 3]) -> Option<usize> {
        let mut cc = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as i64 + off[a];
            if v < 0 || v as usize >= self.dims[a] {
                return None;
            }
            cc[a] = v as usize;
        }
        let id = self.index[(cc[0] * self.dims[1] + cc[1]) * self.dims[2] + cc[2]];
        (id >= 0).then_some(id as usize)
    }

    pub fn node_at_cell(&self, c: [i64; 3]) -> Option<usize> {
        if c.iter().any(|&v| v < 0) {
            return None;
        }
        self.node_at([c[0] as usize, c[1] as usize, c[2] as usize], [0, 0, 0])
    }

    /// Gauge-centred x₁ coordinate of every node.
    pub fn x1_centred(&self) -> Vec<f64> {
        self.pos.iter().map(|p| p[0] - 0.5 * self.x1_extent).collect()
    }

    /// Box index of a transversal coordinate (fractional).
    fn frac_index(&self, y: f64) -> f64 {
        (y + self.transversal_radius) / self.dy + GHOST as f64
    }

    /// Fourth-order Lagrange interpolation of nodal values in the transversal
    /// plane with box index `plane`, using only nodes accepted by `avail`.
    pub fn interp_plane<F: Fn(usize) -> bool>(
        &self,
        values: &[C64],
        avail: F,
        plane: usize,
        y: f64,
        z: f64,
    ) -> Option<C64> {
        let fy = self.frac_index(y);
        let fz = self.frac_index(z);
        let by = fy.floor() as i64;
        let bz = fz.floor() as i64;
        let order = [-1i64, 0, -2, 1, -3, 2];
        for &oy in &order {
            for &oz in &order {
                let sy = by + oy;
                let sz = bz + oz;
                let mut ok = true;
                let mut ids = [[0usize; 4]; 4];
                'outer: for a in 0..4 {
                    for b in 0..4 {
                        match self.node_at_cell([plane as i64, sy + a as i64, sz + b as i64]) {
                            Some(n) if avail(n) => ids[a][b] = n,
                            _ => {
                                ok = false;
                                break 'outer;
                            }
                        }
                    }
                }
                if !ok {
                    continue;
                }
                let xs: Vec<f64> = (0..4).map(|a| (sy + a) as f64).collect();
                let zs: Vec<f64> = (0..4).map(|b| (sz + b) as f64).collect();
                let wy = &fd_weights(fy, &xs, 0)[0];
                let wz = &fd_weights(fz, &zs, 0)[0];
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..4 {
                    for b in 0..4 {
                        acc += values[ids[a][b]] * (wy[a] * wz[b]);
                    }
                }
                return Some(acc);
            }
        }
        None
    }

    /// Samples of a nodal field along the inward normal at boundary node `b`:
    /// values at distances k·step (k = 0..count) inward, and the step.
    fn normal_samples(&self, values: &[C64], b: &BoundaryNode, count: usize) -> (Vec<C64>, f64) {
        let g = GHOST as usize;
        match b.face {
            Face::Lateral => {
                let step = self.dy;
                let plane = b.plane + g;
                let s = (0..count)
                    .map(|k| {
                        let d = k as f64 * step;
                        let y = b.pos[1] - d * b.normal[1];
                        let z = b.pos[2] - d * b.normal[2];
                        self.interp_plane(values, |_| true, plane, y, z)
                            .expect("boundary stencil outside grid")
                    })
                    .collect();
                (s, step)
            }
            Face::CapLow | Face::CapHigh => {
                // nodes sit at half-cell offsets from the cap
                let (j, k) = b.jk;
                let s = (0..count)
                    .map(|m| {
                        let i = if b.face == Face::CapLow { g + m } else { g + self.n1 - 1 - m };
                        let n = self.node_at([i, j, k], [0, 0, 0]).expect("cap column");
                        values[n]
                    })
                    .collect();
                (s, self.dx1)
            }
        }
    }

    /// Offsets (along the outward normal) of the samples returned by `normal_samples`.
    fn sample_offsets(&self, b: &BoundaryNode, count: usize, step: f64) -> Vec<f64> {
        match b.face {
            Face::Lateral => (0..count).map(|k| -(k as f64) * step).collect(),
            _ => (0..count).map(|k| -(k as f64 + 0.5) * step).collect(),
        }
    }

    /// Boundary jet (trace, outward normal derivative) of a field on M.
    pub fn boundary_jet(&self, u: &ScalarField) -> BoundaryJet {
        let mut g0 = Vec::with_capacity(self.boundary_nodes.len());
        let mut g1 = Vec::with_capacity(self.boundary_nodes.len());
        for b in &self.boundary_nodes {
            let (s, step) = self.normal_samples(&u.values, b, 3);
            let w = fd_weights(0.0, &self.sample_offsets(b, 3, step), 1);
            g0.push(combine(&w[0], &s));
            g1.push(combine(&w[1], &s));
        }
        BoundaryJet { g0, g1 }
    }

    /// Second and third normal derivatives at the boundary, and the traces
    /// Δu|∂M and ∂_νΔu|∂M rebuilt from normal derivatives, the mean-curvature
    /// term and the tangential Laplacian.
    pub fn higher_normal_traces(&self, u: &ScalarField) -> HigherTraces {
        let nb = self.boundary_nodes.len();
        let mut d = vec![vec![C64::new(0.0, 0.0); nb]; 4];
        let mut tan = vec![C64::new(0.0, 0.0); nb];
        let mut tan_n = vec![C64::new(0.0, 0.0); nb];
        let lap_t = self.transversal_laplacian(&u.values);
        for (ib, b) in self.boundary_nodes.iter().enumerate() {
            let (s, step) = self.normal_samples(&u.values, b, 5);
            let off = self.sample_offsets(b, 5, step);
            let w = fd_weights(0.0, &off, 3);
            for k in 0..4 {
                d[k][ib] = combine(&w[k], &s);
            }
            if b.face != Face::Lateral {
                let (t, _) = self.normal_samples(&lap_t, b, 5);
                tan[ib] = combine(&w[0], &t);
                tan_n[ib] = combine(&w[1], &t);
            }
        }
        let r = self.transversal_radius;
        let nt = self.n_theta;
        let lat0 = self.boundary_nodes.iter().position(|b| b.face == Face::Lateral).unwrap_or(nb);
        let lat = |plane: usize, ring: usize| lat0 + plane * nt + ring;
        let dth = 2.0 * PI / nt as f64;
        let second_x1 = |arr: &[C64], plane: usize, ring: usize| -> C64 {
            let p = plane.clamp(1, self.n1 - 2);
            (arr[lat(p - 1, ring)] - arr[lat(p, ring)] * 2.0 + arr[lat(p + 1, ring)]) / (self.dx1 * self.dx1)
        };
        let second_th = |arr: &[C64], plane: usize, ring: usize| -> C64 {
            let m = (ring + nt - 1) % nt;
            let p = (ring + 1) % nt;
            (arr[lat(plane, m)] - arr[lat(plane, ring)] * 2.0 + arr[lat(plane, p)]) / (dth * dth)
        };
        let mut laplacian = vec![C64::new(0.0, 0.0); nb];
        let mut normal_laplacian = vec![C64::new(0.0, 0.0); nb];
        for (ib, b) in self.boundary_nodes.iter().enumerate() {
            match b.face {
                Face::Lateral => {
                    let h = 1.0 / r;
                    let (pl, rg) = (b.plane, b.ring);
                    let dt0 = second_th(&d[0], pl, rg) / (r * r) + second_x1(&d[0], pl, rg);
                    laplacian[ib] = d[2][ib] + d[1][ib] * h + dt0;
                    normal_laplacian[ib] = d[3][ib] + d[2][ib] * h - d[1][ib] * (h * h)
                        + second_th(&d[1], pl, rg) / (r * r)
                        - second_th(&d[0], pl, rg) * (2.0 / (r * r * r))
                        + second_x1(&d[1], pl, rg);
                }
                _ => {
                    laplacian[ib] = d[2][ib] + tan[ib];
                    normal_laplacian[ib] = d[3][ib] + tan_n[ib];
                }
            }
        }
        HigherTraces {
            d2: d[2].clone(),
            d3: d[3].clone(),
            laplacian,
            normal_laplacian,
        }
    }

    /// Five-point Laplacian in the transversal variables at every node whose
    /// four transversal neighbours exist (zero elsewhere).
    fn transversal_laplacian(&self, v: &[C64]) -> Vec<C64> {
        let inv = 1.0 / (self.dy * self.dy);
        (0..self.n_nodes())
            .map(|n| {
                let c = self.cells[n];
                let nb = [[0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];
                let mut acc = v[n] * -4.0;
                for o in nb {
                    match self.node_at(c, o) {
                        Some(m) => acc += v[m],
                        None => return C64::new(0.0, 0.0),
                    }
                }
                acc * inv
            })
            .collect()
    }

    /// Trace of the volume 7-point Laplacian, interpolated from V1 nodes to the boundary.
    pub fn laplacian_trace_volume(&self, u: &ScalarField) -> Vec<C64> {
        let lap = crate::forward::laplacian(self);
        let lv = lap.matvec_c(&u.values);
        let mut full = vec![C64::new(0.0, 0.0); self.n_nodes()];
        for (r, &n) in self.v1.iter().enumerate() {
            full[n] = lv[r];
        }
        let g = GHOST as usize;
        let in_v1 = |n: usize| self.layer[n] != Layer::Outer;
        self.boundary_nodes
            .iter()
            .map(|b| match b.face {
                Face::Lateral => {
                    let s: Vec<C64> = (0..4)
                        .map(|k| {
                            let d = k as f64 * self.dy;
                            self.interp_plane(
                                &full,
                                in_v1,
                                b.plane + g,
                                b.pos[1] - d * b.normal[1],
                                b.pos[2] - d * b.normal[2],
                            )
                            .expect("volume stencil")
                        })
                        .collect();
                    let off: Vec<f64> = (0..4).map(|k| -(k as f64) * self.dy).collect();
                    combine(&fd_weights(0.0, &off, 0)[0], &s)
                }
                _ => {
                    let (s, step) = self.normal_samples(&full, b, 4);
                    combine(&fd_weights(0.0, &self.sample_offsets(b, 4, step), 0)[0], &s)
                }
            })
            .collect()
    }

    /// Duality pairing of two boundary jets with the corner-excluded weights.
    pub fn jet_pairing(&self, f: &BoundaryJet, g: &BoundaryJet) -> C64 {
        self.pairing_weights
            .iter()
            .enumerate()
            .map(|(i, w)| (f.g0[i] * g.g0[i] + f.g1[i] * g.g1[i]) * *w)
            .sum()
    }

    /// Boundary quadrature of a function sampled on boundary nodes.
    pub fn boundary_integral(&self, vals: &[C64]) -> C64 {
        self.quad_weights_boundary.iter().zip(vals).map(|(w, v)| v * *w).sum()
    }
}

fn combine(w: &[f64], s: &[C64]) -> C64 {
    w.iter().zip(s).map(|(a, b)| b * *a).sum()
}

#[derive(Clone, Debug)]
pub struct HigherTraces {
    pub d2: Vec<C64>,
    pub d3: Vec<C64>,
    pub laplacian: Vec<C64>,
    pub normal_laplacian: Vec<C64>,
}

/// Complex grid function on the nodes of a domain (interior and ghost layers).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub values: Vec<C64>,
}

impl ScalarField {
    pub fn zeros(d: &Domain) -> Self {
        ScalarField { values: vec![C64::new(0.0, 0.0); d.n_nodes()] }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> C64>(d: &Domain, f: F) -> Self {
        ScalarField { values: d.pos.iter().map(|&p| f(p)).collect() }
    }

    pub fn from_real(values: &[f64]) -> Self {
        ScalarField { values: values.iter().map(|&v| C64::new(v, 0.0)).collect() }
    }

    pub fn interior(&self, d: &Domain) -> &[C64] {
        &self.values[..d.n_interior]
    }

    pub fn collar(&self, d: &Domain) -> &[C64] {
        &self.values[d.n_interior..]
    }

    /// Quadrature-weighted L² norm over M.
    pub fn l2_norm(&self, d: &Domain) -> f64 {
        (self.interior(d).iter().map(|v| v.norm_sqr()).sum::<f64>() * d.node_weight()).sqrt()
    }

    pub fn scale(&self, a: C64) -> Self {
        ScalarField { values: self.values.iter().map(|v| v * a).collect() }
    }

    pub fn add(&self, o: &ScalarField) -> Self {
        ScalarField { values: self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &ScalarField) -> Self {
        ScalarField { values: self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect() }
    }
}

/// Boundary jet (γ₀u, γ₁u) at the boundary sample nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryJet {
    pub g0: Vec<C64>,
    pub g1: Vec<C64>,
}

impl BoundaryJet {
    pub fn len(&self) -> usize {
        self.g0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g0.is_empty()
    }
}

/// Chord of the unit disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geodesic {
    pub theta: f64,
    pub offset: f64,
    pub length: f64,
    pub non_tangential: bool,
}

pub fn chord(theta: f64, p: f64) -> Geodesic {
    let length = 2.0 * (1.0 - p * p).max(0.0).sqrt();
    Geodesic { theta, offset: p, length, non_tangential: p.abs() < 1.0 }
}

impl Geodesic {
    /// Unit direction τ′.
    pub fn direction(&self) -> [f64; 2] {
        [self.theta.cos(), self.theta.sin()]
    }

    /// Unit normal n = τ′ rotated by +π/2 (right-hand rule).
    pub fn normal(&self) -> [f64; 2] {
        [-self.theta.sin(), self.theta.cos()]
    }

    pub fn point(&self, t: f64) -> [f64; 2] {
        let tau = self.direction();
        let n = self.normal();
        let a = t - 0.5 * self.length;
        [self.offset * n[0] + a * tau[0], self.offset * n[1] + a * tau[1]]
    }

    /// Chord coordinates (t, y) of a transversal point.
    pub fn frame(&self, x: [f64; 2]) -> (f64, f64) {
        let tau = self.direction();
        let n = self.normal();
        let t = x[0] * tau[0] + x[1] * tau[1] + 0.5 * self.length;
        let y = x[0] * n[0] + x[1] * n[1] - self.offset;
        (t, y)
    }

    /// Parameter interval where the chord lies inside the disk of radius `r`.
    pub fn inside(&self, r: f64) -> Option<(f64, f64)> {
        let p = self.offset;
        if p.abs() >= r {
            return None;
        }
        let half = (r * r - p * p).sqrt();
        Some((0.5 * self.length - half, 0.5 * self.length + half))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Domain {
        build_domain(&DomainConfig { x1_extent: 1.0, transversal_radius: 0.8, n1: 16, n_perp: 33 }).unwrap()
    }

    #[test]
    fn volume_matches_cylinder() {
        let d = small();
        let exact = PI * 0.64;
        assert!((d.volume() - exact).abs() / exact < 0.02, "{}", d.volume());
    }

    #[test]
    fn boundary_area_matches_cylinder() {
        let d = small();
        let area: f64 = d.quad_weights_boundary.iter().sum();
        let exact = 2.0 * PI * 0.64 + 2.0 * PI * 0.8;
        assert!((area - exact).abs() / exact < 0.02, "{area}");
    }

    #[test]
    fn rejects_non_compact_and_coarse() {
        let mut c = DomainConfig::default();
        c.transversal_radius = 1.0;
        assert!(matches!(build_domain(&c), Err(Error::NotCompact(_))));
        let mut c = DomainConfig::default();
        c.n_perp = 7;
        assert!(build_domain(&c).is_err());
    }

    #[test]
    fn normals_are_unit() {
        let d = small();
        for b in &d.boundary_nodes {
            let n = (b.normal.iter().map(|v| v * v).sum::<f64>()).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ghost_layers_cover_13_point_stencil() {
        let d = small();
        for n in 0..d.n_interior {
            let c = d.cells[n];
            for ax in 0..3 {
                for s in [-2i64, -1, 1, 2] {
                    let mut o = [0i64; 3];
                    o[ax] = s;
                    assert!(d.node_at(c, o).is_some());
                }
            }
        }
    }

    #[test]
    fn jet_of_constant_and_linear_fields() {
        let d = small();
        let one = ScalarField::from_fn(&d, |_| C64::new(1.0, 0.0));
        let j = d.boundary_jet(&one);
        assert!(j.g0.iter().all(|v| (v - 1.0).norm() < 1e-12));
        assert!(j.g1.iter().all(|v| v.norm() < 1e-10));
        let lin = ScalarField::from_fn(&d, |p| C64::new(p[0], 0.0));
        let j = d.boundary_jet(&lin);
        for (i, b) in d.boundary_nodes.iter().enumerate() {
            if b.face == Face::CapLow {
                assert!(j.g0[i].norm() < 1e-12);
                assert!((j.g1[i] + 1.0).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn jet_of_exponential_is_second_order() {
        let a = [0.3, -0.7, 0.5];
        let err = |n1: usize, np: usize| {
            let d = build_domain(&DomainConfig { x1_extent: 1.0, transversal_radius: 0.8, n1, n_perp: np }).unwrap();
            let u = ScalarField::from_fn(&d, |p| C64::new((a[0] * p[0] + a[1] * p[1] + a[2] * p[2]).exp(), 0.0));
            let j = d.boundary_jet(&u);
            d.boundary_nodes
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let an: f64 = (0..3).map(|k| a[k] * b.normal[k]).sum();
                    (j.g1[i] - j.g0[i] * an).norm()
                })
                .fold(0.0, f64::max)
        };
        let e1 = err(8, 17);
        let e2 = err(16, 33);
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    #[test]
    fn higher_traces_of_quadratics() {
        let d = small();
        let u = ScalarField::from_fn(&d, |p| C64::new(p[0] * p[0], 0.0));
        let t = d.higher_normal_traces(&u);
        for (i, b) in d.boundary_nodes.iter().enumerate() {
            if b.face == Face::CapLow {
                assert!((t.d2[i] - 2.0).norm() < 1e-9);
                assert!(t.d3[i].norm() < 1e-7);
            }
        }
        let one = ScalarField::from_fn(&d, |_| C64::new(1.0, 0.0));
        let t = d.higher_normal_traces(&one);
        assert!(t.d2.iter().chain(&t.d3).all(|v| v.norm() < 1e-8));
    }

    #[test]
    fn laplacian_trace_two_ways_on_lateral_face() {
        let d = small();
        let u = ScalarField::from_fn(&d, |p| C64::new(p[1] * p[1] + p[2] * p[2], 0.0));
        let t = d.higher_normal_traces(&u);
        let v = d.laplacian_trace_volume(&u);
        for (i, b) in d.boundary_nodes.iter().enumerate() {
            if b.face == Face::Lateral {
                assert!((t.laplacian[i] - 4.0).norm() < 0.05, "{}", t.laplacian[i]);
                assert!((t.laplacian[i] - v[i]).norm() < 0.05);
            }
        }
    }

    #[test]
    fn chord_examples() {
        let g = chord(0.0, 0.0);
        assert_eq!(g.length, 2.0);
        let g = chord(0.0, 1.0);
        assert_eq!(g.length, 0.0);
        assert!(!g.non_tangential);
        let g = chord(PI / 4.0, 0.6);
        assert!((g.length - 1.6).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn chord_endpoints_on_unit_circle(theta in 0.0f64..(2.0 * PI), p in -0.99f64..0.99) {
            let g = chord(theta, p);
            let e0 = g.point(0.0);
            let e1 = g.point(g.length);
            prop_assert!(((e0[0] * e0[0] + e0[1] * e0[1]).sqrt() - 1.0).abs() < 1e-12);
            prop_assert!(((e1[0] * e1[0] + e1[1] * e1[1]).sqrt() - 1.0).abs() < 1e-12);
            let m = g.point(0.5 * g.length);
            prop_assert!(m[0] * m[0] + m[1] * m[1] < 1.0);
            prop_assert!((g.length - 2.0 * (1.0 - p * p).sqrt()).abs() == 0.0);
        }

        #[test]
        fn chord_frame_round_trip(theta in 0.0f64..(2.0 * PI), p in -0.9f64..0.9, t in 0.0f64..1.0, y in -0.3f64..0.3) {
            let g = chord(theta, p);
            let x = g.point(t * g.length);
            let n = g.normal();
            let xy = [x[0] + y * n[0], x[1] + y * n[1]];
            let (tt, yy) = g.frame(xy);
            prop_assert!((tt - t * g.length).abs() < 1e-12);
            prop_assert!((yy - y).abs() < 1e-12);
        }

        #[test]
        fn boundary_jet_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let d = build_domain(&DomainConfig { x1_extent: 0.5, transversal_radius: 0.4, n1: 8, n_perp: 9 }).unwrap();
            let u = ScalarField::from_fn(&d, |p| C64::new(p[0].sin() + p[1], p[2]));
            let v = ScalarField::from_fn(&d, |p| C64::new(p[1] * p[2], p[0]));
            let w = u.scale(C64::new(a, 0.0)).add(&v.scale(C64::new(b, 0.0)));
            let (ju, jv, jw) = (d.boundary_jet(&u), d.boundary_jet(&v), d.boundary_jet(&w));
            for i in 0..ju.len() {
                let e = jw.g1[i] - (ju.g1[i] * a + jv.g1[i] * b);
                prop_assert!(e.norm() < 1e-10 * (1.0 + jw.g1[i].norm()));
            }
        }
    }
}
