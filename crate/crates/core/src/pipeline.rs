//! End-to-end reconstruction: simulate ΔΛ for a phantom, read q|∂M off the
//! oscillatory family, sweep beam data over (λ, chord), invert every λ slice
//! and synthesise q in x₁.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand_distr::{Distribution, StandardNormal};

use crate::boundary::{boundary_value, lateral_sample_points, HarmonicCorrector, OscillatoryFamily};
use crate::carleman::{CarlemanParams, GreenKind, GreenPair};
use crate::cgo::{build_u0, build_u1, gaussian_beam, BeamKind};
use crate::error::{Error, Result};
use crate::forward::{CollarJet, DtnAction, DtnOperator, Forward, LowRankDtn, Potential};
use crate::io::{create, write_plane_csv, FieldBox};
use crate::linalg::{diff_norm_c, join_complex, norm2_c, split_complex};
use crate::mesh::{build_domain, Domain, DomainConfig, ScalarField};
use crate::phantom::{make_phantom, Phantom};
use crate::ray::{
    chebyshev_offsets, chord_grid, fourier_x1_invert, invert_ladder, AttenuatedSinogram, BeamDataEngine,
    SinogramSlice, TransversalImage, Window,
};
use crate::trace::guarded;
use crate::util::chi;

pub const REPORT_VERSION: &str = "biharm-report v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Simulate,
    Boundary,
    Trace,
    Sinogram,
    Invert,
    Synthesis,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Simulate, Stage::Boundary, Stage::Trace, Stage::Sinogram, Stage::Invert, Stage::Synthesis];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate-dtn",
            Stage::Boundary => "boundary-trace",
            Stage::Trace => "trace-recovery",
            Stage::Sinogram => "sinogram",
            Stage::Invert => "inversion",
            Stage::Synthesis => "synthesis",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let stage = match s {
            "simulate" | "simulate-dtn" => Stage::Simulate,
            "boundary" | "boundary-trace" => Stage::Boundary,
            "trace" | "trace-recovery" => Stage::Trace,
            "sinogram" => Stage::Sinogram,
            "invert" | "inversion" => Stage::Invert,
            "synthesis" | "all" => Stage::Synthesis,
            _ => return Err(Error::Config(format!("unknown stage '{s}'"))),
        };
        Ok(stage)
    }
}

pub fn parse_window(s: &str) -> Result<Window> {
    match s {
        "rect" => Ok(Window::Rect),
        "delta" => Ok(Window::Delta),
        "tukey" => Ok(Window::Tukey(0.5)),
        _ => s
            .strip_prefix("tukey:")
            .and_then(|a| a.parse().ok())
            .filter(|a: &f64| (0.0..=1.0).contains(a))
            .map(Window::Tukey)
            .ok_or_else(|| Error::Config(format!("bad window '{s}' (tukey[:alpha], rect, delta)"))),
    }
}

fn window_name(w: Window) -> String {
    match w {
        Window::Tukey(a) => format!("tukey:{a}"),
        Window::Rect => "rect".into(),
        Window::Delta => "delta".into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub domain: DomainConfig,
    pub phantom: String,
    pub c0: f64,
    /// Multiplies the phantom (linearity checks).
    pub phantom_scale: f64,
    pub h_ladder: Vec<f64>,
    /// Ladder entries whose ‖h⁴SΔΛ‖ spectral radius exceeds this are dropped.
    pub contraction_max: f64,
    pub lambda_max: f64,
    pub lambda_samples: usize,
    pub window: Window,
    pub angles: usize,
    pub offsets: usize,
    pub image: usize,
    pub dtn_tol: f64,
    pub noise: f64,
    pub seed: u64,
    pub boundary_lambdas: Vec<f64>,
    pub boundary_planes: usize,
    pub boundary_angles: usize,
    pub boundary_scale: f64,
    /// |q|∂M| above this switches on the boundary-layer correction.
    pub boundary_tol: f64,
    pub boundary_layer: f64,
    pub trace_checks: usize,
    pub stop_after: Stage,
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            domain: DomainConfig::default(),
            phantom: "gauss-bump".into(),
            c0: 0.01,
            phantom_scale: 1.0,
            h_ladder: vec![0.1, 0.066, 0.05, 0.033],
            contraction_max: 0.5,
            lambda_max: 3.0,
            lambda_samples: 13,
            window: Window::Tukey(0.5),
            angles: 90,
            offsets: 64,
            image: 64,
            dtn_tol: 1e-8,
            noise: 0.0,
            seed: 1,
            boundary_lambdas: vec![0.2, 0.1, 0.07],
            boundary_planes: 3,
            boundary_angles: 8,
            boundary_scale: 0.15,
            boundary_tol: 2e-3,
            boundary_layer: 0.15,
            trace_checks: 2,
            stop_after: Stage::Synthesis,
            out: None,
        }
    }
}

fn list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number '{t}'")))).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
        }
        match key {
            "x1_extent" => self.domain.x1_extent = num(key, value)?,
            "radius" => self.domain.transversal_radius = num(key, value)?,
            "n1" => self.domain.n1 = num(key, value)?,
            "n_perp" => self.domain.n_perp = num(key, value)?,
            "phantom" => self.phantom = value.to_string(),
            "c0" => self.c0 = num(key, value)?,
            "phantom_scale" => self.phantom_scale = num(key, value)?,
            "h_ladder" => self.h_ladder = list(value)?,
            "contraction_max" => self.contraction_max = num(key, value)?,
            "lambda_max" => self.lambda_max = num(key, value)?,
            "lambda_samples" => self.lambda_samples = num(key, value)?,
            "window" => self.window = parse_window(value)?,
            "angles" => self.angles = num(key, value)?,
            "offsets" => self.offsets = num(key, value)?,
            "image" => self.image = num(key, value)?,
            "dtn_tol" => self.dtn_tol = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "boundary_lambdas" => self.boundary_lambdas = list(value)?,
            "boundary_planes" => self.boundary_planes = num(key, value)?,
            "boundary_angles" => self.boundary_angles = num(key, value)?,
            "boundary_scale" => self.boundary_scale = num(key, value)?,
            "boundary_tol" => self.boundary_tol = num(key, value)?,
            "boundary_layer" => self.boundary_layer = num(key, value)?,
            "trace_checks" => self.trace_checks = num(key, value)?,
            "stage" => self.stop_after = value.parse()?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_ladder.is_empty() || self.h_ladder.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::Config("h ladder must hold positive values".into()));
        }
        if self.h_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("h ladder must be strictly decreasing".into()));
        }
        if self.lambda_samples == 0 || self.lambda_samples % 2 == 0 {
            return Err(Error::Config("lambda_samples must be odd so the grid is symmetric about 0".into()));
        }
        if !(self.lambda_max >= 0.0) || (self.lambda_samples > 1 && self.lambda_max == 0.0) {
            return Err(Error::Config("lambda_max must be positive".into()));
        }
        if self.angles < 2 || self.angles % 2 != 0 {
            return Err(Error::Config("angles must be even (chord reversal pairs)".into()));
        }
        if self.offsets < 2 || self.image < 2 {
            return Err(Error::Config("offsets and image must be at least 2".into()));
        }
        if self.noise < 0.0 {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Symmetric uniform grid over [−λ_max, λ_max].
    pub fn lambda_grid(&self) -> Vec<f64> {
        let n = self.lambda_samples;
        if n == 1 {
            return vec![0.0];
        }
        let m = (n - 1) / 2;
        (0..n).map(|k| self.lambda_max * (k as f64 - m as f64) / m as f64).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.domain;
        let _ = writeln!(s, "x1_extent = {}\nradius = {}\nn1 = {}\nn_perp = {}", d.x1_extent, d.transversal_radius, d.n1, d.n_perp);
        let _ = writeln!(s, "phantom = {}\nc0 = {}\nphantom_scale = {}", self.phantom, self.c0, self.phantom_scale);
        let _ = writeln!(s, "h_ladder = {}\ncontraction_max = {}", fmt_list(&self.h_ladder), self.contraction_max);
        let _ = writeln!(s, "lambda_max = {}\nlambda_samples = {}\nwindow = {}", self.lambda_max, self.lambda_samples, window_name(self.window));
        let _ = writeln!(s, "angles = {}\noffsets = {}\nimage = {}", self.angles, self.offsets, self.image);
        let _ = writeln!(s, "dtn_tol = {}\nnoise = {}\nseed = {}", self.dtn_tol, self.noise, self.seed);
        let _ = writeln!(s, "boundary_lambdas = {}\nboundary_planes = {}\nboundary_angles = {}", fmt_list(&self.boundary_lambdas), self.boundary_planes, self.boundary_angles);
        let _ = writeln!(s, "boundary_scale = {}\nboundary_tol = {}\nboundary_layer = {}", self.boundary_scale, self.boundary_tol, self.boundary_layer);
        let _ = writeln!(s, "trace_checks = {}\nstage = {}", self.trace_checks, self.stop_after.name());
        if let Some(o) = &self.out {
            let _ = writeln!(s, "out = {}", o.display());
        }
        s
    }
}

/// Ordered `key: value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{REPORT_VERSION}\n");
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}: {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_VERSION) {
            return Err(Error::Format(format!("missing '{REPORT_VERSION}' header")));
        }
        let entries = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_once(": ").map(|(k, v)| (k.to_string(), v.to_string())).ok_or_else(|| Error::Format(format!("bad report line '{l}'")))
            })
            .collect::<Result<_>>()?;
        Ok(Report { entries })
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryRow {
    pub x1: f64,
    pub phi: f64,
    pub per_lambda: Vec<C64>,
    pub extrapolated: f64,
    pub truth: f64,
}

/// Everything a run produced, up to the last executed stage.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub report: Report,
    pub boundary: Vec<BoundaryRow>,
    /// One sinogram per h used, coarsest first.
    pub sinograms: Vec<AttenuatedSinogram>,
    pub images: Vec<TransversalImage>,
    /// Reconstructed q on interior nodes.
    pub field: Option<Vec<f64>>,
    pub truth: Option<Vec<f64>>,
}

/// Bilinear-in-(x₁, φ) extension of lateral boundary samples into a layer
/// of depth `width`; zero near the caps unless samples say otherwise.
pub fn boundary_extension(d: &Domain, rows: &[BoundaryRow], width: f64) -> Potential {
    let mut planes: Vec<f64> = rows.iter().map(|r| r.x1).collect();
    planes.dedup();
    let per = rows.len() / planes.len().max(1);
    let value = |x1: f64, phi: f64| -> f64 {
        let at_plane = |p: usize| {
            let row = &rows[p * per..(p + 1) * per];
            let t = phi.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * per as f64;
            let m0 = (t.floor() as usize) % per;
            let a = t - t.floor();
            row[m0].extrapolated * (1.0 - a) + row[(m0 + 1) % per].extrapolated * a
        };
        if planes.len() == 1 || x1 <= planes[0] {
            return at_plane(0);
        }
        if x1 >= *planes.last().unwrap() {
            return at_plane(planes.len() - 1);
        }
        let p = planes.windows(2).position(|w| x1 >= w[0] && x1 <= w[1]).unwrap();
        let a = (x1 - planes[p]) / (planes[p + 1] - planes[p]);
        at_plane(p) * (1.0 - a) + at_plane(p + 1) * a
    };
    let r = d.transversal_radius;
    Potential::from_fn(d, |x| {
        let rho = x[1].hypot(x[2]);
        let depth = r - rho;
        if rows.is_empty() || depth >= width {
            return 0.0;
        }
        value(x[0], x[2].atan2(x[1])) * chi(2.0 * depth / width)
    })
}

pub struct BoundaryTrace {
    pub rows: Vec<BoundaryRow>,
    /// Per-λ estimates flagged as under-resolved.
    pub unresolved: usize,
    /// Largest |Im| / |Re| of the smallest-λ estimate.
    pub imag_ratio: f64,
}

/// q|∂M estimates on the lateral sample points of `cfg`; `truth` fills the
/// reference column.
pub fn boundary_trace<F: Fn([f64; 3]) -> f64>(fwd: &Forward, data: &dyn DtnAction, cfg: &PipelineConfig, truth: F) -> Result<BoundaryTrace> {
    let d = &fwd.domain;
    let corrector = HarmonicCorrector::new(fwd)?;
    let lam0 = cfg.boundary_lambdas.first().copied().unwrap_or(0.2);
    let probe = OscillatoryFamily { x1_0: 0.0, phi0: 0.0, psi: 0.0, scale: cfg.boundary_scale, lambda: lam0 };
    let points = lateral_sample_points(d, cfg.boundary_planes, cfg.boundary_angles, probe.support_radius());
    let mut out = BoundaryTrace { rows: Vec::new(), unresolved: 0, imag_ratio: 0.0 };
    for &(x1, phi) in &points {
        let base = OscillatoryFamily { x1_0: x1, phi0: phi, ..probe };
        let est = boundary_value(fwd, data, &corrector, &base, &cfg.boundary_lambdas)?;
        out.unresolved += est.resolved.iter().filter(|r| !**r).count();
        let last = est.last();
        if last.re.abs() > 0.0 {
            out.imag_ratio = out.imag_ratio.max(last.im.abs() / last.re.abs());
        }
        let x0 = base.x0(d.transversal_radius);
        out.rows.push(BoundaryRow { x1, phi, per_lambda: est.values, extrapolated: est.extrapolated, truth: truth(x0) });
    }
    Ok(out)
}

/// index, x1, phi, one column per λ, extrapolated value.
pub fn write_boundary_csv(w: &mut dyn std::io::Write, lambdas: &[f64], rows: &[BoundaryRow]) -> Result<()> {
    let head: Vec<String> = lambdas.iter().map(|l| format!("est_{l}")).collect();
    writeln!(w, "index,x1,phi,{},extrapolated", head.join(","))?;
    for (i, r) in rows.iter().enumerate() {
        let vals: Vec<String> = r.per_lambda.iter().map(|v| format!("{:e}", v.re)).collect();
        writeln!(w, "{i},{},{},{},{:e}", r.x1, r.phi, vals.join(","), r.extrapolated)?;
    }
    Ok(())
}

fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Adds symmetric Gaussian noise of relative size `level` (Frobenius) to the core.
fn perturb(lr: &LowRankDtn, level: f64, seed: u64) -> LowRankDtn {
    let r = lr.rank();
    let mut rng = crate::util::rng(seed ^ 0x6e6f697365);
    let g = Mat::<f64>::from_fn(r, r, |_, _| StandardNormal.sample(&mut rng));
    let sym = Mat::<f64>::from_fn(r, r, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
    let scale = if r == 0 { 0.0 } else { level * lr.core.norm_l2() / sym.norm_l2().max(1e-300) };
    let mut out = lr.clone();
    out.core = &lr.core + &sym * faer::Scale(scale);
    out
}

fn write_artifact(cfg: &PipelineConfig, name: &str, f: impl FnOnce(&mut dyn std::io::Write) -> Result<()>) -> Result<()> {
    if let Some(dir) = &cfg.out {
        let mut w = create(&dir.join(name))?;
        f(&mut w)?;
        std::io::Write::flush(&mut w)?;
    }
    Ok(())
}

/// Runs the stages up to `cfg.stop_after`; a failure is labelled with its
/// stage, and the partial report is still written.
pub fn run(cfg: &PipelineConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Outcome::default();
    out.report.push("config_phantom", &cfg.phantom);
    out.report.push("config_stop_after", cfg.stop_after.name());
    let res = run_stages(cfg, &mut out);
    if let Err(e) = &res {
        if let Error::Stage { stage, .. } = e {
            out.report.push("failed_stage", stage);
        }
        out.report.push("error", e.to_string().replace('\n', " "));
    }
    write_artifact(cfg, "report.txt", |w| Ok(w.write_all(out.report.to_text().as_bytes())?))?;
    write_artifact(cfg, "config.txt", |w| Ok(w.write_all(cfg.to_text().as_bytes())?))?;
    res.map(|_| out)
}

fn run_stages(cfg: &PipelineConfig, out: &mut Outcome) -> Result<()> {
    let clock = Instant::now();
    let d = build_domain(&cfg.domain)?;
    let fwd = Forward::new(&d);
    let phantom: Phantom = make_phantom(&cfg.phantom, &d, cfg.c0)?;
    let scale = cfg.phantom_scale;
    let q = Potential::from_fn(&d, |x| scale * phantom.eval(x));
    let truth = q.values.clone();
    out.truth = Some(truth.clone());
    let rep = &mut out.report;

    // Simulate ΔΛ.
    let st = Stage::Simulate.name();
    let t = Instant::now();
    let exact = DtnOperator::new(&fwd, &q).map_err(|e| e.in_stage(st))?;
    let lr = LowRankDtn::compress(&exact, cfg.dtn_tol, 32, d.n_collar(), cfg.seed);
    let noisy = (cfg.noise > 0.0).then(|| perturb(&lr, cfg.noise, cfg.seed));
    let data: &dyn DtnAction = match &noisy {
        Some(n) => n,
        None => &exact,
    };
    let compressed = noisy.as_ref().unwrap_or(&lr);
    let f = CollarJet::random(&d, cfg.seed);
    let g = CollarJet::random(&d, cfg.seed + 1);
    let fg: C64 = data.apply_c(&f.values).iter().zip(&g.values).map(|(a, b)| a * b).sum();
    let gf: C64 = data.apply_c(&g.values).iter().zip(&f.values).map(|(a, b)| a * b).sum();
    rep.push("dtn_collar_nodes", d.n_collar());
    rep.push("dtn_symmetry_residual", format!("{:.3e}", (fg - gf).norm() / fg.norm().max(1e-300)));
    rep.push("dtn_rank", compressed.rank());
    rep.push("dtn_compression_residual", format!("{:.3e}", lr.residual));
    rep.push("dtn_noise_level", cfg.noise);
    rep.push("dtn_max_abs_potential", format!("{:.6e}", q.max_abs()));
    rep.push("simulate_seconds", format!("{:.2}", t.elapsed().as_secs_f64()));
    if cfg.stop_after == Stage::Simulate {
        return Ok(());
    }

    // Boundary values on the lateral face.
    let st = Stage::Boundary.name();
    let t = Instant::now();
    let bt = boundary_trace(&fwd, data, cfg, |x| scale * phantom.eval(x)).map_err(|e| e.in_stage(st))?;
    let (points, unresolved, imag_ratio) = (bt.rows.len(), bt.unresolved, bt.imag_ratio);
    out.boundary = bt.rows;
    let bmax = out.boundary.iter().fold(0.0f64, |m, r| m.max(r.extrapolated.abs()));
    let berr = out.boundary.iter().fold(0.0f64, |m, r| m.max((r.extrapolated - r.truth).abs()));
    let correction = bmax > cfg.boundary_tol;
    rep.push("boundary_points", points);
    if points == 0 {
        rep.push("boundary_warning", "no lateral sample point fits the grid; q|dM assumed zero");
    }
    rep.push("boundary_unresolved_estimates", unresolved);
    rep.push("boundary_max_abs", format!("{bmax:.4e}"));
    rep.push("boundary_max_error", format!("{berr:.4e}"));
    rep.push("boundary_max_imag_ratio", format!("{imag_ratio:.3e}"));
    rep.push("boundary_layer_correction", if correction { "on" } else { "off" });
    rep.push("boundary_seconds", format!("{:.2}", t.elapsed().as_secs_f64()));
    write_artifact(cfg, "boundary.csv", |w| write_boundary_csv(w, &cfg.boundary_lambdas, &out.boundary))?;
    let known = correction.then(|| boundary_extension(&d, &out.boundary, cfg.boundary_layer));
    if cfg.stop_after == Stage::Boundary {
        return Ok(());
    }

    // The two largest admissible h of the ladder; trace recovery checked against the oracle.
    let st = Stage::Trace.name();
    let t = Instant::now();
    let mut engines = Vec::new();
    for &h in &cfg.h_ladder {
        let pair = GreenPair::new(&fwd, h, GreenKind::Compatible).map_err(|e| e.in_stage(st))?;
        let eng = BeamDataEngine::new(&fwd, data, pair, cfg.dtn_tol, cfg.seed).map_err(|e| e.in_stage(st))?;
        rep.push(&format!("trace_rank_h{h}"), eng.rank());
        rep.push(&format!("trace_contraction_h{h}"), format!("{:.3e}", eng.contraction));
        if eng.contraction < cfg.contraction_max {
            engines.push(eng);
            if engines.len() == 2 {
                break;
            }
        }
    }
    if engines.is_empty() {
        return Err(Error::Ladder(cfg.contraction_max).in_stage(st));
    }
    rep.push("trace_ladder_used", fmt_list(&engines.iter().map(|e| e.h()).collect::<Vec<_>>()));
    let offsets = chebyshev_offsets(cfg.offsets);
    let chords = chord_grid(cfg.angles, &offsets);
    let finest = engines.last().unwrap();
    let mut worst = 0.0f64;
    let mut touched = 0usize;
    for c in 0..cfg.trace_checks.min(chords.len()) {
        let g = &chords[(c * chords.len()) / cfg.trace_checks.max(1) + offsets.len() / 2];
        let lambda = cfg.lambda_max * c as f64 / cfg.trace_checks.max(1) as f64;
        let p = CarlemanParams::new(finest.h(), lambda, 1.0).map_err(|e| e.in_stage(st))?;
        let beam = gaussian_beam(&d, g, &p, BeamKind::V).map_err(|e| e.in_stage(st))?;
        let u0 = build_u0(&fwd, &finest.pair, &p, &beam);
        let b = CollarJet::of_field(&d, &u0.field);
        let (rec, log) = guarded(|| join_complex(&finest.recover_block(&split_complex(&[b.values.clone()]))).pop().unwrap());
        touched += log.len();
        let u1 = build_u1(&fwd, &finest.pair, &q, &p, &u0).map_err(|e| e.in_stage(st))?;
        let oracle = CollarJet::of_field(&d, &u1.field);
        worst = worst.max(diff_norm_c(&rec, &oracle.values) / norm2_c(&oracle.values).max(1e-300));
    }
    rep.push("trace_recovery_error", format!("{worst:.3e}"));
    rep.push("trace_guard_violations", touched);
    rep.push("trace_seconds", format!("{:.2}", t.elapsed().as_secs_f64()));
    if cfg.stop_after == Stage::Trace {
        return Ok(());
    }

    // Sinogram for λ ≥ 0, mirrored to λ < 0.
    let st = Stage::Sinogram.name();
    let t = Instant::now();
    let grid = cfg.lambda_grid();
    let positive: Vec<f64> = grid.iter().copied().filter(|&l| l >= 0.0).collect();
    let mut sinos = Vec::new();
    for eng in &engines {
        let mut slices = Vec::new();
        let mut ratios = Vec::new();
        for &lambda in &positive {
            let run = eng.sweep_corrected(lambda, &chords, known.as_ref()).map_err(|e| e.in_stage(st))?;
            let mut slice = SinogramSlice::zeros(lambda, cfg.angles, &offsets);
            for (v, b) in slice.values.iter_mut().zip(&run) {
                *v = b.value;
            }
            slice.mu = -2.0 * run.iter().map(|b| b.attenuation).sum::<f64>() / run.len() as f64;
            if lambda > 0.0 {
                ratios.push(slice.mu / (-2.0 * lambda));
            }
            slices.push(slice);
        }
        let mean_ratio = if ratios.is_empty() { 1.0 } else { ratios.iter().sum::<f64>() / ratios.len() as f64 };
        rep.push(&format!("sinogram_attenuation_ratio_h{}", eng.h()), format!("{mean_ratio:.4}"));
        let mut all: Vec<SinogramSlice> =
            slices.iter().skip(1).rev().map(|s| s.mirrored()).collect::<Result<_>>().map_err(|e| e.in_stage(st))?;
        all.extend(slices);
        sinos.push(AttenuatedSinogram { h: eng.h(), slices: all });
    }
    let finest = sinos.last().unwrap();
    let zero = &finest.slices[positive.len() - 1];
    let mut rev = 0.0f64;
    let mut vmax = 0.0f64;
    for a in 0..zero.angles {
        for k in 0..zero.offsets.len() {
            let (ar, kr) = zero.reversed(a, k).map_err(|e| e.in_stage(st))?;
            rev = rev.max((zero.at(a, k) - zero.at(ar, kr).conj()).norm());
            vmax = vmax.max(zero.at(a, k).norm());
        }
    }
    rep.push("sinogram_chords", chords.len());
    rep.push("sinogram_lambdas", finest.slices.len());
    rep.push("sinogram_max_abs", format!("{vmax:.4e}"));
    rep.push("sinogram_reversal_residual", format!("{:.3e}", if vmax > 0.0 { rev / vmax } else { rev }));
    rep.push("sinogram_seconds", format!("{:.2}", t.elapsed().as_secs_f64()));
    write_artifact(cfg, "sinogram.csv", |w| {
        for (i, s) in sinos.iter().enumerate() {
            s.write_csv(&mut *w, i == 0)?;
        }
        Ok(())
    })?;
    out.sinograms = sinos;
    if cfg.stop_after == Stage::Sinogram {
        return Ok(());
    }

    // Invert each slice per h with its own attenuation, then extrapolate in h.
    let st = Stage::Invert.name();
    let t = Instant::now();
    let images = invert_ladder(&out.sinograms, cfg.image).map_err(|e| e.in_stage(st))?;
    let imax = images.iter().flat_map(|i| i.values.iter()).fold(0.0f64, |m, v| m.max(v.norm()));
    let rep = &mut out.report;
    rep.push("inversion_max_abs", format!("{imax:.4e}"));
    rep.push("inversion_conditioning_warning", if cfg.lambda_max > 3.0 { "lambda_max above 3" } else { "none" });
    rep.push("inversion_seconds", format!("{:.2}", t.elapsed().as_secs_f64()));
    if known.is_none() {
        // Per-λ errors against the phantom's x₁-Fourier slices, λ ≥ 0.
        let exact: Vec<TransversalImage> = positive
            .iter()
            .map(|&l| TransversalImage::from_fn(cfg.image, |y| phantom.fourier_slice(2.0 * l, y, d.x1_extent) * scale))
            .collect();
        let errors = |imgs: &[TransversalImage]| {
            let off = imgs.len() - positive.len();
            exact.iter().zip(&imgs[off..]).map(|(e, i)| format!("{:.3}", i.relative_error(e, 0.95))).collect::<Vec<_>>().join(",")
        };
        for s in &out.sinograms {
            let own = invert_ladder(std::slice::from_ref(s), cfg.image).map_err(|e| e.in_stage(st))?;
            rep.push(&format!("inversion_slice_error_h{}", s.h), errors(&own));
        }
        rep.push("inversion_slice_error", errors(&images));
    }
    let n = cfg.image;
    let lams = grid.clone();
    let imgs = &images;
    write_artifact(cfg, "images.csv", |w| {
        writeln!(w, "lambda,i,j,re,im")?;
        for (l, img) in lams.iter().zip(imgs) {
            for i in 0..n {
                for j in 0..n {
                    let v = img.values[i * n + j];
                    writeln!(w, "{l},{i},{j},{:e},{:e}", v.re, v.im)?;
                }
            }
        }
        Ok(())
    })?;
    out.images = images;
    if cfg.stop_after == Stage::Invert {
        return Ok(());
    }

    // Fourier synthesis in x₁.
    let st = Stage::Synthesis.name();
    let mut rec = fourier_x1_invert(&d, &grid, &out.images, cfg.window).map_err(|e| e.in_stage(st))?;
    if let Some(k) = &known {
        rec.iter_mut().zip(&k.values).for_each(|(r, e)| *r += e);
    }
    let linf = rec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rep = &mut out.report;
    rep.push("reconstruction_linf", format!("{linf:.4e}"));
    rep.push("reconstruction_l2_error", format!("{:.4}", relative_l2(&rec, &truth)));
    rep.push("total_seconds", format!("{:.2}", clock.elapsed().as_secs_f64()));
    let nodal: Vec<C64> = rec.iter().map(|&v| C64::new(v, 0.0)).collect();
    write_artifact(cfg, "q.field", |w| FieldBox::from_nodes(&d, &nodal).write(w))?;
    let mut u = ScalarField::zeros(&d);
    u.values[..nodal.len()].copy_from_slice(&nodal);
    write_artifact(cfg, "q_mid.csv", |w| write_plane_csv(w, &d, &u, d.n1 / 2))?;
    out.field = Some(rec);
    Ok(())
}
