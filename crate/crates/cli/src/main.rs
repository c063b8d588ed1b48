use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biharm::carleman::{adjoint_residual, boundary_operator, right_inverse_residual, single_layer, CarlemanParams, GreenKind, GreenPair};
use biharm::cgo::{build_u0, gaussian_beam, BeamKind};
use biharm::forward::{assemble_dtn_difference, verify_integral_identity, CollarJet, DtnMatrix, DtnOperator, Forward};
use biharm::io::{create, open, read_jet, write_jet, write_plane_csv, FieldBox, OperatorDump};
use biharm::mesh::{build_domain, chord, DomainConfig, ScalarField};
use biharm::phantom::make_phantom;
use biharm::pipeline::{boundary_trace, run, write_boundary_csv, PipelineConfig, Stage};
use biharm::ray::{fourier_x1_invert, invert_ladder, AttenuatedSinogram};
use biharm::trace::{guarded, recover_trace, Method};
use biharm::{Error, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;

#[derive(Parser)]
#[command(name = "biharm", version, about = "Reconstruct the potential q of Δ² + q from its Dirichlet-to-Neumann map")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// zero, constant, gauss-bump, two-bumps, boundary-nonzero
    #[arg(long)]
    phantom: Option<String>,
    #[arg(long, value_delimiter = ',')]
    h_ladder: Option<Vec<f64>>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long)]
    offsets: Option<usize>,
    /// Relative Gaussian perturbation of ΔΛ (exploratory)
    #[arg(long)]
    noise: Option<f64>,
    /// Last stage to run
    #[arg(long)]
    stage: Option<String>,
    /// Any other configuration key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::parse(&std::fs::read_to_string(p)?)?,
            None => PipelineConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.phantom {
            cfg.phantom = p.clone();
        }
        if let Some(h) = &self.h_ladder {
            cfg.h_ladder = h.clone();
        }
        if let Some(l) = self.lambda_max {
            cfg.lambda_max = l;
        }
        if let Some(a) = self.angles {
            cfg.angles = a;
        }
        if let Some(o) = self.offsets {
            cfg.offsets = o;
        }
        if let Some(n) = self.noise {
            cfg.noise = n;
        }
        if let Some(s) = &self.stage {
            cfg.stop_after = s.parse()?;
        }
        cfg.out = Some(self.out.clone());
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone, Debug)]
struct BeamArgs {
    #[arg(long, default_value_t = 0.05)]
    h: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate Λ_q − Λ₀ for a phantom and report its diagnostics
    SimulateDtn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        beam: BeamArgs,
        /// Write the dense ΔΛ (small grids only)
        #[arg(long)]
        dump_dtn: bool,
        /// Write the dense single-layer operator at (h, λ)
        #[arg(long)]
        dump_single_layer: bool,
        /// Write u₀ for the chord (theta, offset) at (h, λ)
        #[arg(long)]
        dump_cgo: bool,
    },
    /// Estimate q on the lateral boundary
    BoundaryTrace {
        #[command(flatten)]
        common: Common,
        /// Dense ΔΛ from simulate-dtn --dump-dtn; simulated from the phantom otherwise
        #[arg(long)]
        dtn: Option<PathBuf>,
    },
    /// Recover the collar trace of u₁ from ΔΛ
    RecoverTrace {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        beam: BeamArgs,
        #[arg(long)]
        dtn: PathBuf,
        /// γu₀ jet; built from the chord when absent
        #[arg(long)]
        jet: Option<PathBuf>,
        #[arg(long)]
        neumann: bool,
    },
    /// Run the pipeline through the sinogram stage
    Sinogram {
        #[command(flatten)]
        common: Common,
    },
    /// Invert a sinogram CSV and synthesise q
    Invert {
        #[command(flatten)]
        common: Common,
        /// CSV written by the sinogram stage; two h values are extrapolated
        #[arg(long)]
        sinogram: PathBuf,
    },
    /// Full reconstruction with a report against the phantom
    Reconstruct {
        #[command(flatten)]
        common: Common,
    },
    /// Quick consistency checks on a small grid
    Selftest,
}

fn domain_of(cfg: &PipelineConfig) -> Result<biharm::mesh::Domain> {
    build_domain(&cfg.domain)
}

fn load_dtn(path: &Path, n: usize) -> Result<DtnMatrix> {
    let dl = OperatorDump::read(BufReader::new(open(path)?))?.to_dtn()?;
    if dl.dim() != n {
        return Err(Error::Dimension { expected: n, got: dl.dim() });
    }
    Ok(dl)
}

fn simulate(common: &Common, beam: &BeamArgs, dump_dtn: bool, dump_sl: bool, dump_cgo: bool) -> Result<()> {
    let mut cfg = common.config()?;
    cfg.stop_after = Stage::Simulate;
    let out = run(&cfg)?;
    print!("{}", out.report.to_text());
    let dir = &common.out;
    let d = domain_of(&cfg)?;
    let fwd = Forward::new(&d);
    if dump_dtn {
        let ph = make_phantom(&cfg.phantom, &d, cfg.c0)?;
        let q = ph.sample(&d);
        let dl = assemble_dtn_difference(&fwd, &q)?;
        OperatorDump::of_dtn(&dl).write(create(&dir.join("dtn.bin"))?)?;
    }
    if dump_sl || dump_cgo {
        let pair = GreenPair::new(&fwd, beam.h, GreenKind::Compatible)?;
        let p = CarlemanParams::new(beam.h, beam.lambda, 1.0)?;
        if dump_sl {
            let s = single_layer(&fwd, &pair, &p);
            let dump = OperatorDump {
                kind: "single-layer".into(),
                label: vec![("h".into(), beam.h), ("lambda".into(), beam.lambda)],
                entries: s.entries,
                weights: vec![d.node_weight(); d.n_collar()],
            };
            dump.write(create(&dir.join("single_layer.bin"))?)?;
        }
        if dump_cgo {
            let b = gaussian_beam(&d, &chord(beam.theta, beam.offset), &p, BeamKind::V)?;
            let u0 = build_u0(&fwd, &pair, &p, &b);
            FieldBox::from_nodes(&d, &u0.field.values).write(create(&dir.join("u0.field"))?)?;
            write_jet(create(&dir.join("u0.jet"))?, &CollarJet::of_field(&d, &u0.field))?;
            println!("cgo_remainder_norm: {:.4e}", u0.remainder_norm);
            println!("cgo_pde_residual: {:.3e}", u0.pde_residual);
        }
    }
    Ok(())
}

fn boundary(common: &Common, dtn: Option<&Path>) -> Result<()> {
    let cfg = common.config()?;
    let d = domain_of(&cfg)?;
    let fwd = Forward::new(&d);
    let ph = make_phantom(&cfg.phantom, &d, cfg.c0)?;
    let bt = match dtn {
        Some(p) => {
            let dl = load_dtn(p, d.n_collar())?;
            boundary_trace(&fwd, &dl, &cfg, |_| f64::NAN)?
        }
        None => {
            let op = DtnOperator::new(&fwd, &ph.sample(&d))?;
            boundary_trace(&fwd, &op, &cfg, |x| ph.eval(x))?
        }
    };
    let mut w = create(&common.out.join("boundary.csv"))?;
    write_boundary_csv(&mut w, &cfg.boundary_lambdas, &bt.rows)?;
    let bmax = bt.rows.iter().fold(0.0f64, |m, r| m.max(r.extrapolated.abs()));
    println!("boundary_points: {}", bt.rows.len());
    println!("boundary_unresolved_estimates: {}", bt.unresolved);
    println!("boundary_max_abs: {bmax:.4e}");
    println!("boundary_max_imag_ratio: {:.3e}", bt.imag_ratio);
    Ok(())
}

fn recover(common: &Common, beam: &BeamArgs, dtn: &Path, jet: Option<&Path>, neumann: bool) -> Result<()> {
    let cfg = common.config()?;
    let d = domain_of(&cfg)?;
    let fwd = Forward::new(&d);
    let dl = load_dtn(dtn, d.n_collar())?;
    let pair = GreenPair::new(&fwd, beam.h, GreenKind::Compatible)?;
    let p = CarlemanParams::new(beam.h, beam.lambda, 1.0)?;
    let b = match jet {
        Some(path) => read_jet(BufReader::new(open(path)?))?,
        None => {
            let g = gaussian_beam(&d, &chord(beam.theta, beam.offset), &p, BeamKind::V)?;
            CollarJet::of_field(&d, &build_u0(&fwd, &pair, &p, &g).field)
        }
    };
    let s = single_layer(&fwd, &pair, &p);
    let k = boundary_operator(&dl, &s, &pair, d.n_interior);
    let method = if neumann { Method::Neumann { tol: 1e-12, max_terms: 60 } } else { Method::Direct };
    let (rec, log) = guarded(|| recover_trace(&k, &b, method));
    let rec = rec?;
    write_jet(create(&common.out.join("recovered.jet"))?, &rec.jet)?;
    println!("trace_contraction: {:.3e}", k.spectral_radius);
    println!("trace_perturbation_norm: {:.3e}", k.perturbation_norm);
    println!("trace_terms: {}", rec.terms);
    println!("trace_guard_violations: {}", log.len());
    if let Some(w) = &k.warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn invert(common: &Common, path: &Path) -> Result<()> {
    let cfg = common.config()?;
    let d = domain_of(&cfg)?;
    let sinos = AttenuatedSinogram::read_csv(BufReader::new(open(path)?))?;
    let lambdas = sinos.first().ok_or_else(|| Error::Format("empty sinogram".into()))?.lambdas();
    let images = invert_ladder(&sinos, cfg.image)?;
    let rec = fourier_x1_invert(&d, &lambdas, &images, cfg.window)?;
    let nodal: Vec<C64> = rec.iter().map(|&v| C64::new(v, 0.0)).collect();
    FieldBox::from_nodes(&d, &nodal).write(create(&common.out.join("q.field"))?)?;
    let mut u = ScalarField::zeros(&d);
    u.values[..nodal.len()].copy_from_slice(&nodal);
    write_plane_csv(create(&common.out.join("q_mid.csv"))?, &d, &u, d.n1 / 2)?;
    println!("reconstruction_linf: {:.4e}", rec.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    if common.phantom.is_some() {
        let ph = make_phantom(&cfg.phantom, &d, cfg.c0)?;
        let truth = ph.sample(&d).values;
        let num: f64 = rec.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = truth.iter().map(|b| b * b).sum();
        println!("reconstruction_l2_error: {:.4}", (num / den.max(1e-300)).sqrt());
    }
    Ok(())
}

fn selftest() -> Result<bool> {
    let d = build_domain(&DomainConfig { x1_extent: 0.5, transversal_radius: 0.4, n1: 8, n_perp: 11 })?;
    let fwd = Forward::new(&d);
    let ph = make_phantom("gauss-bump", &d, 0.0)?;
    let q = biharm::forward::Potential::from_fn(&d, |x| 20.0 * ph.eval([x[0] + 0.25, x[1] + 0.2, x[2] + 0.1]));
    let dl = assemble_dtn_difference(&fwd, &q)?;
    let ident = verify_integral_identity(&fwd, &dl, &q, &CollarJet::random(&d, 1), &CollarJet::random(&d, 2))?;
    let g = GreenPair::new(&fwd, 0.1, GreenKind::Compatible)?.operator(1.0);
    let checks = [
        ("dtn symmetry", dl.asymmetry(), 1e-10),
        ("integral identity", ident, 1e-8),
        ("green right inverse", right_inverse_residual(&g, &d, 3), 1e-9),
        ("green adjoint", adjoint_residual(&g, &d, 4), 1e-9),
    ];
    let mut ok = true;
    for (name, value, tol) in checks {
        let pass = value <= tol;
        ok &= pass;
        println!("{} {name}: {value:.3e} (tol {tol:.0e})", if pass { "PASS" } else { "FAIL" });
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::SimulateDtn { common, beam, dump_dtn, dump_single_layer, dump_cgo } => {
            simulate(common, beam, *dump_dtn, *dump_single_layer, *dump_cgo)
        }
        Cmd::BoundaryTrace { common, dtn } => boundary(common, dtn.as_deref()),
        Cmd::RecoverTrace { common, beam, dtn, jet, neumann } => recover(common, beam, dtn, jet.as_deref(), *neumann),
        Cmd::Sinogram { common } => {
            let mut cfg = common.config();
            if let Ok(c) = &mut cfg {
                c.stop_after = c.stop_after.min(Stage::Sinogram);
            }
            cfg.and_then(|c| run(&c)).map(|o| print!("{}", o.report.to_text()))
        }
        Cmd::Invert { common, sinogram } => invert(common, sinogram),
        Cmd::Reconstruct { common } => common.config().and_then(|c| run(&c)).map(|o| print!("{}", o.report.to_text())),
        Cmd::Selftest => match selftest() {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::FAILURE,
            Err(e) => Err(e),
        },
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
