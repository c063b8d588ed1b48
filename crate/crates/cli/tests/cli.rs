use std::fs::File;
use std::path::Path;
use std::process::{Command, Output};

use biharm::io::{read_jet, FieldBox, OperatorDump};
use biharm::linalg::{diff_norm_c, norm2_c};

const SMALL: &str = "\
n1 = 10
n_perp = 17
h_ladder = 0.1, 0.066
lambda_max = 1
lambda_samples = 3
angles = 8
offsets = 8
image = 16
boundary_lambdas = 0.2, 0.1
boundary_planes = 1
boundary_angles = 4
trace_checks = 1
";

fn biharm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biharm")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn tiny_args(out: &Path) -> Vec<String> {
    ["--out", out.to_str().unwrap(), "--set", "n1=8", "--set", "n_perp=11", "--set", "x1_extent=0.5", "--set", "radius=0.4"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn field(path: &Path) -> FieldBox {
    FieldBox::read(File::open(path).unwrap()).unwrap()
}

#[test]
fn selftest_passes() {
    let text = ok(biharm(&["selftest"]));
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");
}

#[test]
fn simulate_dumps_and_trace_recovery_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let mut args: Vec<String> = ["simulate-dtn", "--dump-dtn", "--dump-single-layer", "--dump-cgo", "--h", "0.1", "--lambda", "0.5", "--theta", "0.3"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    args.extend(tiny_args(&sim));
    let text = ok(biharm(&args.iter().map(String::as_str).collect::<Vec<_>>()));
    assert!(text.contains("dtn_symmetry_residual"));
    assert!(text.contains("cgo_pde_residual"));
    for f in ["dtn.bin", "single_layer.bin", "u0.field", "u0.jet", "report.txt", "config.txt"] {
        assert!(sim.join(f).exists(), "{f} missing");
    }
    let dump = OperatorDump::read(File::open(sim.join("dtn.bin")).unwrap()).unwrap();
    let dl = dump.to_dtn().unwrap();
    assert!(dl.asymmetry() < 1e-10);
    let sl = OperatorDump::read(File::open(sim.join("single_layer.bin")).unwrap()).unwrap();
    assert_eq!(sl.kind, "single-layer");
    assert_eq!(sl.label, vec![("h".to_string(), 0.1), ("lambda".to_string(), 0.5)]);

    let mut jets = Vec::new();
    for (name, extra) in [("direct", None), ("neumann", Some("--neumann"))] {
        let out = dir.path().join(name);
        let mut args: Vec<String> = ["recover-trace", "--h", "0.1", "--lambda", "0.5", "--dtn"].iter().map(|s| s.to_string()).collect();
        args.push(sim.join("dtn.bin").to_str().unwrap().into());
        args.push("--jet".into());
        args.push(sim.join("u0.jet").to_str().unwrap().into());
        args.extend(extra.map(String::from));
        args.extend(tiny_args(&out));
        let text = ok(biharm(&args.iter().map(String::as_str).collect::<Vec<_>>()));
        assert!(text.contains("trace_guard_violations: 0"), "{text}");
        jets.push(read_jet(File::open(out.join("recovered.jet")).unwrap()).unwrap());
    }
    let e = diff_norm_c(&jets[0].values, &jets[1].values) / norm2_c(&jets[0].values);
    assert!(e < 1e-8, "{e}");
}

#[test]
fn sinogram_csv_inverts_to_the_pipeline_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let cfg = cfg.to_str().unwrap();
    let full = dir.path().join("full");
    let text = ok(biharm(&["reconstruct", "--config", cfg, "--out", full.to_str().unwrap()]));
    assert!(text.contains("reconstruction_l2_error"));
    for f in ["boundary.csv", "sinogram.csv", "images.csv", "q.field", "q_mid.csv"] {
        assert!(full.join(f).exists(), "{f} missing");
    }

    let part = dir.path().join("part");
    let text = ok(biharm(&["sinogram", "--config", cfg, "--out", part.to_str().unwrap()]));
    assert!(text.contains("sinogram_max_abs") && !text.contains("inversion_max_abs"));
    assert!(!part.join("q.field").exists());
    assert_eq!(std::fs::read(part.join("sinogram.csv")).unwrap(), std::fs::read(full.join("sinogram.csv")).unwrap());

    let inv = dir.path().join("inv");
    let sino = part.join("sinogram.csv");
    ok(biharm(&["invert", "--config", cfg, "--sinogram", sino.to_str().unwrap(), "--out", inv.to_str().unwrap()]));
    let a = field(&full.join("q.field"));
    let b = field(&inv.join("q.field"));
    assert_eq!(a.dims, b.dims);
    let e = diff_norm_c(&a.values, &b.values) / norm2_c(&a.values).max(1e-300);
    assert!(e < 1e-12, "{e}");
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = biharm(&["reconstruct", "--phantom", "shepp", "--out", out]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown phantom 'shepp'"));
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("error:"));

    let o = biharm(&["reconstruct", "--set", "bogus=1", "--out", out]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = biharm(&["reconstruct", "--h-ladder", "0.05,0.1", "--out", out]);
    assert!(!o.status.success());
}
