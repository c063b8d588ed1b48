use biharm::pipeline::{run, PipelineConfig};
use biharm::mesh::DomainConfig;

fn small() -> PipelineConfig {
    PipelineConfig {
        domain: DomainConfig { n1: 10, n_perp: 17, ..DomainConfig::default() },
        h_ladder: vec![0.1, 0.066],
        lambda_max: 1.0,
        lambda_samples: 3,
        angles: 8,
        offsets: 8,
        image: 16,
        boundary_lambdas: vec![0.2, 0.1],
        boundary_planes: 1,
        boundary_angles: 4,
        trace_checks: 1,
        ..PipelineConfig::default()
    }
}

#[test]
fn artifacts_are_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&PipelineConfig { out: Some(a.clone()), ..small() }).unwrap();
    run(&PipelineConfig { out: Some(b.clone()), ..small() }).unwrap();
    // config.txt records the output directory
    for f in ["boundary.csv", "sinogram.csv", "images.csv", "q.field", "q_mid.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn sinogram_scales_with_the_phantom() {
    let cfg = PipelineConfig { stop_after: "sinogram".parse().unwrap(), ..small() };
    let one = run(&cfg).unwrap();
    let two = run(&PipelineConfig { phantom_scale: 2.0, ..cfg }).unwrap();
    let (s1, s2) = (&one.sinograms, &two.sinograms);
    assert_eq!(s1.len(), 2);
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in s1.iter().zip(s2) {
        for (x, y) in a.slices.iter().zip(&b.slices) {
            for (u, v) in x.values.iter().zip(&y.values) {
                num += (v - u * 2.0).norm_sqr();
                den += (u * 2.0).norm_sqr();
            }
        }
    }
    // ΔΛ is linear in q up to O(q²)
    assert!((num / den).sqrt() < 1e-2, "{}", (num / den).sqrt());
}

fn lateral(domain: DomainConfig, boundary_tol: f64) -> PipelineConfig {
    PipelineConfig {
        domain,
        phantom: "boundary-nonzero".into(),
        boundary_tol,
        stop_after: "boundary".parse().unwrap(),
        ..small()
    }
}

#[test]
fn boundary_threshold_switches_the_correction() {
    let cfg = lateral(DomainConfig { n1: 12, n_perp: 25, ..DomainConfig::default() }, 1e-4);
    let out = run(&cfg).unwrap();
    let max = out.report.get_f64("boundary_max_abs").unwrap();
    assert!(max > cfg.boundary_tol, "{max}");
    assert_eq!(out.report.get("boundary_layer_correction"), Some("on"));
    let off = run(&PipelineConfig { boundary_tol: 2.0 * max, ..cfg.clone() }).unwrap();
    assert_eq!(off.report.get("boundary_layer_correction"), Some("off"));
    let zero = run(&PipelineConfig { phantom: "zero".into(), ..cfg.clone() }).unwrap();
    assert_eq!(zero.report.get_f64("boundary_max_abs"), Some(0.0));
    assert_eq!(zero.report.get("boundary_layer_correction"), Some("off"));
    let coarse = run(&PipelineConfig { domain: small().domain, ..cfg }).unwrap();
    assert_eq!(coarse.report.get_f64("boundary_points"), Some(0.0));
    assert!(coarse.report.get("boundary_warning").is_some());
}

// about three minutes: ΔΛ of a potential reaching ∂M is nearly full rank
#[test]
#[ignore]
fn lateral_phantom_is_detected_on_the_default_grid() {
    let out = run(&lateral(DomainConfig::default(), PipelineConfig::default().boundary_tol)).unwrap();
    assert_eq!(out.report.get("boundary_layer_correction"), Some("on"));
    assert_eq!(out.report.get_f64("boundary_unresolved_estimates"), Some(0.0));
    let max = out.report.get_f64("boundary_max_abs").unwrap();
    let err = out.report.get_f64("boundary_max_error").unwrap();
    // |q| ≤ 0.03 on the sample ring; the zero guess would have error 0.03
    assert!(max > 5e-3 && err < 0.03, "{max} {err}");
}
