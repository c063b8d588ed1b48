use biharm::carleman::{boundary_operator, single_layer, CarlemanParams, GreenKind, GreenPair};
use biharm::cgo::{build_u0, build_u1, gaussian_beam, BeamKind};
use biharm::forward::{assemble_dtn_difference, CollarJet, Forward, Potential};
use biharm::linalg::{diff_norm_c, norm2_c};
use biharm::mesh::{build_domain, chord, DomainConfig};
use biharm::trace::{guarded, recover_trace, Method};

fn rel(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> f64 {
    diff_norm_c(a, b) / norm2_c(b)
}

#[test]
fn recovered_trace_matches_direct_construction() {
    let d = build_domain(&DomainConfig { x1_extent: 0.5, transversal_radius: 0.4, n1: 10, n_perp: 17 }).unwrap();
    let fwd = Forward::new(&d);
    let q = Potential::from_fn(&d, |x| 5.0 * (-((x[0] - 0.25).powi(2) + x[1] * x[1] + x[2] * x[2]) / 0.05).exp());
    let dl = assemble_dtn_difference(&fwd, &q).unwrap();
    let h = 0.05;
    let pair = GreenPair::new(&fwd, h, GreenKind::Compatible).unwrap();
    for (lambda, g) in [(0.0, chord(0.3, 0.1)), (0.5, chord(2.0, -0.2))] {
        let p = CarlemanParams::new(h, lambda, 1.0).unwrap();
        let s = single_layer(&fwd, &pair, &p);
        let k = boundary_operator(&dl, &s, &pair, d.n_interior);
        assert!(k.spectral_radius < 0.5, "contraction {}", k.spectral_radius);
        let beam = gaussian_beam(&d, &g, &p, BeamKind::V).unwrap();
        let u0 = build_u0(&fwd, &pair, &p, &beam);
        let b = CollarJet::of_field(&d, &u0.field);

        let (direct, log) = guarded(|| recover_trace(&k, &b, Method::Direct).unwrap());
        assert!(log.is_empty(), "recovery touched {log:?}");
        let (neumann, log) = guarded(|| recover_trace(&k, &b, Method::Neumann { tol: 1e-14, max_terms: 40 }).unwrap());
        assert!(log.is_empty());
        assert!(rel(&neumann.jet.values, &direct.jet.values) <= 1e-8);

        let u1 = build_u1(&fwd, &pair, &q, &p, &u0).unwrap();
        let oracle = CollarJet::of_field(&d, &u1.field);
        let err = rel(&direct.jet.values, &oracle.values);
        assert!(err <= 1e-6, "λ = {lambda}: trace error {err:.2e}");
        // the perturbation is not negligible: γu₀ alone is a worse answer
        assert!(rel(&b.values, &oracle.values) > 10.0 * err);
    }
}

#[test]
fn oracle_construction_is_seen_by_the_guard() {
    let d = build_domain(&DomainConfig { x1_extent: 0.5, transversal_radius: 0.4, n1: 8, n_perp: 9 }).unwrap();
    let fwd = Forward::new(&d);
    let q = Potential::constant(&d, 1.0);
    let pair = GreenPair::new(&fwd, 0.1, GreenKind::Compatible).unwrap();
    let p = CarlemanParams::new(0.1, 0.0, 1.0).unwrap();
    let beam = gaussian_beam(&d, &chord(0.0, 0.0), &p, BeamKind::V).unwrap();
    let u0 = build_u0(&fwd, &pair, &p, &beam);
    let (_, log) = guarded(|| build_u1(&fwd, &pair, &q, &p, &u0).unwrap());
    assert!(log.contains(&"u1") && log.contains(&"potential"));
}
