use biharm::boundary::{boundary_value, oscillatory_field, HarmonicCorrector, OscillatoryFamily};
use biharm::forward::{DtnOperator, Forward, Potential};
use biharm::mesh::{build_domain, Domain, DomainConfig};
use biharm::phantom::{make_phantom, Bump};

const LAMBDAS: [f64; 3] = [0.2, 0.1, 0.05];

fn setup() -> (Domain, Forward, HarmonicCorrector) {
    let d = build_domain(&DomainConfig::default()).unwrap();
    let fwd = Forward::new(&d);
    let hc = HarmonicCorrector::new(&fwd).unwrap();
    (d, fwd, hc)
}

fn family(lambda: f64) -> OscillatoryFamily {
    OscillatoryFamily { x1_0: 0.5, phi0: 0.3, psi: 0.0, scale: 0.15, lambda }
}

#[test]
fn family_is_normalised_and_local() {
    let (d, _, hc) = setup();
    for &l in &LAMBDAS {
        let fam = family(l);
        let v = oscillatory_field(&d, &fam).unwrap();
        let n = v.l2_norm(&d);
        assert!((0.3..=3.0).contains(&n), "λ = {l}: ‖v‖ = {n}");
        let rad = fam.support_radius();
        assert!(rad <= 4.0 * l.cbrt());
        let x0 = fam.x0(d.transversal_radius);
        for (k, p) in d.pos.iter().enumerate() {
            let dist = (0..3).map(|a| (p[a] - x0[a]).powi(2)).sum::<f64>().sqrt();
            if dist > rad + 1e-12 {
                assert_eq!(v.values[k].norm(), 0.0, "node {k} at distance {dist}");
            }
        }
        let r1 = hc.correct(&d, &v);
        assert!(hc.residual(&v, &r1) <= 1e-8);
    }
}

#[test]
fn constant_potential_estimates_are_real_and_improve() {
    let (d, fwd, hc) = setup();
    let c0 = 0.01;
    let dtn = DtnOperator::new(&fwd, &Potential::constant(&d, c0)).unwrap();
    let est = boundary_value(&fwd, &dtn, &hc, &family(0.2), &LAMBDAS).unwrap();
    for v in &est.values {
        assert!(v.im.abs() <= 0.05 * v.re.abs(), "{v}");
    }
    let first = (est.values[0].re - c0).abs();
    let last = (est.last().re - c0).abs();
    assert!(last <= first, "errors {first} → {last}");
}

#[test]
fn lateral_phantom_error_does_not_grow() {
    let (d, fwd, hc) = setup();
    let ph = make_phantom("boundary-nonzero", &d, 0.0).unwrap();
    let dtn = DtnOperator::new(&fwd, &ph.sample(&d)).unwrap();
    let fam = family(0.2);
    let truth = ph.eval(fam.x0(d.transversal_radius));
    let est = boundary_value(&fwd, &dtn, &hc, &fam, &LAMBDAS).unwrap();
    let first = (est.values[0].re - truth).abs();
    let last = (est.last().re - truth).abs();
    assert!(last <= first, "q(x0) = {truth}: errors {first} → {last}");
}

#[test]
fn estimates_only_see_q_near_the_point() {
    let (d, fwd, hc) = setup();
    let c0 = 0.01;
    let far = Bump { centre: [0.5, -0.45 * 0.3f64.cos(), -0.45 * 0.3f64.sin()], width: 0.1, amplitude: 0.02, cutoff: 0.1 };
    let a = DtnOperator::new(&fwd, &Potential::constant(&d, c0)).unwrap();
    let b = DtnOperator::new(&fwd, &Potential::from_fn(&d, |x| c0 + far.eval(x))).unwrap();
    let ea = boundary_value(&fwd, &a, &hc, &family(0.2), &[0.2, 0.1]).unwrap();
    let eb = boundary_value(&fwd, &b, &hc, &family(0.2), &[0.2, 0.1]).unwrap();
    for (x, y) in ea.values.iter().zip(&eb.values) {
        assert!((x - y).norm() <= 1e-3 * c0, "{x} vs {y}");
    }
}
