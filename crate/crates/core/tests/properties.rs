use biharm::forward::{assemble_dtn_difference, Forward, Potential};
use biharm::mesh::{build_domain, chord, DomainConfig};
use biharm::phantom::Bump;
use biharm::ray::{attenuated_xray_forward, chebyshev_offsets, invert_attenuated, richardson, sinogram_of, TransversalImage};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::f64::consts::TAU;

fn gauss(c: [f64; 2], s: f64) -> impl Fn([f64; 2]) -> C64 + Copy {
    move |x: [f64; 2]| C64::new((-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (2.0 * s * s)).exp(), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn dtn_difference_is_symmetric(cx in 0.15f64..0.35, cy in -0.1f64..0.1, amp in -3.0f64..3.0) {
        let d = build_domain(&DomainConfig { x1_extent: 0.5, transversal_radius: 0.4, n1: 8, n_perp: 9 }).unwrap();
        let fwd = Forward::new(&d);
        let b = Bump { centre: [cx, cy, 0.0], width: 0.08, amplitude: amp, cutoff: 0.06 };
        let dl = assemble_dtn_difference(&fwd, &Potential::from_fn(&d, |x| b.eval(x))).unwrap();
        prop_assert!(dl.asymmetry() <= 1e-10);
    }

    #[test]
    fn fbp_round_trip_is_translation_stable(r in 0.0f64..0.45, phi in 0.0f64..TAU) {
        let f = gauss([r * phi.cos(), r * phi.sin()], 0.15);
        let s = sinogram_of(f, 0.0, 90, &chebyshev_offsets(64)).unwrap();
        let img = invert_attenuated(&s, 64).unwrap();
        prop_assert!(img.relative_error(&TransversalImage::from_fn(64, f), 0.95) <= 0.10);
    }
}

proptest! {
    #[test]
    fn attenuated_transform_is_linear(
        a in -2.0f64..2.0, b in -2.0f64..2.0, theta in 0.0f64..TAU, p in -0.9f64..0.9, lambda in -2.0f64..2.0,
    ) {
        let f = gauss([0.2, -0.1], 0.2);
        let g = gauss([-0.3, 0.3], 0.3);
        let c = chord(theta, p);
        let lhs = attenuated_xray_forward(|x| f(x) * a + g(x) * b, &c, lambda).unwrap();
        let rhs = attenuated_xray_forward(f, &c, lambda).unwrap() * a + attenuated_xray_forward(g, &c, lambda).unwrap() * b;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn mirrored_slice_matches_forward_at_minus_lambda(cx in -0.4f64..0.4, cy in -0.4f64..0.4, lambda in 0.1f64..2.0) {
        let f = gauss([cx, cy], 0.2);
        let offs = chebyshev_offsets(10);
        let m = sinogram_of(f, lambda, 8, &offs).unwrap().mirrored().unwrap();
        let direct = sinogram_of(f, -lambda, 8, &offs).unwrap();
        for (x, y) in m.values.iter().zip(&direct.values) {
            prop_assert!((x - y).norm() <= 1e-9 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn bump_vanishes_outside_its_support(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, cut in 0.05f64..0.3) {
        let b = Bump { centre: [0.1, 0.2, -0.1], width: 0.2, amplitude: 1.0, cutoff: cut };
        let r = ((x - 0.1).powi(2) + (y - 0.2).powi(2) + (z + 0.1).powi(2)).sqrt();
        if r >= b.support_radius() {
            prop_assert_eq!(b.eval([x, y, z]), 0.0);
        }
    }

    #[test]
    fn richardson_is_exact_for_linear_error(v in -5.0f64..5.0, c in -5.0f64..5.0, h1 in 0.05f64..0.2, ratio in 1.2f64..3.0) {
        let h2 = h1 / ratio;
        let e = richardson(h1, C64::new(v + c * h1, 0.0), h2, C64::new(v + c * h2, 0.0), 1.0);
        prop_assert!((e.re - v).abs() <= 1e-12 * (1.0 + v.abs() + c.abs()));
    }
}
