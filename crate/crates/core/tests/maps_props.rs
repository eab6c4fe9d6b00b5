mod common;

use std::sync::Arc;

use common::{rel_err, Oracle};
use harmap_core::catalog;
use harmap_core::maps::{bitension_at, bitension_in_frame, tension_at, tension_in_frame, SmoothMapSpec};
use harmap_core::sampling::random_points;
use harmap_core::symbolic::parse;
use harmap_core::{ChartManifold, Expr};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn map(domain: ChartManifold, target: ChartManifold, comps: &[&str]) -> SmoothMapSpec {
    let d = domain.dim();
    SmoothMapSpec::new(
        "phi",
        Arc::new(domain),
        Arc::new(target),
        comps.iter().map(|c| parse(c, d).unwrap()).collect(),
    )
    .unwrap()
}

fn eval_map(phi: &SmoothMapSpec) -> impl Fn(&[f64]) -> Vec<f64> + Sync + '_ {
    move |p: &[f64]| phi.components().iter().map(|e| e.eval(p).unwrap()).collect()
}

#[test]
fn identity_is_harmonic_on_catalog() {
    let all: Vec<fn() -> ChartManifold> = vec![
        || catalog::euclidean(3),
        catalog::cigar,
        || catalog::sphere_stereo(2),
        || catalog::sphere_stereo(3),
        catalog::hyperbolic_halfplane,
        || catalog::torus_flat(2),
    ];
    for make in all {
        let m = make();
        let d = m.dim();
        let bounds = m.bounds().unwrap().to_vec();
        let phi = SmoothMapSpec::new("id", Arc::new(make()), Arc::new(m), (0..d).map(Expr::var).collect()).unwrap();
        for p in random_points(&bounds, 100, 17) {
            let t = tension_at(&phi, &p).unwrap();
            assert!(t.iter().all(|v| v.abs() < 1e-9), "{} at {p:?}: {t:?}", phi.domain().name());
        }
    }
}

#[test]
fn flat_tension_is_componentwise_laplacian() {
    let comps = ["sin(x0)*x1^2", "exp(x0/2) - x1*x0", "cos(x0 + x1)"];
    let space = ChartManifold::conformally_flat("space", 3, Expr::one()).unwrap();
    let phi = map(catalog::euclidean(2), space, &comps);
    let laplacians: Vec<Expr> = phi
        .components()
        .iter()
        .map(|c| c.derive_many(&[0, 0]) + c.derive_many(&[1, 1]))
        .collect();
    for p in random_points(&[(-1.5, 1.5); 2], 100, 5) {
        let t = tension_at(&phi, &p).unwrap();
        for (a, l) in t.iter().zip(&laplacians) {
            assert!((a - l.eval(&p).unwrap()).abs() < 1e-10);
        }
    }
}

#[test]
fn tension_into_cigar_matches_oracle() {
    let phi = map(catalog::torus_flat(2), catalog::cigar(), &["x0/4", "0"]);
    let bent = map(
        catalog::torus_flat(2),
        catalog::cigar(),
        &["0.5*sin(x0) + 0.2*cos(x1)", "0.3*x0 - 0.1*sin(x0 + x1)"],
    );
    for phi in [&phi, &bent] {
        let f = eval_map(phi);
        for p in random_points(&[(0.0, 6.2); 2], 50, 8) {
            let t = tension_at(phi, &p).unwrap();
            let want = common::tension(&Oracle::flat(2), &Oracle::cigar(), &f, &p, 1e-3);
            for (a, b) in t.iter().zip(&want) {
                assert!(rel_err(*a, *b) < 1e-6, "{a} vs {b} at {p:?}");
            }
        }
    }
}

#[test]
fn tension_between_curved_charts_matches_oracle() {
    let phi = map(
        catalog::sphere_stereo(2),
        catalog::cigar(),
        &["x0*x1 + 0.3", "sin(x0) - x1^2/3"],
    );
    let f = eval_map(&phi);
    for p in random_points(&[(-1.5, 1.5); 2], 50, 12) {
        let t = tension_at(&phi, &p).unwrap();
        let want = common::tension(&Oracle::sphere(2), &Oracle::cigar(), &f, &p, 1e-3);
        for (a, b) in t.iter().zip(&want) {
            assert!(rel_err(*a, *b) < 1e-6, "{a} vs {b} at {p:?}");
        }
    }
}

#[test]
fn bitension_matches_nested_differences() {
    let cases = [
        (
            map(catalog::torus_flat(2), catalog::cigar(), &["0.4*sin(x0) + 0.1*x1", "0.3*cos(x1) - 0.2*sin(x0)"]),
            Oracle::flat(2),
            (0.5, 5.5),
        ),
        (
            map(catalog::sphere_stereo(2), catalog::cigar(), &["0.5*x0 + 0.2*x1^2", "0.3*x0*x1 - 0.1"]),
            Oracle::sphere(2),
            (-1.0, 1.0),
        ),
        (
            map(catalog::euclidean(2), catalog::sphere_stereo(2), &["0.3*x0^2 - 0.2*x1", "0.4*x1 + 0.1*x0*x1"]),
            Oracle::flat(2),
            (-1.0, 1.0),
        ),
    ];
    for (phi, domain, b) in &cases {
        let target = if phi.target().name() == "cigar" { Oracle::cigar() } else { Oracle::sphere(2) };
        let f = eval_map(phi);
        for p in random_points(&[*b; 2], 10, 21) {
            let t2 = bitension_at(phi, &p).unwrap();
            let want = common::bitension(domain, &target, &f, &p);
            let scale = want.iter().fold(1f64, |m, v| m.max(v.abs()));
            for (a, w) in t2.iter().zip(&want) {
                assert!((a - w).abs() < 1e-4 * scale, "{}: {a} vs {w} at {p:?}", phi.domain().name());
            }
        }
    }
}

#[test]
fn flat_bitension_is_bilaplacian() {
    let phi = map(catalog::torus_flat(2), catalog::euclidean(1), &["sin(x0)*cos(2*x1)"]);
    for p in random_points(&[(0.0, 6.2); 2], 30, 3) {
        // −Δ²(sin x0 cos 2x1) = −25 sin x0 cos 2x1
        let want = -25.0 * p[0].sin() * (2.0 * p[1]).cos();
        assert!((bitension_at(&phi, &p).unwrap()[0] - want).abs() < 1e-9);
    }
}

fn rotation(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn torus_translation_invariance(
        p in prop::collection::vec(0.0f64..3.0, 2),
        a in prop::collection::vec(0.0f64..3.0, 2),
    ) {
        let comps = ["0.5*sin(x0) + 0.2*cos(x1)", "0.3*cos(x0 + x1) - 0.4*sin(2*x1)"];
        let phi = map(catalog::torus_flat(2), catalog::sphere_stereo(2), &comps);
        let shift = [Expr::var(0) + a[0], Expr::var(1) + a[1]];
        let shifted: Vec<Expr> = phi.components().iter().map(|c| c.substitute(&shift)).collect();
        let psi = SmoothMapSpec::new("psi", phi.domain().clone(), phi.target().clone(), shifted).unwrap();
        let q = [p[0] + a[0], p[1] + a[1]];
        let t1 = tension_at(&psi, &p).unwrap();
        let t2 = tension_at(&phi, &q).unwrap();
        for (u, v) in t1.iter().zip(&t2) {
            prop_assert!((u - v).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn tension_and_bitension_are_frame_invariant(
        p in prop::collection::vec(-1.0f64..1.0, 2),
        angle in -3.0f64..3.0,
    ) {
        let phi = map(catalog::sphere_stereo(2), catalog::cigar(), &["x0*x1 + 0.3", "sin(x0) - x1^2/3"]);
        let frame = phi.domain().orthonormal_frame_at(&p).unwrap();
        let turned = rotation(angle) * &frame;
        let a = tension_in_frame(&phi, &p, &frame).unwrap();
        let b = tension_in_frame(&phi, &p, &turned).unwrap();
        let c = bitension_in_frame(&phi, &p, &frame).unwrap();
        let d = bitension_in_frame(&phi, &p, &turned).unwrap();
        for k in 0..2 {
            prop_assert!((a[k] - b[k]).abs() < 1e-11 * (1.0 + a[k].abs()));
            prop_assert!((c[k] - d[k]).abs() < 1e-9 * (1.0 + c[k].abs()));
        }
    }
}
