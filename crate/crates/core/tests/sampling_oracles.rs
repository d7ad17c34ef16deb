use std::f64::consts::{FRAC_PI_2, PI};

use cadritz::geometry::quadrature::patch_area;
use cadritz::geometry::{Edge, EdgeTag, EdgeTags, NurbsCurve, Patch};
use cadritz::sampling::{sample_edge, sample_interior, sobol_2d};

fn quarter_annulus() -> Patch {
    Patch::annular([0.0, 0.0], 0.5, 1.0, 0.0, FRAC_PI_2, "air", EdgeTags::all(EdgeTag::Dirichlet))
}

#[test]
fn quarter_annulus_area_from_weights() {
    let exact = PI / 4.0 * (1.0 - 0.25);
    assert!((exact - 0.58905).abs() < 1e-5);
    let p = quarter_annulus();
    assert!((patch_area(&p, 24) - exact).abs() < 1e-13);
    let s = sample_interior(&p, 1 << 14, 0).unwrap();
    let est = s.iter().map(|s| s.weight).sum::<f64>() / s.len() as f64;
    assert!((est - exact).abs() / exact < 5e-3, "estimate {est}");
}

#[test]
fn quarter_circle_length_from_speeds() {
    let p = quarter_annulus();
    // The outer arc of the annulus is the north edge, radius 1.
    let s = sample_edge(&p, Edge::North, 1 << 12, 0);
    let est = s.iter().map(|s| s.weight).sum::<f64>() / s.len() as f64;
    assert!((est - FRAC_PI_2).abs() / FRAC_PI_2 < 5e-3, "estimate {est}");
    for e in &s {
        assert!((e.x[0].hypot(e.x[1]) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn identity_patch_reduces_to_uniform_mean() {
    let p = Patch::identity();
    let f = |x: [f64; 2]| (3.0 * x[0]).sin() + x[1] * x[1];
    let s = sample_interior(&p, 1000, 0).unwrap();
    let weighted: f64 = s.iter().map(|s| s.weight * f(s.x)).sum::<f64>() / s.len() as f64;
    let plain: f64 = sobol_2d(1000, 0).iter().map(|&y| f(y)).sum::<f64>() / 1000.0;
    assert_eq!(weighted, plain);
    assert!(s.iter().all(|s| s.weight == 1.0 && s.x == s.y));
}

#[test]
fn weighted_mean_integrates_moments() {
    // Integral of r^2 over the quarter annulus: (pi / 2) (1 - 1/16) / 4.
    let exact = FRAC_PI_2 * (1.0 - 1.0 / 16.0) / 4.0;
    let s = sample_interior(&quarter_annulus(), 1 << 14, 0).unwrap();
    let est: f64 = s
        .iter()
        .map(|s| s.weight * (s.x[0] * s.x[0] + s.x[1] * s.x[1]))
        .sum::<f64>()
        / s.len() as f64;
    assert!((est - exact).abs() / exact < 5e-3);
}

#[test]
fn arc_edge_length_matches_curve() {
    let c = NurbsCurve::arc([0.0, 0.0], 2.0, 0.0, PI / 3.0);
    let len = cadritz::geometry::arc_length(&c, 24);
    assert!((len - 2.0 * PI / 3.0).abs() < 1e-12);
}
