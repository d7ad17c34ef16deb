use std::f64::consts::PI;

use cadritz::geometry::{Edge, EdgeTag, EdgeTags, NurbsCurve, Patch};
use cadritz::network::{count_parameters, init_xavier, NetworkConfig, ParamSet};
use cadritz::optimizer::{adam_step, AdamConfig, AdamState, Phase, Schedule};
use cadritz::sampling::{allocate, sample_interior, sobol_2d};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allocation_is_exact(
        total in 0usize..5000,
        measures in prop::collection::vec(0.0f64..10.0, 1..20),
        minimum in 0usize..50,
    ) {
        let counts = allocate(total, &measures, minimum);
        prop_assert_eq!(counts.len(), measures.len());
        prop_assert_eq!(counts.iter().sum::<usize>(), total);
        let floor = minimum.min(total / measures.len());
        prop_assert!(counts.iter().all(|&c| c >= floor));
    }

    #[test]
    fn sobol_points_stay_in_the_unit_square(count in 1usize..2000, skip in 0u64..1000) {
        for p in sobol_2d(count, skip) {
            prop_assert!((0.0..1.0).contains(&p[0]) && (0.0..1.0).contains(&p[1]));
        }
    }

    #[test]
    fn parameter_count_formula(blocks in 1usize..12, neurons in 2usize..30, adaptive: bool) {
        let c = NetworkConfig::new(blocks, neurons, adaptive);
        let expected = 2 * blocks * (neurons * neurons + neurons) + neurons + 1
            + if adaptive { 2 * blocks } else { 0 };
        prop_assert_eq!(count_parameters(&c), expected);
        prop_assert_eq!(init_xavier(c, 0).len(), expected);
    }

    #[test]
    fn params_round_trip_through_json(blocks in 1usize..4, neurons in 2usize..8, seed: u64) {
        let p = init_xavier(NetworkConfig::new(blocks, neurons, true), seed);
        let back = ParamSet::from_json(&p.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn adam_moves_at_most_about_lr(
        grads in prop::collection::vec(-1e3f64..1e3, 1..20),
        lr in 1e-5f64..1e-1,
    ) {
        let mut s = AdamState::new(grads.len(), AdamConfig::default());
        let mut p = vec![0.0; grads.len()];
        adam_step(&mut s, &mut p, &grads, lr).unwrap();
        for (x, g) in p.iter().zip(&grads) {
            prop_assert!(x.abs() <= lr * (1.0 + 1e-12));
            prop_assert!(*g == 0.0 || x.signum() == -g.signum());
        }
    }

    #[test]
    fn schedule_covers_every_epoch(phases in prop::collection::vec((1usize..50, 1e-5f64..1e-2), 1..5)) {
        let s = Schedule(phases.iter().map(|&(epochs, lr)| Phase { epochs, lr }).collect());
        let total = s.total_epochs();
        prop_assert_eq!(total, phases.iter().map(|p| p.0).sum::<usize>());
        for e in 0..total {
            prop_assert!(s.lr_at(e).is_some());
        }
        prop_assert!(s.lr_at(total).is_none());
    }

    #[test]
    fn annular_patches_are_regular(
        r0 in 0.1f64..1.0,
        dr in 0.05f64..1.0,
        t0 in -PI..PI,
        dt in 0.1f64..1.5,
    ) {
        let p = Patch::annular([0.0, 0.0], r0, r0 + dr, t0, t0 + dt, "x", EdgeTags::all(EdgeTag::Dirichlet));
        p.check_jacobian(8).unwrap();
        let area = dt / 2.0 * ((r0 + dr).powi(2) - r0 * r0);
        let s = sample_interior(&p, 1024, 0).unwrap();
        let est = s.iter().map(|s| s.weight).sum::<f64>() / s.len() as f64;
        prop_assert!((est - area).abs() / area < 2e-2);
        for e in [Edge::South, Edge::North] {
            let f = p.edge_frame(e, 0.5);
            let r = if e == Edge::South { r0 } else { r0 + dr };
            prop_assert!((f.x[0].hypot(f.x[1]) - r).abs() < 1e-12);
            prop_assert!((f.normal[0].hypot(f.normal[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn arc_points_lie_on_the_circle(r in 0.1f64..5.0, t0 in -PI..PI, dt in 0.05f64..2.0, xi in 0.0f64..1.0) {
        let c = NurbsCurve::arc([0.5, -0.25], r, t0, t0 + dt);
        let x = c.eval(xi);
        prop_assert!(((x[0] - 0.5).hypot(x[1] + 0.25) - r).abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_jacobian(angle in -PI..PI, y0 in 0.0f64..1.0, y1 in 0.0f64..1.0) {
        let p = Patch::annular([0.0, 0.0], 0.5, 1.0, 0.2, 1.0, "x", EdgeTags::all(EdgeTag::Dirichlet));
        let q = p.rotated(angle);
        let a = p.jacobian_det_unchecked([y0, y1]);
        let b = q.jacobian_det_unchecked([y0, y1]);
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn mirror_keeps_jacobian_sign(y0 in 0.0f64..1.0, y1 in 0.0f64..1.0) {
        let p = Patch::annular([0.0, 0.0], 0.5, 1.0, 0.2, 1.0, "x", EdgeTags::all(EdgeTag::Dirichlet));
        let m = p.mirrored_x();
        let a = p.jacobian_det_unchecked([y0, y1]);
        let b = m.jacobian_det_unchecked([y0, y1]);
        prop_assert_eq!(a.signum(), b.signum());
        let x = p.eval([y0, y1]);
        let xm = m.eval([1.0 - y0, y1]);
        prop_assert!((x[0] + xm[0]).abs() < 1e-12 && (x[1] - xm[1]).abs() < 1e-12);
    }
}
