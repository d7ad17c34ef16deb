use std::f64::consts::PI;

use cadritz::functional::{Compiled, DgPart, EnergySpec, EnergyTerm, NetworkSlot, TermKind};
use cadritz::geometry::{Edge, EdgeTag, EdgeTags, MultiPatchDomain, Patch};
use cadritz::network::{init_xavier, NetworkConfig};
use cadritz::optimizer::init_networks;
use cadritz::problems::{
    interface_flux_check, CylinderCase, Potential, Preset, Solution,
};
use cadritz::sampling::{SampleBudgets, SamplePlan};

fn two_squares() -> MultiPatchDomain {
    let tags = EdgeTags::all(EdgeTag::Dirichlet);
    let a = Patch::bilinear([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], "a", tags.with(Edge::East, EdgeTag::Interface));
    let b = Patch::bilinear([[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]], "b", tags.with(Edge::West, EdgeTag::Interface));
    MultiPatchDomain::new(vec![a, b]).unwrap()
}

fn budgets() -> SampleBudgets {
    SampleBudgets {
        interior: 64,
        dirichlet: 64,
        neumann: 0,
        interface: 64,
        antiperiodic: 0,
        min_per_set: 8,
        interior_groups: None,
    }
}

#[test]
fn shared_network_interface_terms_vanish() {
    let d = two_squares();
    assert_eq!(d.interfaces.len(), 1);
    let beta = 1e3;
    let terms = vec![
        EnergyTerm::new(
            "dg",
            TermKind::DgInterface {
                interfaces: vec![0],
                beta,
                part: DgPart::Full,
                weighted: false,
            },
        ),
        EnergyTerm::new(
            "dg_weighted",
            TermKind::DgInterface {
                interfaces: vec![0],
                beta,
                part: DgPart::Full,
                weighted: true,
            },
        ),
        EnergyTerm::new("coupling", TermKind::Coupling { interfaces: vec![0], beta }),
    ];
    let spec = EnergySpec {
        networks: vec![NetworkSlot {
            label: "shared".into(),
            config: NetworkConfig::new(2, 6, true),
        }],
        patch_network: vec![0, 0],
        coefficients: vec![1.0, 3.0],
        terms,
    };
    let plan = SamplePlan::build(&d, &budgets(), &[0], 0).unwrap();
    let c = Compiled::new(&spec, &plan).unwrap();
    let e = c.value_and_grad(&init_networks(&spec, 4)).unwrap();
    // Both traces come from the same evaluation, so the jump is exactly 0.
    assert_eq!(e.terms, vec![0.0, 0.0, 0.0]);
    assert!(e.grads.unwrap()[0].iter().all(|&g| g == 0.0));
}

#[test]
fn analytic_solution_has_no_flux_residual() {
    let case = CylinderCase::default();
    let d = case.domain().unwrap();
    let r = case.reference();
    let circle: Vec<usize> = d
        .interfaces
        .iter()
        .enumerate()
        .filter(|(_, f)| (f.k < 5) != (f.l < 5))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(circle.len(), 4);
    let f = interface_flux_check(&r, &d, &case.coefficients(), &circle, 256, 0).unwrap();
    assert_eq!(f.residuals.len(), 1024);
    assert!(f.max <= 1e-12, "max residual {:e}", f.max);
    assert!(f.scale > 1.0);
}

#[test]
fn mismatched_constants_give_scaled_residual() {
    // u = a x on the cylinder side and u = b x outside: the residual at a
    // point with normal n is |eps_c a - eps_nc b| |n_x|.
    let case = CylinderCase::default();
    let d = case.domain().unwrap();
    let (a, b) = (0.3, -1.7);
    let u = cadritz::problems::Reference::new(move |patch, _| {
        let s = if patch < 5 { a } else { b };
        (0.0, [s, 0.0])
    });
    let circle: Vec<usize> = (0..d.interfaces.len())
        .filter(|&i| (d.interfaces[i].k < 5) != (d.interfaces[i].l < 5))
        .collect();
    let f = interface_flux_check(&u, &d, &case.coefficients(), &circle, 32, 0).unwrap();
    let samples = cadritz::sampling::sample_interface(&d, circle[0], 32, 0).unwrap();
    for (res, s) in f.residuals.iter().zip(&samples) {
        let expected = (case.eps_c * a - case.eps_nc * b).abs() * s.normal[0].abs();
        assert!((res - expected).abs() < 1e-12);
    }
}

#[test]
fn analytic_solution_is_continuous_on_the_circle() {
    let case = CylinderCase::default();
    for i in 0..100 {
        let t = 2.0 * PI * i as f64 / 100.0;
        let x = [case.r0 * t.cos(), case.r0 * t.sin()];
        let inside = case.analytic_side(x, true).0;
        let outside = case.analytic_side(x, false).0;
        assert!((inside - outside).abs() < 1e-14);
    }
}

#[test]
fn analytic_solution_is_near_stationary_for_dg() {
    // Perturbing u* raises the sampled DG functional: u* is (close to) its
    // minimizer.
    for weighted in [false, true] {
        let case = CylinderCase {
            weighted,
            ..Default::default()
        };
        let p = case.build(Preset::Dg).unwrap();
        let plan = p.plan(p.budgets(true), 0).unwrap();
        let c = Compiled::new(&p.spec, &plan).unwrap();
        let r = case.reference();
        let base = c.value_with(|k, x| r.eval(k, x)).total;
        for seed in 0..10 {
            let v = init_xavier(NetworkConfig::new(1, 6, false), seed);
            let delta = 0.05;
            let perturbed = c
                .value_with(|k, x| {
                    let (u, g) = r.eval(k, x);
                    let (dv, dg) = v.eval(x);
                    (u + delta * dv, [g[0] + delta * dg[0], g[1] + delta * dg[1]])
                })
                .total;
            assert!(perturbed > base, "weighted {weighted}, seed {seed}: {perturbed} <= {base}");
        }
    }
}

#[test]
fn solution_potential_uses_patch_networks() {
    let a = init_xavier(NetworkConfig::new(1, 3, true), 1);
    let b = init_xavier(NetworkConfig::new(1, 3, true), 2);
    let s = Solution {
        networks: vec![a.clone(), b.clone()],
        patch_network: vec![1, 0],
    };
    let x = [0.3, -0.2];
    assert_eq!(s.eval(0, x), b.eval(x));
    assert_eq!(s.eval(1, x), a.eval(x));
}
