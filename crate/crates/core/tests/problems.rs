use std::f64::consts::PI;

use cadritz::functional::{Compiled, TermKind};
use cadritz::geometry::quadrature::patch_area;
use cadritz::geometry::{EdgeTag, PatchFile};
use cadritz::network::{count_parameters, NetworkConfig};
use cadritz::problems::{
    error_metrics, line_scan, locate, CylinderCase, PmsmCase, PmsmSource, Preset, Reference,
};
use cadritz::sampling::SamplePlan;

#[test]
fn table_architectures() {
    assert_eq!(count_parameters(&NetworkConfig::new(8, 15, true)), 3872);
    assert_eq!(count_parameters(&NetworkConfig::new(15, 15, true)), 7246);
    assert_eq!(count_parameters(&NetworkConfig::new(30, 24, false)), 36025);
    let case = PmsmCase::default();
    let dg = case.build(Preset::Dg, &PmsmSource::Procedural).unwrap();
    assert_eq!(dg.spec.total_parameters(), 33354);
    let single = case.build(Preset::Single, &PmsmSource::Procedural).unwrap();
    assert_eq!(single.spec.total_parameters(), 36025);
}

#[test]
fn cylinder_presets() {
    let case = CylinderCase::default();
    let single = case.build(Preset::Single).unwrap();
    assert_eq!(single.spec.networks.len(), 1);
    assert!(single.interfaces.is_empty());
    assert_eq!(single.spec.total_parameters(), count_parameters(&NetworkConfig::new(6, 10, true)));
    assert!(!single
        .spec
        .terms
        .iter()
        .any(|t| matches!(t.kind, TermKind::DgInterface { .. } | TermKind::Coupling { .. })));

    let dg = case.build(Preset::Dg).unwrap();
    assert_eq!(dg.spec.networks.len(), 2);
    assert_eq!(dg.interfaces.len(), 4);
    assert_eq!(dg.spec.total_parameters(), 2 * count_parameters(&NetworkConfig::new(4, 10, true)));
    let plan = dg.plan(&dg.budgets, 0).unwrap();
    assert_eq!(plan.interior_count(), 4000);
    assert_eq!(plan.edge_count(EdgeTag::Dirichlet), 1200);
    assert_eq!(plan.edge_count(EdgeTag::Neumann), 1200);
    assert_eq!(plan.interface_count(), 600);

    let coupling = case.build(Preset::Coupling).unwrap();
    assert!(coupling.spec.term_labels().contains(&"interface_coupling".to_string()));
}

#[test]
fn machine_sector_area() {
    let case = PmsmCase::default();
    let d = case.procedural_domain().unwrap();
    let u = case.unit;
    let exact = PI / 6.0 * ((case.r_stator_outer * u).powi(2) - (case.r_rotor_inner * u).powi(2));
    let total: f64 = d.patches.iter().map(|p| patch_area(p, 24)).sum();
    assert!((total - exact).abs() / exact < 1e-10, "{total} vs {exact}");
    for p in &d.patches {
        p.check_jacobian(16).unwrap();
        for i in 0..=8 {
            for j in 0..=8 {
                let y = [i as f64 / 8.0, j as f64 / 8.0];
                assert!(p.jacobian_det_unchecked(y) > 0.0);
            }
        }
    }
}

#[test]
fn machine_grouping_covers_every_patch() {
    let case = PmsmCase::default();
    let p = case.build(Preset::Dg, &PmsmSource::Procedural).unwrap();
    assert_eq!(p.spec.patch_network.len(), p.domain.patches.len());
    let labels: Vec<&str> = p.spec.networks.iter().map(|n| n.label.as_str()).collect();
    for (k, patch) in p.domain.patches.iter().enumerate() {
        assert_eq!(labels[p.spec.patch_network[k]], patch.group());
    }
    let magnets: Vec<usize> = (0..p.domain.patches.len())
        .filter(|&k| p.domain.patches[k].group() == "magnet")
        .collect();
    let source = p
        .spec
        .terms
        .iter()
        .find_map(|t| match &t.kind {
            TermKind::Magnetization { patches, .. } => Some(patches.clone()),
            _ => None,
        })
        .unwrap();
    assert_eq!(source, magnets);
}

#[test]
fn magnetization_source_on_linear_potential() {
    let case = PmsmCase::default();
    let mut p = case.build(Preset::Dg, &PmsmSource::Procedural).unwrap();
    p.spec.terms.retain(|t| matches!(t.kind, TermKind::Magnetization { .. }));
    let plan = p.plan(&p.desk_budgets, 0).unwrap();
    let c = Compiled::new(&p.spec, &plan).unwrap();
    let value = c.value_with(|_, x| (x[0], [1.0, 0.0])).total;
    let area: f64 = p
        .domain
        .patches
        .iter()
        .filter(|q| q.group() == "magnet")
        .map(|q| patch_area(q, 24))
        .sum();
    let expected = case.nu_0 * case.b_r * area;
    assert!((value - expected).abs() / expected < 1e-3, "{value} vs {expected}");
}

#[test]
fn machine_boundary_data_is_homogeneous() {
    let case = PmsmCase::default();
    let p = case.build(Preset::Coupling, &PmsmSource::Procedural).unwrap();
    let plan = p.plan(&p.desk_budgets, 0).unwrap();
    let c = Compiled::new(&p.spec, &plan).unwrap();
    // A zero potential leaves every term at zero.
    let e = c.value_with(|_, _| (0.0, [0.0, 0.0]));
    assert!(e.terms.iter().all(|&t| t == 0.0));
}

#[test]
fn imported_geometry_round_trips() {
    let case = PmsmCase::default();
    let d = case.procedural_domain().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sector.json");
    std::fs::write(&path, PatchFile::from_domain(&d).to_json().unwrap()).unwrap();
    let back = case.domain(&PmsmSource::Imported(path)).unwrap();
    assert_eq!(back.patches.len(), d.patches.len());
    assert_eq!(back.interfaces, d.interfaces);
    assert_eq!(back.mirrors, d.mirrors);
}

#[test]
fn imported_geometry_with_gap_is_rejected() {
    let case = PmsmCase::default();
    let mut file = PatchFile::from_domain(&case.procedural_domain().unwrap());
    // Nudge one patch so its interfaces no longer match.
    for c in &mut file.patches[0].control_points {
        c[0] += 1e-3;
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, file.to_json().unwrap()).unwrap();
    assert!(case.build(Preset::Dg, &PmsmSource::Imported(path)).is_err());
}

#[test]
fn metrics_of_exact_and_offset_solutions() {
    let case = CylinderCase::default();
    let d = case.domain().unwrap();
    let plan = SamplePlan::interior_only(&d, 4096, 0).unwrap();
    let r = case.reference();
    let m = error_metrics(&r, &r, &plan);
    assert_eq!((m.rel_l2, m.max_abs, m.mean_abs), (0.0, 0.0, 0.0));

    let delta = 0.01;
    let shifted = {
        let r = r.clone();
        Reference::new(move |k, x| {
            let (u, g) = r.eval(k, x);
            (u + delta, g)
        })
    };
    let m = error_metrics(&shifted, &r, &plan);
    assert!((m.max_abs - delta).abs() < 1e-12);
    assert!((m.mean_abs - delta).abs() < 1e-12);

    // ||u*||_L2 by tensor Gauss quadrature on every patch.
    let norm2: f64 = d
        .patches
        .iter()
        .enumerate()
        .map(|(k, p)| {
            cadritz::geometry::quadrature::integrate_patch(p, |x| r.eval(k, x).0.powi(2), 24)
        })
        .sum();
    let expected = delta * 4f64.sqrt() / norm2.sqrt();
    assert!((m.rel_l2 - expected).abs() / expected < 1e-2, "{} vs {expected}", m.rel_l2);
}

#[test]
fn line_scan_covers_the_square() {
    let case = CylinderCase::default();
    let d = case.domain().unwrap();
    let r = case.reference();
    let rows = line_scan(&r, Some(&r), &d, 0.1, -1.0, 1.0, 201);
    assert_eq!(rows.len(), 201);
    assert_eq!(rows[0].x, -1.0);
    assert_eq!(rows[200].x, 1.0);
    assert!(rows.windows(2).all(|w| w[1].x > w[0].x));
    // The normal field jumps where the line crosses the circle.
    let xc = (0.25f64 - 0.01).sqrt();
    let near = |t: f64| {
        rows.iter()
            .min_by(|a, b| (a.x - t).abs().total_cmp(&(b.x - t).abs()))
            .unwrap()
    };
    let (inside, outside) = (near(xc - 0.02), near(xc + 0.02));
    assert!(outside.e_n > 10.0 * inside.e_n.abs());
}

#[test]
fn locate_inverts_patch_maps() {
    let case = CylinderCase::default();
    let d = case.domain().unwrap();
    for (k, p) in d.patches.iter().enumerate() {
        let y = [0.37, 0.61];
        let x = p.eval(y);
        let (found, yf) = locate(&d, x).unwrap();
        assert_eq!(found, k);
        assert!((yf[0] - y[0]).abs() < 1e-9 && (yf[1] - y[1]).abs() < 1e-9);
    }
    assert!(locate(&d, [3.0, 0.0]).is_none());
}
