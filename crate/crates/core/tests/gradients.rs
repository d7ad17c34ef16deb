use cadritz::autodiff::ExprGraph;
use cadritz::functional::{assemble_loss, Compiled};
use cadritz::geometry::{Edge, EdgeTag, EdgeTags, MultiPatchDomain, Patch};
use cadritz::network::{count_parameters, GraphNetwork, NetworkConfig, ParamSet};
use cadritz::optimizer::{flatten, init_networks};
use cadritz::problems::{CylinderCase, PmsmCase, PmsmSource, PoissonCase, Preset, Problem};
use cadritz::sampling::{SampleBudgets, SamplePlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;

fn tiny_budgets() -> SampleBudgets {
    SampleBudgets {
        interior: 80,
        dirichlet: 40,
        neumann: 40,
        interface: 100,
        antiperiodic: 24,
        min_per_set: 2,
        interior_groups: None,
    }
}

/// Replaces every network by `config` and returns the problem, its plan and
/// jittered parameters.
fn shrink(mut p: Problem, config: NetworkConfig, seed: u64) -> (Problem, SamplePlan, Vec<f64>) {
    for n in &mut p.spec.networks {
        n.config = config;
    }
    let plan = p.plan(&tiny_budgets(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = flatten(&init_networks(&p.spec, seed));
    for t in &mut theta {
        *t += rng.gen_range(-0.2..0.2);
    }
    (p, plan, theta)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n
}

fn check_fd(p: &Problem, plan: &SamplePlan, theta: &[f64]) {
    let c = Compiled::new(&p.spec, plan).unwrap();
    let loss = |t: &[f64]| c.value(&c.split(t).unwrap()).unwrap().total;
    let e = c.value_and_grad(&c.split(theta).unwrap()).unwrap();
    assert!((e.total - loss(theta)).abs() <= 1e-12 * e.total.abs().max(1.0));
    let grad = e.grads.unwrap().concat();
    let mut fd = vec![0.0; theta.len()];
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        let h = FD_STEP * theta[i].abs().max(1.0);
        t[i] = theta[i] + h;
        let up = loss(&t);
        t[i] = theta[i] - h;
        let down = loss(&t);
        t[i] = theta[i];
        fd[i] = (up - down) / (2.0 * h);
    }
    let err = rel_err(&grad, &fd);
    assert!(err <= FD_TOL, "{} {}: relative error {err:e}", p.name, p.preset);
}

#[test]
fn cylinder_presets_match_finite_differences() {
    for preset in Preset::ALL {
        for weighted in [false, true] {
            let case = CylinderCase {
                weighted,
                ..Default::default()
            };
            let config = NetworkConfig::new(1, 4, true);
            let (p, plan, theta) = shrink(case.build(preset).unwrap(), config, 3);
            assert!(theta.len() <= 100);
            check_fd(&p, &plan, &theta);
        }
    }
}

#[test]
fn machine_presets_match_finite_differences() {
    let case = PmsmCase::default();
    for preset in Preset::ALL {
        let config = match preset {
            Preset::Single => NetworkConfig::new(1, 5, true),
            _ => NetworkConfig::new(1, 2, false),
        };
        let (p, plan, theta) = shrink(case.build(preset, &PmsmSource::Procedural).unwrap(), config, 5);
        assert!(theta.len() <= 100, "{preset}: {} parameters", theta.len());
        check_fd(&p, &plan, &theta);
    }
}

fn two_squares() -> MultiPatchDomain {
    let free = EdgeTags::all(EdgeTag::Dirichlet);
    let a = Patch::bilinear([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], "a", free.with(Edge::East, EdgeTag::Interface));
    let b = Patch::bilinear([[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]], "b", free.with(Edge::West, EdgeTag::Interface));
    MultiPatchDomain::new(vec![a, b]).unwrap()
}

#[test]
fn imported_presets_match_finite_differences() {
    let mut case = PoissonCase::default();
    case.coefficients.insert("b".into(), 4.0);
    for preset in Preset::ALL {
        let p = case.build(two_squares(), preset).unwrap();
        let (p, plan, theta) = shrink(p, NetworkConfig::new(1, 4, true), 9);
        check_fd(&p, &plan, &theta);
    }
}

#[test]
fn fast_path_agrees_with_graph() {
    let case = CylinderCase::default();
    for preset in Preset::ALL {
        let (p, plan, theta) = shrink(case.build(preset).unwrap(), NetworkConfig::new(1, 3, true), 11);
        let c = Compiled::new(&p.spec, &plan).unwrap();
        let sets = c.split(&theta).unwrap();
        let fast = c.value_and_grad(&sets).unwrap();

        let mut g = ExprGraph::new();
        let nets: Vec<GraphNetwork> = sets.iter().map(|s| GraphNetwork::bind(&mut g, s)).collect();
        let loss = assemble_loss(&p.spec, &plan, &mut g, &nets).unwrap();
        let vars: Vec<_> = nets.iter().flat_map(|n| n.params.iter().copied()).collect();
        let grads = g.grad_nodes(loss.total, &vars).unwrap();
        let slow: Vec<f64> = grads.iter().map(|&n| g.value(n)).collect();

        assert!((g.value(loss.total) - fast.total).abs() <= 1e-10 * fast.total.abs());
        for (t, &n) in fast.terms.iter().zip(&loss.terms) {
            assert!((g.value(n) - t).abs() <= 1e-10 * t.abs().max(1.0));
        }
        assert!(rel_err(&fast.grads.unwrap().concat(), &slow) <= 1e-10);
    }
}

#[test]
fn parameter_split_round_trips() {
    let p = CylinderCase::default().build(Preset::Dg).unwrap();
    let plan = p.plan(&tiny_budgets(), 0).unwrap();
    let c = Compiled::new(&p.spec, &plan).unwrap();
    let sets = init_networks(&p.spec, 1);
    let flat = flatten(&sets);
    assert_eq!(flat.len(), 2 * count_parameters(&NetworkConfig::new(4, 10, true)));
    let back: Vec<ParamSet> = c.split(&flat).unwrap();
    assert_eq!(back, sets);
    assert!(c.split(&flat[1..]).is_err());
}
