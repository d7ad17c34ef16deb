use std::io::Write;

use serde::{Deserialize, Serialize};

use super::sobol::{sobol_1d, sobol_2d};
use crate::error::{Error, Result};
use crate::geometry::quadrature::{integrate_1d, patch_area};
use crate::geometry::{Edge, EdgeTag, MultiPatchDomain, Patch, GEOM_TOL};

/// Interior point with its importance weight `|det J(y)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorSample {
    pub y: [f64; 2],
    pub x: [f64; 2],
    pub weight: f64,
}

/// Boundary point with metric factor `|C'(xi)|` and outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSample {
    pub xi: f64,
    pub x: [f64; 2],
    pub weight: f64,
    pub normal: [f64; 2],
}

/// The same interface point seen from both sides; `normal` points out of
/// side `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedSample {
    pub xi: f64,
    pub x_k: [f64; 2],
    pub x_l: [f64; 2],
    pub weight: f64,
    pub normal: [f64; 2],
}

/// A left anti-periodic point and its image on the right boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorSample {
    pub xi: f64,
    pub x_left: [f64; 2],
    pub x_right: [f64; 2],
    pub weight: f64,
    pub normal_left: [f64; 2],
    pub normal_right: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorSet {
    pub patch: usize,
    pub samples: Vec<InteriorSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub patch: usize,
    pub edge: Edge,
    pub tag: EdgeTag,
    pub samples: Vec<EdgeSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceSet {
    /// Index into the domain's interface list.
    pub interface: usize,
    pub k: usize,
    pub l: usize,
    pub samples: Vec<PairedSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorSet {
    /// Index into the domain's anti-periodic pair list.
    pub pair: usize,
    pub left: usize,
    pub right: usize,
    pub samples: Vec<MirrorSample>,
}

/// Every sample of a run, grouped by the set it integrates over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplePlan {
    pub interior: Vec<InteriorSet>,
    pub edges: Vec<EdgeSet>,
    pub interfaces: Vec<InterfaceSet>,
    pub mirrors: Vec<MirrorSet>,
    /// Sobol index of the first point used.
    pub skip: u64,
}

/// Global sample counts per set family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBudgets {
    pub interior: usize,
    pub dirichlet: usize,
    pub neumann: usize,
    pub interface: usize,
    pub antiperiodic: usize,
    /// Lower bound per set before the proportional split.
    #[serde(default = "default_min_per_set")]
    pub min_per_set: usize,
    /// Optional interior counts per subdomain label; patches inside a
    /// subdomain share its count by area.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior_groups: Option<Vec<(String, usize)>>,
}

fn default_min_per_set() -> usize {
    8
}

impl SampleBudgets {
    pub fn validate(&self) -> Result<()> {
        if self.interior == 0 && self.interior_groups.is_none() {
            return Err(Error::Config("interior budget must be at least 1".into()));
        }
        Ok(())
    }

    /// Same budgets with every count multiplied by `factor` (at least 1).
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |n: usize| ((n as f64 * factor).round() as usize).max(1);
        Self {
            interior: s(self.interior),
            dirichlet: s(self.dirichlet),
            neumann: s(self.neumann),
            interface: s(self.interface),
            antiperiodic: s(self.antiperiodic),
            min_per_set: self.min_per_set,
            interior_groups: self
                .interior_groups
                .as_ref()
                .map(|g| g.iter().map(|(l, n)| (l.clone(), s(*n))).collect()),
        }
    }
}

/// Splits `total` over sets with the given measures: each set first gets
/// `min(minimum, total / n)`, the rest goes by largest remainder. The counts
/// always add up to `total`.
pub fn allocate(total: usize, measures: &[f64], minimum: usize) -> Vec<usize> {
    let n = measures.len();
    if n == 0 {
        return Vec::new();
    }
    let floor = minimum.min(total / n);
    let mut counts = vec![floor; n];
    let rest = total - floor * n;
    let sum: f64 = measures.iter().sum();
    if rest == 0 {
        return counts;
    }
    let shares: Vec<f64> = if sum > 0.0 {
        measures.iter().map(|m| rest as f64 * m / sum).collect()
    } else {
        vec![rest as f64 / n as f64; n]
    };
    let mut given = 0;
    for (c, s) in counts.iter_mut().zip(&shares) {
        let f = s.floor() as usize;
        *c += f;
        given += f;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(rest - given) {
        counts[i] += 1;
    }
    counts
}

/// Sobol points on the reference square mapped into `patch`.
pub fn sample_interior(patch: &Patch, count: usize, skip: u64) -> Result<Vec<InteriorSample>> {
    sobol_2d(count, skip)
        .into_iter()
        .map(|y| {
            let (x, jac) = patch.eval_with_jacobian(y);
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if !(det.abs() >= crate::geometry::DET_FLOOR) {
                return Err(Error::DegenerateMap {
                    det,
                    y0: y[0],
                    y1: y[1],
                });
            }
            Ok(InteriorSample {
                y,
                x,
                weight: det.abs(),
            })
        })
        .collect()
}

/// One-dimensional Sobol points along an edge.
pub fn sample_edge(patch: &Patch, edge: Edge, count: usize, skip: u64) -> Vec<EdgeSample> {
    sobol_1d(count, skip)
        .into_iter()
        .map(|xi| {
            let f = patch.edge_frame(edge, xi);
            EdgeSample {
                xi,
                x: f.x,
                weight: f.speed,
                normal: f.normal,
            }
        })
        .collect()
}

/// Points on interface `index`, located on both sides.
pub fn sample_interface(
    domain: &MultiPatchDomain,
    index: usize,
    count: usize,
    skip: u64,
) -> Result<Vec<PairedSample>> {
    let i = domain
        .interfaces
        .get(index)
        .ok_or_else(|| Error::Config(format!("no interface {index}")))?;
    let (pk, pl) = (&domain.patches[i.k], &domain.patches[i.l]);
    sobol_1d(count, skip)
        .into_iter()
        .map(|xi| {
            let f = pk.edge_frame(i.edge_k, xi);
            let x_l = pl.eval(i.edge_l.param(i.partner_param(xi)));
            if (x_l[0] - f.x[0]).abs() > GEOM_TOL || (x_l[1] - f.x[1]).abs() > GEOM_TOL {
                return Err(Error::Geometry(format!(
                    "interface {index} sides differ at xi = {xi}"
                )));
            }
            Ok(PairedSample {
                xi,
                x_k: f.x,
                x_l,
                weight: f.speed,
                normal: f.normal,
            })
        })
        .collect()
}

/// Points on the left edge of anti-periodic pair `index` and their images.
pub fn sample_antiperiodic(
    domain: &MultiPatchDomain,
    index: usize,
    count: usize,
    skip: u64,
) -> Result<Vec<MirrorSample>> {
    let map = domain
        .symmetry
        .ok_or_else(|| Error::Config("domain has no symmetry map".into()))?;
    let pair = domain
        .mirrors
        .get(index)
        .ok_or_else(|| Error::Config(format!("no anti-periodic pair {index}")))?;
    let (lp, le) = pair.left;
    let (rp, re) = pair.right;
    sobol_1d(count, skip)
        .into_iter()
        .map(|xi| {
            let fl = domain.patches[lp].edge_frame(le, xi);
            let x_right = map.apply(fl.x);
            let eta = if pair.reversed { 1.0 - xi } else { xi };
            let fr = domain.patches[rp].edge_frame(re, eta);
            if (fr.x[0] - x_right[0]).abs() > GEOM_TOL || (fr.x[1] - x_right[1]).abs() > GEOM_TOL {
                return Err(Error::Geometry(format!(
                    "anti-periodic pair {index} misaligned at xi = {xi}"
                )));
            }
            Ok(MirrorSample {
                xi,
                x_left: fl.x,
                x_right,
                weight: fl.speed,
                normal_left: fl.normal,
                normal_right: fr.normal,
            })
        })
        .collect()
}

const MEASURE_ORDER: usize = 24;

fn edge_length(patch: &Patch, edge: Edge) -> f64 {
    let c = patch.edge_curve(edge);
    integrate_1d(|xi| c.speed(xi), MEASURE_ORDER)
}

impl SamplePlan {
    /// Samples every patch interior, every Dirichlet and Neumann edge, the
    /// listed interfaces and every anti-periodic pair.
    pub fn build(
        domain: &MultiPatchDomain,
        budgets: &SampleBudgets,
        interfaces: &[usize],
        skip: u64,
    ) -> Result<Self> {
        budgets.validate()?;
        let mut plan = SamplePlan {
            skip,
            ..Default::default()
        };
        let counts = interior_counts(domain, budgets)?;
        for (k, (p, &n)) in domain.patches.iter().zip(&counts).enumerate() {
            plan.interior.push(InteriorSet {
                patch: k,
                samples: sample_interior(p, n, skip)?,
            });
        }

        for (tag, total) in [
            (EdgeTag::Dirichlet, budgets.dirichlet),
            (EdgeTag::Neumann, budgets.neumann),
        ] {
            let edges = domain.edges_with(tag);
            let lengths: Vec<f64> = edges
                .iter()
                .map(|&(k, e)| edge_length(&domain.patches[k], e))
                .collect();
            let counts = allocate(total, &lengths, budgets.min_per_set);
            for (&(k, e), n) in edges.iter().zip(counts) {
                plan.edges.push(EdgeSet {
                    patch: k,
                    edge: e,
                    tag,
                    samples: sample_edge(&domain.patches[k], e, n, skip),
                });
            }
        }

        if let Some(&i) = interfaces.iter().find(|&&i| i >= domain.interfaces.len()) {
            return Err(Error::Config(format!("no interface {i}")));
        }
        let lengths: Vec<f64> = interfaces
            .iter()
            .map(|&i| {
                let f = domain.interfaces[i];
                edge_length(&domain.patches[f.k], f.edge_k)
            })
            .collect();
        let counts = allocate(budgets.interface, &lengths, budgets.min_per_set);
        for (&i, n) in interfaces.iter().zip(counts) {
            let f = domain.interfaces[i];
            plan.interfaces.push(InterfaceSet {
                interface: i,
                k: f.k,
                l: f.l,
                samples: sample_interface(domain, i, n, skip)?,
            });
        }

        let lengths: Vec<f64> = domain
            .mirrors
            .iter()
            .map(|m| edge_length(&domain.patches[m.left.0], m.left.1))
            .collect();
        let counts = allocate(budgets.antiperiodic, &lengths, budgets.min_per_set);
        for (i, n) in counts.into_iter().enumerate() {
            let m = domain.mirrors[i];
            plan.mirrors.push(MirrorSet {
                pair: i,
                left: m.left.0,
                right: m.right.0,
                samples: sample_antiperiodic(domain, i, n, skip)?,
            });
        }
        Ok(plan)
    }

    /// Interior-only plan, e.g. for evaluation on fresh points.
    pub fn interior_only(domain: &MultiPatchDomain, total: usize, skip: u64) -> Result<Self> {
        let budgets = SampleBudgets {
            interior: total,
            dirichlet: 0,
            neumann: 0,
            interface: 0,
            antiperiodic: 0,
            min_per_set: default_min_per_set(),
            interior_groups: None,
        };
        let mut plan = SamplePlan {
            skip,
            ..Default::default()
        };
        let counts = interior_counts(domain, &budgets)?;
        for (k, (p, &n)) in domain.patches.iter().zip(&counts).enumerate() {
            plan.interior.push(InteriorSet {
                patch: k,
                samples: sample_interior(p, n, skip)?,
            });
        }
        Ok(plan)
    }

    /// First Sobol index not used by any set of this plan.
    pub fn next_skip(&self) -> u64 {
        let longest = self
            .interior
            .iter()
            .map(|s| s.samples.len())
            .chain(self.edges.iter().map(|s| s.samples.len()))
            .chain(self.interfaces.iter().map(|s| s.samples.len()))
            .chain(self.mirrors.iter().map(|s| s.samples.len()))
            .max()
            .unwrap_or(0);
        self.skip + longest as u64
    }

    pub fn interior_count(&self) -> usize {
        self.interior.iter().map(|s| s.samples.len()).sum()
    }

    pub fn edge_count(&self, tag: EdgeTag) -> usize {
        self.edges
            .iter()
            .filter(|s| s.tag == tag)
            .map(|s| s.samples.len())
            .sum()
    }

    pub fn interface_count(&self) -> usize {
        self.interfaces.iter().map(|s| s.samples.len()).sum()
    }

    pub fn mirror_count(&self) -> usize {
        self.mirrors.iter().map(|s| s.samples.len()).sum()
    }

    /// Interior samples as CSV: `patch,k,y1,y2,x1,x2,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["patch", "k", "y1", "y2", "x1", "x2", "weight"])?;
        for set in &self.interior {
            for (k, s) in set.samples.iter().enumerate() {
                w.write_record(&[
                    set.patch.to_string(),
                    k.to_string(),
                    s.y[0].to_string(),
                    s.y[1].to_string(),
                    s.x[0].to_string(),
                    s.x[1].to_string(),
                    s.weight.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn interior_counts(domain: &MultiPatchDomain, budgets: &SampleBudgets) -> Result<Vec<usize>> {
    let areas: Vec<f64> = domain
        .patches
        .iter()
        .map(|p| patch_area(p, MEASURE_ORDER))
        .collect();
    let Some(groups) = &budgets.interior_groups else {
        return Ok(allocate(budgets.interior, &areas, budgets.min_per_set));
    };
    let mut counts = vec![0; domain.patches.len()];
    for (label, total) in groups {
        let members: Vec<usize> = (0..domain.patches.len())
            .filter(|&k| domain.patches[k].group() == label)
            .collect();
        if members.is_empty() {
            return Err(Error::Config(format!("no patch belongs to subdomain {label}")));
        }
        let sub: Vec<f64> = members.iter().map(|&k| areas[k]).collect();
        for (&k, n) in members.iter().zip(allocate(*total, &sub, budgets.min_per_set)) {
            counts[k] = n;
        }
    }
    if let Some(k) = (0..counts.len()).find(|&k| counts[k] == 0) {
        return Err(Error::Config(format!(
            "subdomain {} of patch {k} has no interior budget",
            domain.patches[k].group()
        )));
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_sums_to_total() {
        assert_eq!(allocate(10, &[1.0, 1.0, 2.0], 0), vec![3, 2, 5]);
        assert_eq!(allocate(7, &[1.0, 100.0], 3), vec![3, 4]);
        assert_eq!(allocate(3, &[1.0, 1.0, 1.0, 1.0], 8), vec![1, 1, 1, 0]);
        assert!(allocate(5, &[], 1).is_empty());
    }

    #[test]
    fn identity_weights_are_one() {
        let s = sample_interior(&Patch::identity(), 64, 1).unwrap();
        assert!(s.iter().all(|s| s.weight == 1.0 && s.x == s.y));
    }
}
