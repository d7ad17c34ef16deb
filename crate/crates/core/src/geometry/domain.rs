use serde::{Deserialize, Serialize};

use super::{Edge, EdgeTag, EdgeTags, KnotVector, Patch, GEOM_TOL};
use crate::error::{Error, Result};

/// Two patch edges sharing the same physical curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub k: usize,
    pub edge_k: Edge,
    pub l: usize,
    pub edge_l: Edge,
    /// The parameter of side `l` runs against that of side `k`.
    pub reversed: bool,
}

impl Interface {
    /// Parameter on side `l` of the point at `xi` on side `k`.
    pub fn partner_param(&self, xi: f64) -> f64 {
        if self.reversed {
            1.0 - xi
        } else {
            xi
        }
    }
}

/// Map taking the left anti-periodic boundary onto the right one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryMap {
    /// Clockwise rotation by `angle` radians about the origin.
    Rotation { angle: f64 },
    /// `(x, y) -> (-x, y)`.
    Reflection,
}

impl SymmetryMap {
    /// Linear map `Q` from the left boundary to the right one.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        match *self {
            SymmetryMap::Rotation { angle } => {
                let (s, c) = angle.sin_cos();
                [[c, s], [-s, c]]
            }
            SymmetryMap::Reflection => [[-1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        mat_vec(self.matrix(), x)
    }

    pub fn inverse(&self, x: [f64; 2]) -> [f64; 2] {
        let q = self.matrix();
        mat_vec([[q[0][0], q[1][0]], [q[0][1], q[1][1]]], x)
    }

    /// Point paired with `x`: the image of a left point (`x < 0`) or the
    /// pre-image of a right point. Applying it twice returns `x`.
    pub fn partner(&self, x: [f64; 2]) -> [f64; 2] {
        if x[0] < 0.0 {
            self.apply(x)
        } else {
            self.inverse(x)
        }
    }
}

fn mat_vec(m: [[f64; 2]; 2], x: [f64; 2]) -> [f64; 2] {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

/// Left and right anti-periodic edges related by the symmetry map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorPair {
    pub left: (usize, Edge),
    pub right: (usize, Edge),
    pub reversed: bool,
}

/// Patches with their matched interfaces and anti-periodic pairs.
#[derive(Debug, Clone)]
pub struct MultiPatchDomain {
    pub patches: Vec<Patch>,
    pub interfaces: Vec<Interface>,
    pub mirrors: Vec<MirrorPair>,
    pub symmetry: Option<SymmetryMap>,
}

const PROBES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn close(a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
    (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
}

/// Whether curve `b` traces curve `a`, and in which direction.
fn coincide(a: &dyn Fn(f64) -> [f64; 2], b: &dyn Fn(f64) -> [f64; 2], tol: f64) -> Option<bool> {
    if PROBES.iter().all(|&t| close(a(t), b(t), tol)) {
        Some(false)
    } else if PROBES.iter().all(|&t| close(a(t), b(1.0 - t), tol)) {
        Some(true)
    } else {
        None
    }
}

fn tagged(patches: &[Patch], tag: EdgeTag) -> Vec<(usize, Edge)> {
    let mut out = Vec::new();
    for (k, p) in patches.iter().enumerate() {
        for e in Edge::ALL {
            if p.edges.get(e) == tag {
                out.push((k, e));
            }
        }
    }
    out
}

/// Pairs every edge tagged [`EdgeTag::Interface`] with the unique edge that
/// traces the same curve within `geom_tol`.
pub fn match_interfaces(patches: Vec<Patch>, geom_tol: f64) -> Result<MultiPatchDomain> {
    let cands = tagged(&patches, EdgeTag::Interface);
    let mut interfaces = Vec::new();
    for (ia, &(k, ek)) in cands.iter().enumerate() {
        let pa = &patches[k];
        let fa = |t: f64| pa.eval(ek.param(t));
        let mut found = Vec::new();
        for (ib, &(l, el)) in cands.iter().enumerate() {
            if ia == ib {
                continue;
            }
            let pb = &patches[l];
            let fb = |t: f64| pb.eval(el.param(t));
            if let Some(rev) = coincide(&fa, &fb, geom_tol) {
                found.push((ib, l, el, rev));
            }
        }
        match found.len() {
            0 => {
                return Err(Error::Geometry(format!(
                    "{} edge of patch {k} is tagged interface but has no partner",
                    ek.name()
                )))
            }
            1 => {
                let (ib, l, el, reversed) = found[0];
                if ia < ib {
                    interfaces.push(Interface {
                        k,
                        edge_k: ek,
                        l,
                        edge_l: el,
                        reversed,
                    });
                }
            }
            count => {
                return Err(Error::AmbiguousInterface {
                    patch: k,
                    edge: ek.name(),
                    count,
                })
            }
        }
    }
    Ok(MultiPatchDomain {
        patches,
        interfaces,
        mirrors: Vec::new(),
        symmetry: None,
    })
}

impl MultiPatchDomain {
    pub fn new(patches: Vec<Patch>) -> Result<Self> {
        match_interfaces(patches, GEOM_TOL)
    }

    /// Registers `map` and pairs every left anti-periodic edge with its image.
    pub fn with_symmetry(mut self, map: SymmetryMap, geom_tol: f64) -> Result<Self> {
        let lefts = tagged(&self.patches, EdgeTag::AntiperiodicLeft);
        let rights = tagged(&self.patches, EdgeTag::AntiperiodicRight);
        let mut used = vec![false; rights.len()];
        let mut mirrors = Vec::new();
        for &(k, ek) in &lefts {
            let pa = &self.patches[k];
            let fa = |t: f64| map.apply(pa.eval(ek.param(t)));
            let mut found = Vec::new();
            for (ib, &(l, el)) in rights.iter().enumerate() {
                let pb = &self.patches[l];
                let fb = |t: f64| pb.eval(el.param(t));
                if let Some(rev) = coincide(&fa, &fb, geom_tol) {
                    found.push((ib, rev));
                }
            }
            match found.as_slice() {
                [(ib, rev)] => {
                    used[*ib] = true;
                    mirrors.push(MirrorPair {
                        left: (k, ek),
                        right: rights[*ib],
                        reversed: *rev,
                    });
                }
                [] => {
                    return Err(Error::Geometry(format!(
                        "anti-periodic {} edge of patch {k} has no image",
                        ek.name()
                    )))
                }
                many => {
                    return Err(Error::AmbiguousInterface {
                        patch: k,
                        edge: ek.name(),
                        count: many.len(),
                    })
                }
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            let (l, el) = rights[i];
            return Err(Error::Geometry(format!(
                "anti-periodic {} edge of patch {l} has no pre-image",
                el.name()
            )));
        }
        self.mirrors = mirrors;
        self.symmetry = Some(map);
        Ok(self)
    }

    pub fn edges_with(&self, tag: EdgeTag) -> Vec<(usize, Edge)> {
        tagged(&self.patches, tag)
    }

    /// Distinct subdomain labels in order of first appearance.
    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.patches {
            if !out.iter().any(|g| g == p.group()) {
                out.push(p.group().to_string());
            }
        }
        out
    }

    /// Validates every patch map on a sampling grid.
    pub fn check_jacobians(&self, n: usize) -> Result<()> {
        for (k, p) in self.patches.iter().enumerate() {
            p.check_jacobian(n)
                .map_err(|e| Error::Geometry(format!("patch {k}: {e}")))?;
        }
        Ok(())
    }
}

/// One patch in the JSON exchange format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchRecord {
    pub degree_u: usize,
    pub degree_v: usize,
    pub knots_u: Vec<f64>,
    pub knots_v: Vec<f64>,
    /// `[x, y, w]`, `u` varying fastest.
    pub control_points: Vec<[f64; 3]>,
    pub material: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subdomain: Option<String>,
    pub edges: EdgeTags,
}

/// Geometry exchange file: `{"patches": [...], "symmetry": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchFile {
    pub patches: Vec<PatchRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<SymmetryMap>,
}

impl PatchRecord {
    pub fn to_patch(&self) -> Result<Patch> {
        let ku = KnotVector::new(self.knots_u.clone(), self.degree_u)?;
        let kv = KnotVector::new(self.knots_v.clone(), self.degree_v)?;
        let points = self.control_points.iter().map(|c| [c[0], c[1]]).collect();
        let weights = self.control_points.iter().map(|c| c[2]).collect();
        let mut p = Patch::new(ku, kv, points, weights, self.material.clone(), self.edges)?;
        p.subdomain = self.subdomain.clone();
        Ok(p)
    }

    pub fn from_patch(p: &Patch) -> Self {
        Self {
            degree_u: p.knots_u.degree(),
            degree_v: p.knots_v.degree(),
            knots_u: p.knots_u.values().to_vec(),
            knots_v: p.knots_v.values().to_vec(),
            control_points: p
                .points
                .iter()
                .zip(&p.weights)
                .map(|(x, &w)| [x[0], x[1], w])
                .collect(),
            material: p.material.clone(),
            subdomain: p.subdomain.clone(),
            edges: p.edges,
        }
    }
}

impl PatchFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_domain(d: &MultiPatchDomain) -> Self {
        Self {
            patches: d.patches.iter().map(PatchRecord::from_patch).collect(),
            symmetry: d.symmetry,
        }
    }

    /// Builds patches, matches interfaces and, when a symmetry is given,
    /// anti-periodic pairs.
    pub fn into_domain(self) -> Result<MultiPatchDomain> {
        let patches = self
            .patches
            .iter()
            .map(PatchRecord::to_patch)
            .collect::<Result<Vec<_>>>()?;
        let d = match_interfaces(patches, GEOM_TOL)?;
        match self.symmetry {
            Some(s) => d.with_symmetry(s, GEOM_TOL),
            None => Ok(d),
        }
    }
}
