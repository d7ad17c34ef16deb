use std::collections::HashMap;

use super::{AntiperiodicMode, DgPart, EnergySpec, Field, TermKind};
use crate::error::{Error, Result};
use crate::geometry::Edge;
use crate::network::{backward, forward_batch, forward_cached, NetworkConfig, ParamSet};
use crate::sampling::SamplePlan;

/// A point in the evaluation list of one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) struct Site {
    pub net: usize,
    pub idx: usize,
}

#[derive(Debug, Clone, Copy)]
pub(super) enum Rule {
    Energy { scale: f64 },
    Magnetization { m: [f64; 2] },
    Neumann,
    Penalty { beta: f64 },
    Nitsche { beta: f64, part: DgPart, weighted: bool },
    /// Two-sided; `part = None` is the plain penalty `beta J^2`.
    Jump {
        beta: f64,
        part: Option<DgPart>,
        weighted: bool,
        sign: f64,
    },
}

/// One-sided sample: `data` is the load or boundary value at the point.
#[derive(Debug, Clone, Copy)]
pub(super) struct One {
    pub at: Site,
    pub w: f64,
    pub data: f64,
    pub n: [f64; 2],
    pub kappa: f64,
}

/// Two-sided sample; side `l` contributes `grad u_l . m_l` to the flux.
#[derive(Debug, Clone, Copy)]
pub(super) struct Two {
    pub k: Site,
    pub l: Site,
    pub w: f64,
    pub n_k: [f64; 2],
    pub m_l: [f64; 2],
    pub kappa_k: f64,
    pub kappa_l: f64,
}

#[derive(Debug, Clone)]
pub(super) struct CTerm {
    pub rule: Rule,
    pub one: Vec<One>,
    pub two: Vec<Two>,
}

/// An energy spec bound to a sample plan: per-network point lists and
/// per-term sample references into them.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub(super) configs: Vec<NetworkConfig>,
    pub(super) points: Vec<Vec<[f64; 2]>>,
    /// Patch each point was sampled on.
    owners: Vec<Vec<usize>>,
    pub(super) terms: Vec<CTerm>,
    labels: Vec<String>,
}

/// Loss value, per-term values and, when requested, the gradient with
/// respect to each network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub total: f64,
    pub terms: Vec<f64>,
    pub grads: Option<Vec<Vec<f64>>>,
}

/// Sample sets are evaluated once even when several terms refer to them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum SetKey {
    Interior(usize),
    Edge(usize, Edge),
    Interface(usize),
    Mirror(usize),
}

struct Builder<'a> {
    spec: &'a EnergySpec,
    points: Vec<Vec<[f64; 2]>>,
    owners: Vec<Vec<usize>>,
    seen: HashMap<SetKey, Vec<(Site, Site)>>,
}

impl Builder<'_> {
    fn site(&mut self, patch: usize, x: [f64; 2]) -> Site {
        let net = self.spec.patch_network[patch];
        let list = &mut self.points[net];
        list.push(x);
        self.owners[net].push(patch);
        Site {
            net,
            idx: list.len() - 1,
        }
    }

    /// Sites of a set, creating them with `make` on first use.
    fn sites(
        &mut self,
        key: SetKey,
        make: impl FnOnce(&mut Self) -> Vec<(Site, Site)>,
    ) -> Vec<(Site, Site)> {
        if let Some(s) = self.seen.get(&key) {
            return s.clone();
        }
        let s = make(self);
        self.seen.insert(key, s.clone());
        s
    }
}

fn missing(what: &str) -> Error {
    Error::Config(format!("sample plan has no set for {what}"))
}

impl Compiled {
    pub fn new(spec: &EnergySpec, plan: &SamplePlan) -> Result<Self> {
        spec.validate()?;
        let n_patches = spec.patch_network.len();
        let mut b = Builder {
            spec,
            points: vec![Vec::new(); spec.networks.len()],
            owners: vec![Vec::new(); spec.networks.len()],
            seen: HashMap::new(),
        };
        let mut terms = Vec::with_capacity(spec.terms.len());
        let patch_ok = |k: usize| {
            if k < n_patches {
                Ok(())
            } else {
                Err(Error::Config(format!("term refers to unknown patch {k}")))
            }
        };

        for term in &spec.terms {
            let mut one = Vec::new();
            let mut two = Vec::new();
            let rule = match &term.kind {
                TermKind::Interior {
                    patches,
                    scale,
                    load,
                } => {
                    for &k in patches {
                        patch_ok(k)?;
                        let set = plan
                            .interior
                            .iter()
                            .find(|s| s.patch == k)
                            .ok_or_else(|| missing(&format!("patch {k}")))?;
                        let m = set.samples.len().max(1) as f64;
                        let sites = b.sites(SetKey::Interior(k), |b| {
                            set.samples.iter().map(|s| { let a = b.site(k, s.x); (a, a) }).collect()
                        });
                        for (s, &(at, _)) in set.samples.iter().zip(&sites) {
                            let data = load.as_ref().map_or(0.0, |f| f.eval(s.x, [0.0; 2]));
                            one.push(One {
                                at,
                                w: s.weight / m,
                                data,
                                n: [0.0; 2],
                                kappa: spec.coefficients[k],
                            });
                        }
                    }
                    Rule::Energy { scale: *scale }
                }
                TermKind::Magnetization { patches, m } => {
                    for &k in patches {
                        patch_ok(k)?;
                        let set = plan
                            .interior
                            .iter()
                            .find(|s| s.patch == k)
                            .ok_or_else(|| missing(&format!("patch {k}")))?;
                        let count = set.samples.len().max(1) as f64;
                        let sites = b.sites(SetKey::Interior(k), |b| {
                            set.samples.iter().map(|s| { let a = b.site(k, s.x); (a, a) }).collect()
                        });
                        for (s, &(at, _)) in set.samples.iter().zip(&sites) {
                            one.push(One {
                                at,
                                w: s.weight / count,
                                data: 0.0,
                                n: [0.0; 2],
                                kappa: spec.coefficients[k],
                            });
                        }
                    }
                    Rule::Magnetization { m: *m }
                }
                TermKind::Neumann { edges, g } => {
                    edge_samples(&mut b, plan, edges, g, &mut one)?;
                    Rule::Neumann
                }
                TermKind::DirichletPenalty { edges, g, beta } => {
                    edge_samples(&mut b, plan, edges, g, &mut one)?;
                    Rule::Penalty { beta: *beta }
                }
                TermKind::DgDirichlet {
                    edges,
                    g,
                    beta,
                    part,
                    weighted,
                } => {
                    edge_samples(&mut b, plan, edges, g, &mut one)?;
                    Rule::Nitsche {
                        beta: *beta,
                        part: *part,
                        weighted: *weighted,
                    }
                }
                TermKind::DgInterface {
                    interfaces,
                    beta,
                    part,
                    weighted,
                } => {
                    interface_samples(&mut b, plan, interfaces, &mut two)?;
                    Rule::Jump {
                        beta: *beta,
                        part: Some(*part),
                        weighted: *weighted,
                        sign: -1.0,
                    }
                }
                TermKind::Coupling { interfaces, beta } => {
                    interface_samples(&mut b, plan, interfaces, &mut two)?;
                    Rule::Jump {
                        beta: *beta,
                        part: None,
                        weighted: false,
                        sign: -1.0,
                    }
                }
                TermKind::Antiperiodic {
                    pairs,
                    beta,
                    mode,
                    weighted,
                } => {
                    for &i in pairs {
                        let set = plan
                            .mirrors
                            .iter()
                            .find(|s| s.pair == i)
                            .ok_or_else(|| missing(&format!("anti-periodic pair {i}")))?;
                        patch_ok(set.left)?;
                        patch_ok(set.right)?;
                        let m = set.samples.len().max(1) as f64;
                        let sites = b.sites(SetKey::Mirror(i), |b| {
                            set.samples
                                .iter()
                                .map(|s| (b.site(set.left, s.x_left), b.site(set.right, s.x_right)))
                                .collect()
                        });
                        for (s, &(k, l)) in set.samples.iter().zip(&sites) {
                            two.push(Two {
                                k,
                                l,
                                w: s.weight / m,
                                n_k: s.normal_left,
                                m_l: s.normal_right,
                                kappa_k: spec.coefficients[set.left],
                                kappa_l: spec.coefficients[set.right],
                            });
                        }
                    }
                    let part = match mode {
                        AntiperiodicMode::Penalty => None,
                        AntiperiodicMode::Dg(p) => Some(*p),
                    };
                    Rule::Jump {
                        beta: *beta,
                        part,
                        weighted: *weighted,
                        sign: 1.0,
                    }
                }
            };
            terms.push(CTerm { rule, one, two });
        }

        Ok(Self {
            configs: spec.networks.iter().map(|n| n.config.clone()).collect(),
            points: b.points,
            owners: b.owners,
            terms,
            labels: spec.term_labels(),
        })
    }

    pub fn configs(&self) -> &[NetworkConfig] {
        &self.configs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of network evaluations per loss evaluation, per network.
    pub fn point_counts(&self) -> Vec<usize> {
        self.points.iter().map(Vec::len).collect()
    }

    /// Splits a concatenated parameter vector into per-network sets.
    pub fn split(&self, flat: &[f64]) -> Result<Vec<ParamSet>> {
        let total: usize = self
            .configs
            .iter()
            .map(crate::network::count_parameters)
            .sum();
        if flat.len() != total {
            return Err(Error::LengthMismatch(format!(
                "{} parameters for networks holding {total}",
                flat.len()
            )));
        }
        let mut out = Vec::with_capacity(self.configs.len());
        let mut at = 0;
        for c in &self.configs {
            let n = crate::network::count_parameters(c);
            out.push(ParamSet::from_vec(c.clone(), flat[at..at + n].to_vec())?);
            at += n;
        }
        Ok(out)
    }

    fn check(&self, params: &[ParamSet]) -> Result<()> {
        if params.len() != self.configs.len() {
            return Err(Error::Config(format!(
                "{} parameter sets for {} networks",
                params.len(),
                self.configs.len()
            )));
        }
        for (i, (p, c)) in params.iter().zip(&self.configs).enumerate() {
            if &p.config != c {
                return Err(Error::Config(format!(
                    "parameter set {i} does not match its network architecture"
                )));
            }
        }
        Ok(())
    }

    /// Loss and per-term values without gradients.
    pub fn value(&self, params: &[ParamSet]) -> Result<Evaluation> {
        self.check(params)?;
        let outs: Vec<_> = params
            .iter()
            .zip(&self.points)
            .map(|(p, pts)| forward_batch(p, pts))
            .collect();
        let net = |s: Site| {
            let o = &outs[s.net];
            (o.u[s.idx], [o.ux[s.idx], o.uy[s.idx]])
        };
        let terms: Vec<f64> = self
            .terms
            .iter()
            .map(|t| term_value(t, &net, &mut |_, _, _| {}))
            .collect();
        Ok(Evaluation {
            total: terms.iter().sum(),
            terms,
            grads: None,
        })
    }

    /// Loss of an arbitrary trial function `f(patch, x) -> (u, grad u)` in
    /// place of the networks.
    pub fn value_with(&self, f: impl Fn(usize, [f64; 2]) -> (f64, [f64; 2])) -> Evaluation {
        let outs: Vec<Vec<(f64, [f64; 2])>> = self
            .points
            .iter()
            .zip(&self.owners)
            .map(|(pts, own)| pts.iter().zip(own).map(|(&x, &k)| f(k, x)).collect())
            .collect();
        let net = |s: Site| outs[s.net][s.idx];
        let terms: Vec<f64> = self
            .terms
            .iter()
            .map(|t| term_value(t, &net, &mut |_, _, _| {}))
            .collect();
        Evaluation {
            total: terms.iter().sum(),
            terms,
            grads: None,
        }
    }

    /// Loss, per-term values and parameter gradients.
    pub fn value_and_grad(&self, params: &[ParamSet]) -> Result<Evaluation> {
        self.check(params)?;
        let mut outs = Vec::with_capacity(params.len());
        let mut caches = Vec::with_capacity(params.len());
        for (p, pts) in params.iter().zip(&self.points) {
            let (o, c) = forward_cached(p, pts);
            outs.push(o);
            caches.push(c);
        }
        let mut adj: Vec<[Vec<f64>; 3]> = self
            .points
            .iter()
            .map(|p| [vec![0.0; p.len()], vec![0.0; p.len()], vec![0.0; p.len()]])
            .collect();
        let net = |s: Site| {
            let o = &outs[s.net];
            (o.u[s.idx], [o.ux[s.idx], o.uy[s.idx]])
        };
        let terms: Vec<f64> = self
            .terms
            .iter()
            .map(|t| {
                term_value(t, &net, &mut |s: Site, du: f64, dg: [f64; 2]| {
                    let a = &mut adj[s.net];
                    a[0][s.idx] += du;
                    a[1][s.idx] += dg[0];
                    a[2][s.idx] += dg[1];
                })
            })
            .collect();
        let grads = params
            .iter()
            .zip(&caches)
            .zip(&adj)
            .map(|((p, c), a)| backward(p, c, &a[0], &a[1], &a[2]))
            .collect();
        Ok(Evaluation {
            total: terms.iter().sum(),
            terms,
            grads: Some(grads),
        })
    }
}

fn edge_samples(
    b: &mut Builder<'_>,
    plan: &SamplePlan,
    edges: &[(usize, Edge)],
    g: &Field,
    out: &mut Vec<One>,
) -> Result<()> {
    for &(k, e) in edges {
        if k >= b.spec.patch_network.len() {
            return Err(Error::Config(format!("term refers to unknown patch {k}")));
        }
        let set = plan
            .edges
            .iter()
            .find(|s| s.patch == k && s.edge == e)
            .ok_or_else(|| missing(&format!("edge {} of patch {k}", e.name())))?;
        let m = set.samples.len().max(1) as f64;
        let sites = b.sites(SetKey::Edge(k, e), |b| {
            set.samples.iter().map(|s| { let a = b.site(k, s.x); (a, a) }).collect()
        });
        for (s, &(at, _)) in set.samples.iter().zip(&sites) {
            out.push(One {
                at,
                w: s.weight / m,
                data: g.eval(s.x, s.normal),
                n: s.normal,
                kappa: b.spec.coefficients[k],
            });
        }
    }
    Ok(())
}

fn interface_samples(
    b: &mut Builder<'_>,
    plan: &SamplePlan,
    interfaces: &[usize],
    out: &mut Vec<Two>,
) -> Result<()> {
    for &i in interfaces {
        let set = plan
            .interfaces
            .iter()
            .find(|s| s.interface == i)
            .ok_or_else(|| missing(&format!("interface {i}")))?;
        let n_patches = b.spec.patch_network.len();
        if set.k >= n_patches || set.l >= n_patches {
            return Err(Error::Config(format!("interface {i} refers to unknown patches")));
        }
        let shared = b.spec.patch_network[set.k] == b.spec.patch_network[set.l];
        let m = set.samples.len().max(1) as f64;
        let sites = b.sites(SetKey::Interface(i), |b| {
            set.samples
                .iter()
                .map(|s| {
                    let k = b.site(set.k, s.x_k);
                    let l = if shared { k } else { b.site(set.l, s.x_k) };
                    (k, l)
                })
                .collect()
        });
        for (s, &(k, l)) in set.samples.iter().zip(&sites) {
            out.push(Two {
                k,
                l,
                w: s.weight / m,
                n_k: s.normal,
                m_l: s.normal,
                kappa_k: b.spec.coefficients[set.k],
                kappa_l: b.spec.coefficients[set.l],
            });
        }
    }
    Ok(())
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn scaled(c: f64, a: [f64; 2]) -> [f64; 2] {
    [c * a[0], c * a[1]]
}

/// Value of one compiled term; `push` receives the adjoints `(dL/du,
/// dL/dgrad u)` of every site it touches.
fn term_value(
    t: &CTerm,
    net: &impl Fn(Site) -> (f64, [f64; 2]),
    push: &mut impl FnMut(Site, f64, [f64; 2]),
) -> f64 {
    let mut acc = 0.0;
    for s in &t.one {
        let (u, g) = net(s.at);
        let w = s.w;
        match t.rule {
            Rule::Energy { scale } => {
                acc += w * (scale * s.kappa * dot(g, g) - s.data * u);
                push(s.at, -w * s.data, scaled(2.0 * w * scale * s.kappa, g));
            }
            Rule::Magnetization { m } => {
                acc -= w * (-m[1] * g[0] + m[0] * g[1]);
                push(s.at, 0.0, [w * m[1], -w * m[0]]);
            }
            Rule::Neumann => {
                acc -= w * u * s.data;
                push(s.at, -w * s.data, [0.0; 2]);
            }
            Rule::Penalty { beta } => {
                let d = u - s.data;
                acc += beta * w * d * d;
                push(s.at, 2.0 * beta * w * d, [0.0; 2]);
            }
            Rule::Nitsche {
                beta,
                part,
                weighted,
            } => {
                let d = u - s.data;
                let c = if weighted { s.kappa } else { 1.0 };
                if part.consistency() {
                    let q = c * dot(g, s.n);
                    acc -= w * q * d;
                    push(s.at, -w * q, scaled(-w * d * c, s.n));
                }
                if part.penalty() {
                    acc += 0.5 * beta * w * d * d;
                    push(s.at, beta * w * d, [0.0; 2]);
                }
            }
            Rule::Jump { .. } => unreachable!("jump rules have two-sided samples"),
        }
    }
    for s in &t.two {
        let Rule::Jump {
            beta,
            part,
            weighted,
            sign,
        } = t.rule
        else {
            unreachable!("one-sided rules have no paired samples")
        };
        let (uk, gk) = net(s.k);
        let (ul, gl) = net(s.l);
        let w = s.w;
        let jump = uk + sign * ul;
        match part {
            None => {
                acc += beta * w * jump * jump;
                let d = 2.0 * beta * w * jump;
                push(s.k, d, [0.0; 2]);
                push(s.l, sign * d, [0.0; 2]);
            }
            Some(part) => {
                let (ck, cl) = if weighted {
                    (s.kappa_k, s.kappa_l)
                } else {
                    (1.0, 1.0)
                };
                if part.consistency() {
                    let flux = 0.5 * (ck * dot(gk, s.n_k) + cl * dot(gl, s.m_l));
                    acc -= w * flux * jump;
                    push(s.k, -w * flux, scaled(-0.5 * w * jump * ck, s.n_k));
                    push(s.l, -w * flux * sign, scaled(-0.5 * w * jump * cl, s.m_l));
                }
                if part.penalty() {
                    acc += 0.5 * beta * w * jump * jump;
                    let d = beta * w * jump;
                    push(s.k, d, [0.0; 2]);
                    push(s.l, sign * d, [0.0; 2]);
                }
            }
        }
    }
    acc
}
