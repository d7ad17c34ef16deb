use super::compile::{CTerm, Compiled, Rule};
use super::EnergySpec;
use crate::autodiff::{ExprGraph, NodeId};
use crate::error::{Error, Result};
use crate::network::GraphNetwork;
use crate::sampling::SamplePlan;

/// The assembled loss and one node per term, in spec order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNodes {
    pub total: NodeId,
    pub terms: Vec<NodeId>,
}

struct NodePoint {
    u: NodeId,
    g: [NodeId; 2],
}

/// Builds the loss of `spec` on `plan` as graph nodes over the bound
/// networks `nets` (one per spec network, in order).
pub fn assemble_loss(
    spec: &EnergySpec,
    plan: &SamplePlan,
    graph: &mut ExprGraph,
    nets: &[GraphNetwork],
) -> Result<LossNodes> {
    let compiled = Compiled::new(spec, plan)?;
    if nets.len() != compiled.configs.len() {
        return Err(Error::Config(format!(
            "{} bound networks for {} spec networks",
            nets.len(),
            compiled.configs.len()
        )));
    }
    for (i, (n, c)) in nets.iter().zip(&compiled.configs).enumerate() {
        if &n.config != c {
            return Err(Error::Config(format!(
                "bound network {i} does not match its spec architecture"
            )));
        }
    }
    let mut values: Vec<Vec<NodePoint>> = Vec::with_capacity(nets.len());
    for (net, pts) in nets.iter().zip(&compiled.points) {
        let mut out = Vec::with_capacity(pts.len());
        for &x in pts {
            let p = net.forward(graph, x);
            let g = net.spatial_gradient(graph, &p)?;
            out.push(NodePoint { u: p.u, g });
        }
        values.push(out);
    }
    let terms: Vec<NodeId> = compiled
        .terms
        .iter()
        .map(|t| term_node(graph, t, &values))
        .collect();
    let total = graph.sum(&terms);
    Ok(LossNodes { total, terms })
}

fn dot_const(graph: &mut ExprGraph, g: [NodeId; 2], n: [f64; 2]) -> NodeId {
    let a = graph.scale(n[0], g[0]);
    let b = graph.scale(n[1], g[1]);
    graph.add(a, b)
}

fn term_node(graph: &mut ExprGraph, t: &CTerm, values: &[Vec<NodePoint>]) -> NodeId {
    let mut parts = Vec::with_capacity(t.one.len() + t.two.len());
    for s in &t.one {
        let p = &values[s.at.net][s.at.idx];
        let w = s.w;
        let node = match t.rule {
            Rule::Energy { scale } => {
                let sq = graph.dot(&p.g, &p.g);
                let e = graph.scale(w * scale * s.kappa, sq);
                let f = graph.scale(-w * s.data, p.u);
                graph.add(e, f)
            }
            Rule::Magnetization { m } => {
                let a = graph.scale(w * m[1], p.g[0]);
                let b = graph.scale(-w * m[0], p.g[1]);
                graph.add(a, b)
            }
            Rule::Neumann => graph.scale(-w * s.data, p.u),
            Rule::Penalty { beta } => {
                let g = graph.constant(s.data);
                let d = graph.sub(p.u, g);
                let sq = graph.square(d);
                graph.scale(beta * w, sq)
            }
            Rule::Nitsche {
                beta,
                part,
                weighted,
            } => {
                let g = graph.constant(s.data);
                let d = graph.sub(p.u, g);
                let c = if weighted { s.kappa } else { 1.0 };
                let mut pieces = Vec::new();
                if part.consistency() {
                    let q = dot_const(graph, p.g, [c * s.n[0], c * s.n[1]]);
                    let qd = graph.mul(q, d);
                    pieces.push(graph.scale(-w, qd));
                }
                if part.penalty() {
                    let sq = graph.square(d);
                    pieces.push(graph.scale(0.5 * beta * w, sq));
                }
                graph.sum(&pieces)
            }
            Rule::Jump { .. } => unreachable!("jump rules have two-sided samples"),
        };
        parts.push(node);
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
        let pk = &values[s.k.net][s.k.idx];
        let pl = &values[s.l.net][s.l.idx];
        let w = s.w;
        let ul = graph.scale(sign, pl.u);
        let jump = graph.add(pk.u, ul);
        let node = match part {
            None => {
                let sq = graph.square(jump);
                graph.scale(beta * w, sq)
            }
            Some(part) => {
                let (ck, cl) = if weighted {
                    (s.kappa_k, s.kappa_l)
                } else {
                    (1.0, 1.0)
                };
                let mut pieces = Vec::new();
                if part.consistency() {
                    let fk = dot_const(graph, pk.g, [0.5 * ck * s.n_k[0], 0.5 * ck * s.n_k[1]]);
                    let fl = dot_const(graph, pl.g, [0.5 * cl * s.m_l[0], 0.5 * cl * s.m_l[1]]);
                    let flux = graph.add(fk, fl);
                    let fj = graph.mul(flux, jump);
                    pieces.push(graph.scale(-w, fj));
                }
                if part.penalty() {
                    let sq = graph.square(jump);
                    pieces.push(graph.scale(0.5 * beta * w, sq));
                }
                graph.sum(&pieces)
            }
        };
        parts.push(node);
    }
    graph.sum(&parts)
}
