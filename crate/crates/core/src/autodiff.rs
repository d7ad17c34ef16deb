//! Scalar expression graphs with differentiation that emits new graph nodes.
//!
//! An [`ExprGraph`] is an append-only tape. Every node stores its operator,
//! its operands (which always precede it) and a cached `f64` value that is
//! computed eagerly when the node is built. Variables can be rebound with
//! [`ExprGraph::set_value`] followed by [`ExprGraph::reevaluate`].
//!
//! Both differentiation routines return *nodes*, not numbers:
//!
//! * [`ExprGraph::grad_nodes`] runs reverse accumulation and records every
//!   adjoint as a node, so the result can be differentiated again.
//! * [`ExprGraph::jvp_nodes`] propagates tangents forward and records them on
//!   the tape. Spatial gradients of a network are built this way, after which
//!   `grad_nodes` differentiates a loss containing them with respect to the
//!   network parameters.
//!
//! ```
//! use cadritz::autodiff::ExprGraph;
//!
//! let mut g = ExprGraph::new();
//! let x = g.var(3.0);
//! let y = g.square(x);
//! let dy = g.grad_nodes(y, &[x]).unwrap()[0];
//! let d2y = g.grad_nodes(dy, &[x]).unwrap()[0];
//! assert_eq!(g.value(y), 9.0);
//! assert_eq!(g.value(dy), 6.0);
//! assert_eq!(g.value(d2y), 2.0);
//! ```

use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};

static NEXT_GRAPH_ID: AtomicU32 = AtomicU32::new(0);

/// Handle to a node of one particular [`ExprGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    graph: u32,
    index: u32,
}

impl NodeId {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

/// Operator of a graph node.
///
/// `Dot` takes an even number of operands and computes
/// `a[0]*a[k] + a[1]*a[k+1] + ...` with `k = len/2`. `Scale(c)` multiplies
/// its single operand by the constant `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Const(f64),
    Var,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Tanh,
    Square,
    Sqrt,
    Dot,
    Scale(f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const(_) => "const",
            Op::Var => "var",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Tanh => "tanh",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Dot => "dot",
            Op::Scale(_) => "scale",
        }
    }

    fn check_arity(&self, got: usize) -> Result<()> {
        let (ok, expected) = match self {
            Op::Const(_) | Op::Var => (got == 0, "0"),
            Op::Add | Op::Sub | Op::Mul | Op::Div => (got == 2, "2"),
            Op::Neg | Op::Tanh | Op::Square | Op::Sqrt | Op::Scale(_) => (got == 1, "1"),
            Op::Dot => (got >= 2 && got % 2 == 0, "an even number >= 2"),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Arity {
                op: self.name(),
                expected,
                got,
            })
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    start: u32,
    len: u32,
}

/// Append-only scalar computation graph.
#[derive(Debug)]
pub struct ExprGraph {
    id: u32,
    nodes: Vec<Node>,
    operands: Vec<u32>,
    values: Vec<f64>,
}

impl Default for ExprGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl ExprGraph {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            operands: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, id: NodeId) -> Result<usize> {
        if id.graph != self.id || id.index() >= self.nodes.len() {
            return Err(Error::InvalidNode { index: id.index() });
        }
        Ok(id.index())
    }

    fn handle(&self, index: usize) -> NodeId {
        NodeId {
            graph: self.id,
            index: index as u32,
        }
    }

    /// Appends a node after validating operator arity and operand ids.
    pub fn build(&mut self, op: Op, operands: &[NodeId]) -> Result<NodeId> {
        op.check_arity(operands.len())?;
        for &o in operands {
            self.check(o)?;
        }
        let start = self.operands.len() as u32;
        self.operands.extend(operands.iter().map(|o| o.index));
        let index = self.nodes.len();
        self.nodes.push(Node {
            op,
            start,
            len: operands.len() as u32,
        });
        let value = match op {
            Op::Const(c) => c,
            Op::Var => 0.0,
            _ => self.compute(index),
        };
        self.values.push(value);
        Ok(self.handle(index))
    }

    fn push(&mut self, op: Op, operands: &[NodeId]) -> NodeId {
        self.build(op, operands)
            .expect("operand ids issued by another graph")
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.push(Op::Const(value), &[])
    }

    /// Creates an independent input with the given initial value.
    pub fn var(&mut self, value: f64) -> NodeId {
        let id = self.push(Op::Var, &[]);
        self.values[id.index()] = value;
        id
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul, &[a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Div, &[a, b])
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg, &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh, &[a])
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Square, &[a])
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sqrt, &[a])
    }

    pub fn scale(&mut self, c: f64, a: NodeId) -> NodeId {
        self.push(Op::Scale(c), &[a])
    }

    /// Inner product of `lhs` and `rhs`, recorded as one node.
    pub fn dot(&mut self, lhs: &[NodeId], rhs: &[NodeId]) -> NodeId {
        assert_eq!(lhs.len(), rhs.len(), "dot operands differ in length");
        if lhs.is_empty() {
            return self.constant(0.0);
        }
        let mut ops = Vec::with_capacity(lhs.len() * 2);
        ops.extend_from_slice(lhs);
        ops.extend_from_slice(rhs);
        self.push(Op::Dot, &ops)
    }

    /// Sums a list of nodes with a chain of additions (zero for an empty list).
    pub fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        match terms.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &t| self.add(acc, t)),
        }
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.values[self.check(id).expect("foreign node id")]
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.nodes[self.check(id).expect("foreign node id")].op
    }

    pub fn is_var(&self, id: NodeId) -> bool {
        self.check(id)
            .map(|i| matches!(self.nodes[i].op, Op::Var))
            .unwrap_or(false)
    }

    /// Rebinds a variable. Call [`ExprGraph::reevaluate`] afterwards.
    pub fn set_value(&mut self, var: NodeId, value: f64) -> Result<()> {
        let i = self.check(var)?;
        if !matches!(self.nodes[i].op, Op::Var) {
            return Err(Error::NotVariable { index: i });
        }
        self.values[i] = value;
        Ok(())
    }

    /// Recomputes every derived value in tape order.
    pub fn reevaluate(&mut self) {
        for i in 0..self.nodes.len() {
            if !matches!(self.nodes[i].op, Op::Const(_) | Op::Var) {
                self.values[i] = self.compute(i);
            }
        }
    }

    fn args(&self, i: usize) -> &[u32] {
        let n = &self.nodes[i];
        &self.operands[n.start as usize..(n.start + n.len) as usize]
    }

    fn compute(&self, i: usize) -> f64 {
        let args = self.args(i);
        let v = |k: usize| self.values[args[k] as usize];
        match self.nodes[i].op {
            Op::Const(c) => c,
            Op::Var => self.values[i],
            Op::Add => v(0) + v(1),
            Op::Sub => v(0) - v(1),
            Op::Mul => v(0) * v(1),
            Op::Div => v(0) / v(1),
            Op::Neg => -v(0),
            Op::Tanh => v(0).tanh(),
            Op::Square => v(0) * v(0),
            Op::Sqrt => v(0).sqrt(),
            Op::Scale(c) => c * v(0),
            Op::Dot => {
                let half = args.len() / 2;
                (0..half).map(|k| v(k) * v(k + half)).sum()
            }
        }
    }

    fn accumulate(&mut self, adj: &mut [Option<NodeId>], target: usize, contrib: NodeId) {
        adj[target] = Some(match adj[target] {
            None => contrib,
            Some(prev) => self.add(prev, contrib),
        });
    }

    /// Reverse-mode derivatives of `scalar` with respect to each variable in
    /// `wrt`, emitted as new nodes. Variables that `scalar` does not depend on
    /// get a constant zero node.
    pub fn grad_nodes(&mut self, scalar: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let root = self.check(scalar)?;
        let mut is_target = vec![false; root + 1];
        for &w in wrt {
            let i = self.check(w)?;
            if !matches!(self.nodes[i].op, Op::Var) {
                return Err(Error::NotVariable { index: i });
            }
            if i <= root {
                is_target[i] = true;
            }
        }

        // Nodes whose value depends on at least one target variable.
        let mut active = is_target.clone();
        for i in 0..=root {
            if !active[i] && self.args(i).iter().any(|&a| active[a as usize]) {
                active[i] = true;
            }
        }

        let mut adj: Vec<Option<NodeId>> = vec![None; root + 1];
        if active[root] {
            adj[root] = Some(self.constant(1.0));
        }
        for i in (0..=root).rev() {
            let Some(a) = adj[i] else { continue };
            if !active[i] {
                continue;
            }
            let args: Vec<usize> = self.args(i).iter().map(|&x| x as usize).collect();
            let out = self.handle(i);
            let gid = self.id;
            let node = |k: usize| NodeId {
                graph: gid,
                index: args[k] as u32,
            };
            match self.nodes[i].op {
                Op::Const(_) | Op::Var => {}
                Op::Add => {
                    for &t in &args {
                        if active[t] {
                            self.accumulate(&mut adj, t, a);
                        }
                    }
                }
                Op::Sub => {
                    if active[args[0]] {
                        self.accumulate(&mut adj, args[0], a);
                    }
                    if active[args[1]] {
                        let c = self.neg(a);
                        self.accumulate(&mut adj, args[1], c);
                    }
                }
                Op::Mul => {
                    let (x, y) = (node(0), node(1));
                    if active[args[0]] {
                        let c = self.mul(a, y);
                        self.accumulate(&mut adj, args[0], c);
                    }
                    if active[args[1]] {
                        let c = self.mul(a, x);
                        self.accumulate(&mut adj, args[1], c);
                    }
                }
                Op::Div => {
                    let y = node(1);
                    if active[args[0]] {
                        let c = self.div(a, y);
                        self.accumulate(&mut adj, args[0], c);
                    }
                    if active[args[1]] {
                        let q = self.div(out, y);
                        let m = self.mul(a, q);
                        let c = self.neg(m);
                        self.accumulate(&mut adj, args[1], c);
                    }
                }
                Op::Neg => {
                    let c = self.neg(a);
                    self.accumulate(&mut adj, args[0], c);
                }
                Op::Tanh => {
                    let one = self.constant(1.0);
                    let sq = self.square(out);
                    let d = self.sub(one, sq);
                    let c = self.mul(a, d);
                    self.accumulate(&mut adj, args[0], c);
                }
                Op::Square => {
                    let twice = self.scale(2.0, node(0));
                    let c = self.mul(a, twice);
                    self.accumulate(&mut adj, args[0], c);
                }
                Op::Sqrt => {
                    let twice = self.scale(2.0, out);
                    let c = self.div(a, twice);
                    self.accumulate(&mut adj, args[0], c);
                }
                Op::Scale(s) => {
                    let c = self.scale(s, a);
                    self.accumulate(&mut adj, args[0], c);
                }
                Op::Dot => {
                    let half = args.len() / 2;
                    for k in 0..half {
                        let (l, r) = (args[k], args[k + half]);
                        if active[l] {
                            let c = self.mul(a, node(k + half));
                            self.accumulate(&mut adj, l, c);
                        }
                        if active[r] {
                            let c = self.mul(a, node(k));
                            self.accumulate(&mut adj, r, c);
                        }
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(wrt.len());
        for &w in wrt {
            let i = w.index();
            let g = if i <= root { adj[i] } else { None };
            out.push(match g {
                Some(g) => g,
                None => self.constant(0.0),
            });
        }
        Ok(out)
    }

    /// Directional derivatives of `outputs` when `inputs` move along
    /// `direction`, recorded on the tape so they can be differentiated again.
    pub fn jvp_nodes(
        &mut self,
        outputs: &[NodeId],
        inputs: &[NodeId],
        direction: &[NodeId],
    ) -> Result<Vec<NodeId>> {
        if inputs.len() != direction.len() {
            return Err(Error::LengthMismatch(format!(
                "{} inputs but {} direction entries",
                inputs.len(),
                direction.len()
            )));
        }
        for &d in direction {
            self.check(d)?;
        }
        let mut seeds = Vec::with_capacity(inputs.len());
        for (&x, &d) in inputs.iter().zip(direction) {
            let i = self.check(x)?;
            if !matches!(self.nodes[i].op, Op::Var) {
                return Err(Error::NotVariable { index: i });
            }
            seeds.push((i, d));
        }
        let mut last = 0;
        for &o in outputs {
            last = last.max(self.check(o)?);
        }
        let Some(first) = seeds.iter().map(|s| s.0).min() else {
            return Ok(outputs.iter().map(|_| self.constant(0.0)).collect());
        };

        let base = first;
        let mut tan: Vec<Option<NodeId>> = vec![None; last.saturating_sub(base) + 1];
        for &(i, d) in &seeds {
            if i <= last {
                tan[i - base] = Some(d);
            }
        }
        let get = |tan: &Vec<Option<NodeId>>, j: usize| -> Option<NodeId> {
            if j < base {
                None
            } else {
                tan[j - base]
            }
        };

        for i in base..=last {
            if matches!(self.nodes[i].op, Op::Var | Op::Const(_)) {
                continue;
            }
            let args: Vec<usize> = self.args(i).iter().map(|&x| x as usize).collect();
            let ts: Vec<Option<NodeId>> = args.iter().map(|&j| get(&tan, j)).collect();
            if ts.iter().all(Option::is_none) {
                continue;
            }
            let out = self.handle(i);
            let gid = self.id;
            let node = |k: usize| NodeId {
                graph: gid,
                index: args[k] as u32,
            };
            let t = match self.nodes[i].op {
                Op::Const(_) | Op::Var => unreachable!(),
                Op::Add => match (ts[0], ts[1]) {
                    (Some(a), Some(b)) => self.add(a, b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => unreachable!(),
                },
                Op::Sub => match (ts[0], ts[1]) {
                    (Some(a), Some(b)) => self.sub(a, b),
                    (Some(a), None) => a,
                    (None, Some(b)) => self.neg(b),
                    (None, None) => unreachable!(),
                },
                Op::Mul => {
                    let mut lhs = Vec::new();
                    let mut rhs = Vec::new();
                    if let Some(a) = ts[0] {
                        lhs.push(a);
                        rhs.push(node(1));
                    }
                    if let Some(b) = ts[1] {
                        lhs.push(node(0));
                        rhs.push(b);
                    }
                    self.dot(&lhs, &rhs)
                }
                Op::Div => {
                    // (ta - out * tb) / y
                    let y = node(1);
                    let num = match (ts[0], ts[1]) {
                        (Some(a), Some(b)) => {
                            let m = self.mul(out, b);
                            self.sub(a, m)
                        }
                        (Some(a), None) => a,
                        (None, Some(b)) => {
                            let m = self.mul(out, b);
                            self.neg(m)
                        }
                        (None, None) => unreachable!(),
                    };
                    self.div(num, y)
                }
                Op::Neg => self.neg(ts[0].unwrap()),
                Op::Tanh => {
                    let one = self.constant(1.0);
                    let sq = self.square(out);
                    let d = self.sub(one, sq);
                    self.mul(d, ts[0].unwrap())
                }
                Op::Square => {
                    let twice = self.scale(2.0, node(0));
                    self.mul(twice, ts[0].unwrap())
                }
                Op::Sqrt => {
                    let twice = self.scale(2.0, out);
                    self.div(ts[0].unwrap(), twice)
                }
                Op::Scale(c) => self.scale(c, ts[0].unwrap()),
                Op::Dot => {
                    let half = args.len() / 2;
                    let mut lhs = Vec::new();
                    let mut rhs = Vec::new();
                    for k in 0..half {
                        if let Some(tl) = ts[k] {
                            lhs.push(tl);
                            rhs.push(node(k + half));
                        }
                        if let Some(tr) = ts[k + half] {
                            lhs.push(node(k));
                            rhs.push(tr);
                        }
                    }
                    self.dot(&lhs, &rhs)
                }
            };
            tan[i - base] = Some(t);
        }

        let mut res = Vec::with_capacity(outputs.len());
        for &o in outputs {
            let t = get(&tan, o.index());
            res.push(match t {
                Some(t) => t,
                None => self.constant(0.0),
            });
        }
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_and_evaluates() {
        let mut g = ExprGraph::new();
        let a = g.constant(1.0);
        let b = g.constant(2.0);
        let s = g.build(Op::Add, &[a, b]).unwrap();
        assert_eq!(g.value(s), 3.0);
        let z = g.constant(0.0);
        let t = g.tanh(z);
        assert_eq!(g.value(t), 0.0);
        let x = g.var(3.0);
        let sq = g.square(x);
        assert_eq!(g.value(sq), 9.0);
    }

    #[test]
    fn rejects_bad_operands() {
        let mut g = ExprGraph::new();
        let mut other = ExprGraph::new();
        let foreign = other.var(1.0);
        assert!(matches!(
            g.build(Op::Neg, &[foreign]),
            Err(Error::InvalidNode { .. })
        ));
        let a = g.constant(1.0);
        assert!(matches!(g.build(Op::Add, &[a]), Err(Error::Arity { .. })));
        assert!(matches!(
            g.build(Op::Dot, &[a, a, a]),
            Err(Error::Arity { .. })
        ));
        let c = g.constant(2.0);
        assert!(matches!(
            g.grad_nodes(a, &[c]),
            Err(Error::NotVariable { .. })
        ));
        let x = g.var(1.0);
        assert!(matches!(
            g.jvp_nodes(&[a], &[x], &[]),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn tanh_derivative_at_zero() {
        let mut g = ExprGraph::new();
        let x = g.var(0.0);
        let t = g.tanh(x);
        let d = g.grad_nodes(t, &[x]).unwrap();
        assert_eq!(g.value(d[0]), 1.0);
    }

    #[test]
    fn second_derivative_of_square() {
        let mut g = ExprGraph::new();
        let x = g.var(-1.7);
        let y = g.square(x);
        let d1 = g.grad_nodes(y, &[x]).unwrap()[0];
        let d2 = g.grad_nodes(d1, &[x]).unwrap()[0];
        assert_eq!(g.value(d2), 2.0);
        g.set_value(x, 12.5).unwrap();
        g.reevaluate();
        assert_eq!(g.value(d2), 2.0);
        assert_eq!(g.value(d1), 25.0);
    }

    #[test]
    fn jvp_of_product_and_identity() {
        let mut g = ExprGraph::new();
        let x = g.var(2.0);
        let y = g.var(3.0);
        let f = g.mul(x, y);
        let one = g.constant(1.0);
        let zero = g.constant(0.0);
        let d = g.jvp_nodes(&[f], &[x, y], &[one, zero]).unwrap();
        assert_eq!(g.value(d[0]), 3.0);

        let d = g.jvp_nodes(&[x, y], &[x, y], &[one, zero]).unwrap();
        assert_eq!(g.value(d[0]), 1.0);
        assert_eq!(g.value(d[1]), 0.0);
    }

    #[test]
    fn unrelated_variable_gets_zero() {
        let mut g = ExprGraph::new();
        let x = g.var(2.0);
        let y = g.var(5.0);
        let f = g.square(x);
        let d = g.grad_nodes(f, &[x, y]).unwrap();
        assert_eq!(g.value(d[0]), 4.0);
        assert_eq!(g.value(d[1]), 0.0);
    }

    #[test]
    fn division_and_sqrt_rules() {
        let mut g = ExprGraph::new();
        let x = g.var(2.0);
        let y = g.var(4.0);
        let q = g.div(x, y);
        let r = g.sqrt(y);
        let f = g.add(q, r);
        let d = g.grad_nodes(f, &[x, y]).unwrap();
        assert!((g.value(d[0]) - 0.25).abs() < 1e-15);
        // -x/y^2 + 1/(2 sqrt y)
        assert!((g.value(d[1]) - (-2.0 / 16.0 + 0.25)).abs() < 1e-15);
    }
}
