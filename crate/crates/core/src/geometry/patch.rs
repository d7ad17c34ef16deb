use serde::{Deserialize, Serialize};

use super::{KnotVector, NurbsCurve, DET_FLOOR};
use crate::error::{Error, Result};

/// Side of the reference square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    /// `v = 0`, parameterized by `u`.
    South,
    /// `u = 1`, parameterized by `v`.
    East,
    /// `v = 1`, parameterized by `u`.
    North,
    /// `u = 0`, parameterized by `v`.
    West,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::South, Edge::East, Edge::North, Edge::West];

    pub fn name(self) -> &'static str {
        match self {
            Edge::South => "south",
            Edge::East => "east",
            Edge::North => "north",
            Edge::West => "west",
        }
    }

    /// Reference coordinates of edge parameter `xi`.
    pub fn param(self, xi: f64) -> [f64; 2] {
        match self {
            Edge::South => [xi, 0.0],
            Edge::North => [xi, 1.0],
            Edge::West => [0.0, xi],
            Edge::East => [1.0, xi],
        }
    }
}

/// Boundary condition or coupling attached to an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTag {
    Dirichlet,
    Neumann,
    AntiperiodicLeft,
    AntiperiodicRight,
    Interface,
    /// Internal edge that carries no term (e.g. a non-conforming cut
    /// inside one material).
    #[serde(alias = "interior-free")]
    InteriorFree,
}

/// Tags of the four edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTags {
    pub south: EdgeTag,
    pub east: EdgeTag,
    pub north: EdgeTag,
    pub west: EdgeTag,
}

impl EdgeTags {
    pub fn all(tag: EdgeTag) -> Self {
        Self {
            south: tag,
            east: tag,
            north: tag,
            west: tag,
        }
    }

    pub fn get(&self, e: Edge) -> EdgeTag {
        match e {
            Edge::South => self.south,
            Edge::East => self.east,
            Edge::North => self.north,
            Edge::West => self.west,
        }
    }

    pub fn set(&mut self, e: Edge, tag: EdgeTag) {
        match e {
            Edge::South => self.south = tag,
            Edge::East => self.east = tag,
            Edge::North => self.north = tag,
            Edge::West => self.west = tag,
        }
    }

    pub fn with(mut self, e: Edge, tag: EdgeTag) -> Self {
        self.set(e, tag);
        self
    }
}

/// Point, metric factor and outward unit normal at an edge parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFrame {
    pub x: [f64; 2],
    pub speed: f64,
    pub normal: [f64; 2],
}

/// Tensor-product NURBS map `F: [0,1]^2 -> R^2`.
///
/// Control points are stored row by row: index `j * n_u + i` holds the point
/// of basis pair `(i, j)`, so `u` varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub knots_u: KnotVector,
    pub knots_v: KnotVector,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub material: String,
    pub subdomain: Option<String>,
    pub edges: EdgeTags,
}

impl Patch {
    pub fn new(
        knots_u: KnotVector,
        knots_v: KnotVector,
        points: Vec<[f64; 2]>,
        weights: Vec<f64>,
        material: impl Into<String>,
        edges: EdgeTags,
    ) -> Result<Self> {
        let n = knots_u.basis_count() * knots_v.basis_count();
        if points.len() != n || weights.len() != n {
            return Err(Error::LengthMismatch(format!(
                "{} control points and {} weights for a {}x{} net",
                points.len(),
                weights.len(),
                knots_u.basis_count(),
                knots_v.basis_count()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Geometry("weights must be positive".into()));
        }
        Ok(Self {
            knots_u,
            knots_v,
            points,
            weights,
            material: material.into(),
            subdomain: None,
            edges,
        })
    }

    /// Bilinear patch through corners given counterclockwise from `F(0,0)`.
    pub fn bilinear(corners: [[f64; 2]; 4], material: impl Into<String>, edges: EdgeTags) -> Self {
        let [sw, se, ne, nw] = corners;
        Self::new(
            KnotVector::bezier(1),
            KnotVector::bezier(1),
            vec![sw, se, nw, ne],
            vec![1.0; 4],
            material,
            edges,
        )
        .expect("bilinear net is consistent")
    }

    /// Linear interpolation in `v` between two curves sharing a knot vector.
    pub fn ruled(
        south: &NurbsCurve,
        north: &NurbsCurve,
        material: impl Into<String>,
        edges: EdgeTags,
    ) -> Result<Self> {
        if south.knots != north.knots {
            return Err(Error::Geometry("ruled patch needs matching knot vectors".into()));
        }
        let mut points = south.points.clone();
        points.extend_from_slice(&north.points);
        let mut weights = south.weights.clone();
        weights.extend_from_slice(&north.weights);
        Self::new(
            south.knots.clone(),
            KnotVector::bezier(1),
            points,
            weights,
            material,
            edges,
        )
    }

    /// Annular sector between radii `r0 < r1` and polar angles `t0`, `t1`
    /// around `center`. `u` runs along the arcs, `v` outward.
    pub fn annular(
        center: [f64; 2],
        r0: f64,
        r1: f64,
        t0: f64,
        t1: f64,
        material: impl Into<String>,
        edges: EdgeTags,
    ) -> Self {
        let inner = NurbsCurve::arc(center, r0, t0, t1);
        let outer = NurbsCurve::arc(center, r1, t0, t1);
        Self::ruled(&inner, &outer, material, edges).expect("arcs share knots")
    }

    /// The unit square with `F(y) = y`.
    pub fn identity() -> Self {
        Self::bilinear(
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            "default",
            EdgeTags::all(EdgeTag::Dirichlet),
        )
    }

    pub fn with_subdomain(mut self, label: impl Into<String>) -> Self {
        self.subdomain = Some(label.into());
        self
    }

    /// Subdomain label, falling back to the material.
    pub fn group(&self) -> &str {
        self.subdomain.as_deref().unwrap_or(&self.material)
    }

    pub fn n_u(&self) -> usize {
        self.knots_u.basis_count()
    }

    pub fn n_v(&self) -> usize {
        self.knots_v.basis_count()
    }

    /// Applies `f` to every control point (weights unchanged).
    pub fn map_points(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let mut p = self.clone();
        p.points.iter_mut().for_each(|x| *x = f(*x));
        p
    }

    /// Rotation by `angle` (radians, counterclockwise) about the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        self.map_points(|[x, y]| [c * x - s * y, s * x + c * y])
    }

    /// Mirror image under `x -> -x`. The `u` direction is reversed so the
    /// Jacobian keeps its sign; west and east tags trade places.
    pub fn mirrored_x(&self) -> Self {
        let (nu, nv) = (self.n_u(), self.n_v());
        let mut points = Vec::with_capacity(self.points.len());
        let mut weights = Vec::with_capacity(self.weights.len());
        for j in 0..nv {
            for i in (0..nu).rev() {
                let p = self.points[j * nu + i];
                points.push([-p[0], p[1]]);
                weights.push(self.weights[j * nu + i]);
            }
        }
        let mut edges = self.edges;
        edges.east = self.edges.west;
        edges.west = self.edges.east;
        Self {
            knots_u: self.knots_u.reversed(),
            knots_v: self.knots_v.clone(),
            points,
            weights,
            material: self.material.clone(),
            subdomain: self.subdomain.clone(),
            edges,
        }
    }

    fn polynomial(&self) -> bool {
        self.weights.iter().all(|&w| w == self.weights[0])
    }

    fn sums(&self, y: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let (nu, du) = self.knots_u.basis_with_derivatives(y[0]);
        let (nv, dv) = self.knots_v.basis_with_derivatives(y[1]);
        let n_u = nu.len();
        // A = sum w P N M, W = sum w N M and their u, v derivatives.
        let mut a = [[0.0; 2]; 3];
        let mut w = [0.0; 3];
        for j in 0..nv.len() {
            if nv[j] == 0.0 && dv[j] == 0.0 {
                continue;
            }
            for i in 0..n_u {
                if nu[i] == 0.0 && du[i] == 0.0 {
                    continue;
                }
                let k = j * n_u + i;
                let wk = self.weights[k];
                let b = [nu[i] * nv[j], du[i] * nv[j], nu[i] * dv[j]];
                for (t, bt) in b.iter().enumerate() {
                    w[t] += wk * bt;
                    a[t][0] += wk * bt * self.points[k][0];
                    a[t][1] += wk * bt * self.points[k][1];
                }
            }
        }
        let mut jac = [[0.0; 2]; 2];
        if self.polynomial() {
            // Equal weights cancel; skipping the quotient keeps affine maps exact.
            for r in 0..2 {
                for c in 0..2 {
                    jac[r][c] = a[c + 1][r] / self.weights[0];
                }
            }
            return ([a[0][0] / self.weights[0], a[0][1] / self.weights[0]], jac);
        }
        let x = [a[0][0] / w[0], a[0][1] / w[0]];
        for r in 0..2 {
            for c in 0..2 {
                jac[r][c] = (a[c + 1][r] - x[r] * w[c + 1]) / w[0];
            }
        }
        (x, jac)
    }

    /// Physical point `F(y)`.
    pub fn eval(&self, y: [f64; 2]) -> [f64; 2] {
        self.sums(y).0
    }

    /// `J[r][c] = dF_r / dy_c`.
    pub fn jacobian(&self, y: [f64; 2]) -> [[f64; 2]; 2] {
        self.sums(y).1
    }

    pub fn eval_with_jacobian(&self, y: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        self.sums(y)
    }

    pub fn jacobian_det_unchecked(&self, y: [f64; 2]) -> f64 {
        let j = self.jacobian(y);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    /// `det J` at `y`; fails when `|det J|` falls below [`DET_FLOOR`].
    pub fn jacobian_det(&self, y: [f64; 2]) -> Result<f64> {
        let det = self.jacobian_det_unchecked(y);
        if !(det.abs() >= DET_FLOOR) {
            return Err(Error::DegenerateMap {
                det,
                y0: y[0],
                y1: y[1],
            });
        }
        Ok(det)
    }

    /// Boundary curve of `edge`, oriented along its parameter.
    pub fn edge_curve(&self, edge: Edge) -> NurbsCurve {
        let (nu, nv) = (self.n_u(), self.n_v());
        let (idx, knots): (Vec<usize>, _) = match edge {
            Edge::South => ((0..nu).collect(), &self.knots_u),
            Edge::North => ((0..nu).map(|i| (nv - 1) * nu + i).collect(), &self.knots_u),
            Edge::West => ((0..nv).map(|j| j * nu).collect(), &self.knots_v),
            Edge::East => ((0..nv).map(|j| j * nu + nu - 1).collect(), &self.knots_v),
        };
        NurbsCurve {
            knots: knots.clone(),
            points: idx.iter().map(|&k| self.points[k]).collect(),
            weights: idx.iter().map(|&k| self.weights[k]).collect(),
        }
    }

    /// Point, speed and outward normal at parameter `xi` of `edge`.
    pub fn edge_frame(&self, edge: Edge, xi: f64) -> EdgeFrame {
        let (x, jac) = self.sums(edge.param(xi));
        let col = |c: usize| [jac[0][c], jac[1][c]];
        let (tangent, inward) = match edge {
            Edge::South => (col(0), col(1)),
            Edge::North => (col(0), neg(col(1))),
            Edge::West => (col(1), col(0)),
            Edge::East => (col(1), neg(col(0))),
        };
        let speed = tangent[0].hypot(tangent[1]);
        let mut normal = [tangent[1] / speed, -tangent[0] / speed];
        if normal[0] * inward[0] + normal[1] * inward[1] > 0.0 {
            normal = neg(normal);
        }
        EdgeFrame { x, speed, normal }
    }

    /// Scans an `n x n` grid for the sign and floor of `det J`.
    pub fn check_jacobian(&self, n: usize) -> Result<()> {
        let mut sign = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                let det = self.jacobian_det(y)?;
                if sign == 0.0 {
                    sign = det.signum();
                } else if det.signum() != sign {
                    return Err(Error::Geometry("Jacobian changes sign".into()));
                }
            }
        }
        Ok(())
    }
}

fn neg(v: [f64; 2]) -> [f64; 2] {
    [-v[0], -v[1]]
}
