//! B-spline and NURBS geometry on the reference square.
//!
//! Basis functions use the Cox-de Boor recursion with the convention that a
//! term with a zero denominator vanishes. Knot vectors are clamped and live
//! in `[0, 1]`; the last non-empty span is closed so that evaluation at
//! `xi = 1` reproduces the end control point. Basis indices are zero-based.

mod curve;
mod domain;
mod patch;
pub mod quadrature;

pub use curve::{arc_length, NurbsCurve};
pub use domain::{
    match_interfaces, Interface, MirrorPair, MultiPatchDomain, PatchFile, PatchRecord,
    SymmetryMap,
};
pub use patch::{Edge, EdgeFrame, EdgeTag, EdgeTags, Patch};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible `|det J|` of a patch map.
pub const DET_FLOOR: f64 = 1e-10;
/// Absolute tolerance for coincident points.
pub const GEOM_TOL: f64 = 1e-9;

/// Clamped knot vector of a given degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKnots", into = "RawKnots")]
pub struct KnotVector {
    values: Vec<f64>,
    degree: usize,
}

#[derive(Serialize, Deserialize)]
struct RawKnots {
    values: Vec<f64>,
    degree: usize,
}

impl TryFrom<RawKnots> for KnotVector {
    type Error = Error;
    fn try_from(r: RawKnots) -> Result<Self> {
        KnotVector::new(r.values, r.degree)
    }
}

impl From<KnotVector> for RawKnots {
    fn from(k: KnotVector) -> Self {
        RawKnots {
            values: k.values,
            degree: k.degree,
        }
    }
}

impl KnotVector {
    pub fn new(values: Vec<f64>, degree: usize) -> Result<Self> {
        let m = values.len();
        if m < 2 * (degree + 1) {
            return Err(Error::InvalidKnots(format!(
                "{m} knots cannot carry degree {degree}"
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidKnots("knots must lie in [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be nondecreasing".into()));
        }
        let head = &values[..=degree];
        let tail = &values[m - degree - 1..];
        if head.iter().any(|&v| v != 0.0) || tail.iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidKnots(format!(
                "expected {} clamped knots at 0 and at 1",
                degree + 1
            )));
        }
        Ok(Self { values, degree })
    }

    /// Clamped vector with the given interior knots.
    pub fn clamped(degree: usize, interior: &[f64]) -> Result<Self> {
        let mut v = vec![0.0; degree + 1];
        v.extend_from_slice(interior);
        v.extend(std::iter::repeat(1.0).take(degree + 1));
        Self::new(v, degree)
    }

    /// Single-span (Bezier) knot vector.
    pub fn bezier(degree: usize) -> Self {
        Self::clamped(degree, &[]).expect("bezier knots are valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions of the stored degree.
    pub fn basis_count(&self) -> usize {
        self.values.len() - self.degree - 1
    }

    /// Knot vector of the reversed parameter `1 - xi`.
    pub fn reversed(&self) -> Self {
        let values = self.values.iter().rev().map(|v| 1.0 - v).collect();
        Self {
            values,
            degree: self.degree,
        }
    }

    fn last_span(&self) -> usize {
        let v = &self.values;
        (0..v.len() - 1)
            .rev()
            .find(|&i| v[i] < v[i + 1])
            .expect("clamped knots have a non-empty span")
    }

    fn degree_zero(&self, i: usize, xi: f64) -> f64 {
        let v = &self.values;
        if v[i] <= xi && xi < v[i + 1] {
            1.0
        } else if xi >= v[v.len() - 1] && i == self.last_span() {
            1.0
        } else {
            0.0
        }
    }

    /// Every basis function of degree `0..=degree` at `xi`; row `d` has
    /// `len - d - 1` entries.
    fn table(&self, xi: f64) -> Vec<Vec<f64>> {
        let v = &self.values;
        let m = v.len();
        let mut rows = Vec::with_capacity(self.degree + 1);
        rows.push((0..m - 1).map(|i| self.degree_zero(i, xi)).collect::<Vec<_>>());
        for d in 1..=self.degree {
            let prev = &rows[d - 1];
            let row = (0..m - 1 - d)
                .map(|i| {
                    let left = ratio(xi - v[i], v[i + d] - v[i]) * prev[i];
                    let right = ratio(v[i + d + 1] - xi, v[i + d + 1] - v[i + 1]) * prev[i + 1];
                    left + right
                })
                .collect();
            rows.push(row);
        }
        rows
    }

    /// Values and first derivatives of all basis functions at `xi`.
    pub fn basis_with_derivatives(&self, xi: f64) -> (Vec<f64>, Vec<f64>) {
        let xi = xi.clamp(0.0, 1.0);
        let p = self.degree;
        let v = &self.values;
        let rows = self.table(xi);
        let vals = rows[p].clone();
        let ders = if p == 0 {
            vec![0.0; vals.len()]
        } else {
            let lower = &rows[p - 1];
            let pf = p as f64;
            (0..vals.len())
                .map(|i| {
                    pf * ratio(1.0, v[i + p] - v[i]) * lower[i]
                        - pf * ratio(1.0, v[i + p + 1] - v[i + 1]) * lower[i + 1]
                })
                .collect()
        };
        (vals, ders)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Value of the B-spline basis function `B_{i,p}` over `knots` at `xi`.
///
/// `p` may be any degree up to the degree of the knot vector.
pub fn bspline_basis(knots: &KnotVector, i: usize, p: usize, xi: f64) -> Result<f64> {
    let m = knots.values.len();
    if p > knots.degree || i + p + 1 >= m {
        return Err(Error::IndexOutOfRange {
            index: i,
            size: m.saturating_sub(p + 1),
        });
    }
    Ok(cox_de_boor(knots, i, p, xi.clamp(0.0, 1.0)))
}

fn cox_de_boor(knots: &KnotVector, i: usize, p: usize, xi: f64) -> f64 {
    if p == 0 {
        return knots.degree_zero(i, xi);
    }
    let v = &knots.values;
    let left = ratio(xi - v[i], v[i + p] - v[i]);
    let right = ratio(v[i + p + 1] - xi, v[i + p + 1] - v[i + 1]);
    let mut acc = 0.0;
    if left != 0.0 {
        acc += left * cox_de_boor(knots, i, p - 1, xi);
    }
    if right != 0.0 {
        acc += right * cox_de_boor(knots, i + 1, p - 1, xi);
    }
    acc
}

/// Rational basis `w_i B_{i,p} / sum_j w_j B_{j,p}` at `xi`.
pub fn nurbs_basis(knots: &KnotVector, weights: &[f64], i: usize, p: usize, xi: f64) -> Result<f64> {
    let n = knots.values.len() - p - 1;
    if weights.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {n} basis functions",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Geometry("weights must be positive".into()));
    }
    let num = weights[i] * bspline_basis(knots, i, p, xi)?;
    let mut den = 0.0;
    for (j, w) in weights.iter().enumerate() {
        den += w * bspline_basis(knots, j, p, xi)?;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_hat_values() {
        let k = KnotVector::new(vec![0.0, 0.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(bspline_basis(&k, 0, 1, 0.5).unwrap(), 0.5);
        assert_eq!(bspline_basis(&k, 1, 1, 0.5).unwrap(), 0.5);
        assert_eq!(bspline_basis(&k, 1, 1, 1.0).unwrap(), 1.0);
        assert!(matches!(
            bspline_basis(&k, 2, 1, 0.5),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_unclamped() {
        assert!(KnotVector::new(vec![0.0, 0.5, 1.0, 1.0], 1).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 0.7, 0.2, 1.0, 1.0], 1).is_err());
        assert!(KnotVector::clamped(2, &[0.3, 0.6]).is_ok());
    }

    #[test]
    fn table_matches_recursion() {
        let k = KnotVector::clamped(3, &[0.2, 0.5, 0.5, 0.8]).unwrap();
        for &xi in &[0.0, 0.1, 0.5, 0.66, 0.99, 1.0] {
            let (vals, _) = k.basis_with_derivatives(xi);
            for (i, v) in vals.iter().enumerate() {
                assert!((v - bspline_basis(&k, i, 3, xi).unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let k = KnotVector::clamped(2, &[0.4]).unwrap();
        let h = 1e-6;
        for &xi in &[0.1, 0.3, 0.7, 0.9] {
            let (_, d) = k.basis_with_derivatives(xi);
            let (a, _) = k.basis_with_derivatives(xi + h);
            let (b, _) = k.basis_with_derivatives(xi - h);
            for i in 0..d.len() {
                assert!((d[i] - (a[i] - b[i]) / (2.0 * h)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn equal_weights_reduce_to_bspline() {
        let k = KnotVector::clamped(2, &[0.5]).unwrap();
        let w = [2.0; 4];
        for i in 0..4 {
            let a = nurbs_basis(&k, &w, i, 2, 0.3).unwrap();
            let b = bspline_basis(&k, i, 2, 0.3).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }
}
