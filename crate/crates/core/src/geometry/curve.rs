use serde::{Deserialize, Serialize};

use super::KnotVector;
use crate::error::{Error, Result};

/// Planar rational B-spline curve on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NurbsCurve {
    pub knots: KnotVector,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl NurbsCurve {
    pub fn new(knots: KnotVector, points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        let n = knots.basis_count();
        if points.len() != n || weights.len() != n {
            return Err(Error::LengthMismatch(format!(
                "{} points and {} weights for {n} basis functions",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Geometry("weights must be positive".into()));
        }
        Ok(Self {
            knots,
            points,
            weights,
        })
    }

    /// Straight segment as a quadratic curve with uniform speed.
    pub fn line(a: [f64; 2], b: [f64; 2]) -> Self {
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        Self {
            knots: KnotVector::bezier(2),
            points: vec![a, mid, b],
            weights: vec![1.0; 3],
        }
    }

    /// Circular arc around `center` from polar angle `t0` to `t1` (radians,
    /// counterclockwise from the x axis). The sweep must be below pi.
    pub fn arc(center: [f64; 2], radius: f64, t0: f64, t1: f64) -> Self {
        let half = (t1 - t0) / 2.0;
        assert!(half.abs() < std::f64::consts::FRAC_PI_2, "arc sweep too large");
        let at = |t: f64, r: f64| [center[0] + r * t.cos(), center[1] + r * t.sin()];
        let w = half.cos();
        Self {
            knots: KnotVector::bezier(2),
            points: vec![at(t0, radius), at(t0 + half, radius / w), at(t1, radius)],
            weights: vec![1.0, w, 1.0],
        }
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    /// Point and first derivative at `xi`.
    pub fn eval_with_derivative(&self, xi: f64) -> ([f64; 2], [f64; 2]) {
        let (n, dn) = self.knots.basis_with_derivatives(xi);
        let (mut a, mut da) = ([0.0; 2], [0.0; 2]);
        let (mut w, mut dw) = (0.0, 0.0);
        for i in 0..n.len() {
            let wi = self.weights[i];
            let p = self.points[i];
            w += wi * n[i];
            dw += wi * dn[i];
            for c in 0..2 {
                a[c] += wi * n[i] * p[c];
                da[c] += wi * dn[i] * p[c];
            }
        }
        let x = [a[0] / w, a[1] / w];
        let dx = [(da[0] - x[0] * dw) / w, (da[1] - x[1] * dw) / w];
        (x, dx)
    }

    pub fn eval(&self, xi: f64) -> [f64; 2] {
        self.eval_with_derivative(xi).0
    }

    pub fn derivative(&self, xi: f64) -> [f64; 2] {
        self.eval_with_derivative(xi).1
    }

    /// Metric factor `|C'(xi)|` of line integrals.
    pub fn speed(&self, xi: f64) -> f64 {
        let d = self.derivative(xi);
        d[0].hypot(d[1])
    }

    /// Same curve traversed backwards.
    pub fn reversed(&self) -> Self {
        Self {
            knots: self.knots.reversed(),
            points: self.points.iter().rev().copied().collect(),
            weights: self.weights.iter().rev().copied().collect(),
        }
    }

    pub fn map_points(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        Self {
            knots: self.knots.clone(),
            points: self.points.iter().map(|&p| f(p)).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Arc length of `curve` by Gauss-Legendre quadrature.
pub fn arc_length(curve: &NurbsCurve, order: usize) -> f64 {
    super::quadrature::integrate_1d(|xi| curve.speed(xi), order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn quarter_circle_lies_on_circle() {
        let c = NurbsCurve::arc([0.0, 0.0], 1.0, 0.0, FRAC_PI_2);
        assert!((c.weights[1] - 0.5f64.sqrt()).abs() < 1e-15);
        for k in 0..=20 {
            let p = c.eval(k as f64 / 20.0);
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
        }
        assert!((arc_length(&c, 40) - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn line_speed_is_length() {
        let c = NurbsCurve::line([0.0, 0.0], [3.0, 4.0]);
        for xi in [0.0, 0.25, 0.9] {
            assert!((c.speed(xi) - 5.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reversal_runs_backwards() {
        let c = NurbsCurve::arc([0.1, 0.2], 0.7, 0.3, 1.4);
        let r = c.reversed();
        for xi in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let a = c.eval(xi);
            let b = r.eval(1.0 - xi);
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }
}
