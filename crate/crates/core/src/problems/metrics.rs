use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Reference;
use crate::error::Result;
use crate::geometry::{MultiPatchDomain, EdgeTag};
use crate::network::{forward_batch, ParamSet};
use crate::sampling::{sample_interface, SamplePlan};

/// Anything that yields `(u, grad u)` at points of a given patch.
pub trait Potential: Sync {
    fn eval_batch(&self, patch: usize, xs: &[[f64; 2]]) -> Vec<(f64, [f64; 2])>;

    fn eval(&self, patch: usize, x: [f64; 2]) -> (f64, [f64; 2]) {
        self.eval_batch(patch, &[x])[0]
    }
}

impl Potential for Reference {
    fn eval_batch(&self, patch: usize, xs: &[[f64; 2]]) -> Vec<(f64, [f64; 2])> {
        xs.iter().map(|&x| Reference::eval(self, patch, x)).collect()
    }
}

/// Trained networks and the network index of every patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub networks: Vec<ParamSet>,
    pub patch_network: Vec<usize>,
}

impl Potential for Solution {
    fn eval_batch(&self, patch: usize, xs: &[[f64; 2]]) -> Vec<(f64, [f64; 2])> {
        let o = forward_batch(&self.networks[self.patch_network[patch]], xs);
        (0..xs.len()).map(|i| (o.u[i], [o.ux[i], o.uy[i]])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `||u - u_ref|| / ||u_ref||` in the sampled L2 norm.
    pub rel_l2: f64,
    pub max_abs: f64,
    /// Area-weighted mean of `|u - u_ref|`.
    pub mean_abs: f64,
}

/// Error of `u` against `reference` over the interior samples of `plan`.
pub fn error_metrics(u: &dyn Potential, reference: &dyn Potential, plan: &SamplePlan) -> Metrics {
    let (mut e2, mut r2, mut e1, mut w, mut max) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    for set in &plan.interior {
        let xs: Vec<[f64; 2]> = set.samples.iter().map(|s| s.x).collect();
        let a = u.eval_batch(set.patch, &xs);
        let b = reference.eval_batch(set.patch, &xs);
        let m = set.samples.len() as f64;
        for ((s, ua), ub) in set.samples.iter().zip(&a).zip(&b) {
            let e = ua.0 - ub.0;
            let ws = s.weight / m;
            e2 += ws * e * e;
            r2 += ws * ub.0 * ub.0;
            e1 += ws * e.abs();
            w += ws;
            max = max.max(e.abs());
        }
    }
    let rel_l2 = if e2 == 0.0 {
        0.0
    } else if r2 == 0.0 {
        f64::INFINITY
    } else {
        (e2 / r2).sqrt()
    };
    Metrics {
        rel_l2,
        max_abs: max,
        mean_abs: if w > 0.0 { e1 / w } else { 0.0 },
    }
}

/// Normal-flux mismatch `|k_k du_k/dn - k_l du_l/dn|` on interfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxCheck {
    pub residuals: Vec<f64>,
    /// Residuals divided by `scale`.
    pub normalized: Vec<f64>,
    /// Largest `|k du/dn|` on the side with the smaller coefficient.
    pub scale: f64,
    pub median: f64,
    pub max: f64,
    pub median_normalized: f64,
    pub max_normalized: f64,
}

pub(super) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

/// Samples `count` points on each listed interface and compares the
/// coefficient-weighted normal derivatives of both sides there.
pub fn interface_flux_check(
    u: &dyn Potential,
    domain: &MultiPatchDomain,
    coefficients: &[f64],
    interfaces: &[usize],
    count: usize,
    skip: u64,
) -> Result<FluxCheck> {
    let mut residuals = Vec::new();
    let mut scale = 0.0f64;
    for &i in interfaces {
        let f = domain.interfaces[i];
        let samples = sample_interface(domain, i, count, skip)?;
        let xs: Vec<[f64; 2]> = samples.iter().map(|s| s.x_k).collect();
        let a = u.eval_batch(f.k, &xs);
        let b = u.eval_batch(f.l, &xs);
        let (ck, cl) = (coefficients[f.k], coefficients[f.l]);
        for ((s, ak), bl) in samples.iter().zip(&a).zip(&b) {
            let n = s.normal;
            let qk = ck * (ak.1[0] * n[0] + ak.1[1] * n[1]);
            let ql = cl * (bl.1[0] * n[0] + bl.1[1] * n[1]);
            residuals.push((qk - ql).abs());
            scale = scale.max(if ck < cl { qk.abs() } else { ql.abs() });
        }
    }
    let normalized: Vec<f64> = residuals
        .iter()
        .map(|r| if scale > 0.0 { r / scale } else { *r })
        .collect();
    Ok(FluxCheck {
        median: median(&residuals),
        max: max_of(&residuals),
        median_normalized: median(&normalized),
        max_normalized: max_of(&normalized),
        residuals,
        normalized,
        scale,
    })
}

/// Patch and reference coordinates of a physical point, found by Newton
/// iteration on every patch in turn.
pub fn locate(domain: &MultiPatchDomain, x: [f64; 2]) -> Option<(usize, [f64; 2])> {
    const STARTS: [[f64; 2]; 5] = [[0.5, 0.5], [0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]];
    for (k, p) in domain.patches.iter().enumerate() {
        for start in STARTS {
            let mut y = start;
            for _ in 0..50 {
                let (f, j) = p.eval_with_jacobian(y);
                let r = [f[0] - x[0], f[1] - x[1]];
                if r[0].hypot(r[1]) < 1e-12 {
                    break;
                }
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det.abs() < 1e-300 {
                    break;
                }
                let dy0 = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
                let dy1 = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
                y = [(y[0] - dy0).clamp(-0.5, 1.5), (y[1] - dy1).clamp(-0.5, 1.5)];
            }
            let tol = 1e-9;
            let inside = y.iter().all(|&t| (-tol..=1.0 + tol).contains(&t));
            let f = p.eval([y[0].clamp(0.0, 1.0), y[1].clamp(0.0, 1.0)]);
            if inside && (f[0] - x[0]).hypot(f[1] - x[1]) < 1e-9 {
                return Some((k, [y[0].clamp(0.0, 1.0), y[1].clamp(0.0, 1.0)]));
            }
        }
    }
    None
}

/// One point of a horizontal line scan. `e_n` is the electric field
/// component along the radial direction, `-grad u . x / |x|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineScanRow {
    pub x: f64,
    pub y: f64,
    pub patch: usize,
    pub u: f64,
    pub e_n: f64,
    pub u_ref: Option<f64>,
    pub e_n_ref: Option<f64>,
}

/// `count` equispaced points on `y = const` between `x0` and `x1`.
pub fn line_scan(
    u: &dyn Potential,
    reference: Option<&dyn Potential>,
    domain: &MultiPatchDomain,
    y: f64,
    x0: f64,
    x1: f64,
    count: usize,
) -> Vec<LineScanRow> {
    let radial = |x: [f64; 2], g: [f64; 2]| {
        let r = x[0].hypot(x[1]);
        -(g[0] * x[0] + g[1] * x[1]) / r
    };
    (0..count)
        .filter_map(|i| {
            let t = if count > 1 {
                i as f64 / (count - 1) as f64
            } else {
                0.0
            };
            let x = [x0 + t * (x1 - x0), y];
            let (patch, _) = locate(domain, x)?;
            let (v, g) = u.eval(patch, x);
            let r = reference.map(|r| r.eval(patch, x));
            Some(LineScanRow {
                x: x[0],
                y,
                patch,
                u: v,
                e_n: radial(x, g),
                u_ref: r.map(|r| r.0),
                e_n_ref: r.map(|r| radial(x, r.1)),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    pub subdomain: String,
    pub u: f64,
    pub ux: f64,
    pub uy: f64,
    pub u_ref: Option<f64>,
    pub abs_err: Option<f64>,
}

/// Solution values at the interior samples of `plan`.
pub fn field_dump(
    u: &dyn Potential,
    reference: Option<&dyn Potential>,
    domain: &MultiPatchDomain,
    plan: &SamplePlan,
) -> Vec<FieldRow> {
    let mut rows = Vec::with_capacity(plan.interior_count());
    for set in &plan.interior {
        let xs: Vec<[f64; 2]> = set.samples.iter().map(|s| s.x).collect();
        let a = u.eval_batch(set.patch, &xs);
        let b = reference.map(|r| r.eval_batch(set.patch, &xs));
        let label = domain.patches[set.patch].group();
        for (i, x) in xs.iter().enumerate() {
            let r = b.as_ref().map(|b| b[i].0);
            rows.push(FieldRow {
                x: x[0],
                y: x[1],
                subdomain: label.to_string(),
                u: a[i].0,
                ux: a[i].1[0],
                uy: a[i].1[1],
                u_ref: r,
                abs_err: r.map(|r| (a[i].0 - r).abs()),
            });
        }
    }
    rows
}

/// CSV with header `x,y,subdomain,u,ux,uy` plus `u_ref,abs_err` when any
/// row carries a reference value.
pub fn write_field_csv<W: Write>(rows: &[FieldRow], out: W) -> Result<()> {
    let with_ref = rows.iter().any(|r| r.u_ref.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x", "y", "subdomain", "u", "ux", "uy"];
    if with_ref {
        header.extend(["u_ref", "abs_err"]);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.x.to_string(),
            r.y.to_string(),
            r.subdomain.clone(),
            r.u.to_string(),
            r.ux.to_string(),
            r.uy.to_string(),
        ];
        if with_ref {
            rec.push(r.u_ref.map_or(String::new(), |v| v.to_string()));
            rec.push(r.abs_err.map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with header `x,y,patch,u,e_n[,u_ref,e_n_ref]`.
pub fn write_line_scan_csv<W: Write>(rows: &[LineScanRow], out: W) -> Result<()> {
    let with_ref = rows.iter().any(|r| r.u_ref.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x", "y", "patch", "u", "e_n"];
    if with_ref {
        header.extend(["u_ref", "e_n_ref"]);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.x.to_string(),
            r.y.to_string(),
            r.patch.to_string(),
            r.u.to_string(),
            r.e_n.to_string(),
        ];
        if with_ref {
            rec.push(r.u_ref.map_or(String::new(), |v| v.to_string()));
            rec.push(r.e_n_ref.map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Boundary and coupling residuals of a solution, relative to its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub u_min: f64,
    pub u_max: f64,
    pub range: f64,
    /// `|u_k - u_l|` over interfaces between different networks.
    pub interface_jump_median: f64,
    pub interface_jump_max: f64,
    /// `|u|` on Dirichlet samples (homogeneous data).
    pub dirichlet_median: f64,
    pub dirichlet_max: f64,
    /// `|u(x_L) + u(x_R)|` over anti-periodic pairs.
    pub antiperiodic_median: f64,
    pub antiperiodic_max: f64,
}

/// Residuals of `u` on the sets of `plan`; the range is taken over its
/// interior samples.
pub fn consistency_report(u: &dyn Potential, domain: &MultiPatchDomain, plan: &SamplePlan) -> Consistency {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for set in &plan.interior {
        let xs: Vec<[f64; 2]> = set.samples.iter().map(|s| s.x).collect();
        for (v, _) in u.eval_batch(set.patch, &xs) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let mut jumps = Vec::new();
    for set in &plan.interfaces {
        let xk: Vec<[f64; 2]> = set.samples.iter().map(|s| s.x_k).collect();
        let xl: Vec<[f64; 2]> = set.samples.iter().map(|s| s.x_l).collect();
        let a = u.eval_batch(set.k, &xk);
        let b = u.eval_batch(set.l, &xl);
        jumps.extend(a.iter().zip(&b).map(|(a, b)| (a.0 - b.0).abs()));
    }
    let mut dirichlet = Vec::new();
    for set in plan.edges.iter().filter(|s| s.tag == EdgeTag::Dirichlet) {
        let xs: Vec<[f64; 2]> = set.samples.iter().map(|s| s.x).collect();
        dirichlet.extend(u.eval_batch(set.patch, &xs).iter().map(|v| v.0.abs()));
    }
    let mut anti = Vec::new();
    for set in &plan.mirrors {
        let xl: Vec<[f64; 2]> = set.samples.iter().map(|s| s.x_left).collect();
        let xr: Vec<[f64; 2]> = set.samples.iter().map(|s| s.x_right).collect();
        let a = u.eval_batch(set.left, &xl);
        let b = u.eval_batch(set.right, &xr);
        anti.extend(a.iter().zip(&b).map(|(a, b)| (a.0 + b.0).abs()));
    }
    let _ = domain;
    Consistency {
        u_min: lo,
        u_max: hi,
        range: hi - lo,
        interface_jump_median: median(&jumps),
        interface_jump_max: max_of(&jumps),
        dirichlet_median: median(&dirichlet),
        dirichlet_max: max_of(&dirichlet),
        antiperiodic_median: median(&anti),
        antiperiodic_max: max_of(&anti),
    }
}
