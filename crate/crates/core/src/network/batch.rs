//! Batched evaluation with hand-written forward tangents and backpropagation.
//!
//! Rows are processed in fixed-size chunks. Each chunk carries a stacked
//! matrix `[z; dz/dx; dz/dy]` of shape `3r x N` through the layers, so one
//! matrix product per layer propagates values and both spatial tangents.
//! Chunk boundaries do not depend on the thread count, and per-chunk
//! gradients are summed in chunk order, which keeps results bit-identical
//! across thread pools.

use std::sync::Mutex;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rayon::prelude::*;

use super::ParamSet;

const CHUNK: usize = 512;

/// Freed chunk buffers, reused by the next evaluation. Fresh allocations of
/// this size are returned to the OS on free and page-fault on every epoch.
static POOL: Mutex<Vec<Vec<f64>>> = Mutex::new(Vec::new());
const POOL_LIMIT: usize = 4096;

fn buffer(rows: usize, cols: usize) -> Array2<f64> {
    let len = rows * cols;
    let mut v = POOL.lock().map(|mut p| p.pop()).ok().flatten().unwrap_or_default();
    v.clear();
    v.resize(len, 0.0);
    Array2::from_shape_vec((rows, cols), v).expect("buffer shape")
}

fn recycle(a: Array2<f64>) {
    let (v, _) = a.into_raw_vec_and_offset();
    if let Ok(mut p) = POOL.lock() {
        if p.len() < POOL_LIMIT {
            p.push(v);
        }
    }
}

fn copy_of(a: &Array2<f64>) -> Array2<f64> {
    let mut b = buffer(a.nrows(), a.ncols());
    b.assign(a);
    b
}

/// `tanh` from one `exp`, with a series near 0 where `1 - exp(-2|x|)`
/// cancels. Relative error stays below 1e-15.
#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.0625 {
        let x2 = x * x;
        x * (1.0
            + x2 * (-1.0 / 3.0
                + x2 * (2.0 / 15.0
                    + x2 * (-17.0 / 315.0 + x2 * (62.0 / 2835.0 + x2 * (-1382.0 / 155925.0))))))
    } else {
        let t = (-2.0 * a).exp();
        ((1.0 - t) / (1.0 + t)).copysign(x)
    }
}

/// Values and spatial gradients at a batch of points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutput {
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl BatchOutput {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    /// Activations of the value rows.
    act: Vec<f64>,
}

struct ChunkCache {
    rows: usize,
    layers: Vec<LayerCache>,
    last: Array2<f64>,
}

impl Drop for ChunkCache {
    fn drop(&mut self) {
        for l in self.layers.drain(..) {
            recycle(l.input);
            recycle(l.pre);
        }
        recycle(std::mem::take(&mut self.last));
    }
}

/// Intermediate values kept by [`forward_cached`] for [`backward`].
pub struct BatchCache {
    chunks: Vec<ChunkCache>,
}

fn weights(p: &ParamSet, layer: usize) -> ArrayView2<'_, f64> {
    let n = p.config.neurons;
    ArrayView2::from_shape((n, n), p.weights(layer)).expect("weight block shape")
}

fn forward_chunk(p: &ParamSet, points: &[[f64; 2]], keep: bool) -> (BatchOutput, Option<ChunkCache>) {
    let c = &p.config;
    let n = c.neurons;
    let r = points.len();
    let mut z = buffer(3 * r, n);
    for (i, x) in points.iter().enumerate() {
        z[[i, 0]] = x[0];
        z[[i, 1]] = x[1];
        z[[r + i, 0]] = 1.0;
        z[[2 * r + i, 1]] = 1.0;
    }
    let mut layers = Vec::new();
    for block in 0..c.blocks {
        let skip = copy_of(&z);
        for layer in [2 * block, 2 * block + 1] {
            let a = p.slope(layer);
            let mut pre = buffer(3 * r, n);
            general_mat_mul(1.0, &z, &weights(p, layer), 0.0, &mut pre);
            for (mut row, _) in pre.rows_mut().into_iter().zip(0..r) {
                row.iter_mut().zip(p.bias(layer)).for_each(|(h, b)| *h += b);
            }
            let mut out = buffer(3 * r, n);
            {
                let (h, dh) = pre.view().split_at(Axis(0), r);
                let (y, mut dy) = out.view_mut().split_at(Axis(0), r);
                let mut y = y;
                Zip::from(&mut y).and(&h).for_each(|y, &h| *y = tanh(a * h));
                let y = y.view();
                for k in 0..2 {
                    let dh_k = dh.slice(s![k * r..(k + 1) * r, ..]);
                    let mut dy_k = dy.slice_mut(s![k * r..(k + 1) * r, ..]);
                    Zip::from(&mut dy_k)
                        .and(&dh_k)
                        .and(&y)
                        .for_each(|d, &t, &y| *d = a * (1.0 - y * y) * t);
                }
            }
            if keep {
                let act = out.slice(s![0..r, ..]).iter().copied().collect();
                layers.push(LayerCache { input: z, pre, act });
            } else {
                recycle(z);
                recycle(pre);
            }
            z = out;
        }
        z += &skip;
        recycle(skip);
    }
    let wo = ndarray::ArrayView1::from(p.output_weights());
    let bo = p.output_bias();
    let prod = z.dot(&wo);
    let out = BatchOutput {
        u: prod.slice(s![0..r]).iter().map(|v| v + bo).collect(),
        ux: prod.slice(s![r..2 * r]).to_vec(),
        uy: prod.slice(s![2 * r..3 * r]).to_vec(),
    };
    let cache = if keep {
        Some(ChunkCache {
            rows: r,
            layers,
            last: z,
        })
    } else {
        recycle(z);
        None
    };
    (out, cache)
}

fn merge(parts: Vec<BatchOutput>) -> BatchOutput {
    let mut out = BatchOutput::default();
    for p in parts {
        out.u.extend(p.u);
        out.ux.extend(p.ux);
        out.uy.extend(p.uy);
    }
    out
}

/// Values and spatial gradients at every point.
pub fn forward(p: &ParamSet, points: &[[f64; 2]]) -> BatchOutput {
    let parts: Vec<BatchOutput> = points
        .par_chunks(CHUNK)
        .map(|chunk| forward_chunk(p, chunk, false).0)
        .collect();
    merge(parts)
}

/// Like [`forward`], also returning what [`backward`] needs.
pub fn forward_cached(p: &ParamSet, points: &[[f64; 2]]) -> (BatchOutput, BatchCache) {
    let parts: Vec<(BatchOutput, ChunkCache)> = points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (o, c) = forward_chunk(p, chunk, true);
            (o, c.expect("cache requested"))
        })
        .collect();
    let (outs, chunks): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    (merge(outs), BatchCache { chunks })
}

fn backward_chunk(p: &ParamSet, cache: &ChunkCache, adj: [&[f64]; 3]) -> Vec<f64> {
    let c = &p.config;
    let n = c.neurons;
    let r = cache.rows;
    let mut grad = vec![0.0; p.len()];

    let mut zbar = buffer(3 * r, n);
    let o = c.output_offset();
    let wo = p.output_weights();
    for (k, a) in adj.iter().enumerate() {
        for i in 0..r {
            let g = a[i];
            if g == 0.0 {
                continue;
            }
            let row = cache.last.row(k * r + i);
            for j in 0..n {
                grad[o + j] += g * row[j];
                zbar[[k * r + i, j]] = g * wo[j];
            }
        }
    }
    grad[o + n] = adj[0].iter().sum();

    let mut wbar = Array2::<f64>::zeros((n, n));
    for block in (0..c.blocks).rev() {
        let skip_bar = copy_of(&zbar);
        for layer in [2 * block + 1, 2 * block] {
            let lc = &cache.layers[layer];
            let a = p.slope(layer);
            let m = r * n;
            let mut pbar = buffer(3 * r, n);
            let mut abar = 0.0;
            {
                let pre = lc.pre.as_slice().expect("standard layout");
                let zb = zbar.as_slice().expect("standard layout");
                let pb = pbar.as_slice_mut().expect("standard layout");
                for idx in 0..m {
                    let hv = pre[idx];
                    let y = lc.act[idx];
                    let sd = 1.0 - y * y;
                    let (tx, ty) = (pre[m + idx], pre[2 * m + idx]);
                    let (gx, gy) = (zb[m + idx], zb[2 * m + idx]);
                    pb[m + idx] = a * sd * gx;
                    pb[2 * m + idx] = a * sd * gy;
                    let cross = tx * gx + ty * gy;
                    let qbar = (zb[idx] - 2.0 * y * a * cross) * sd;
                    pb[idx] = a * qbar;
                    abar += sd * cross + hv * qbar;
                }
            }
            general_mat_mul(1.0, &lc.input.t(), &pbar, 0.0, &mut wbar);
            let w0 = c.weight_offset(layer);
            for (g, v) in grad[w0..w0 + n * n].iter_mut().zip(wbar.iter()) {
                *g += v;
            }
            let b0 = c.bias_offset(layer);
            let bbar = pbar.slice(s![0..r, ..]).sum_axis(Axis(0));
            for (g, v) in grad[b0..b0 + n].iter_mut().zip(bbar.iter()) {
                *g += v;
            }
            if let Some(so) = c.slope_offset(layer) {
                grad[so] += abar;
            }
            general_mat_mul(1.0, &pbar, &weights(p, layer).t(), 0.0, &mut zbar);
            recycle(pbar);
        }
        zbar += &skip_bar;
        recycle(skip_bar);
    }
    recycle(zbar);
    grad
}

/// Gradient with respect to the parameters of `sum_i (ubar_i u_i + uxbar_i
/// ux_i + uybar_i uy_i)`, using the cache of a previous [`forward_cached`].
pub fn backward(p: &ParamSet, cache: &BatchCache, ubar: &[f64], uxbar: &[f64], uybar: &[f64]) -> Vec<f64> {
    let mut offsets = Vec::with_capacity(cache.chunks.len());
    let mut start = 0;
    for ch in &cache.chunks {
        offsets.push(start);
        start += ch.rows;
    }
    assert!(
        ubar.len() == start && uxbar.len() == start && uybar.len() == start,
        "adjoint length does not match cached batch"
    );
    let parts: Vec<Vec<f64>> = cache
        .chunks
        .par_iter()
        .zip(offsets.par_iter())
        .map(|(ch, &o)| {
            let e = o + ch.rows;
            backward_chunk(p, ch, [&ubar[o..e], &uxbar[o..e], &uybar[o..e]])
        })
        .collect();
    let mut grad = vec![0.0; p.len()];
    for part in parts {
        for (g, v) in grad.iter_mut().zip(part) {
            *g += v;
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ExprGraph;
    use crate::network::{init_xavier, GraphNetwork, NetworkConfig};

    fn perturbed(seed: u64, config: NetworkConfig) -> ParamSet {
        let mut p = init_xavier(config, seed);
        for (i, v) in p.params.iter_mut().enumerate() {
            *v += 0.05 * ((i as f64) * 0.37).sin();
        }
        p
    }

    #[test]
    fn matches_graph_route() {
        let p = perturbed(3, NetworkConfig::new(2, 4, true));
        let pts = [[0.3, -0.2], [0.9, 0.4], [-0.5, 0.7]];
        let out = forward(&p, &pts);
        let mut g = ExprGraph::new();
        let net = GraphNetwork::bind(&mut g, &p);
        for (i, &x) in pts.iter().enumerate() {
            let gp = net.forward(&mut g, x);
            let grad = net.spatial_gradient(&mut g, &gp).unwrap();
            assert!((g.value(gp.u) - out.u[i]).abs() < 1e-13);
            assert!((g.value(grad[0]) - out.ux[i]).abs() < 1e-13);
            assert!((g.value(grad[1]) - out.uy[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn backward_matches_graph_gradient() {
        let p = perturbed(5, NetworkConfig::new(2, 3, true));
        let pts = [[0.1, 0.2], [-0.4, 0.8]];
        let adj_u = [0.7, -1.1];
        let adj_x = [0.3, 0.5];
        let adj_y = [-0.9, 0.2];
        let (_, cache) = forward_cached(&p, &pts);
        let fast = backward(&p, &cache, &adj_u, &adj_x, &adj_y);

        let mut g = ExprGraph::new();
        let net = GraphNetwork::bind(&mut g, &p);
        let mut terms = Vec::new();
        for (i, &x) in pts.iter().enumerate() {
            let gp = net.forward(&mut g, x);
            let d = net.spatial_gradient(&mut g, &gp).unwrap();
            let cu = g.constant(adj_u[i]);
            let cx = g.constant(adj_x[i]);
            let cy = g.constant(adj_y[i]);
            terms.push(g.dot(&[cu, cx, cy], &[gp.u, d[0], d[1]]));
        }
        let total = g.sum(&terms);
        let grads = g.grad_nodes(total, &net.params).unwrap();
        for (k, node) in grads.iter().enumerate() {
            let slow = g.value(*node);
            assert!(
                (slow - fast[k]).abs() <= 1e-12 * (1.0 + slow.abs()),
                "param {k}: {slow} vs {}",
                fast[k]
            );
        }
    }

    #[test]
    fn chunking_is_transparent() {
        let p = perturbed(9, NetworkConfig::new(1, 3, false));
        let pts: Vec<[f64; 2]> = (0..1300)
            .map(|i| [(i as f64 * 0.013).sin(), (i as f64 * 0.007).cos()])
            .collect();
        let all = forward(&p, &pts);
        let single = forward(&p, &pts[1000..1001]);
        assert_eq!(all.u[1000], single.u[0]);
        assert_eq!(all.ux[1000], single.ux[0]);
    }
}
