//! Gauss-Legendre rules on `[0, 1]`, used as integration oracles.

use super::Patch;

/// Nodes and weights of the `n`-point rule on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = (1.0 - x) / 2.0;
        nodes[n - 1 - i] = (1.0 + x) / 2.0;
        weights[i] = w / 2.0;
        weights[n - 1 - i] = w / 2.0;
    }
    (nodes, weights)
}

pub fn integrate_1d(f: impl Fn(f64) -> f64, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    x.iter().zip(&w).map(|(&x, &w)| w * f(x)).sum()
}

/// `int_D g dx` over a physical patch, via the reference square.
pub fn integrate_patch(patch: &Patch, g: impl Fn([f64; 2]) -> f64, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let mut acc = 0.0;
    for (i, &u) in x.iter().enumerate() {
        for (j, &v) in x.iter().enumerate() {
            let y = [u, v];
            let det = patch.jacobian_det_unchecked(y).abs();
            acc += w[i] * w[j] * det * g(patch.eval(y));
        }
    }
    acc
}

pub fn patch_area(patch: &Patch, order: usize) -> f64 {
    integrate_patch(patch, |_| 1.0, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..8 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }
}
