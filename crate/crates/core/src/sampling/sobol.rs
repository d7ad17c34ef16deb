//! Sobol points in one and two dimensions.
//!
//! The first coordinate is the van der Corput sequence in base 2. The second
//! uses the primitive polynomial `x + 1` with initial direction number
//! `m_1 = 1`, which is the second dimension of the new Joe-Kuo tables.
//! Point `i` is the XOR of the direction numbers selected by the Gray code
//! of `i`, so any index range can be produced without replaying the stream.

use crate::error::{Error, Result};

const BITS: usize = 32;

fn directions(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    let mut m: u64 = 1;
    for (k, slot) in v.iter_mut().enumerate() {
        if dim == 1 && k > 0 {
            m ^= m << 1;
        }
        *slot = (m << (BITS - 1 - k)) as u32;
    }
    v
}

fn coordinate(v: &[u32; BITS], index: u64) -> f64 {
    let gray = index ^ (index >> 1);
    let mut x = 0u32;
    for (k, d) in v.iter().enumerate() {
        if gray >> k & 1 == 1 {
            x ^= d;
        }
    }
    x as f64 / (1u64 << BITS) as f64
}

/// `count` points of dimension `dim` starting at sequence index `skip`
/// (index 0 is the origin).
pub fn sobol(dim: usize, count: usize, skip: u64) -> Result<Vec<Vec<f64>>> {
    if !(1..=2).contains(&dim) {
        return Err(Error::Config(format!(
            "Sobol dimension must be 1 or 2, got {dim}"
        )));
    }
    let tables: Vec<[u32; BITS]> = (0..dim).map(directions).collect();
    Ok((0..count as u64)
        .map(|i| tables.iter().map(|v| coordinate(v, skip + i)).collect())
        .collect())
}

pub fn sobol_1d(count: usize, skip: u64) -> Vec<f64> {
    let v = directions(0);
    (0..count as u64).map(|i| coordinate(&v, skip + i)).collect()
}

pub fn sobol_2d(count: usize, skip: u64) -> Vec<[f64; 2]> {
    let (a, b) = (directions(0), directions(1));
    (0..count as u64)
        .map(|i| [coordinate(&a, skip + i), coordinate(&b, skip + i)])
        .collect()
}
