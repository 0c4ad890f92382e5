//! Central finite-difference stencils on periodic axes: the sole source of
//! spatial differentiation in the crate.

use crate::grid::{Field, GridSpec};
use crate::{Error, Result};
use std::collections::HashMap;
use std::sync::OnceLock;

/// Coefficients of a minimal-width central stencil for the `k`-th derivative
/// at accuracy order (at least) `p`. Weights are for unit spacing; divide by
/// `h^k` at application. Zero weights (the centre point for odd `k`) are
/// dropped, so `offsets.len()` is the true footprint.
#[derive(Clone, Debug, PartialEq)]
pub struct StencilTable {
    pub k: usize,
    pub p: usize,
    pub offsets: Vec<i64>,
    pub weights: Vec<f64>,
}

impl StencilTable {
    /// Number of grid nodes the stencil touches (its width).
    pub fn footprint(&self) -> usize {
        let r = self.offsets.iter().map(|o| o.unsigned_abs()).max().unwrap() as usize;
        2 * r + 1
    }

    /// Discrete Fourier symbol: applying the stencil to `e^{i theta j}`
    /// multiplies it by `symbol(theta) / h^k`. Real for even `k` (symmetric
    /// weights), imaginary for odd `k`; this returns the real scalar factor
    /// against the analytic symbol `(i theta)^k`, i.e. the signed magnitude.
    pub fn symbol(&self, theta: f64) -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (&j, &w) in self.offsets.iter().zip(&self.weights) {
            re += w * (theta * j as f64).cos();
            im += w * (theta * j as f64).sin();
        }
        if self.k % 2 == 0 {
            re
        } else {
            im
        }
    }
}

/// Solve the moment conditions for the minimal central stencil: with
/// half-width `r`, weights `c_j` (`j = -r..r`) satisfy
/// `sum_j c_j j^m = k! delta_{mk}` for `m = 0..2r`. The solution has the
/// parity of `k`; we symmetrize to make that exact in floating point and
/// drop the resulting hard zeros.
fn solve(k: usize, p: usize) -> StencilTable {
    let r = (k + 1) / 2 + p / 2 - 1;
    let n = 2 * r + 1;
    // Dense Vandermonde-by-rows system, Gaussian elimination with partial
    // pivoting. n <= 9, exactness is checked by the frozen tables below.
    let mut m = vec![vec![0.0_f64; n + 1]; n];
    for (row, mrow) in m.iter_mut().enumerate() {
        for j in 0..n {
            mrow[j] = ((j as i64 - r as i64) as f64).powi(row as i32);
        }
        mrow[n] = if row == k { factorial(k) } else { 0.0 };
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        for x in m[col].iter_mut() {
            *x /= d;
        }
        for row in 0..n {
            if row != col && m[row][col] != 0.0 {
                let f = m[row][col];
                for x in 0..=n {
                    m[row][x] -= f * m[col][x];
                }
            }
        }
    }
    let raw: Vec<f64> = (0..n).map(|i| m[i][n]).collect();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    for j in 0..n {
        let w = 0.5 * (raw[j] + sign * raw[n - 1 - j]);
        if w != 0.0 {
            offsets.push(j as i64 - r as i64);
            weights.push(w);
        }
    }
    StencilTable { k, p, offsets, weights }
}

fn factorial(k: usize) -> f64 {
    (1..=k).product::<usize>() as f64
}

/// Cached stencil lookup. `k` in 1..=4, `p` in {2, 4, 6}.
pub fn stencil_coefficients(k: usize, p: usize) -> Result<&'static StencilTable> {
    static CACHE: OnceLock<HashMap<(usize, usize), StencilTable>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        let mut map = HashMap::new();
        for k in 1..=4 {
            for p in [2, 4, 6] {
                map.insert((k, p), solve(k, p));
            }
        }
        map
    });
    cache.get(&(k, p)).ok_or(Error::BadStencil { k, p })
}

/// Widest footprint any derivative order up to 4 needs at accuracy `p`; grid
/// axes must have at least this many nodes (or exactly 1) to differentiate.
pub fn max_footprint(p: usize) -> Result<usize> {
    Ok(stencil_coefficients(4, p)?.footprint())
}

/// Apply the `k`-th derivative stencil along `axis` to one component plane,
/// with periodic wraparound. `src` and `dst` are node-ordered planes of the
/// grid. An inactive axis yields the zero field.
pub fn apply_axis(
    src: &[f64],
    dst: &mut [f64],
    grid: &GridSpec,
    axis: usize,
    k: usize,
    p: usize,
) -> Result<()> {
    let n_axis = grid.resolution()[axis];
    if n_axis == 1 {
        dst.fill(0.0);
        return Ok(());
    }
    let table = stencil_coefficients(k, p)?;
    if n_axis < table.footprint() {
        return Err(Error::GridTooSmall {
            axis,
            nodes: n_axis,
            needed: table.footprint(),
        });
    }
    let h = grid.spacing(axis);
    let scale = 1.0 / h.powi(k as i32);
    let stride = grid.stride(axis);
    let nnodes = grid.num_nodes();
    // Node loop with per-node wrapped offsets along `axis`. The offset in
    // flat index space wraps by +-n_axis*stride when the axis coordinate
    // leaves [0, n_axis).
    let res = grid.resolution();
    let mut node = 0;
    let mut idx = [0usize; 4];
    while node < nnodes {
        let i = idx[axis] as i64;
        let mut acc = 0.0;
        for (&off, &w) in table.offsets.iter().zip(&table.weights) {
            let mut j = i + off;
            if j < 0 {
                j += n_axis as i64;
            } else if j >= n_axis as i64 {
                j -= n_axis as i64;
            }
            let neighbor = (node as i64 + (j - i) * stride as i64) as usize;
            acc += w * src[neighbor];
        }
        dst[node] = acc * scale;
        node += 1;
        // increment mixed-radix idx (row-major, axis 3 fastest)
        for a in (0..4).rev() {
            idx[a] += 1;
            if idx[a] < res[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(())
}

/// A derivative multi-index as per-axis multiplicities; total order <= 4.
pub type MultiIndex = [u8; 4];

pub fn multi_order(alpha: MultiIndex) -> usize {
    alpha.iter().map(|&m| m as usize).sum()
}

/// Mixed partial derivative of a scalar plane by composing per-axis direct
/// stencils in the fixed axis order 1..4. Composition order is part of the
/// definition, which makes equal multi-indices bitwise equal however they
/// are written (d1 d2 and d2 d1 are the same multi-index).
pub fn partial_derivative_plane(
    src: &[f64],
    grid: &GridSpec,
    alpha: MultiIndex,
    p: usize,
) -> Result<Vec<f64>> {
    let order = multi_order(alpha);
    if order > 4 {
        return Err(Error::DerivativeOrder { order });
    }
    let mut cur = src.to_vec();
    let mut tmp = vec![0.0; src.len()];
    for axis in 0..4 {
        let k = alpha[axis] as usize;
        if k > 0 {
            apply_axis(&cur, &mut tmp, grid, axis, k, p)?;
            std::mem::swap(&mut cur, &mut tmp);
        }
    }
    Ok(cur)
}

/// Multi-index derivative of every component of a field.
pub fn partial_derivative(f: &Field, alpha: MultiIndex, p: usize) -> Result<Field> {
    let mut out = Field::zeros(f.grid(), f.ncomp());
    for c in 0..f.ncomp() {
        let plane = partial_derivative_plane(f.comp(c), f.grid(), alpha, p)?;
        out.comp_mut(c).copy_from_slice(&plane);
    }
    Ok(out)
}
