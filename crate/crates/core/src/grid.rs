//! Periodic structured grids on the 4-torus and flat per-node field storage.

use crate::{Error, Result, DIM};
use serde::{Deserialize, Serialize};

/// Periodic grid on `[0,L_1) x ... x [0,L_4)` with `N_i` uniformly spaced
/// nodes per axis. An axis with `N_i = 1` is inactive: fields are constant
/// along it and partial derivatives along it vanish identically (the reduced
/// ansatz). This is a property of the data, not a separate code path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    resolution: [usize; 4],
    period: [f64; 4],
}

pub const TWO_PI: f64 = std::f64::consts::TAU;

impl GridSpec {
    /// Periods default to `2*pi` via [`GridSpec::cubic`]; any positive
    /// lengths are accepted here. Resolutions must be at least 1; whether a
    /// resolution supports a given stencil footprint is checked at
    /// differentiation time, since it depends on the accuracy order.
    pub fn new(resolution: [usize; 4], period: [f64; 4]) -> Result<Self> {
        for a in 0..DIM {
            if resolution[a] == 0 {
                return Err(Error::BadConfig(format!("axis {a} has zero nodes")));
            }
            if !(period[a] > 0.0) || !period[a].is_finite() {
                return Err(Error::BadConfig(format!(
                    "axis {a} period {} not positive",
                    period[a]
                )));
            }
        }
        Ok(GridSpec { resolution, period })
    }

    /// All periods `2*pi`.
    pub fn cubic(resolution: [usize; 4]) -> Result<Self> {
        Self::new(resolution, [TWO_PI; 4])
    }

    pub fn resolution(&self) -> [usize; 4] {
        self.resolution
    }

    pub fn period(&self) -> [f64; 4] {
        self.period
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.period[axis] / self.resolution[axis] as f64
    }

    /// Smallest spacing among active axes; the stability scale of the
    /// fourth-order flow. Falls back to the smallest spacing overall when
    /// every axis is inactive (a single-node grid holds constants only).
    pub fn h_min(&self) -> f64 {
        let mut h = f64::INFINITY;
        for a in 0..DIM {
            if self.is_active(a) {
                h = h.min(self.spacing(a));
            }
        }
        if h.is_finite() {
            h
        } else {
            (0..DIM).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
        }
    }

    pub fn is_active(&self, axis: usize) -> bool {
        self.resolution[axis] > 1
    }

    pub fn active_axes(&self) -> Vec<usize> {
        (0..DIM).filter(|&a| self.is_active(a)).collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Row-major node index: axis 1 outermost, axis 4 contiguous.
    pub fn node_index(&self, idx: [usize; 4]) -> usize {
        let [n1, n2, n3, n4] = self.resolution;
        debug_assert!(idx[0] < n1 && idx[1] < n2 && idx[2] < n3 && idx[3] < n4);
        ((idx[0] * n2 + idx[1]) * n3 + idx[2]) * n4 + idx[3]
    }

    pub fn node_coords(&self, node: usize) -> [usize; 4] {
        let [_, n2, n3, n4] = self.resolution;
        let i4 = node % n4;
        let r = node / n4;
        let i3 = r % n3;
        let r = r / n3;
        let i2 = r % n2;
        let i1 = r / n2;
        [i1, i2, i3, i4]
    }

    /// Physical coordinates of a node.
    pub fn position(&self, idx: [usize; 4]) -> [f64; 4] {
        let mut x = [0.0; 4];
        for a in 0..DIM {
            x[a] = idx[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Stride (in nodes) of a unit step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        let [_, n2, n3, n4] = self.resolution;
        match axis {
            0 => n2 * n3 * n4,
            1 => n3 * n4,
            2 => n4,
            _ => 1,
        }
    }

    pub fn same_grid(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self, other)))
        }
    }
}

/// A set of scalar component planes over one grid. Storage is
/// component-major, node-minor: `data[c * num_nodes + node]`, nodes ordered
/// row-major over axes. This layout is part of the snapshot format.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    ncomp: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &GridSpec, ncomp: usize) -> Field {
        Field {
            grid: grid.clone(),
            ncomp,
            data: vec![0.0; ncomp * grid.num_nodes()],
        }
    }

    pub fn from_data(grid: &GridSpec, ncomp: usize, data: Vec<f64>) -> Result<Field> {
        if data.len() != ncomp * grid.num_nodes() {
            return Err(Error::GridMismatch(format!(
                "field payload has {} values, expected {}",
                data.len(),
                ncomp * grid.num_nodes()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            ncomp,
            data,
        })
    }

    /// Fill component `c` from a function of the node position.
    pub fn fill_comp(&mut self, c: usize, f: impl Fn([f64; 4]) -> f64) {
        let grid = self.grid.clone();
        let n = grid.num_nodes();
        for node in 0..n {
            let idx = grid.node_coords(node);
            self.comp_mut(c)[node] = f(grid.position(idx));
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let n = self.num_nodes();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.num_nodes();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self + s * other`, fresh output.
    pub fn axpy(&self, s: f64, other: &Field) -> Field {
        debug_assert_eq!(self.data.len(), other.data.len());
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(other.data.iter()) {
            *o += s * v;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Field {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_indexing_round_trips() {
        let g = GridSpec::new([3, 4, 5, 6], [1.0, 2.0, 3.0, 4.0]).unwrap();
        for node in 0..g.num_nodes() {
            assert_eq!(g.node_index(g.node_coords(node)), node);
        }
    }

    #[test]
    fn strides_match_indexing() {
        let g = GridSpec::cubic([3, 4, 5, 6]).unwrap();
        let idx = [1, 2, 3, 4];
        let base = g.node_index(idx);
        for a in 0..4 {
            let mut up = idx;
            up[a] += 1;
            if up[a] < g.resolution()[a] {
                assert_eq!(g.node_index(up), base + g.stride(a));
            }
        }
    }

    #[test]
    fn reduced_ansatz_axes() {
        let g = GridSpec::cubic([32, 1, 1, 1]).unwrap();
        assert_eq!(g.active_axes(), vec![0]);
        assert_eq!(g.num_nodes(), 32);
        assert!((g.h_min() - TWO_PI / 32.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(GridSpec::new([0, 1, 1, 1], [1.0; 4]).is_err());
        assert!(GridSpec::new([8, 1, 1, 1], [0.0, 1.0, 1.0, 1.0]).is_err());
    }
}
