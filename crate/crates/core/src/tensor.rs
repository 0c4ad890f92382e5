//! Tensor fields over a grid: variance-tagged component storage, index
//! raising/lowering/contraction, metric norms, and torus integration.

use crate::algebra::{self, Sym10, SYM_INDEX, SYM_PAIRS};
use crate::grid::{Field, GridSpec};
use crate::{Error, Result, DIM};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variance {
    /// Lower index.
    Co,
    /// Upper index.
    Contra,
}

/// A tensor field of rank <= 5. At most one symmetric slot pair may be
/// declared; that pair is stored packed (10 combinations), which makes the
/// declared symmetry bitwise by construction. Component order: slots left to
/// right, mixed radix, with the packed pair contributing one radix-10 digit
/// at the position of its first slot.
#[derive(Clone, Debug)]
pub struct TensorField {
    pub field: Field,
    variance: Vec<Variance>,
    sym: Option<(usize, usize)>,
}

impl TensorField {
    /// Rank is capped at 7 (third covariant derivative of a rank-4 tensor);
    /// dense high-rank fields are meant for reduced grids — a rank-7 field
    /// stores 4^7 components per node.
    pub fn zeros(grid: &GridSpec, variance: Vec<Variance>, sym: Option<(usize, usize)>) -> Result<Self> {
        let rank = variance.len();
        if rank > 7 {
            return Err(Error::RankRange { rank, op: "TensorField", max: 7 });
        }
        if let Some((a, b)) = sym {
            if a >= b || b >= rank {
                return Err(Error::BadSlot {
                    slot: b,
                    reason: format!("symmetric pair ({a},{b}) invalid for rank {rank}"),
                });
            }
            if variance[a] != variance[b] {
                return Err(Error::BadSlot {
                    slot: b,
                    reason: "symmetric pair must have equal variance".into(),
                });
            }
        }
        let ncomp = Self::comp_count(rank, sym);
        Ok(TensorField {
            field: Field::zeros(grid, ncomp),
            variance,
            sym,
        })
    }

    pub fn scalar(grid: &GridSpec) -> Self {
        TensorField {
            field: Field::zeros(grid, 1),
            variance: Vec::new(),
            sym: None,
        }
    }

    fn comp_count(rank: usize, sym: Option<(usize, usize)>) -> usize {
        match sym {
            Some(_) => 10 * 4usize.pow((rank - 2) as u32),
            None => 4usize.pow(rank as u32),
        }
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Variance] {
        &self.variance
    }

    pub fn sym(&self) -> Option<(usize, usize)> {
        self.sym
    }

    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }

    /// Storage component of a full index tuple (length = rank).
    pub fn comp_of(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        let mut c = 0usize;
        match self.sym {
            None => {
                for &i in idx {
                    c = c * 4 + i;
                }
            }
            Some((a, b)) => {
                for (slot, &i) in idx.iter().enumerate() {
                    if slot == a {
                        c = c * 10 + SYM_INDEX[idx[a]][idx[b]];
                    } else if slot == b {
                        continue;
                    } else {
                        c = c * 4 + i;
                    }
                }
            }
        }
        c
    }

    pub fn value(&self, idx: &[usize], node: usize) -> f64 {
        self.field.comp(self.comp_of(idx))[node]
    }

    pub fn set(&mut self, idx: &[usize], node: usize, v: f64) {
        let c = self.comp_of(idx);
        self.field.comp_mut(c)[node] = v;
    }

    /// Iterate all 4^rank full index tuples in lexicographic order.
    pub fn full_indices(rank: usize) -> impl Iterator<Item = Vec<usize>> {
        let count = 4usize.pow(rank as u32);
        (0..count).map(move |mut c| {
            let mut idx = vec![0usize; rank];
            for slot in (0..rank).rev() {
                idx[slot] = c % 4;
                c /= 4;
            }
            idx
        })
    }

    /// Dense 4^rank values at one node, full index order.
    pub fn dense_at(&self, node: usize) -> Vec<f64> {
        Self::full_indices(self.rank())
            .map(|idx| self.value(&idx, node))
            .collect()
    }

    /// Raise the covariant slot `slot` with the inverse metric.
    pub fn raise(&self, slot: usize, g: &MetricField) -> Result<TensorField> {
        self.convert_slot(slot, g, Variance::Co)
    }

    /// Lower the contravariant slot `slot` with the metric.
    pub fn lower(&self, slot: usize, g: &MetricField) -> Result<TensorField> {
        self.convert_slot(slot, g, Variance::Contra)
    }

    fn convert_slot(&self, slot: usize, g: &MetricField, expect: Variance) -> Result<TensorField> {
        if slot >= self.rank() {
            return Err(Error::BadSlot { slot, reason: "slot out of range".into() });
        }
        if self.variance[slot] != expect {
            return Err(Error::BadSlot {
                slot,
                reason: format!("variance is {:?}, expected {:?}", self.variance[slot], expect),
            });
        }
        self.grid().same_grid(g.grid())?;
        let mut variance = self.variance.clone();
        variance[slot] = match expect {
            Variance::Co => Variance::Contra,
            Variance::Contra => Variance::Co,
        };
        // keep the sym tag only if it does not involve the converted slot
        let sym = match self.sym {
            Some((a, b)) if a == slot || b == slot => None,
            s => s,
        };
        let mut out = TensorField::zeros(self.grid(), variance, sym)?;
        let rank = self.rank();
        let nnodes = self.grid().num_nodes();
        for idx in Self::full_indices(rank) {
            let oc = out.comp_of(&idx);
            let mut srcs: Vec<(usize, usize)> = Vec::with_capacity(4);
            let mut sidx = idx.clone();
            for m in 0..4 {
                sidx[slot] = m;
                srcs.push((self.comp_of(&sidx), m));
            }
            for node in 0..nnodes {
                let metric = match expect {
                    Variance::Co => g.inverse_at(node),
                    Variance::Contra => g.at(node),
                };
                let mrow = algebra::unpack_sym(&metric)[idx[slot]];
                let mut acc = 0.0;
                for &(sc, m) in &srcs {
                    acc += mrow[m] * self.field.comp(sc)[node];
                }
                out.field.comp_mut(oc)[node] = acc;
            }
        }
        Ok(out)
    }

    /// Contract slots `a` and `b` (metric contraction: two like-variance
    /// slots are paired through the metric/inverse metric automatically).
    pub fn contract(&self, a: usize, b: usize, g: &MetricField) -> Result<TensorField> {
        let rank = self.rank();
        if a == b || a >= rank || b >= rank {
            return Err(Error::BadSlot { slot: b.max(a), reason: "invalid contraction pair".into() });
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        // Reduce to a mixed-variance direct trace by raising/lowering b if
        // the variances match.
        if self.variance[a] == self.variance[b] {
            let fixed = match self.variance[b] {
                Variance::Co => self.raise(b, g)?,
                Variance::Contra => self.lower(b, g)?,
            };
            return fixed.contract(a, b, g);
        }
        let mut variance = Vec::new();
        for (s, &v) in self.variance.iter().enumerate() {
            if s != a && s != b {
                variance.push(v);
            }
        }
        let sym = match self.sym {
            Some((x, y)) if x != a && x != b && y != a && y != b => {
                let shift = |s: usize| s - (a < s) as usize - (b < s) as usize;
                Some((shift(x), shift(y)))
            }
            _ => None,
        };
        let mut out = TensorField::zeros(self.grid(), variance, sym)?;
        let nnodes = self.grid().num_nodes();
        for oidx in Self::full_indices(rank - 2) {
            let oc = out.comp_of(&oidx);
            let mut srcs = Vec::with_capacity(4);
            for m in 0..4 {
                let mut sidx = Vec::with_capacity(rank);
                let mut it = oidx.iter();
                for s in 0..rank {
                    if s == a || s == b {
                        sidx.push(m);
                    } else {
                        sidx.push(*it.next().unwrap());
                    }
                }
                srcs.push(self.comp_of(&sidx));
            }
            for node in 0..nnodes {
                let mut acc = 0.0;
                for &sc in &srcs {
                    acc += self.field.comp(sc)[node];
                }
                out.field.comp_mut(oc)[node] = acc;
            }
        }
        Ok(out)
    }

    /// Pointwise metric norm `|T|_g` as a scalar plane, plus sup and L2
    /// norms (L2 via the curved volume element).
    pub fn norms(&self, g: &MetricField) -> Result<FieldNorms> {
        self.grid().same_grid(g.grid())?;
        let rank = self.rank();
        let nnodes = self.grid().num_nodes();
        let mut pointwise = Field::zeros(self.grid(), 1);
        let full: Vec<Vec<usize>> = Self::full_indices(rank).collect();
        let comps: Vec<usize> = full.iter().map(|idx| self.comp_of(idx)).collect();
        let mut sup = 0.0_f64;
        let mut vals = vec![0.0f64; full.len()];
        let mut tmp = vec![0.0f64; full.len()];
        let mut orig = vec![0.0f64; full.len()];
        for node in 0..nnodes {
            let ginv = algebra::unpack_sym(&g.inverse_at(node));
            let gmat = algebra::unpack_sym(&g.at(node));
            for (v, &c) in vals.iter_mut().zip(&comps) {
                *v = self.field.comp(c)[node];
            }
            orig.copy_from_slice(&vals);
            // dualize one slot at a time
            for slot in 0..rank {
                let m = match self.variance[slot] {
                    Variance::Co => &ginv,
                    Variance::Contra => &gmat,
                };
                let stride = 4usize.pow((rank - 1 - slot) as u32);
                for (fi, idx) in full.iter().enumerate() {
                    let i = idx[slot];
                    let base = fi - i * stride;
                    let mut acc = 0.0;
                    for k in 0..4 {
                        acc += m[i][k] * vals[base + k * stride];
                    }
                    tmp[fi] = acc;
                }
                std::mem::swap(&mut vals, &mut tmp);
            }
            let sq: f64 = orig.iter().zip(&vals).map(|(a, b)| a * b).sum();
            let v = sq.max(0.0).sqrt();
            pointwise.comp_mut(0)[node] = v;
            sup = sup.max(v);
        }
        let mut sq_field = pointwise.clone();
        for v in sq_field.data_mut() {
            *v = *v * *v;
        }
        let l2 = integrate_scalar(&sq_field, g)?.max(0.0).sqrt();
        Ok(FieldNorms { pointwise, sup, l2 })
    }
}

pub struct FieldNorms {
    pub pointwise: Field,
    pub sup: f64,
    pub l2: f64,
}

/// Symmetric positive-definite covariant 2-tensor field: the flow variable.
/// Packed 10-component storage; the inverse is computed once and cached.
#[derive(Clone, Debug)]
pub struct MetricField {
    comps: Field,
    inverse: Field,
}

impl MetricField {
    /// Build from packed components, verifying pointwise positive
    /// definiteness by leading principal minors.
    pub fn new(comps: Field) -> Result<Self> {
        if comps.ncomp() != 10 {
            return Err(Error::GridMismatch(format!(
                "metric needs 10 packed components, got {}",
                comps.ncomp()
            )));
        }
        let nnodes = comps.num_nodes();
        for node in 0..nnodes {
            let s = Self::packed_at(&comps, node);
            for v in s {
                if !v.is_finite() {
                    return Err(Error::NonFinite { context: "metric components" });
                }
            }
            let minors = algebra::leading_minors(&s);
            for (k, &m) in minors.iter().enumerate() {
                if !(m > 0.0) {
                    return Err(Error::NonSpd { node, order: k + 1, minor: m });
                }
            }
        }
        let mut inverse = Field::zeros(comps.grid(), 10);
        for node in 0..nnodes {
            let inv = algebra::inv_sym(&Self::packed_at(&comps, node));
            for c in 0..10 {
                inverse.comp_mut(c)[node] = inv[c];
            }
        }
        Ok(MetricField { comps, inverse })
    }

    pub fn identity(grid: &GridSpec) -> Self {
        Self::constant(grid, {
            let mut s = [0.0; 10];
            for d in 0..4 {
                s[SYM_INDEX[d][d]] = 1.0;
            }
            s
        })
    }

    pub fn constant(grid: &GridSpec, s: Sym10) -> Self {
        let mut comps = Field::zeros(grid, 10);
        for c in 0..10 {
            comps.comp_mut(c).fill(s[c]);
        }
        MetricField::new(comps).expect("constant SPD metric")
    }

    fn packed_at(f: &Field, node: usize) -> Sym10 {
        let mut s = [0.0; 10];
        for (c, v) in s.iter_mut().enumerate() {
            *v = f.comp(c)[node];
        }
        s
    }

    pub fn at(&self, node: usize) -> Sym10 {
        Self::packed_at(&self.comps, node)
    }

    pub fn inverse_at(&self, node: usize) -> Sym10 {
        Self::packed_at(&self.inverse, node)
    }

    pub fn grid(&self) -> &GridSpec {
        self.comps.grid()
    }

    pub fn comps(&self) -> &Field {
        &self.comps
    }

    /// The inverse metric as a contravariant symmetric tensor field.
    pub fn inverse_metric(&self) -> TensorField {
        let mut t = TensorField::zeros(
            self.grid(),
            vec![Variance::Contra, Variance::Contra],
            Some((0, 1)),
        )
        .expect("rank 2");
        t.field = self.inverse.clone();
        t
    }

    /// View the metric itself as a covariant TensorField.
    pub fn as_tensor(&self) -> TensorField {
        let mut t = TensorField::zeros(self.grid(), vec![Variance::Co, Variance::Co], Some((0, 1)))
            .expect("rank 2");
        t.field = self.comps.clone();
        t
    }

    /// sqrt(det g) at a node.
    pub fn sqrt_det(&self, node: usize) -> f64 {
        algebra::leading_minors(&self.at(node))[3].max(0.0).sqrt()
    }
}

/// Riemann-sum quadrature on the periodic grid: on a torus this is the
/// trapezoid rule, spectrally accurate for smooth integrands. Sequential
/// node-order summation keeps results bitwise deterministic.
pub fn integrate_scalar(f: &Field, g: &MetricField) -> Result<f64> {
    f.grid().same_grid(g.grid())?;
    if f.ncomp() != 1 {
        return Err(Error::GridMismatch("integrand must be a scalar field".into()));
    }
    let grid = f.grid();
    let weight: f64 = (0..DIM).map(|a| grid.spacing(a)).product();
    let mut acc = 0.0;
    for (node, v) in f.comp(0).iter().enumerate() {
        acc += v * g.sqrt_det(node);
    }
    Ok(acc * weight)
}

/// Total Riemannian volume of the torus under `g`: the quadrature of the
/// constant 1 against the volume density.
pub fn total_volume(g: &MetricField) -> f64 {
    let grid = g.grid();
    let weight: f64 = (0..DIM).map(|a| grid.spacing(a)).product();
    let mut acc = 0.0;
    for node in 0..grid.num_nodes() {
        acc += g.sqrt_det(node);
    }
    acc * weight
}

/// Coordinate (flat) L2 norm of the difference of two metric fields;
/// off-diagonal components count twice. Used by probes that measure
/// perturbation amplitudes around a background.
pub fn coordinate_l2_diff(a: &MetricField, b: &MetricField) -> f64 {
    let grid = a.grid();
    let weight: f64 = (0..DIM).map(|x| grid.spacing(x)).product();
    let mut acc = 0.0;
    for (c, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let mult = if i == j { 1.0 } else { 2.0 };
        let pa = a.comps().comp(c);
        let pb = b.comps().comp(c);
        let mut s = 0.0;
        for (x, y) in pa.iter().zip(pb) {
            let d = x - y;
            s += d * d;
        }
        acc += mult * s;
    }
    (acc * weight).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TWO_PI;

    fn small_grid() -> GridSpec {
        GridSpec::cubic([6, 5, 1, 1]).unwrap()
    }

    #[test]
    fn flat_inverse_is_identity() {
        let g = MetricField::identity(&small_grid());
        for node in 0..g.grid().num_nodes() {
            assert_eq!(g.inverse_at(node), g.at(node));
        }
    }

    #[test]
    fn scaled_flat_inverse() {
        let grid = small_grid();
        let mut s = [0.0; 10];
        for d in 0..4 {
            s[SYM_INDEX[d][d]] = 4.0;
        }
        let g = MetricField::constant(&grid, s);
        for d in 0..4 {
            assert!((g.inverse_at(0)[SYM_INDEX[d][d]] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn non_spd_rejected_with_location() {
        let grid = small_grid();
        let mut comps = Field::zeros(&grid, 10);
        for d in 0..4 {
            comps.comp_mut(SYM_INDEX[d][d]).fill(1.0);
        }
        comps.comp_mut(SYM_INDEX[1][1])[7] = -0.5;
        match MetricField::new(comps) {
            Err(Error::NonSpd { node, order, .. }) => {
                assert_eq!(node, 7);
                assert_eq!(order, 2);
            }
            other => panic!("expected NonSpd, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn metric_self_norm_is_dimension() {
        let grid = small_grid();
        let g = MetricField::identity(&grid);
        let n = g.as_tensor().norms(&g).unwrap();
        for node in 0..grid.num_nodes() {
            assert!((n.pointwise.comp(0)[node] - 2.0).abs() < 1e-14); // sqrt(4)
        }
    }

    #[test]
    fn raise_then_lower_round_trips() {
        let grid = small_grid();
        let mut comps = Field::zeros(&grid, 10);
        for d in 0..4 {
            comps.comp_mut(SYM_INDEX[d][d]).fill(1.0);
        }
        comps.comp_mut(SYM_INDEX[0][1]).fill(0.2);
        comps.comp_mut(SYM_INDEX[0][0]).fill(1.5);
        let g = MetricField::new(comps).unwrap();
        let mut t = TensorField::zeros(&grid, vec![Variance::Co, Variance::Co], None).unwrap();
        for (c, idx) in TensorField::full_indices(2).enumerate() {
            let v = (c as f64 * 0.37).sin();
            for node in 0..grid.num_nodes() {
                t.set(&idx, node, v + node as f64 * 1e-3);
            }
        }
        let rt = t.raise(0, &g).unwrap().lower(0, &g).unwrap();
        for idx in TensorField::full_indices(2) {
            for node in 0..grid.num_nodes() {
                let a = t.value(&idx, node);
                let b = rt.value(&idx, node);
                assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn contract_mixed_identity_gives_dim() {
        let grid = small_grid();
        let g = MetricField::identity(&grid);
        let mut t =
            TensorField::zeros(&grid, vec![Variance::Contra, Variance::Co], None).unwrap();
        for d in 0..4 {
            let c = t.comp_of(&[d, d]);
            t.field.comp_mut(c).fill(1.0);
        }
        let tr = t.contract(0, 1, &g).unwrap();
        assert_eq!(tr.rank(), 0);
        for node in 0..grid.num_nodes() {
            assert_eq!(tr.field.comp(0)[node], 4.0);
        }
    }

    #[test]
    fn raise_both_slots_matches_inverse() {
        let grid = small_grid();
        let mut comps = Field::zeros(&grid, 10);
        for d in 0..4 {
            comps.comp_mut(SYM_INDEX[d][d]).fill(1.0 + 0.3 * d as f64);
        }
        comps.comp_mut(SYM_INDEX[0][2]).fill(0.15);
        let g = MetricField::new(comps).unwrap();
        let up = g.as_tensor().raise(0, &g).unwrap().raise(1, &g).unwrap();
        let inv = g.inverse_metric();
        for idx in TensorField::full_indices(2) {
            for node in 0..grid.num_nodes() {
                let a = up.value(&idx, node);
                let b = inv.value(&idx, node);
                assert!((a - b).abs() < 1e-13, "{idx:?} {a} {b}");
            }
        }
    }

    #[test]
    fn flat_volume() {
        let grid = GridSpec::cubic([4, 4, 4, 4]).unwrap();
        let g = MetricField::identity(&grid);
        let mut one = Field::zeros(&grid, 1);
        one.comp_mut(0).fill(1.0);
        let v = integrate_scalar(&one, &g).unwrap();
        assert!((v - TWO_PI.powi(4)).abs() < 1e-9);
    }

    #[test]
    fn scaled_volume() {
        let grid = GridSpec::cubic([4, 4, 4, 4]).unwrap();
        let mut s = [0.0; 10];
        for d in 0..4 {
            s[SYM_INDEX[d][d]] = 3.0;
        }
        let g = MetricField::constant(&grid, s);
        let mut one = Field::zeros(&grid, 1);
        one.comp_mut(0).fill(1.0);
        let v = integrate_scalar(&one, &g).unwrap();
        assert!((v - 9.0 * TWO_PI.powi(4)).abs() < 1e-8);
    }

    #[test]
    fn quadrature_exact_below_nyquist() {
        let grid = GridSpec::cubic([8, 1, 1, 1]).unwrap();
        let g = MetricField::identity(&grid);
        let mut f = Field::zeros(&grid, 1);
        // integral of 2 + sin(3x) over the torus = 2 (2pi)^4
        f.fill_comp(0, |x| 2.0 + (3.0 * x[0]).sin());
        let v = integrate_scalar(&f, &g).unwrap();
        assert!((v - 2.0 * TWO_PI.powi(4)).abs() < 1e-12 * TWO_PI.powi(4));
    }

    #[test]
    fn sym_storage_is_bitwise() {
        let grid = small_grid();
        let mut t = TensorField::zeros(
            &grid,
            vec![Variance::Co, Variance::Co, Variance::Co],
            Some((0, 2)),
        )
        .unwrap();
        t.set(&[1, 3, 2], 0, 7.5);
        assert_eq!(t.value(&[2, 3, 1], 0), 7.5);
        assert_eq!(t.comp_of(&[1, 3, 2]), t.comp_of(&[2, 3, 1]));
    }
}
