//! Curvature assembly for metrics on the periodic grid.
//!
//! The pipeline has exactly two stages. Stage one differentiates the ten
//! metric components to fourth order with the periodic stencils, producing
//! one table of every partial derivative (69 multi-indices). Stage two is
//! pointwise: at each node the metric value, its inverse, and the derivative
//! rows form a jet, and one straight-line kernel evaluates the whole
//! curvature stack (connection, Riemann, Ricci, Weyl, trace-adjusted Ricci,
//! its antisymmetrized derivative, the obstruction tensor both ways, the
//! fourth-order scalar invariant, and optionally the gauge vector field) as
//! polynomial algebra in that jet. No spatial operator appears downstream of
//! the table, so identities that hold for arbitrary jets hold here at
//! rounding level, while genuinely differential statements converge at the
//! stencil order.
//!
//! Riemann-type tensors (antisymmetric in two slot pairs, symmetric under
//! pair exchange) are stored in 21 independent components; accessors decode
//! full index tuples with sign.

pub mod reference;

use crate::algebra::{self, Mat4, Sym10, M3, M4, SYM_INDEX, SYM_PAIRS};
use crate::grid::{Field, GridSpec};
use crate::stencil::{self, MultiIndex};
use crate::tensor::{MetricField, TensorField, Variance};
use crate::{Error, Result};

/// The six antisymmetric index pairs (i<j) in storage order.
pub const ASYM_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// `PAIR_IDX[i][j]`: position of `{i,j}` in `ASYM_PAIRS`, or -1 on the
/// diagonal. `PAIR_SIGN[i][j]` is +1 for i<j, -1 for i>j, 0 on the diagonal.
const PAIR_IDX: [[i8; 4]; 4] = [
    [-1, 0, 1, 2],
    [0, -1, 3, 4],
    [1, 3, -1, 5],
    [2, 4, 5, -1],
];
const PAIR_SIGN: [[f64; 4]; 4] = [
    [0.0, 1.0, 1.0, 1.0],
    [-1.0, 0.0, 1.0, 1.0],
    [-1.0, -1.0, 0.0, 1.0],
    [-1.0, -1.0, -1.0, 0.0],
];

/// `TRI21[p][q]`: slot of the unordered pair-of-pairs {p,q} in the packed
/// 21-component storage.
const TRI21: [[usize; 6]; 6] = build_tri21();

const fn build_tri21() -> [[usize; 6]; 6] {
    let mut t = [[0usize; 6]; 6];
    let mut idx = 0;
    let mut p = 0;
    while p < 6 {
        let mut q = p;
        while q < 6 {
            t[p][q] = idx;
            t[q][p] = idx;
            idx += 1;
            q += 1;
        }
        p += 1;
    }
    t
}

/// Canonical slot tuple (i,j,k,l) stored at each of the 21 components:
/// i<j, k<l, pair(i,j) <= pair(k,l).
pub const CANON21: [(usize, usize, usize, usize); 21] = build_canon21();

const fn build_canon21() -> [(usize, usize, usize, usize); 21] {
    let mut out = [(0usize, 0usize, 0usize, 0usize); 21];
    let mut idx = 0;
    let mut p = 0;
    while p < 6 {
        let mut q = p;
        while q < 6 {
            let (i, j) = ASYM_PAIRS[p];
            let (k, l) = ASYM_PAIRS[q];
            out[idx] = (i, j, k, l);
            idx += 1;
            q += 1;
        }
        p += 1;
    }
    out
}

/// Read component (i,j,k,l) of a pair-symmetric packed tensor.
#[inline(always)]
pub fn pair_sym_get(v: &[f64; 21], i: usize, j: usize, k: usize, l: usize) -> f64 {
    let p = PAIR_IDX[i][j];
    let q = PAIR_IDX[k][l];
    if p < 0 || q < 0 {
        return 0.0;
    }
    PAIR_SIGN[i][j] * PAIR_SIGN[k][l] * v[TRI21[p as usize][q as usize]]
}

/// Read component (i,(j,k)) of a last-two-slots antisymmetric packed rank-3
/// tensor stored as `[i][pair]`.
#[inline(always)]
fn asym3_get(v: &[[f64; 6]; 4], i: usize, j: usize, k: usize) -> f64 {
    let p = PAIR_IDX[j][k];
    if p < 0 {
        return 0.0;
    }
    PAIR_SIGN[j][k] * v[i][p as usize]
}

/// Full-count multiplicity of each packed symmetric slot when summing over
/// both indices (1 on the diagonal, 2 off it).
pub const SYM_MULT: [f64; 10] = [1.0, 2.0, 2.0, 2.0, 1.0, 2.0, 2.0, 1.0, 2.0, 1.0];

#[derive(Clone, Copy, Debug)]
pub struct CurvatureOptions {
    /// Stencil accuracy order p (2, 4, or 6).
    pub accuracy_order: usize,
    /// Also evaluate the obstruction tensor through its divergence-of-Weyl
    /// form for cross-checking.
    pub alternative_bach: bool,
    /// Also evaluate the gauge vector field W^k = -1/4 (ΔX)^k + 1/12 (∇R)^k
    /// with X^k = g^{ij}Γ^k_{ij} (flat background connection).
    pub gauge_vector: bool,
}

impl Default for CurvatureOptions {
    fn default() -> Self {
        CurvatureOptions {
            accuracy_order: 4,
            alternative_bach: false,
            gauge_vector: false,
        }
    }
}

/// The pointwise 4-jet of the metric at one node: value, inverse, and all
/// partial derivatives through order four, each a packed symmetric 10-vector.
/// Derivative rows follow the multi-index enumerations in [`crate::algebra`].
#[derive(Clone)]
pub struct NodeJet {
    pub g: Sym10,
    pub gi: Sym10,
    pub d1: [Sym10; 4],
    pub d2: [Sym10; 10],
    pub d3: [Sym10; 20],
    pub d4: [Sym10; 35],
}

/// Everything the per-node kernel produces.
#[derive(Clone, Debug)]
pub struct NodeOut {
    /// Connection coefficients of the second kind, `[k][(i,j) packed]`.
    pub christoffel: [Sym10; 4],
    /// Lowered curvature tensor, 21 packed components.
    pub riemann: [f64; 21],
    pub ricci: Sym10,
    pub scalar: f64,
    pub schouten: Sym10,
    /// Antisymmetrized covariant derivative of the Schouten tensor,
    /// `[i][(j<k) pair]` for C_ijk.
    pub cotton: [[f64; 6]; 4],
    pub weyl: [f64; 21],
    pub bach: Sym10,
    pub lap_scalar: f64,
    pub q_scalar: f64,
    /// bach + (lap_scalar/12) g: the flow right-hand side before gauge terms.
    pub adjusted: Sym10,
    /// Valid iff options.alternative_bach.
    pub bach_alt: Sym10,
    /// Valid iff options.gauge_vector. Contravariant components.
    pub gauge_vector: [f64; 4],
}

#[inline(always)]
fn sy(i: usize, j: usize) -> usize {
    SYM_INDEX[i][j]
}

fn mul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn sandwich(left: &Mat4, mid: &Mat4, right: &Mat4) -> Mat4 {
    mul4(&mul4(left, mid), right)
}

/// Evaluate the curvature stack on one metric jet. Pure function; the whole
/// grid pass is a loop over this.
pub fn node_kernel(jet: &NodeJet, opts: &CurvatureOptions) -> NodeOut {
    let g = &jet.g;
    let gi = &jet.gi;
    let d1 = &jet.d1;
    let d2 = &jet.d2;
    let d3 = &jet.d3;
    let d4 = &jet.d4;
    let gi_m = algebra::unpack_sym(gi);

    // Connection of the first kind G1[l][(i,j)] = (d_i g_jl + d_j g_il - d_l g_ij)/2
    // and second kind G2 = g^{-1} G1.
    let mut gamma1 = [[0.0f64; 10]; 4];
    let mut gamma2 = [[0.0f64; 10]; 4];
    for l in 0..4 {
        for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            gamma1[l][s] = 0.5 * (d1[i][sy(j, l)] + d1[j][sy(i, l)] - d1[l][s]);
        }
    }
    for l in 0..4 {
        for s in 0..10 {
            let mut acc = 0.0;
            for m in 0..4 {
                acc += gi_m[l][m] * gamma1[m][s];
            }
            gamma2[l][s] = acc;
        }
    }

    // First and second partials of G1.
    let mut dgamma1 = [[[0.0f64; 10]; 4]; 4]; // [a][l][(i,j)]
    for a in 0..4 {
        for l in 0..4 {
            for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
                dgamma1[a][l][s] = 0.5
                    * (d2[sy(a, i)][sy(j, l)] + d2[sy(a, j)][sy(i, l)] - d2[sy(a, l)][s]);
            }
        }
    }
    let mut d2gamma1 = [[[0.0f64; 10]; 4]; 10]; // [(a,b) packed][l][(i,j)]
    for (ab, &(a, b)) in SYM_PAIRS.iter().enumerate() {
        for l in 0..4 {
            for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
                d2gamma1[ab][l][s] = 0.5
                    * (d3[M3[a][b][i]][sy(j, l)] + d3[M3[a][b][j]][sy(i, l)]
                        - d3[M3[a][b][l]][s]);
            }
        }
    }

    // Partials of the inverse metric: d(g^{-1}) = -g^{-1} (dg) g^{-1}, and
    // its derivative by the product rule.
    let d1_m: [Mat4; 4] = std::array::from_fn(|a| algebra::unpack_sym(&d1[a]));
    let dgi: [Sym10; 4] = std::array::from_fn(|a| {
        let m = sandwich(&gi_m, &d1_m[a], &gi_m);
        let mut s = algebra::pack_sym(&m);
        for v in s.iter_mut() {
            *v = -*v;
        }
        s
    });
    let dgi_m: [Mat4; 4] = std::array::from_fn(|a| algebra::unpack_sym(&dgi[a]));
    let mut d2gi = [[0.0f64; 10]; 10]; // [(a,b) packed][(i,j) packed]
    for (ab, &(a, b)) in SYM_PAIRS.iter().enumerate() {
        let d2f = algebra::unpack_sym(&d2[ab]);
        let t1 = sandwich(&dgi_m[b], &d1_m[a], &gi_m);
        let t2 = sandwich(&gi_m, &d2f, &gi_m);
        let t3 = sandwich(&gi_m, &d1_m[a], &dgi_m[b]);
        for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            d2gi[ab][s] = -(t1[i][j] + t2[i][j] + t3[i][j]);
        }
    }

    // Partials of G2.
    let mut dgamma2 = [[[0.0f64; 10]; 4]; 4]; // [a][l][(i,j)]
    for a in 0..4 {
        for l in 0..4 {
            for s in 0..10 {
                let mut acc = 0.0;
                for m in 0..4 {
                    acc += dgi_m[a][l][m] * gamma1[m][s] + gi_m[l][m] * dgamma1[a][m][s];
                }
                dgamma2[a][l][s] = acc;
            }
        }
    }
    let mut d2gamma2 = [[[0.0f64; 10]; 4]; 10]; // [(a,b) packed][l][(i,j)]
    for (ab, &(a, b)) in SYM_PAIRS.iter().enumerate() {
        let d2gi_m = algebra::unpack_sym(&d2gi[ab]);
        for l in 0..4 {
            for s in 0..10 {
                let mut acc = 0.0;
                for m in 0..4 {
                    acc += d2gi_m[l][m] * gamma1[m][s]
                        + dgi_m[a][l][m] * dgamma1[b][m][s]
                        + dgi_m[b][l][m] * dgamma1[a][m][s]
                        + gi_m[l][m] * d2gamma1[ab][m][s];
                }
                d2gamma2[ab][l][s] = acc;
            }
        }
    }

    // Lowered curvature tensor and its partials, 21 canonical components:
    // R_ijkl = (d_i d_k g_jl + d_j d_l g_ik - d_i d_l g_jk - d_j d_k g_il)/2
    //        + g^{pm}(G1_{m,ik} G1_{p,jl} - G1_{m,il} G1_{p,jk})
    // with the product part written through G2 = g^{-1} G1.
    let mut rm = [0.0f64; 21];
    let mut drm = [[0.0f64; 21]; 4];
    let mut d2rm = [[0.0f64; 21]; 10];
    for (t, &(i, j, k, l)) in CANON21.iter().enumerate() {
        let (ik, jl, il, jk) = (sy(i, k), sy(j, l), sy(i, l), sy(j, k));
        let mut v = 0.5 * (d2[ik][jl] + d2[jl][ik] - d2[il][jk] - d2[jk][il]);
        for p in 0..4 {
            v += gamma2[p][ik] * gamma1[p][jl] - gamma2[p][il] * gamma1[p][jk];
        }
        rm[t] = v;
        for a in 0..4 {
            let mut v = 0.5
                * (d3[M3[a][i][k]][jl] + d3[M3[a][j][l]][ik]
                    - d3[M3[a][i][l]][jk]
                    - d3[M3[a][j][k]][il]);
            for p in 0..4 {
                v += dgamma2[a][p][ik] * gamma1[p][jl] + gamma2[p][ik] * dgamma1[a][p][jl]
                    - dgamma2[a][p][il] * gamma1[p][jk]
                    - gamma2[p][il] * dgamma1[a][p][jk];
            }
            drm[a][t] = v;
        }
        for (ab, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            let mut v = 0.5
                * (d4[M4[a][b][i][k]][jl] + d4[M4[a][b][j][l]][ik]
                    - d4[M4[a][b][i][l]][jk]
                    - d4[M4[a][b][j][k]][il]);
            for p in 0..4 {
                v += d2gamma2[ab][p][ik] * gamma1[p][jl]
                    + dgamma2[a][p][ik] * dgamma1[b][p][jl]
                    + dgamma2[b][p][ik] * dgamma1[a][p][jl]
                    + gamma2[p][ik] * d2gamma1[ab][p][jl]
                    - d2gamma2[ab][p][il] * gamma1[p][jk]
                    - dgamma2[a][p][il] * dgamma1[b][p][jk]
                    - dgamma2[b][p][il] * dgamma1[a][p][jk]
                    - gamma2[p][il] * d2gamma1[ab][p][jk];
            }
            d2rm[ab][t] = v;
        }
    }

    // Ricci Rc_jk = g^{il} R_ijkl, its partials, scalar chain.
    let mut rc = [0.0f64; 10];
    let mut drc = [[0.0f64; 10]; 4];
    let mut d2rc = [[0.0f64; 10]; 10];
    for (s, &(j, k)) in SYM_PAIRS.iter().enumerate() {
        let mut v = 0.0;
        for i in 0..4 {
            for l in 0..4 {
                v += gi_m[i][l] * pair_sym_get(&rm, i, j, k, l);
            }
        }
        rc[s] = v;
        for a in 0..4 {
            let mut v = 0.0;
            for i in 0..4 {
                for l in 0..4 {
                    v += dgi_m[a][i][l] * pair_sym_get(&rm, i, j, k, l)
                        + gi_m[i][l] * pair_sym_get(&drm[a], i, j, k, l);
                }
            }
            drc[a][s] = v;
        }
        for (ab, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            let d2gi_m = algebra::unpack_sym(&d2gi[ab]);
            let mut v = 0.0;
            for i in 0..4 {
                for l in 0..4 {
                    v += d2gi_m[i][l] * pair_sym_get(&rm, i, j, k, l)
                        + dgi_m[a][i][l] * pair_sym_get(&drm[b], i, j, k, l)
                        + dgi_m[b][i][l] * pair_sym_get(&drm[a], i, j, k, l)
                        + gi_m[i][l] * pair_sym_get(&d2rm[ab], i, j, k, l);
                }
            }
            d2rc[ab][s] = v;
        }
    }
    let mut scalar = 0.0;
    for s in 0..10 {
        scalar += SYM_MULT[s] * gi[s] * rc[s];
    }
    let mut dscalar = [0.0f64; 4];
    for a in 0..4 {
        let mut v = 0.0;
        for s in 0..10 {
            v += SYM_MULT[s] * (dgi[a][s] * rc[s] + gi[s] * drc[a][s]);
        }
        dscalar[a] = v;
    }
    let mut d2scalar = [0.0f64; 10];
    for (ab, &(a, b)) in SYM_PAIRS.iter().enumerate() {
        let mut v = 0.0;
        for s in 0..10 {
            v += SYM_MULT[s]
                * (d2gi[ab][s] * rc[s]
                    + dgi[a][s] * drc[b][s]
                    + dgi[b][s] * drc[a][s]
                    + gi[s] * d2rc[ab][s]);
        }
        d2scalar[ab] = v;
    }
    // Rough Laplacian of the curvature scalar: g^{ab}(d_a d_b R - G2^c_{ab} d_c R).
    let mut lap_scalar = 0.0;
    for (s, _) in SYM_PAIRS.iter().enumerate() {
        let mut hess = d2scalar[s];
        for c in 0..4 {
            hess -= gamma2[c][s] * dscalar[c];
        }
        lap_scalar += SYM_MULT[s] * gi[s] * hess;
    }

    // Trace-adjusted Ricci A = (Rc - R g/6)/2 and partials.
    let mut aa = [0.0f64; 10];
    let mut daa = [[0.0f64; 10]; 4];
    let mut d2aa = [[0.0f64; 10]; 10];
    for s in 0..10 {
        aa[s] = 0.5 * (rc[s] - scalar * g[s] / 6.0);
        for a in 0..4 {
            daa[a][s] = 0.5 * (drc[a][s] - (dscalar[a] * g[s] + scalar * d1[a][s]) / 6.0);
        }
        for (ab, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            d2aa[ab][s] = 0.5
                * (d2rc[ab][s]
                    - (d2scalar[ab] * g[s]
                        + dscalar[a] * d1[b][s]
                        + dscalar[b] * d1[a][s]
                        + scalar * d2[ab][s])
                        / 6.0);
        }
    }
    let aa_m = algebra::unpack_sym(&aa);

    // Covariant derivative of A (as jet algebra) and the antisymmetrized
    // combination C_ijk = (grad A)_{k,ij} - (grad A)_{j,ik}.
    let mut nab_a = [[0.0f64; 10]; 4]; // [k][(i,j)]
    for k in 0..4 {
        for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            let mut v = daa[k][s];
            for p in 0..4 {
                v -= gamma2[p][sy(k, i)] * aa_m[p][j] + gamma2[p][sy(k, j)] * aa_m[i][p];
            }
            nab_a[k][s] = v;
        }
    }
    let mut cotton = [[0.0f64; 6]; 4]; // [i][(j<k)]
    for i in 0..4 {
        for (pr, &(j, k)) in ASYM_PAIRS.iter().enumerate() {
            cotton[i][pr] = nab_a[k][sy(i, j)] - nab_a[j][sy(i, k)];
        }
    }
    let mut dnab_a = [[[0.0f64; 10]; 4]; 4]; // [a][k][(i,j)]
    for a in 0..4 {
        for k in 0..4 {
            for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
                let mut v = d2aa[sy(a, k)][s];
                for p in 0..4 {
                    v -= dgamma2[a][p][sy(k, i)] * aa_m[p][j]
                        + gamma2[p][sy(k, i)] * daa[a][sy(p, j)]
                        + dgamma2[a][p][sy(k, j)] * aa_m[i][p]
                        + gamma2[p][sy(k, j)] * daa[a][sy(i, p)];
                }
                dnab_a[a][k][s] = v;
            }
        }
    }

    // Divergence of C on its last slot: (div C)_ij = g^{kl} grad_l C_ijk.
    let mut div_c = [0.0f64; 10];
    for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let mut v = 0.0;
        for k in 0..4 {
            for l in 0..4 {
                let dc = dnab_a[l][k][sy(i, j)] - dnab_a[l][j][sy(i, k)];
                let mut corr = 0.0;
                for p in 0..4 {
                    corr += gamma2[p][sy(l, i)] * asym3_get(&cotton, p, j, k)
                        + gamma2[p][sy(l, j)] * asym3_get(&cotton, i, p, k)
                        + gamma2[p][sy(l, k)] * asym3_get(&cotton, i, j, p);
                }
                v += gi_m[k][l] * (dc - corr);
            }
        }
        div_c[s] = v;
    }

    // Weyl part: W = Rm - A (x) g where
    // (A (x) g)_ijkl = A_il g_jk + A_jk g_il - A_ik g_jl - A_jl g_ik.
    let mut weyl = [0.0f64; 21];
    for (t, &(i, j, k, l)) in CANON21.iter().enumerate() {
        weyl[t] = rm[t]
            - (aa[sy(i, l)] * g[sy(j, k)] + aa[sy(j, k)] * g[sy(i, l)]
                - aa[sy(i, k)] * g[sy(j, l)]
                - aa[sy(j, l)] * g[sy(i, k)]);
    }

    // Obstruction tensor, primary route: B_ij = (div C)_ij + A^{kl} W_{kijl}
    // (sign fixed by the convention note in the crate docs).
    let aa_up = sandwich(&gi_m, &aa_m, &gi_m);
    let mut bach = [0.0f64; 10];
    for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let mut aw = 0.0;
        for k in 0..4 {
            for l in 0..4 {
                aw += aa_up[k][l] * pair_sym_get(&weyl, k, i, j, l);
            }
        }
        bach[s] = div_c[s] + aw;
    }

    // Fourth-order scalar invariant Q = -lapR/6 - |Rc|^2/2 + R^2/6.
    let rc_m = algebra::unpack_sym(&rc);
    let rc_up = sandwich(&gi_m, &rc_m, &gi_m);
    let mut rc_sq = 0.0;
    for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        rc_sq += SYM_MULT[s] * rc_up[i][j] * rc[s];
    }
    let q_scalar = -lap_scalar / 6.0 - 0.5 * rc_sq + scalar * scalar / 6.0;

    let mut adjusted = [0.0f64; 10];
    for s in 0..10 {
        adjusted[s] = bach[s] + lap_scalar / 12.0 * g[s];
    }

    // Alternative obstruction route through second derivatives of W:
    // B_ij = g^{la} g^{kb} grad_a grad_b W_{kijl} + Rc^{kl} W_{kijl} / 2.
    let mut bach_alt = [0.0f64; 10];
    if opts.alternative_bach {
        let mut dweyl = [[0.0f64; 21]; 4];
        let mut d2weyl = [[0.0f64; 21]; 10];
        for (t, &(i, j, k, l)) in CANON21.iter().enumerate() {
            let (il, jk, ik, jl) = (sy(i, l), sy(j, k), sy(i, k), sy(j, l));
            for a in 0..4 {
                let dkn = daa[a][il] * g[jk] + aa[il] * d1[a][jk] + daa[a][jk] * g[il]
                    + aa[jk] * d1[a][il]
                    - daa[a][ik] * g[jl]
                    - aa[ik] * d1[a][jl]
                    - daa[a][jl] * g[ik]
                    - aa[jl] * d1[a][ik];
                dweyl[a][t] = drm[a][t] - dkn;
            }
            for (ab, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                let d2kn = d2aa[ab][il] * g[jk]
                    + daa[a][il] * d1[b][jk]
                    + daa[b][il] * d1[a][jk]
                    + aa[il] * d2[ab][jk]
                    + d2aa[ab][jk] * g[il]
                    + daa[a][jk] * d1[b][il]
                    + daa[b][jk] * d1[a][il]
                    + aa[jk] * d2[ab][il]
                    - d2aa[ab][ik] * g[jl]
                    - daa[a][ik] * d1[b][jl]
                    - daa[b][ik] * d1[a][jl]
                    - aa[ik] * d2[ab][jl]
                    - d2aa[ab][jl] * g[ik]
                    - daa[a][jl] * d1[b][ik]
                    - daa[b][jl] * d1[a][ik]
                    - aa[jl] * d2[ab][ik];
                d2weyl[ab][t] = d2rm[ab][t] - d2kn;
            }
        }
        // First covariant derivative (grad_b W), pair symmetries survive.
        let mut nab_w = [[0.0f64; 21]; 4];
        for b in 0..4 {
            for (t, &(s0, s1, s2, s3)) in CANON21.iter().enumerate() {
                let mut v = dweyl[b][t];
                for p in 0..4 {
                    v -= gamma2[p][sy(b, s0)] * pair_sym_get(&weyl, p, s1, s2, s3)
                        + gamma2[p][sy(b, s1)] * pair_sym_get(&weyl, s0, p, s2, s3)
                        + gamma2[p][sy(b, s2)] * pair_sym_get(&weyl, s0, s1, p, s3)
                        + gamma2[p][sy(b, s3)] * pair_sym_get(&weyl, s0, s1, s2, p);
                }
                nab_w[b][t] = v;
            }
        }
        // Partial of that, then the second covariant derivative.
        let mut nab2_w = [[[0.0f64; 21]; 4]; 4]; // [a][b][t]
        for a in 0..4 {
            for b in 0..4 {
                for (t, &(s0, s1, s2, s3)) in CANON21.iter().enumerate() {
                    let mut v = d2weyl[sy(a, b)][t];
                    for p in 0..4 {
                        v -= dgamma2[a][p][sy(b, s0)] * pair_sym_get(&weyl, p, s1, s2, s3)
                            + gamma2[p][sy(b, s0)] * pair_sym_get(&dweyl[a], p, s1, s2, s3)
                            + dgamma2[a][p][sy(b, s1)] * pair_sym_get(&weyl, s0, p, s2, s3)
                            + gamma2[p][sy(b, s1)] * pair_sym_get(&dweyl[a], s0, p, s2, s3)
                            + dgamma2[a][p][sy(b, s2)] * pair_sym_get(&weyl, s0, s1, p, s3)
                            + gamma2[p][sy(b, s2)] * pair_sym_get(&dweyl[a], s0, s1, p, s3)
                            + dgamma2[a][p][sy(b, s3)] * pair_sym_get(&weyl, s0, s1, s2, p)
                            + gamma2[p][sy(b, s3)] * pair_sym_get(&dweyl[a], s0, s1, s2, p);
                    }
                    // v is now (d_a grad_b W)[t]; subtract the connection
                    // action on the derivative slot and the tensor slots.
                    for p in 0..4 {
                        v -= gamma2[p][sy(a, b)] * nab_w[p][t];
                        v -= gamma2[p][sy(a, s0)] * pair_sym_get(&nab_w[b], p, s1, s2, s3)
                            + gamma2[p][sy(a, s1)] * pair_sym_get(&nab_w[b], s0, p, s2, s3)
                            + gamma2[p][sy(a, s2)] * pair_sym_get(&nab_w[b], s0, s1, p, s3)
                            + gamma2[p][sy(a, s3)] * pair_sym_get(&nab_w[b], s0, s1, s2, p);
                    }
                    nab2_w[a][b][t] = v;
                }
            }
        }
        for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            let mut dd = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    let mut inner = 0.0;
                    for k in 0..4 {
                        for l in 0..4 {
                            inner += gi_m[l][a]
                                * gi_m[k][b]
                                * pair_sym_get(&nab2_w[a][b], k, i, j, l);
                        }
                    }
                    dd += inner;
                }
            }
            let mut rw = 0.0;
            for k in 0..4 {
                for l in 0..4 {
                    rw += rc_up[k][l] * pair_sym_get(&weyl, k, i, j, l);
                }
            }
            bach_alt[s] = dd + 0.5 * rw;
        }
    }

    // Gauge vector: X^k = g^{ij} G2^k_{ij}, W^k = -ΔX^k/4 + g^{ka} d_a R / 12.
    let mut gauge_vector = [0.0f64; 4];
    if opts.gauge_vector {
        let mut xv = [0.0f64; 4];
        let mut dxv = [[0.0f64; 4]; 4]; // [a][k]
        let mut d2xv = [[0.0f64; 4]; 10]; // [(a,b) packed][k]
        for k in 0..4 {
            let mut v = 0.0;
            for s in 0..10 {
                v += SYM_MULT[s] * gi[s] * gamma2[k][s];
            }
            xv[k] = v;
            for a in 0..4 {
                let mut v = 0.0;
                for s in 0..10 {
                    v += SYM_MULT[s] * (dgi[a][s] * gamma2[k][s] + gi[s] * dgamma2[a][k][s]);
                }
                dxv[a][k] = v;
            }
            for (ab, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                let mut v = 0.0;
                for s in 0..10 {
                    v += SYM_MULT[s]
                        * (d2gi[ab][s] * gamma2[k][s]
                            + dgi[a][s] * dgamma2[b][k][s]
                            + dgi[b][s] * dgamma2[a][k][s]
                            + gi[s] * d2gamma2[ab][k][s]);
                }
                d2xv[ab][k] = v;
            }
        }
        let mut nab_x = [[0.0f64; 4]; 4]; // [b][k]
        for b in 0..4 {
            for k in 0..4 {
                let mut v = dxv[b][k];
                for p in 0..4 {
                    v += gamma2[k][sy(b, p)] * xv[p];
                }
                nab_x[b][k] = v;
            }
        }
        let mut lap_x = [0.0f64; 4];
        for a in 0..4 {
            for b in 0..4 {
                for k in 0..4 {
                    let mut v = d2xv[sy(a, b)][k];
                    for p in 0..4 {
                        v += dgamma2[a][k][sy(b, p)] * xv[p] + gamma2[k][sy(b, p)] * dxv[a][p];
                    }
                    // covariant corrections: vector slot plus derivative slot
                    for p in 0..4 {
                        v += gamma2[k][sy(a, p)] * nab_x[b][p];
                        v -= gamma2[p][sy(a, b)] * nab_x[p][k];
                    }
                    lap_x[k] += gi_m[a][b] * v;
                }
            }
        }
        for k in 0..4 {
            let mut grad_r_up = 0.0;
            for a in 0..4 {
                grad_r_up += gi_m[k][a] * dscalar[a];
            }
            gauge_vector[k] = -0.25 * lap_x[k] + grad_r_up / 12.0;
        }
    }

    NodeOut {
        christoffel: gamma2,
        riemann: rm,
        ricci: rc,
        scalar,
        schouten: aa,
        cotton,
        weyl,
        bach,
        lap_scalar,
        q_scalar,
        adjusted,
        bach_alt,
        gauge_vector,
    }
}

/// Partial derivatives of every metric component through order four, stored
/// as component-major planes: within each order the layout is
/// `[multi_index * 10 + metric_component]`.
pub struct JetTables {
    grid: GridSpec,
    d1: Field,
    d2: Field,
    d3: Field,
    d4: Field,
}

impl JetTables {
    pub fn build(g: &Field, p: usize) -> Result<JetTables> {
        if g.ncomp() != 10 {
            return Err(Error::GridMismatch(format!(
                "metric component field has {} components, want 10",
                g.ncomp()
            )));
        }
        let grid = g.grid().clone();
        let mut d1 = Field::zeros(&grid, 40);
        let mut d2 = Field::zeros(&grid, 100);
        let mut d3 = Field::zeros(&grid, 200);
        let mut d4 = Field::zeros(&grid, 350);
        let orders: [(&[[u8; 4]], &mut Field); 4] = [
            (&algebra::D1, &mut d1),
            (&algebra::D2, &mut d2),
            (&algebra::D3, &mut d3),
            (&algebra::D4, &mut d4),
        ];
        for (multis, table) in orders {
            for (m, &alpha) in multis.iter().enumerate() {
                for c in 0..10 {
                    let plane = stencil::partial_derivative_plane(g.comp(c), &grid, alpha, p)?;
                    table.comp_mut(m * 10 + c).copy_from_slice(&plane);
                }
            }
        }
        Ok(JetTables { grid, d1, d2, d3, d4 })
    }

    /// Assemble the jet at one node (metric and inverse supplied by caller).
    pub fn jet_at(&self, g: &MetricField, node: usize) -> NodeJet {
        let mut jet = NodeJet {
            g: g.at(node),
            gi: g.inverse_at(node),
            d1: [[0.0; 10]; 4],
            d2: [[0.0; 10]; 10],
            d3: [[0.0; 10]; 20],
            d4: [[0.0; 10]; 35],
        };
        for m in 0..4 {
            for c in 0..10 {
                jet.d1[m][c] = self.d1.comp(m * 10 + c)[node];
            }
        }
        for m in 0..10 {
            for c in 0..10 {
                jet.d2[m][c] = self.d2.comp(m * 10 + c)[node];
            }
        }
        for m in 0..20 {
            for c in 0..10 {
                jet.d3[m][c] = self.d3.comp(m * 10 + c)[node];
            }
        }
        for m in 0..35 {
            for c in 0..10 {
                jet.d4[m][c] = self.d4.comp(m * 10 + c)[node];
            }
        }
        jet
    }
}

/// All curvature objects of one metric on its grid. Tensor-valued members
/// are packed component fields; see the accessor methods for index decode.
pub struct CurvatureBundle {
    grid: GridSpec,
    pub options: CurvatureOptions,
    /// The metric the bundle was assembled from (with its cached inverse).
    pub metric: MetricField,
    /// G2^k_{ij}: 40 components, `[k * 10 + packed(i,j)]`.
    pub christoffel: Field,
    /// Lowered curvature tensor, 21 pair-symmetric components.
    pub riemann: Field,
    pub ricci: Field,
    pub scalar: Field,
    /// 21 pair-symmetric components.
    pub weyl: Field,
    pub schouten: Field,
    /// C_ijk, antisymmetric in (j,k): 24 components, `[i * 6 + pair(j<k)]`.
    pub cotton: Field,
    pub bach: Field,
    /// The divergence-of-Weyl evaluation of the obstruction tensor, present
    /// when requested.
    pub bach_alt: Option<Field>,
    /// bach + (ΔR/12) g: the ungauged flow right-hand side.
    pub adjusted: Field,
    pub q_scalar: Field,
    pub lap_scalar: Field,
    /// Contravariant gauge vector, present when requested.
    pub gauge_vector: Option<Field>,
}

/// Assemble the full curvature stack of `g`.
pub fn assemble(g: &MetricField, opts: &CurvatureOptions) -> Result<CurvatureBundle> {
    let tables = JetTables::build(g.comps(), opts.accuracy_order)?;
    assemble_from_tables(g, &tables, opts)
}

pub fn assemble_from_tables(
    g: &MetricField,
    tables: &JetTables,
    opts: &CurvatureOptions,
) -> Result<CurvatureBundle> {
    let grid = g.grid().clone();
    grid.same_grid(&tables.grid)?;
    let nnodes = grid.num_nodes();
    let mut christoffel = Field::zeros(&grid, 40);
    let mut riemann = Field::zeros(&grid, 21);
    let mut ricci = Field::zeros(&grid, 10);
    let mut scalar = Field::zeros(&grid, 1);
    let mut weyl = Field::zeros(&grid, 21);
    let mut schouten = Field::zeros(&grid, 10);
    let mut cotton = Field::zeros(&grid, 24);
    let mut bach = Field::zeros(&grid, 10);
    let mut bach_alt = opts.alternative_bach.then(|| Field::zeros(&grid, 10));
    let mut adjusted = Field::zeros(&grid, 10);
    let mut q_scalar = Field::zeros(&grid, 1);
    let mut lap_scalar = Field::zeros(&grid, 1);
    let mut gauge_vector = opts.gauge_vector.then(|| Field::zeros(&grid, 4));

    for node in 0..nnodes {
        let jet = tables.jet_at(g, node);
        let out = node_kernel(&jet, opts);
        for k in 0..4 {
            for s in 0..10 {
                christoffel.comp_mut(k * 10 + s)[node] = out.christoffel[k][s];
            }
        }
        for t in 0..21 {
            riemann.comp_mut(t)[node] = out.riemann[t];
            weyl.comp_mut(t)[node] = out.weyl[t];
        }
        for s in 0..10 {
            ricci.comp_mut(s)[node] = out.ricci[s];
            schouten.comp_mut(s)[node] = out.schouten[s];
            bach.comp_mut(s)[node] = out.bach[s];
            adjusted.comp_mut(s)[node] = out.adjusted[s];
        }
        for i in 0..4 {
            for pr in 0..6 {
                cotton.comp_mut(i * 6 + pr)[node] = out.cotton[i][pr];
            }
        }
        scalar.comp_mut(0)[node] = out.scalar;
        q_scalar.comp_mut(0)[node] = out.q_scalar;
        lap_scalar.comp_mut(0)[node] = out.lap_scalar;
        if let Some(f) = bach_alt.as_mut() {
            for s in 0..10 {
                f.comp_mut(s)[node] = out.bach_alt[s];
            }
        }
        if let Some(f) = gauge_vector.as_mut() {
            for k in 0..4 {
                f.comp_mut(k)[node] = out.gauge_vector[k];
            }
        }
    }

    Ok(CurvatureBundle {
        grid,
        options: *opts,
        metric: g.clone(),
        christoffel,
        riemann,
        ricci,
        scalar,
        weyl,
        schouten,
        cotton,
        bach,
        bach_alt,
        adjusted,
        q_scalar,
        lap_scalar,
        gauge_vector,
    })
}

impl CurvatureBundle {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// The obstruction tensor; in dimension 4 it is the bach field itself.
    pub fn obstruction(&self) -> &Field {
        &self.bach
    }

    fn pair21_at(f: &Field, node: usize) -> [f64; 21] {
        let mut v = [0.0; 21];
        for (t, x) in v.iter_mut().enumerate() {
            *x = f.comp(t)[node];
        }
        v
    }

    pub fn riemann_component(&self, i: usize, j: usize, k: usize, l: usize, node: usize) -> f64 {
        pair_sym_get(&Self::pair21_at(&self.riemann, node), i, j, k, l)
    }

    pub fn weyl_component(&self, i: usize, j: usize, k: usize, l: usize, node: usize) -> f64 {
        pair_sym_get(&Self::pair21_at(&self.weyl, node), i, j, k, l)
    }

    pub fn cotton_component(&self, i: usize, j: usize, k: usize, node: usize) -> f64 {
        let p = PAIR_IDX[j][k];
        if p < 0 {
            return 0.0;
        }
        PAIR_SIGN[j][k] * self.cotton.comp(i * 6 + p as usize)[node]
    }

    pub fn christoffel_component(&self, k: usize, i: usize, j: usize, node: usize) -> f64 {
        self.christoffel.comp(k * 10 + sy(i, j))[node]
    }

    /// Expand a pair-symmetric member to a dense rank-4 covariant field.
    fn dense_rank4(&self, packed: &Field) -> TensorField {
        let mut t = TensorField::zeros(&self.grid, vec![Variance::Co; 4], None).expect("rank 4");
        let nnodes = self.grid.num_nodes();
        for idx in TensorField::full_indices(4) {
            let c = t.comp_of(&idx);
            let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
            let p = PAIR_IDX[i][j];
            let q = PAIR_IDX[k][l];
            if p < 0 || q < 0 {
                continue;
            }
            let s = PAIR_SIGN[i][j] * PAIR_SIGN[k][l];
            let src = packed.comp(TRI21[p as usize][q as usize]);
            let dst = t.field.comp_mut(c);
            for node in 0..nnodes {
                dst[node] = s * src[node];
            }
        }
        t
    }

    pub fn riemann_dense(&self) -> TensorField {
        self.dense_rank4(&self.riemann)
    }

    pub fn weyl_dense(&self) -> TensorField {
        self.dense_rank4(&self.weyl)
    }

    pub fn cotton_dense(&self) -> TensorField {
        let mut t = TensorField::zeros(&self.grid, vec![Variance::Co; 3], None).expect("rank 3");
        let nnodes = self.grid.num_nodes();
        for idx in TensorField::full_indices(3) {
            let (i, j, k) = (idx[0], idx[1], idx[2]);
            let p = PAIR_IDX[j][k];
            if p < 0 {
                continue;
            }
            let c = t.comp_of(&idx);
            let s = PAIR_SIGN[j][k];
            let src = self.cotton.comp(i * 6 + p as usize);
            let dst = t.field.comp_mut(c);
            for node in 0..nnodes {
                dst[node] = s * src[node];
            }
        }
        t
    }

    /// Wrap a packed symmetric rank-2 member as a TensorField view (clone).
    pub fn sym2_tensor(&self, f: &Field) -> TensorField {
        let mut t = TensorField::zeros(&self.grid, vec![Variance::Co; 2], Some((0, 1)))
            .expect("rank 2");
        t.field = f.clone();
        t
    }

    /// Pointwise squared norm |T|^2_g of a packed symmetric rank-2 field,
    /// raising both slots with the inverse metric.
    pub fn sym2_norm_squared(&self, f: &Field) -> Field {
        let nnodes = self.grid.num_nodes();
        let mut out = Field::zeros(&self.grid, 1);
        for node in 0..nnodes {
            let gi_m = algebra::unpack_sym(&self.metric.inverse_at(node));
            let mut t = [0.0f64; 10];
            for (c, slot) in t.iter_mut().enumerate() {
                *slot = f.comp(c)[node];
            }
            let t_m = algebra::unpack_sym(&t);
            let mut sq = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            sq += gi_m[i][k] * gi_m[j][l] * t_m[i][j] * t_m[k][l];
                        }
                    }
                }
            }
            out.comp_mut(0)[node] = sq;
        }
        out
    }

    /// Covariant divergence `(div T)_j = g^{ik} (d_i T_kj - G^p_{ik} T_pj
    /// - G^p_{ij} T_kp)` of a packed symmetric rank-2 covariant field,
    /// using this bundle's connection and stencil accuracy order.
    pub fn sym2_divergence(&self, f: &Field) -> Result<Field> {
        self.grid.same_grid(f.grid())?;
        let p = self.options.accuracy_order;
        let mut partials = Vec::with_capacity(4);
        for a in 0..4 {
            let mut alpha = [0u8; 4];
            alpha[a] = 1;
            partials.push(stencil::partial_derivative(f, alpha, p)?);
        }
        let nnodes = self.grid.num_nodes();
        let mut out = Field::zeros(&self.grid, 4);
        for node in 0..nnodes {
            let gi_m = algebra::unpack_sym(&self.metric.inverse_at(node));
            let mut t = [0.0f64; 10];
            for (c, slot) in t.iter_mut().enumerate() {
                *slot = f.comp(c)[node];
            }
            let mut gamma = [[0.0f64; 10]; 4];
            for k in 0..4 {
                for s in 0..10 {
                    gamma[k][s] = self.christoffel.comp(k * 10 + s)[node];
                }
            }
            for j in 0..4 {
                let mut acc = 0.0;
                for i in 0..4 {
                    for k in 0..4 {
                        let gik = gi_m[i][k];
                        if gik == 0.0 {
                            continue;
                        }
                        let mut cov = partials[i].comp(sy(k, j))[node];
                        for q in 0..4 {
                            cov -= gamma[q][sy(i, k)] * t[sy(q, j)];
                            cov -= gamma[q][sy(i, j)] * t[sy(k, q)];
                        }
                        acc += gik * cov;
                    }
                }
                out.comp_mut(j)[node] = acc;
            }
        }
        Ok(out)
    }

    /// Pointwise trace `g^{ij} T_ij` of a packed symmetric rank-2 covariant
    /// field.
    pub fn sym2_trace(&self, f: &Field) -> Result<Field> {
        self.grid.same_grid(f.grid())?;
        let nnodes = self.grid.num_nodes();
        let mut out = Field::zeros(&self.grid, 1);
        for node in 0..nnodes {
            let gi = self.metric.inverse_at(node);
            let mut acc = 0.0;
            for c in 0..10 {
                acc += SYM_MULT[c] * gi[c] * f.comp(c)[node];
            }
            out.comp_mut(0)[node] = acc;
        }
        Ok(out)
    }

    /// Pointwise squared norm |T|^2_g of a pair-symmetric rank-4 member,
    /// raising every slot with the inverse metric.
    fn pair_sym_norm_squared(&self, packed: &Field) -> Field {
        let nnodes = self.grid.num_nodes();
        let mut out = Field::zeros(&self.grid, 1);
        for node in 0..nnodes {
            let v = Self::pair21_at(packed, node);
            let gi_m = algebra::unpack_sym(&self.metric.inverse_at(node));
            // dense, then raise one slot at a time
            let mut dense = [0.0f64; 256];
            for (f, d) in dense.iter_mut().enumerate() {
                let (i, j, k, l) = (f >> 6 & 3, f >> 4 & 3, f >> 2 & 3, f & 3);
                *d = pair_sym_get(&v, i, j, k, l);
            }
            let orig = dense;
            let mut tmp = [0.0f64; 256];
            for slot in 0..4 {
                let stride = 1usize << (2 * (3 - slot));
                for f in 0..256 {
                    let i = (f / stride) % 4;
                    let base = f - i * stride;
                    let mut acc = 0.0;
                    for m in 0..4 {
                        acc += gi_m[i][m] * dense[base + m * stride];
                    }
                    tmp[f] = acc;
                }
                dense = tmp;
            }
            let mut sq = 0.0;
            for f in 0..256 {
                sq += orig[f] * dense[f];
            }
            out.comp_mut(0)[node] = sq;
        }
        out
    }

    pub fn riemann_norm_squared(&self) -> Field {
        self.pair_sym_norm_squared(&self.riemann)
    }

    pub fn weyl_norm_squared(&self) -> Field {
        self.pair_sym_norm_squared(&self.weyl)
    }

    pub fn riemann_sup_norm(&self) -> f64 {
        self.riemann_norm_squared()
            .comp(0)
            .iter()
            .fold(0.0f64, |m, &v| m.max(v))
            .max(0.0)
            .sqrt()
    }

    /// Covariant derivative of a tensor field with this bundle's connection.
    /// The derivative slot is prepended: (out)_{a, I} = grad_a T_I.
    pub fn covariant_derivative(&self, t: &TensorField) -> Result<TensorField> {
        let rank = t.rank();
        if rank > 6 {
            return Err(Error::RankRange { rank, op: "covariant_derivative", max: 6 });
        }
        self.grid.same_grid(t.grid())?;
        let mut variance = vec![Variance::Co];
        variance.extend_from_slice(t.variance());
        let sym = t.sym().map(|(a, b)| (a + 1, b + 1));
        let mut out = TensorField::zeros(&self.grid, variance, sym)?;
        let nnodes = self.grid.num_nodes();
        let p = self.options.accuracy_order;

        let mut done = vec![false; out.field.ncomp()];
        let mut full = vec![0usize; rank + 1];
        for a in 0..4 {
            full[0] = a;
            for idx in TensorField::full_indices(rank) {
                full[1..].copy_from_slice(&idx);
                let oc = out.comp_of(&full);
                if done[oc] {
                    continue;
                }
                done[oc] = true;
                let tc = t.comp_of(&idx);
                let mut alpha: MultiIndex = [0; 4];
                alpha[a] = 1;
                let plane = stencil::partial_derivative_plane(t.field.comp(tc), &self.grid, alpha, p)?;
                out.field.comp_mut(oc).copy_from_slice(&plane);
                // connection corrections, one per tensor slot
                let mut swapped = idx.clone();
                for slot in 0..rank {
                    let orig = idx[slot];
                    for m in 0..4 {
                        swapped[slot] = m;
                        let sc = t.comp_of(&swapped);
                        let src = t.field.comp(sc);
                        let gamma_c = match t.variance()[slot] {
                            Variance::Co => self.christoffel.comp(m * 10 + sy(a, orig)),
                            Variance::Contra => self.christoffel.comp(orig * 10 + sy(a, m)),
                        };
                        let sign = match t.variance()[slot] {
                            Variance::Co => -1.0,
                            Variance::Contra => 1.0,
                        };
                        let dst = out.field.comp_mut(oc);
                        for node in 0..nnodes {
                            dst[node] += sign * gamma_c[node] * src[node];
                        }
                    }
                    swapped[slot] = orig;
                }
            }
        }
        Ok(out)
    }

    /// Rough Laplacian g^{ab} grad_a grad_b T.
    pub fn laplacian(&self, t: &TensorField) -> Result<TensorField> {
        let rank = t.rank();
        if rank > 3 {
            return Err(Error::RankRange { rank, op: "laplacian", max: 3 });
        }
        let hess = self.covariant_derivative(&self.covariant_derivative(t)?)?;
        hess.contract(0, 1, &self.metric)
    }

    /// Sup and L2 norms of grad^j Rm for j = 0..m, plus the comparison field
    /// sum_{j=1..m} |grad^j Rm|^{2/(j+2)}.
    pub fn high_derivative_norms(&self, m: usize) -> Result<DerivativeNorms> {
        if m > 3 {
            return Err(Error::RankRange { rank: m, op: "high_derivative_norms", max: 3 });
        }
        let mut sup = Vec::with_capacity(m + 1);
        let mut l2 = Vec::with_capacity(m + 1);
        let mut f_m = Field::zeros(&self.grid, 1);
        let mut cur = self.riemann_dense();
        for j in 0..=m {
            let norms = cur.norms(&self.metric)?;
            sup.push(norms.sup);
            l2.push(norms.l2);
            if j >= 1 {
                let e = 2.0 / (j as f64 + 2.0);
                let src = norms.pointwise.comp(0);
                let dst = f_m.comp_mut(0);
                for node in 0..self.grid.num_nodes() {
                    dst[node] += src[node].powf(e);
                }
            }
            if j < m {
                cur = self.covariant_derivative(&cur)?;
            }
        }
        Ok(DerivativeNorms { sup, l2, f_m })
    }
}

pub struct DerivativeNorms {
    /// sup |grad^j Rm|, j = 0..=m.
    pub sup: Vec<f64>,
    /// L2 norms in the curved measure, j = 0..=m.
    pub l2: Vec<f64>,
    /// Pointwise sum_{j>=1} |grad^j Rm|^{2/(j+2)}.
    pub f_m: Field,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TWO_PI;
    use crate::seeded;

    fn flat(grid: &GridSpec) -> MetricField {
        MetricField::identity(grid)
    }

    #[test]
    fn flat_metric_everything_vanishes() {
        let grid = GridSpec::cubic([8, 8, 1, 1]).unwrap();
        let b = assemble(
            &flat(&grid),
            &CurvatureOptions { alternative_bach: true, gauge_vector: true, ..Default::default() },
        )
        .unwrap();
        for f in [
            &b.christoffel,
            &b.riemann,
            &b.ricci,
            &b.scalar,
            &b.weyl,
            &b.schouten,
            &b.cotton,
            &b.bach,
            &b.adjusted,
            &b.q_scalar,
            &b.lap_scalar,
            b.bach_alt.as_ref().unwrap(),
            b.gauge_vector.as_ref().unwrap(),
        ] {
            // stencil weights individually round, so their sum over a
            // constant is ~1e-16 rather than exactly zero, and the k=4
            // stencils divide that residue by h^4
            assert!(f.max_abs() < 1e-12, "sup {:.3e}", f.max_abs());
        }
    }

    #[test]
    fn constant_conformal_flat_stays_flat() {
        let grid = GridSpec::cubic([8, 8, 1, 1]).unwrap();
        let mut s = [0.0; 10];
        for d in 0..4 {
            s[sy(d, d)] = 3.7;
        }
        let g = MetricField::constant(&grid, s);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        assert!(b.riemann.max_abs() < 1e-12);
        assert!(b.bach.max_abs() < 1e-12);
    }

    fn random_metric(grid: &GridSpec, amp: f64, seed: u64) -> MetricField {
        seeded::random_metric(grid, 2, amp, 3, seed).unwrap()
    }

    #[test]
    fn schouten_trace_is_scalar_over_six() {
        let grid = GridSpec::cubic([10, 8, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.05, 7);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        for node in 0..grid.num_nodes() {
            let gi = algebra::unpack_sym(&g.inverse_at(node));
            let mut tr = 0.0;
            for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
                tr += SYM_MULT[s] * gi[i][j] * b.schouten.comp(s)[node];
            }
            let want = b.scalar.comp(0)[node] / 6.0;
            assert!((tr - want).abs() < 1e-12 * (1.0 + want.abs()), "{tr} vs {want}");
        }
    }

    #[test]
    fn riemann_first_bianchi_at_rounding() {
        let grid = GridSpec::cubic([10, 8, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.08, 11);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        let scale = b.riemann.max_abs().max(1e-30);
        for node in (0..grid.num_nodes()).step_by(7) {
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            let s = b.riemann_component(i, j, k, l, node)
                                + b.riemann_component(j, k, i, l, node)
                                + b.riemann_component(k, i, j, l, node);
                            assert!(s.abs() < 1e-12 * scale, "bianchi {s:.3e}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn weyl_totally_trace_free_at_rounding() {
        let grid = GridSpec::cubic([10, 8, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.08, 13);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        let scale = b.weyl.max_abs().max(1e-30);
        for node in (0..grid.num_nodes()).step_by(11) {
            let gi = algebra::unpack_sym(&g.inverse_at(node));
            // trace over slots (0,2): g^{ik} W_ijkl; the other traces follow
            // from the pair symmetries.
            for j in 0..4 {
                for l in 0..4 {
                    let mut tr = 0.0;
                    for i in 0..4 {
                        for k in 0..4 {
                            tr += gi[i][k] * b.weyl_component(i, j, k, l, node);
                        }
                    }
                    assert!(tr.abs() < 1e-12 * scale, "weyl trace {tr:.3e}");
                }
            }
        }
    }

    #[test]
    fn obstruction_trace_free_at_rounding() {
        let grid = GridSpec::cubic([10, 8, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.08, 17);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        let scale = b.bach.max_abs().max(1e-30);
        for node in 0..grid.num_nodes() {
            let gi = algebra::unpack_sym(&g.inverse_at(node));
            let mut tr = 0.0;
            for (s, &(i, j)) in SYM_PAIRS.iter().enumerate() {
                tr += SYM_MULT[s] * gi[i][j] * b.bach.comp(s)[node];
            }
            assert!(tr.abs() < 1e-11 * scale, "tr O = {tr:.3e}, scale {scale:.3e}");
        }
    }

    #[test]
    fn both_obstruction_routes_agree_at_rounding() {
        let grid = GridSpec::cubic([10, 8, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.06, 19);
        let b = assemble(
            &g,
            &CurvatureOptions { alternative_bach: true, ..Default::default() },
        )
        .unwrap();
        let alt = b.bach_alt.as_ref().unwrap();
        let scale = b.bach.max_abs().max(1e-30);
        for s in 0..10 {
            for node in 0..grid.num_nodes() {
                let d = (b.bach.comp(s)[node] - alt.comp(s)[node]).abs();
                assert!(d < 1e-11 * scale, "route mismatch {d:.3e} vs scale {scale:.3e}");
            }
        }
    }

    #[test]
    fn conformal_factor_q_matches_biharmonic_oracle() {
        // For g = e^{2u} delta the scalar invariant reduces to
        // e^{-4u} Delta^2 u with the flat Laplacian; agreement improves at
        // the stencil order under refinement.
        let mut errs = Vec::new();
        for n in [12usize, 24] {
            let grid = GridSpec::cubic([n, n, 1, 1]).unwrap();
            let mut comps = Field::zeros(&grid, 10);
            let u = |x: [f64; 4]| 0.05 * (x[0]).sin() + 0.03 * (x[1]).cos();
            for d in 0..4 {
                comps.fill_comp(sy(d, d), |x| (2.0 * u(x)).exp());
            }
            let g = MetricField::new(comps).unwrap();
            let b = assemble(&g, &CurvatureOptions::default()).unwrap();
            let mut uf = Field::zeros(&grid, 1);
            uf.fill_comp(0, u);
            // flat bilaplacian via the same stencils
            let mut lap = Field::zeros(&grid, 1);
            for a in 0..4 {
                let mut alpha: MultiIndex = [0; 4];
                alpha[a] = 2;
                let d2 = stencil::partial_derivative(&uf, alpha, 4).unwrap();
                lap = lap.axpy(1.0, &d2);
            }
            let mut lap2 = Field::zeros(&grid, 1);
            for a in 0..4 {
                let mut alpha: MultiIndex = [0; 4];
                alpha[a] = 2;
                let d2 = stencil::partial_derivative(&lap, alpha, 4).unwrap();
                lap2 = lap2.axpy(1.0, &d2);
            }
            let mut err = 0.0f64;
            for node in 0..grid.num_nodes() {
                let x = grid.position(grid.node_coords(node));
                let want = (-4.0 * u(x)).exp() * lap2.comp(0)[node];
                err = err.max((b.q_scalar.comp(0)[node] - want).abs());
            }
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.5, "errs {errs:?}, order {order:.2}");
        assert!(errs[1] < 1e-4, "N=24 err {:.3e}", errs[1]);
    }

    #[test]
    fn conformal_image_of_flat_has_rounding_level_weyl() {
        let grid = GridSpec::cubic([12, 12, 1, 1]).unwrap();
        let mut comps = Field::zeros(&grid, 10);
        for d in 0..4 {
            comps.fill_comp(sy(d, d), |x| (0.2 * x[0].sin()).exp());
        }
        let g = MetricField::new(comps).unwrap();
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        // Weyl of a conformally flat metric vanishes identically; the jet
        // chain reproduces that at discretization (not rounding) level
        // because the exponential is sampled, not exact. Order check is in
        // the acceptance suite; here a loose absolute bound.
        assert!(b.weyl.max_abs() < 5e-4, "weyl sup {:.3e}", b.weyl.max_abs());
        assert!(b.riemann.max_abs() > 1e-2); // but the metric is genuinely curved
    }

    #[test]
    fn scaling_law_for_obstruction() {
        let grid = GridSpec::cubic([10, 8, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.06, 23);
        let b1 = assemble(&g, &CurvatureOptions::default()).unwrap();
        for lambda in [0.5, 2.0, 7.0] {
            let scaled = MetricField::new(g.comps().scale(lambda)).unwrap();
            let b2 = assemble(&scaled, &CurvatureOptions::default()).unwrap();
            let scale = b1.bach.max_abs();
            for s in 0..10 {
                for node in 0..grid.num_nodes() {
                    let want = b1.bach.comp(s)[node] / lambda;
                    let got = b2.bach.comp(s)[node];
                    assert!(
                        (want - got).abs() < 1e-10 * scale,
                        "lambda={lambda}: {want} vs {got}"
                    );
                }
            }
        }
    }

    #[test]
    fn metric_compatibility() {
        let grid = GridSpec::cubic([10, 8, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.07, 29);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        let nab_g = b.covariant_derivative(&g.as_tensor()).unwrap();
        assert!(nab_g.field.max_abs() < 1e-13, "sup {:.3e}", nab_g.field.max_abs());
    }

    #[test]
    fn scalar_covariant_derivative_is_plain_partial() {
        let grid = GridSpec::cubic([12, 1, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.05, 31);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        let mut f = TensorField::scalar(&grid);
        f.field.fill_comp(0, |x| (2.0 * x[0]).sin());
        let grad = b.covariant_derivative(&f).unwrap();
        let want = stencil::partial_derivative(&f.field, [1, 0, 0, 0], 4).unwrap();
        for node in 0..grid.num_nodes() {
            assert_eq!(grad.value(&[0], node), want.comp(0)[node]);
        }
    }

    #[test]
    fn scalar_hessian_is_torsion_free() {
        let grid = GridSpec::cubic([12, 10, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.06, 37);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        let mut f = TensorField::scalar(&grid);
        f.field.fill_comp(0, |x| (x[0] + 0.5 * x[1]).sin());
        let hess = b.covariant_derivative(&b.covariant_derivative(&f).unwrap()).unwrap();
        let scale = hess.field.max_abs();
        for node in 0..grid.num_nodes() {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let d = hess.value(&[i, j], node) - hess.value(&[j, i], node);
                    assert!(d.abs() < 1e-12 * scale, "{d:.3e}");
                }
            }
        }
    }

    #[test]
    fn flat_laplacian_of_sine() {
        let grid = GridSpec::cubic([24, 1, 1, 1]).unwrap();
        let g = flat(&grid);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        let mut f = TensorField::scalar(&grid);
        f.field.fill_comp(0, |x| x[0].sin());
        let lap = b.laplacian(&f).unwrap();
        let h = grid.spacing(0);
        for node in 0..grid.num_nodes() {
            let x = grid.position(grid.node_coords(node));
            let want = -x[0].sin();
            assert!(
                (lap.value(&[], node) - want).abs() < 2.0 * h.powi(4),
                "{} vs {}",
                lap.value(&[], node),
                want
            );
        }
    }

    #[test]
    fn derivative_norms_scale_linearly_in_amplitude() {
        let grid = GridSpec::cubic([32, 1, 1, 1]).unwrap();
        let make = |eps: f64, k: f64| {
            let mut comps = Field::zeros(&grid, 10);
            for d in 0..4 {
                comps.fill_comp(sy(d, d), |_| 1.0);
            }
            comps.fill_comp(sy(1, 1), |x| 1.0 + eps * (k * x[0]).sin());
            MetricField::new(comps).unwrap()
        };
        let norm = |eps: f64, k: f64| {
            let b = assemble(&make(eps, k), &CurvatureOptions::default()).unwrap();
            b.high_derivative_norms(1).unwrap().sup[1]
        };
        let n1 = norm(1e-6, 2.0);
        let n2 = norm(2e-6, 2.0);
        assert!((n2 / n1 - 2.0).abs() < 1e-3, "amplitude ratio {}", n2 / n1);
        // leading order |grad Rm| ~ eps k^3 / 2: doubling k scales by 8
        let n4 = norm(1e-6, 4.0);
        assert!((n4 / n1 - 8.0).abs() < 0.5, "k ratio {}", n4 / n1);
    }

    #[test]
    fn f_m_field_matches_manual_sum() {
        let grid = GridSpec::cubic([16, 1, 1, 1]).unwrap();
        let g = random_metric(&grid, 0.05, 41);
        let b = assemble(&g, &CurvatureOptions::default()).unwrap();
        let dn = b.high_derivative_norms(2).unwrap();
        let rm = b.riemann_dense();
        let n1 = b.covariant_derivative(&rm).unwrap().norms(&g).unwrap();
        let n2 = b
            .covariant_derivative(&b.covariant_derivative(&rm).unwrap())
            .unwrap()
            .norms(&g)
            .unwrap();
        for node in 0..grid.num_nodes() {
            let want = n1.pointwise.comp(0)[node].powf(2.0 / 3.0)
                + n2.pointwise.comp(0)[node].powf(0.5);
            assert!((dn.f_m.comp(0)[node] - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
        assert_eq!(dn.sup.len(), 3);
        assert!((dn.sup[1] - n1.sup).abs() < 1e-15 * (1.0 + n1.sup));
    }

    #[test]
    fn volume_of_flat_is_full_torus() {
        // a 6-node axis only fits the order-2 stencils (footprint 5)
        let grid = GridSpec::cubic([6, 6, 1, 1]).unwrap();
        let g = flat(&grid);
        let b = assemble(&g, &CurvatureOptions { accuracy_order: 2, ..Default::default() }).unwrap();
        let mut one = Field::zeros(&grid, 1);
        one.comp_mut(0).fill(1.0);
        let v = crate::tensor::integrate_scalar(&one, &b.metric).unwrap();
        assert!((v - TWO_PI.powi(4)).abs() < 1e-9);
    }

    #[test]
    fn pair_sym_storage_decode() {
        let mut v = [0.0; 21];
        v[TRI21[0][3] as usize] = 2.5; // pairs (0,1) and (1,2)
        assert_eq!(pair_sym_get(&v, 0, 1, 1, 2), 2.5);
        assert_eq!(pair_sym_get(&v, 1, 0, 1, 2), -2.5);
        assert_eq!(pair_sym_get(&v, 0, 1, 2, 1), -2.5);
        assert_eq!(pair_sym_get(&v, 1, 2, 0, 1), 2.5); // pair swap
        assert_eq!(pair_sym_get(&v, 0, 0, 1, 2), 0.0); // diagonal
    }
}
