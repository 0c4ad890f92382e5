//! Longhand reference evaluation of the curvature stack.
//!
//! This module exists to catch index-bookkeeping mistakes in the packed
//! production kernel. Everything here is written in the most literal way
//! possible: dense rank-4 arrays, quadruple index loops, no symmetry
//! exploitation, no canonical component tricks, every chain-rule term spelled
//! out. It consumes the same finite-difference stencils (so the two paths
//! share their discretization and must agree to rounding) but performs all
//! tensor algebra independently. It is slow and memory-hungry by design; use
//! it on small grids.

use crate::algebra::inv4;
use crate::grid::{Field, GridSpec};
use crate::stencil::{self, MultiIndex};
use crate::tensor::MetricField;
use crate::Result;

type M2 = [[f64; 4]; 4];
type M3c = [[[f64; 4]; 4]; 4];
type M4c = [[[[f64; 4]; 4]; 4]; 4];

/// Dense per-quantity storage, component-major: `data[flat_component * num_nodes + node]`
/// with row-major flat component index over all 4^rank tuples.
pub struct ReferenceBundle {
    pub num_nodes: usize,
    /// Gamma^k_ij at flat index (k*4+i)*4+j.
    pub christoffel: Vec<f64>,
    pub riemann: Vec<f64>,
    pub ricci: Vec<f64>,
    pub scalar: Vec<f64>,
    pub schouten: Vec<f64>,
    pub cotton: Vec<f64>,
    pub weyl: Vec<f64>,
    pub bach: Vec<f64>,
    pub bach_alt: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub q_scalar: Vec<f64>,
    pub lap_scalar: Vec<f64>,
    pub gauge_vector: Vec<f64>,
}

struct Tables {
    /// d1[a] -> 16-component dense plane field of d_a g_ij
    d1: Vec<Field>,
    d2: Vec<Vec<Field>>,
    d3: Vec<Vec<Vec<Field>>>,
    d4: Vec<Vec<Vec<Vec<Field>>>>,
}

fn dense_metric_field(g: &MetricField) -> Field {
    let grid = g.grid();
    let mut f = Field::zeros(grid, 16);
    for node in 0..grid.num_nodes() {
        let s = g.at(node);
        let m = crate::algebra::unpack_sym(&s);
        for i in 0..4 {
            for j in 0..4 {
                f.comp_mut(i * 4 + j)[node] = m[i][j];
            }
        }
    }
    f
}

fn diff_all(gf: &Field, grid: &GridSpec, alpha: MultiIndex, p: usize) -> Result<Field> {
    let mut out = Field::zeros(grid, 16);
    for c in 0..16 {
        let plane = stencil::partial_derivative_plane(gf.comp(c), grid, alpha, p)?;
        out.comp_mut(c).copy_from_slice(&plane);
    }
    Ok(out)
}

fn build_tables(gf: &Field, grid: &GridSpec, p: usize) -> Result<Tables> {
    let mut d1 = Vec::new();
    for a in 0..4 {
        let mut alpha: MultiIndex = [0; 4];
        alpha[a] += 1;
        d1.push(diff_all(gf, grid, alpha, p)?);
    }
    let mut d2 = Vec::new();
    for a in 0..4 {
        let mut row = Vec::new();
        for b in 0..4 {
            let mut alpha: MultiIndex = [0; 4];
            alpha[a] += 1;
            alpha[b] += 1;
            row.push(diff_all(gf, grid, alpha, p)?);
        }
        d2.push(row);
    }
    let mut d3 = Vec::new();
    for a in 0..4 {
        let mut plane = Vec::new();
        for b in 0..4 {
            let mut row = Vec::new();
            for c in 0..4 {
                let mut alpha: MultiIndex = [0; 4];
                alpha[a] += 1;
                alpha[b] += 1;
                alpha[c] += 1;
                row.push(diff_all(gf, grid, alpha, p)?);
            }
            plane.push(row);
        }
        d3.push(plane);
    }
    let mut d4 = Vec::new();
    for a in 0..4 {
        let mut cube = Vec::new();
        for b in 0..4 {
            let mut plane = Vec::new();
            for c in 0..4 {
                let mut row = Vec::new();
                for d in 0..4 {
                    let mut alpha: MultiIndex = [0; 4];
                    alpha[a] += 1;
                    alpha[b] += 1;
                    alpha[c] += 1;
                    alpha[d] += 1;
                    row.push(diff_all(gf, grid, alpha, p)?);
                }
                plane.push(row);
            }
            cube.push(plane);
        }
        d4.push(cube);
    }
    Ok(Tables { d1, d2, d3, d4 })
}

fn mat_at(f: &Field, node: usize) -> M2 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = f.comp(i * 4 + j)[node];
        }
    }
    m
}

pub fn assemble_reference(g: &MetricField, p: usize) -> Result<ReferenceBundle> {
    let grid = g.grid().clone();
    let nn = grid.num_nodes();
    let gf = dense_metric_field(g);
    let tab = build_tables(&gf, &grid, p)?;

    let mut out = ReferenceBundle {
        num_nodes: nn,
        christoffel: vec![0.0; 64 * nn],
        riemann: vec![0.0; 256 * nn],
        ricci: vec![0.0; 16 * nn],
        scalar: vec![0.0; nn],
        schouten: vec![0.0; 16 * nn],
        cotton: vec![0.0; 64 * nn],
        weyl: vec![0.0; 256 * nn],
        bach: vec![0.0; 16 * nn],
        bach_alt: vec![0.0; 16 * nn],
        adjusted: vec![0.0; 16 * nn],
        q_scalar: vec![0.0; nn],
        lap_scalar: vec![0.0; nn],
        gauge_vector: vec![0.0; 4 * nn],
    };

    for node in 0..nn {
        // gather the dense jet
        let gm = mat_at(&gf, node);
        let gi = inv4(&gm);
        let mut d1g = [[[0.0f64; 4]; 4]; 4]; // [a][i][j]
        let mut d2g = [[[[0.0f64; 4]; 4]; 4]; 4]; // [a][b][i][j]
        let mut d3g = [[[[[0.0f64; 4]; 4]; 4]; 4]; 4];
        let mut d4g = [[[[[[0.0f64; 4]; 4]; 4]; 4]; 4]; 4];
        for a in 0..4 {
            d1g[a] = mat_at(&tab.d1[a], node);
            for b in 0..4 {
                d2g[a][b] = mat_at(&tab.d2[a][b], node);
                for c in 0..4 {
                    d3g[a][b][c] = mat_at(&tab.d3[a][b][c], node);
                    for d in 0..4 {
                        d4g[a][b][c][d] = mat_at(&tab.d4[a][b][c][d], node);
                    }
                }
            }
        }

        // inverse-metric derivatives
        let mut dgi = [[[0.0f64; 4]; 4]; 4];
        for a in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let mut v = 0.0;
                    for m in 0..4 {
                        for q in 0..4 {
                            v -= gi[i][m] * d1g[a][m][q] * gi[q][j];
                        }
                    }
                    dgi[a][i][j] = v;
                }
            }
        }
        let mut d2gi = [[[[0.0f64; 4]; 4]; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                for i in 0..4 {
                    for j in 0..4 {
                        let mut v = 0.0;
                        for m in 0..4 {
                            for q in 0..4 {
                                v -= dgi[b][i][m] * d1g[a][m][q] * gi[q][j]
                                    + gi[i][m] * d2g[a][b][m][q] * gi[q][j]
                                    + gi[i][m] * d1g[a][m][q] * dgi[b][q][j];
                            }
                        }
                        d2gi[a][b][i][j] = v;
                    }
                }
            }
        }

        // Christoffel symbols of both kinds, with first and second partials
        let mut g1 = [[[0.0f64; 4]; 4]; 4]; // [m][i][j]
        for m in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    g1[m][i][j] = 0.5 * (d1g[i][j][m] + d1g[j][i][m] - d1g[m][i][j]);
                }
            }
        }
        let mut dg1 = [[[[0.0f64; 4]; 4]; 4]; 4]; // [a][m][i][j]
        for a in 0..4 {
            for m in 0..4 {
                for i in 0..4 {
                    for j in 0..4 {
                        dg1[a][m][i][j] =
                            0.5 * (d2g[a][i][j][m] + d2g[a][j][i][m] - d2g[a][m][i][j]);
                    }
                }
            }
        }
        let mut d2g1 = [[[[[0.0f64; 4]; 4]; 4]; 4]; 4]; // [a][b][m][i][j]
        for a in 0..4 {
            for b in 0..4 {
                for m in 0..4 {
                    for i in 0..4 {
                        for j in 0..4 {
                            d2g1[a][b][m][i][j] = 0.5
                                * (d3g[a][b][i][j][m] + d3g[a][b][j][i][m]
                                    - d3g[a][b][m][i][j]);
                        }
                    }
                }
            }
        }
        let mut g2 = [[[0.0f64; 4]; 4]; 4]; // [k][i][j]
        let mut dg2 = [[[[0.0f64; 4]; 4]; 4]; 4];
        let mut d2g2 = [[[[[0.0f64; 4]; 4]; 4]; 4]; 4];
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let mut v = 0.0;
                    for m in 0..4 {
                        v += gi[k][m] * g1[m][i][j];
                    }
                    g2[k][i][j] = v;
                    for a in 0..4 {
                        let mut v = 0.0;
                        for m in 0..4 {
                            v += dgi[a][k][m] * g1[m][i][j] + gi[k][m] * dg1[a][m][i][j];
                        }
                        dg2[a][k][i][j] = v;
                    }
                    for a in 0..4 {
                        for b in 0..4 {
                            let mut v = 0.0;
                            for m in 0..4 {
                                v += d2gi[a][b][k][m] * g1[m][i][j]
                                    + dgi[a][k][m] * dg1[b][m][i][j]
                                    + dgi[b][k][m] * dg1[a][m][i][j]
                                    + gi[k][m] * d2g1[a][b][m][i][j];
                            }
                            d2g2[a][b][k][i][j] = v;
                        }
                    }
                }
            }
        }

        // Riemann and its two partials
        let mut rm = [[[[0.0f64; 4]; 4]; 4]; 4];
        let mut drm = [[[[[0.0f64; 4]; 4]; 4]; 4]; 4]; // [a][i][j][k][l]
        let mut d2rm = vec![[[[[0.0f64; 4]; 4]; 4]; 4]; 16]; // [(a*4+b)][i][j][k][l]
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let mut v = 0.5
                            * (d2g[i][k][j][l] + d2g[j][l][i][k]
                                - d2g[i][l][j][k]
                                - d2g[j][k][i][l]);
                        for m in 0..4 {
                            v += g2[m][i][k] * g1[m][j][l] - g2[m][i][l] * g1[m][j][k];
                        }
                        rm[i][j][k][l] = v;
                        for a in 0..4 {
                            let mut v = 0.5
                                * (d3g[a][i][k][j][l] + d3g[a][j][l][i][k]
                                    - d3g[a][i][l][j][k]
                                    - d3g[a][j][k][i][l]);
                            for m in 0..4 {
                                v += dg2[a][m][i][k] * g1[m][j][l]
                                    + g2[m][i][k] * dg1[a][m][j][l]
                                    - dg2[a][m][i][l] * g1[m][j][k]
                                    - g2[m][i][l] * dg1[a][m][j][k];
                            }
                            drm[a][i][j][k][l] = v;
                        }
                        for a in 0..4 {
                            for b in 0..4 {
                                let mut v = 0.5
                                    * (d4g[a][b][i][k][j][l] + d4g[a][b][j][l][i][k]
                                        - d4g[a][b][i][l][j][k]
                                        - d4g[a][b][j][k][i][l]);
                                for m in 0..4 {
                                    v += d2g2[a][b][m][i][k] * g1[m][j][l]
                                        + dg2[a][m][i][k] * dg1[b][m][j][l]
                                        + dg2[b][m][i][k] * dg1[a][m][j][l]
                                        + g2[m][i][k] * d2g1[a][b][m][j][l]
                                        - d2g2[a][b][m][i][l] * g1[m][j][k]
                                        - dg2[a][m][i][l] * dg1[b][m][j][k]
                                        - dg2[b][m][i][l] * dg1[a][m][j][k]
                                        - g2[m][i][l] * d2g1[a][b][m][j][k];
                                }
                                d2rm[a * 4 + b][i][j][k][l] = v;
                            }
                        }
                    }
                }
            }
        }

        // Ricci chain
        let mut rc = [[0.0f64; 4]; 4];
        let mut drc = [[[0.0f64; 4]; 4]; 4];
        let mut d2rc = [[[[0.0f64; 4]; 4]; 4]; 4];
        for j in 0..4 {
            for k in 0..4 {
                let mut v = 0.0;
                for i in 0..4 {
                    for l in 0..4 {
                        v += gi[i][l] * rm[i][j][k][l];
                    }
                }
                rc[j][k] = v;
                for a in 0..4 {
                    let mut v = 0.0;
                    for i in 0..4 {
                        for l in 0..4 {
                            v += dgi[a][i][l] * rm[i][j][k][l] + gi[i][l] * drm[a][i][j][k][l];
                        }
                    }
                    drc[a][j][k] = v;
                }
                for a in 0..4 {
                    for b in 0..4 {
                        let mut v = 0.0;
                        for i in 0..4 {
                            for l in 0..4 {
                                v += d2gi[a][b][i][l] * rm[i][j][k][l]
                                    + dgi[a][i][l] * drm[b][i][j][k][l]
                                    + dgi[b][i][l] * drm[a][i][j][k][l]
                                    + gi[i][l] * d2rm[a * 4 + b][i][j][k][l];
                            }
                        }
                        d2rc[a][b][j][k] = v;
                    }
                }
            }
        }
        let mut rs = 0.0;
        for j in 0..4 {
            for k in 0..4 {
                rs += gi[j][k] * rc[j][k];
            }
        }
        let mut drs = [0.0f64; 4];
        for a in 0..4 {
            let mut v = 0.0;
            for j in 0..4 {
                for k in 0..4 {
                    v += dgi[a][j][k] * rc[j][k] + gi[j][k] * drc[a][j][k];
                }
            }
            drs[a] = v;
        }
        let mut d2rs = [[0.0f64; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                let mut v = 0.0;
                for j in 0..4 {
                    for k in 0..4 {
                        v += d2gi[a][b][j][k] * rc[j][k]
                            + dgi[a][j][k] * drc[b][j][k]
                            + dgi[b][j][k] * drc[a][j][k]
                            + gi[j][k] * d2rc[a][b][j][k];
                    }
                }
                d2rs[a][b] = v;
            }
        }
        let mut lap_r = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let mut hess = d2rs[a][b];
                for c in 0..4 {
                    hess -= g2[c][a][b] * drs[c];
                }
                lap_r += gi[a][b] * hess;
            }
        }

        // Schouten-type tensor chain
        let mut aa = [[0.0f64; 4]; 4];
        let mut daa = [[[0.0f64; 4]; 4]; 4];
        let mut d2aa = [[[[0.0f64; 4]; 4]; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                aa[i][j] = 0.5 * (rc[i][j] - rs * gm[i][j] / 6.0);
                for a in 0..4 {
                    daa[a][i][j] =
                        0.5 * (drc[a][i][j] - (drs[a] * gm[i][j] + rs * d1g[a][i][j]) / 6.0);
                }
                for a in 0..4 {
                    for b in 0..4 {
                        d2aa[a][b][i][j] = 0.5
                            * (d2rc[a][b][i][j]
                                - (d2rs[a][b] * gm[i][j]
                                    + drs[a] * d1g[b][i][j]
                                    + drs[b] * d1g[a][i][j]
                                    + rs * d2g[a][b][i][j])
                                    / 6.0);
                    }
                }
            }
        }

        // covariant derivative of A, antisymmetrization, divergence
        let mut nab_a: M3c = [[[0.0; 4]; 4]; 4]; // [k][i][j]
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let mut v = daa[k][i][j];
                    for p2 in 0..4 {
                        v -= g2[p2][k][i] * aa[p2][j] + g2[p2][k][j] * aa[i][p2];
                    }
                    nab_a[k][i][j] = v;
                }
            }
        }
        let mut cotton: M3c = [[[0.0; 4]; 4]; 4]; // [i][j][k]
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    cotton[i][j][k] = nab_a[k][i][j] - nab_a[j][i][k];
                }
            }
        }
        let mut dnab_a: M4c = [[[[0.0; 4]; 4]; 4]; 4]; // [a][k][i][j]
        for a in 0..4 {
            for k in 0..4 {
                for i in 0..4 {
                    for j in 0..4 {
                        let mut v = d2aa[a][k][i][j];
                        for p2 in 0..4 {
                            v -= dg2[a][p2][k][i] * aa[p2][j]
                                + g2[p2][k][i] * daa[a][p2][j]
                                + dg2[a][p2][k][j] * aa[i][p2]
                                + g2[p2][k][j] * daa[a][i][p2];
                        }
                        dnab_a[a][k][i][j] = v;
                    }
                }
            }
        }
        let mut div_c = [[0.0f64; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut v = 0.0;
                for k in 0..4 {
                    for l in 0..4 {
                        let dc = dnab_a[l][k][i][j] - dnab_a[l][j][i][k];
                        let mut corr = 0.0;
                        for p2 in 0..4 {
                            corr += g2[p2][l][i] * cotton[p2][j][k]
                                + g2[p2][l][j] * cotton[i][p2][k]
                                + g2[p2][l][k] * cotton[i][j][p2];
                        }
                        v += gi[k][l] * (dc - corr);
                    }
                }
                div_c[i][j] = v;
            }
        }

        // Weyl part and primary obstruction
        let mut kn = [[[[0.0f64; 4]; 4]; 4]; 4];
        let mut weyl = [[[[0.0f64; 4]; 4]; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        kn[i][j][k][l] = aa[i][l] * gm[j][k] + aa[j][k] * gm[i][l]
                            - aa[i][k] * gm[j][l]
                            - aa[j][l] * gm[i][k];
                        weyl[i][j][k][l] = rm[i][j][k][l] - kn[i][j][k][l];
                    }
                }
            }
        }
        let mut aa_up = [[0.0f64; 4]; 4];
        for k in 0..4 {
            for l in 0..4 {
                let mut v = 0.0;
                for m in 0..4 {
                    for q in 0..4 {
                        v += gi[k][m] * aa[m][q] * gi[q][l];
                    }
                }
                aa_up[k][l] = v;
            }
        }
        let mut bach = [[0.0f64; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut aw = 0.0;
                for k in 0..4 {
                    for l in 0..4 {
                        aw += aa_up[k][l] * weyl[k][i][j][l];
                    }
                }
                bach[i][j] = div_c[i][j] + aw;
            }
        }

        // scalar invariant
        let mut rc_up = [[0.0f64; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut v = 0.0;
                for m in 0..4 {
                    for q in 0..4 {
                        v += gi[i][m] * rc[m][q] * gi[q][j];
                    }
                }
                rc_up[i][j] = v;
            }
        }
        let mut rc_sq = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                rc_sq += rc_up[i][j] * rc[i][j];
            }
        }
        let q = -lap_r / 6.0 - 0.5 * rc_sq + rs * rs / 6.0;

        // alternative obstruction through Weyl derivatives
        let mut dkn = [[[[[0.0f64; 4]; 4]; 4]; 4]; 4]; // [a][ijkl]
        let mut dweyl = [[[[[0.0f64; 4]; 4]; 4]; 4]; 4];
        for a in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            dkn[a][i][j][k][l] = daa[a][i][l] * gm[j][k]
                                + aa[i][l] * d1g[a][j][k]
                                + daa[a][j][k] * gm[i][l]
                                + aa[j][k] * d1g[a][i][l]
                                - daa[a][i][k] * gm[j][l]
                                - aa[i][k] * d1g[a][j][l]
                                - daa[a][j][l] * gm[i][k]
                                - aa[j][l] * d1g[a][i][k];
                            dweyl[a][i][j][k][l] = drm[a][i][j][k][l] - dkn[a][i][j][k][l];
                        }
                    }
                }
            }
        }
        let mut d2weyl = vec![[[[[0.0f64; 4]; 4]; 4]; 4]; 16];
        for a in 0..4 {
            for b in 0..4 {
                for i in 0..4 {
                    for j in 0..4 {
                        for k in 0..4 {
                            for l in 0..4 {
                                let d2kn = d2aa[a][b][i][l] * gm[j][k]
                                    + daa[a][i][l] * d1g[b][j][k]
                                    + daa[b][i][l] * d1g[a][j][k]
                                    + aa[i][l] * d2g[a][b][j][k]
                                    + d2aa[a][b][j][k] * gm[i][l]
                                    + daa[a][j][k] * d1g[b][i][l]
                                    + daa[b][j][k] * d1g[a][i][l]
                                    + aa[j][k] * d2g[a][b][i][l]
                                    - d2aa[a][b][i][k] * gm[j][l]
                                    - daa[a][i][k] * d1g[b][j][l]
                                    - daa[b][i][k] * d1g[a][j][l]
                                    - aa[i][k] * d2g[a][b][j][l]
                                    - d2aa[a][b][j][l] * gm[i][k]
                                    - daa[a][j][l] * d1g[b][i][k]
                                    - daa[b][j][l] * d1g[a][i][k]
                                    - aa[j][l] * d2g[a][b][i][k];
                                d2weyl[a * 4 + b][i][j][k][l] =
                                    d2rm[a * 4 + b][i][j][k][l] - d2kn;
                            }
                        }
                    }
                }
            }
        }
        let mut nab_w = [[[[[0.0f64; 4]; 4]; 4]; 4]; 4]; // [b][ijkl]
        for b in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            let mut v = dweyl[b][i][j][k][l];
                            for p2 in 0..4 {
                                v -= g2[p2][b][i] * weyl[p2][j][k][l]
                                    + g2[p2][b][j] * weyl[i][p2][k][l]
                                    + g2[p2][b][k] * weyl[i][j][p2][l]
                                    + g2[p2][b][l] * weyl[i][j][k][p2];
                            }
                            nab_w[b][i][j][k][l] = v;
                        }
                    }
                }
            }
        }
        let mut nab2_w = vec![[[[[0.0f64; 4]; 4]; 4]; 4]; 16]; // [(a*4+b)][ijkl]
        for a in 0..4 {
            for b in 0..4 {
                for i in 0..4 {
                    for j in 0..4 {
                        for k in 0..4 {
                            for l in 0..4 {
                                let mut v = d2weyl[a * 4 + b][i][j][k][l];
                                for p2 in 0..4 {
                                    v -= dg2[a][p2][b][i] * weyl[p2][j][k][l]
                                        + g2[p2][b][i] * dweyl[a][p2][j][k][l]
                                        + dg2[a][p2][b][j] * weyl[i][p2][k][l]
                                        + g2[p2][b][j] * dweyl[a][i][p2][k][l]
                                        + dg2[a][p2][b][k] * weyl[i][j][p2][l]
                                        + g2[p2][b][k] * dweyl[a][i][j][p2][l]
                                        + dg2[a][p2][b][l] * weyl[i][j][k][p2]
                                        + g2[p2][b][l] * dweyl[a][i][j][k][p2];
                                }
                                for p2 in 0..4 {
                                    v -= g2[p2][a][b] * nab_w[p2][i][j][k][l];
                                    v -= g2[p2][a][i] * nab_w[b][p2][j][k][l]
                                        + g2[p2][a][j] * nab_w[b][i][p2][k][l]
                                        + g2[p2][a][k] * nab_w[b][i][j][p2][l]
                                        + g2[p2][a][l] * nab_w[b][i][j][k][p2];
                                }
                                nab2_w[a * 4 + b][i][j][k][l] = v;
                            }
                        }
                    }
                }
            }
        }
        let mut bach_alt = [[0.0f64; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut dd = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        for k in 0..4 {
                            for l in 0..4 {
                                dd += gi[l][a] * gi[k][b] * nab2_w[a * 4 + b][k][i][j][l];
                            }
                        }
                    }
                }
                let mut rw = 0.0;
                for k in 0..4 {
                    for l in 0..4 {
                        rw += rc_up[k][l] * weyl[k][i][j][l];
                    }
                }
                bach_alt[i][j] = dd + 0.5 * rw;
            }
        }

        // gauge vector
        let mut xv = [0.0f64; 4];
        let mut dxv = [[0.0f64; 4]; 4]; // [a][k]
        let mut d2xv = [[[0.0f64; 4]; 4]; 4]; // [a][b][k]
        for k in 0..4 {
            let mut v = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    v += gi[i][j] * g2[k][i][j];
                }
            }
            xv[k] = v;
            for a in 0..4 {
                let mut v = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        v += dgi[a][i][j] * g2[k][i][j] + gi[i][j] * dg2[a][k][i][j];
                    }
                }
                dxv[a][k] = v;
            }
            for a in 0..4 {
                for b in 0..4 {
                    let mut v = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            v += d2gi[a][b][i][j] * g2[k][i][j]
                                + dgi[a][i][j] * dg2[b][k][i][j]
                                + dgi[b][i][j] * dg2[a][k][i][j]
                                + gi[i][j] * d2g2[a][b][k][i][j];
                        }
                    }
                    d2xv[a][b][k] = v;
                }
            }
        }
        let mut nab_x = [[0.0f64; 4]; 4]; // [b][k]
        for b in 0..4 {
            for k in 0..4 {
                let mut v = dxv[b][k];
                for p2 in 0..4 {
                    v += g2[k][b][p2] * xv[p2];
                }
                nab_x[b][k] = v;
            }
        }
        let mut lap_x = [0.0f64; 4];
        for a in 0..4 {
            for b in 0..4 {
                for k in 0..4 {
                    let mut v = d2xv[a][b][k];
                    for p2 in 0..4 {
                        v += dg2[a][k][b][p2] * xv[p2] + g2[k][b][p2] * dxv[a][p2];
                    }
                    for p2 in 0..4 {
                        v += g2[k][a][p2] * nab_x[b][p2];
                        v -= g2[p2][a][b] * nab_x[p2][k];
                    }
                    lap_x[k] += gi[a][b] * v;
                }
            }
        }
        let mut wvec = [0.0f64; 4];
        for k in 0..4 {
            let mut grad_r = 0.0;
            for a in 0..4 {
                grad_r += gi[k][a] * drs[a];
            }
            wvec[k] = -0.25 * lap_x[k] + grad_r / 12.0;
        }

        // scatter
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    out.christoffel[((k * 4 + i) * 4 + j) * nn + node] = g2[k][i][j];
                    out.cotton[((i * 4 + j) * 4 + k) * nn + node] = cotton[i][j][k];
                }
            }
            out.gauge_vector[k * nn + node] = wvec[k];
        }
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let f = ((i * 4 + j) * 4 + k) * 4 + l;
                        out.riemann[f * nn + node] = rm[i][j][k][l];
                        out.weyl[f * nn + node] = weyl[i][j][k][l];
                    }
                }
                let f = i * 4 + j;
                out.ricci[f * nn + node] = rc[i][j];
                out.schouten[f * nn + node] = aa[i][j];
                out.bach[f * nn + node] = bach[i][j];
                out.bach_alt[f * nn + node] = bach_alt[i][j];
                out.adjusted[f * nn + node] = bach[i][j] + lap_r / 12.0 * gm[i][j];
            }
        }
        out.scalar[node] = rs;
        out.q_scalar[node] = q;
        out.lap_scalar[node] = lap_r;
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{assemble, CurvatureOptions};
    use crate::seeded;

    /// Max |a-b| over all entries, relative to the sup of |b|.
    fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
        let mut worst = 0.0f64;
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
        worst / scale
    }

    #[test]
    fn packed_kernel_matches_longhand_on_random_metric() {
        let grid = GridSpec::cubic([8, 8, 1, 1]).unwrap();
        let g = seeded::random_metric(&grid, 2, 0.07, 3, 313).unwrap();
        let opts = CurvatureOptions {
            alternative_bach: true,
            gauge_vector: true,
            ..Default::default()
        };
        let fast = assemble(&g, &opts).unwrap();
        let slow = assemble_reference(&g, 4).unwrap();
        let nn = grid.num_nodes();

        let mut fr = vec![0.0; 256 * nn];
        let mut fw = vec![0.0; 256 * nn];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let f = ((i * 4 + j) * 4 + k) * 4 + l;
                        for node in 0..nn {
                            fr[f * nn + node] = fast.riemann_component(i, j, k, l, node);
                            fw[f * nn + node] = fast.weyl_component(i, j, k, l, node);
                        }
                    }
                }
            }
        }
        assert!(rel_diff(&fr, &slow.riemann) < 1e-13);
        assert!(rel_diff(&fw, &slow.weyl) < 1e-13);

        let mut fb = vec![0.0; 16 * nn];
        let mut fba = vec![0.0; 16 * nn];
        let alt = fast.bach_alt.as_ref().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let s = crate::algebra::SYM_INDEX[i][j];
                for node in 0..nn {
                    fb[(i * 4 + j) * nn + node] = fast.bach.comp(s)[node];
                    fba[(i * 4 + j) * nn + node] = alt.comp(s)[node];
                }
            }
        }
        assert!(rel_diff(&fb, &slow.bach) < 1e-13, "{}", rel_diff(&fb, &slow.bach));
        assert!(rel_diff(&fba, &slow.bach_alt) < 1e-13);

        let mut fc = vec![0.0; 64 * nn];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for node in 0..nn {
                        fc[((i * 4 + j) * 4 + k) * nn + node] =
                            fast.cotton_component(i, j, k, node);
                    }
                }
            }
        }
        assert!(rel_diff(&fc, &slow.cotton) < 1e-13);

        assert!(rel_diff(fast.q_scalar.comp(0), &slow.q_scalar) < 1e-13);
        assert!(rel_diff(fast.gauge_vector.as_ref().unwrap().data(), &slow.gauge_vector) < 1e-13);
    }
}
