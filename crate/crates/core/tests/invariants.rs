//! Property-based invariants of the discrete geometry stack: structural
//! tensor symmetries, algebraic trace identities, metric compatibility,
//! scaling covariance, and grid/stencil bookkeeping, each exercised over
//! randomized inputs.

use obflow_core::algebra::{self, SYM_INDEX};
use obflow_core::curvature::{self, pair_sym_get, CurvatureOptions, CANON21};
use obflow_core::grid::{Field, GridSpec, TWO_PI};
use obflow_core::seeded;
use obflow_core::stencil;
use obflow_core::tensor::MetricField;
use proptest::prelude::*;

fn opts(p: usize) -> CurvatureOptions {
    CurvatureOptions {
        accuracy_order: p,
        alternative_bach: false,
        gauge_vector: false,
    }
}

fn small_random_metric(seed: u64) -> MetricField {
    let grid = GridSpec::new([8, 8, 1, 1], [TWO_PI; 4]).unwrap();
    seeded::random_metric(&grid, 2, 0.04, 5, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// node_index and node_coords are inverse bijections on any shape.
    #[test]
    fn grid_indexing_is_a_bijection(
        n0 in 1usize..6,
        n1 in 1usize..5,
        n2 in 1usize..4,
        n3 in 1usize..4,
    ) {
        let grid = GridSpec::new([n0, n1, n2, n3], [TWO_PI; 4]).unwrap();
        for node in 0..grid.num_nodes() {
            let c = grid.node_coords(node);
            prop_assert_eq!(grid.node_index(c), node);
            for (a, &idx) in c.iter().enumerate() {
                prop_assert!(idx < grid.resolution()[a]);
            }
        }
    }

    /// Central difference tables: zero weight sum for k >= 1, correct
    /// normalization on the matching monomial, mirror (anti)symmetry.
    #[test]
    fn stencil_tables_are_normalized_and_symmetric(
        k in 1usize..=4,
        p in prop::sample::select(vec![2usize, 4, 6]),
    ) {
        let t = stencil::stencil_coefficients(k, p).unwrap();
        let wsum: f64 = t.weights.iter().sum();
        prop_assert!(wsum.abs() < 1e-12, "weight sum {wsum:e}");
        // Sum of w_j j^k equals k! so the table reproduces d^k/dx^k x^k.
        let fact: f64 = (1..=k).product::<usize>() as f64;
        let moment: f64 = t
            .offsets
            .iter()
            .zip(&t.weights)
            .map(|(&j, &w)| w * (j as f64).powi(k as i32))
            .sum();
        prop_assert!((moment - fact).abs() < 1e-9 * fact.max(1.0));
        // Even k: weights even in j; odd k: odd in j.
        for (&j, &w) in t.offsets.iter().zip(&t.weights) {
            let mirror = t
                .offsets
                .iter()
                .position(|&m| m == -j)
                .map(|i| t.weights[i]);
            let expect = if k % 2 == 0 { w } else { -w };
            if let Some(mw) = mirror {
                prop_assert!((mw - expect).abs() < 1e-12);
            } else {
                prop_assert!(j == 0 && k % 2 == 0);
            }
        }
    }

    /// The packed Riemann storage reproduces every algebraic symmetry,
    /// and the first Bianchi identity holds at rounding level because the
    /// discrete curvature is assembled from one shared jet.
    #[test]
    fn riemann_symmetries_and_first_bianchi(seed in 0u64..1000) {
        let g = small_random_metric(seed);
        let b = curvature::assemble(&g, &opts(4)).unwrap();
        let grid = g.grid().clone();
        let nodes = [0usize, grid.num_nodes() / 2, grid.num_nodes() - 1];
        for &node in &nodes {
            let mut rm = [0.0f64; 21];
            for (c, slot) in rm.iter_mut().enumerate() {
                *slot = b.riemann.comp(c)[node];
            }
            let scale = 1.0 + rm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            let v = pair_sym_get(&rm, i, j, k, l);
                            // Antisymmetry in both pairs, pair exchange.
                            prop_assert_eq!(v, -pair_sym_get(&rm, j, i, k, l));
                            prop_assert_eq!(v, -pair_sym_get(&rm, i, j, l, k));
                            prop_assert_eq!(v, pair_sym_get(&rm, k, l, i, j));
                            // First Bianchi.
                            let cyc = v
                                + pair_sym_get(&rm, i, k, l, j)
                                + pair_sym_get(&rm, i, l, j, k);
                            prop_assert!(
                                cyc.abs() < 1e-11 * scale,
                                "bianchi residual {cyc:e} at ({i}{j}{k}{l})"
                            );
                        }
                    }
                }
            }
        }
    }

    /// Algebraic trace identities of the assembled stack: tr A = R/6,
    /// contracted Weyl = 0, Ricci = contraction of Riemann.
    #[test]
    fn trace_identities_hold_at_rounding(seed in 0u64..1000) {
        let g = small_random_metric(seed);
        let b = curvature::assemble(&g, &opts(4)).unwrap();
        let grid = g.grid().clone();
        let step = (grid.num_nodes() / 7).max(1);
        for node in (0..grid.num_nodes()).step_by(step) {
            let gi = algebra::unpack_sym(&g.inverse_at(node));
            let r = b.scalar.comp(0)[node];
            let scale = 1.0 + r.abs();

            let mut tr_a = 0.0;
            let mut ricci = [[0.0f64; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    let a_ij = b.schouten.comp(SYM_INDEX[i][j])[node];
                    tr_a += gi[i][j] * a_ij;
                    ricci[i][j] = b.ricci.comp(SYM_INDEX[i][j])[node];
                }
            }
            prop_assert!((tr_a - r / 6.0).abs() < 1e-12 * scale);

            let mut rm = [0.0f64; 21];
            let mut w = [0.0f64; 21];
            for c in 0..21 {
                rm[c] = b.riemann.comp(c)[node];
                w[c] = b.weyl.comp(c)[node];
            }
            // Ricci is the first-last contraction: Rc_jk = g^{il} R_ijkl;
            // the same contraction of Weyl vanishes identically.
            for j in 0..4 {
                for k in 0..4 {
                    let mut c_rm = 0.0;
                    let mut c_w = 0.0;
                    for i in 0..4 {
                        for l in 0..4 {
                            c_rm += gi[i][l] * pair_sym_get(&rm, i, j, k, l);
                            c_w += gi[i][l] * pair_sym_get(&w, i, j, k, l);
                        }
                    }
                    prop_assert!(
                        (c_rm - ricci[j][k]).abs() < 1e-11 * scale,
                        "ricci contraction off by {:e}",
                        c_rm - ricci[j][k]
                    );
                    prop_assert!(c_w.abs() < 1e-11 * scale, "weyl trace {c_w:e}");
                }
            }
        }
    }

    /// Discrete metric compatibility: the covariant divergence of the
    /// metric itself cancels algebraically, not just to truncation order.
    #[test]
    fn metric_is_discretely_parallel(seed in 0u64..1000) {
        let g = small_random_metric(seed);
        let b = curvature::assemble(&g, &opts(4)).unwrap();
        let div = b.sym2_divergence(g.comps()).unwrap();
        prop_assert!(div.max_abs() < 1e-12, "div g = {:e}", div.max_abs());
    }

    /// Parabolic scaling of the full stack: under g -> lambda g (lambda a
    /// power of two, so the scaling commutes with rounding) the obstruction
    /// tensor scales exactly by 1/lambda and Q by 1/lambda^2.
    #[test]
    fn power_of_two_scaling_is_bitwise(seed in 0u64..1000, shift in 1i32..3) {
        let lambda = (2.0f64).powi(shift);
        let g = small_random_metric(seed);
        let scaled = MetricField::new(g.comps().scale(lambda)).unwrap();
        let b1 = curvature::assemble(&g, &opts(4)).unwrap();
        let b2 = curvature::assemble(&scaled, &opts(4)).unwrap();
        for c in 0..10 {
            let a = b1.bach.comp(c);
            let s = b2.bach.comp(c);
            for (x, y) in a.iter().zip(s) {
                prop_assert_eq!((x / lambda).to_bits(), y.to_bits());
            }
        }
        for (x, y) in b1.q_scalar.comp(0).iter().zip(b2.q_scalar.comp(0)) {
            prop_assert_eq!((x / (lambda * lambda)).to_bits(), y.to_bits());
        }
    }

    /// The sharded assembler agrees with the naive quadruple-loop oracle
    /// (dense storage, no symmetry tricks) across random draws. The full
    /// member-by-member sweep lives in the acceptance suite; this samples
    /// the quantities at both ends of the assembly chain.
    #[test]
    fn bundle_matches_reference_oracle(seed in 0u64..1000) {
        let grid = GridSpec::new([6, 6, 1, 1], [TWO_PI; 4]).unwrap();
        let g = seeded::random_metric(&grid, 1, 0.05, 4, seed).unwrap();
        let fast = curvature::assemble(&g, &opts(2)).unwrap();
        let slow = curvature::reference::assemble_reference(&g, 2).unwrap();
        let nn = grid.num_nodes();

        let rel = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-13 * scale;
        let scale_of = |v: &[f64]| v.iter().fold(1.0f64, |m, x| m.max(x.abs()));

        let s_scale = scale_of(&slow.scalar);
        for node in 0..nn {
            prop_assert!(rel(fast.scalar.comp(0)[node], slow.scalar[node], s_scale));
            prop_assert!(rel(
                fast.q_scalar.comp(0)[node],
                slow.q_scalar[node],
                scale_of(&slow.q_scalar)
            ));
        }
        let rm_scale = scale_of(&slow.riemann);
        let b_scale = scale_of(&slow.bach).max(1e-30);
        for i in 0..4 {
            for j in 0..4 {
                let s = SYM_INDEX[i][j];
                for node in 0..nn {
                    prop_assert!(
                        rel(
                            fast.bach.comp(s)[node],
                            slow.bach[(i * 4 + j) * nn + node],
                            b_scale
                        ),
                        "bach[{i}{j}] at {node}"
                    );
                }
                for k in 0..4 {
                    for l in 0..4 {
                        let f = ((i * 4 + j) * 4 + k) * 4 + l;
                        for node in (0..nn).step_by(7) {
                            prop_assert!(
                                rel(
                                    fast.riemann_component(i, j, k, l, node),
                                    slow.riemann[f * nn + node],
                                    rm_scale
                                ),
                                "riemann[{i}{j}{k}{l}] at {node}"
                            );
                        }
                    }
                }
            }
        }
    }

    /// Canonical 21-slot table is consistent with the unpacking helper.
    #[test]
    fn packed_rank4_canonical_slots_round_trip(c in 0usize..21) {
        let mut v = [0.0f64; 21];
        v[c] = 1.5;
        let (i, j, k, l) = CANON21[c];
        prop_assert_eq!(pair_sym_get(&v, i, j, k, l), 1.5);
        prop_assert_eq!(pair_sym_get(&v, j, i, k, l), -1.5);
        prop_assert_eq!(pair_sym_get(&v, k, l, i, j), 1.5);
    }
}
