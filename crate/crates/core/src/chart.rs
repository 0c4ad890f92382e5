//! Closed-form metric charts evaluated pointwise through nested central
//! differences with Richardson extrapolation.
//!
//! The periodic grid can never host a round sphere or an Einstein product,
//! so exact-value checks (scalar curvature 12 on the unit sphere, vanishing
//! obstruction tensor on conformally flat metrics, ...) run here instead:
//! a chart supplies the metric as a closed-form function of coordinates,
//! the full fourth-order jet is sampled by one-dimensional stencils along
//! each axis, and the same per-node curvature kernel used by the grid code
//! turns that jet into the curvature stack. Evaluating at two step sizes
//! (h, h/2) and extrapolating removes the leading truncation term, so the
//! result carries `p + 2` (at least `p + 1`) orders of accuracy.

use crate::algebra::{self, Sym10, D1, D2, D3, D4};
use crate::curvature::{node_kernel, CurvatureOptions, NodeJet, NodeOut};
use crate::stencil::{max_footprint, stencil_coefficients};
use crate::{Error, Result};

/// Catalog of closed-form metrics. All components are diagonal in the
/// chart coordinates; the domain is all of R^4 except where noted.
#[derive(Clone, Debug, PartialEq)]
pub enum ChartMetric {
    /// The Euclidean metric, identically the identity matrix.
    Flat,
    /// A constant multiple `factor * delta` of the Euclidean metric.
    ConstantConformal { factor: f64 },
    /// `exp(2u) delta` with a Gaussian conformal exponent
    /// `u(x) = amplitude * exp(-|x - center|^2 / width^2)`.
    ConformallyFlat {
        amplitude: f64,
        width: f64,
        center: [f64; 4],
    },
    /// The round 4-sphere of the given radius in stereographic projection:
    /// `g = 4 r^4 / (r^2 + |x|^2)^2 * delta`. Covers the sphere minus one
    /// point; the chart is defined on all of R^4.
    SphereStereographic { radius: f64 },
    /// `S^2(r1) x S^2(r2)` in colatitude/longitude coordinates
    /// `(theta_1, phi_1, theta_2, phi_2)`:
    /// `g = diag(r1^2, r1^2 sin^2 theta_1, r2^2, r2^2 sin^2 theta_2)`.
    /// Both colatitudes are restricted to the open band
    /// `(pi/4, 3 pi/4)` to stay clear of the coordinate poles.
    ProductSpheres { r1: f64, r2: f64 },
}

const QUARTER_PI: f64 = std::f64::consts::FRAC_PI_4;
const THREE_QUARTER_PI: f64 = 3.0 * std::f64::consts::FRAC_PI_4;

impl ChartMetric {
    /// Reject non-positive radii / factors / widths before any evaluation.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::BadConfig(format!(
                    "chart parameter {what} must be positive and finite, got {v}"
                )))
            }
        };
        match *self {
            ChartMetric::Flat => Ok(()),
            ChartMetric::ConstantConformal { factor } => bad("factor", factor),
            ChartMetric::ConformallyFlat {
                amplitude, width, ..
            } => {
                if !amplitude.is_finite() {
                    return Err(Error::BadConfig(format!(
                        "chart parameter amplitude must be finite, got {amplitude}"
                    )));
                }
                bad("width", width)
            }
            ChartMetric::SphereStereographic { radius } => bad("radius", radius),
            ChartMetric::ProductSpheres { r1, r2 } => {
                bad("r1", r1)?;
                bad("r2", r2)
            }
        }
    }

    /// Metric components at a point, packed lower-triangle order.
    pub fn metric_at(&self, x: [f64; 4]) -> Sym10 {
        let mut s = [0.0; 10];
        match *self {
            ChartMetric::Flat => {
                for i in 0..4 {
                    s[algebra::SYM_INDEX[i][i]] = 1.0;
                }
            }
            ChartMetric::ConstantConformal { factor } => {
                for i in 0..4 {
                    s[algebra::SYM_INDEX[i][i]] = factor;
                }
            }
            ChartMetric::ConformallyFlat {
                amplitude,
                width,
                center,
            } => {
                let mut r2 = 0.0;
                for a in 0..4 {
                    let d = x[a] - center[a];
                    r2 += d * d;
                }
                let u = amplitude * (-r2 / (width * width)).exp();
                let f = (2.0 * u).exp();
                for i in 0..4 {
                    s[algebra::SYM_INDEX[i][i]] = f;
                }
            }
            ChartMetric::SphereStereographic { radius } => {
                let r2 = radius * radius;
                let mut x2 = 0.0;
                for &c in &x {
                    x2 += c * c;
                }
                let c = 2.0 * r2 / (r2 + x2);
                let f = c * c;
                for i in 0..4 {
                    s[algebra::SYM_INDEX[i][i]] = f;
                }
            }
            ChartMetric::ProductSpheres { r1, r2 } => {
                let s1 = x[0].sin();
                let s2 = x[2].sin();
                s[algebra::SYM_INDEX[0][0]] = r1 * r1;
                s[algebra::SYM_INDEX[1][1]] = r1 * r1 * s1 * s1;
                s[algebra::SYM_INDEX[2][2]] = r2 * r2;
                s[algebra::SYM_INDEX[3][3]] = r2 * r2 * s2 * s2;
            }
        }
        s
    }

    /// Distance from the point to the boundary of the admissible domain
    /// (infinite for charts defined on all of R^4, negative outside).
    pub fn domain_margin(&self, x: [f64; 4]) -> f64 {
        match *self {
            ChartMetric::ProductSpheres { .. } => {
                let band = |t: f64| (t - QUARTER_PI).min(THREE_QUARTER_PI - t);
                band(x[0]).min(band(x[2]))
            }
            _ => f64::INFINITY,
        }
    }
}

/// Pointwise curvature stack produced by `chart_eval`.
#[derive(Clone, Debug)]
pub struct ChartPoint {
    /// Exact closed-form metric at the point (no differencing involved).
    pub g: Sym10,
    /// Exact inverse metric.
    pub gi: Sym10,
    /// Richardson-extrapolated curvature stack: the step-h and step-h/2
    /// evaluations combined to cancel the leading truncation term.
    pub values: NodeOut,
    /// Raw single-step evaluation at the full step.
    pub coarse: NodeOut,
    /// Raw single-step evaluation at half the step.
    pub fine: NodeOut,
}

/// One partial derivative of the chart metric at `x` by a tensor-product
/// central stencil. Samples enter as differences against the center value,
/// which keeps constant charts at exactly zero: every term in the sum is
/// itself 0.0, so no 1/h^k amplification of weight-roundoff survives. The
/// subtraction is algebraically free because every k >= 1 stencil has
/// weight sum zero.
fn chart_partial(
    chart: &ChartMetric,
    x: [f64; 4],
    g0: &Sym10,
    alpha: [u8; 4],
    h: f64,
    p: usize,
) -> Result<Sym10> {
    // Per-axis offset/weight lists; order-0 axes contribute the center
    // sample with unit weight.
    let mut offsets: [&[i64]; 4] = [&[0]; 4];
    let mut weights: [&[f64]; 4] = [&[1.0]; 4];
    static CENTER_OFF: [i64; 1] = [0];
    static CENTER_W: [f64; 1] = [1.0];
    let mut total = 0usize;
    for a in 0..4 {
        let k = alpha[a] as usize;
        total += k;
        if k == 0 {
            offsets[a] = &CENTER_OFF;
            weights[a] = &CENTER_W;
        } else {
            let table = stencil_coefficients(k, p)?;
            offsets[a] = &table.offsets;
            weights[a] = &table.weights;
        }
    }
    let mut acc = [0.0f64; 10];
    for (i0, &j0) in offsets[0].iter().enumerate() {
        let w0 = weights[0][i0];
        for (i1, &j1) in offsets[1].iter().enumerate() {
            let w01 = w0 * weights[1][i1];
            for (i2, &j2) in offsets[2].iter().enumerate() {
                let w012 = w01 * weights[2][i2];
                for (i3, &j3) in offsets[3].iter().enumerate() {
                    let w = w012 * weights[3][i3];
                    let y = [
                        x[0] + h * j0 as f64,
                        x[1] + h * j1 as f64,
                        x[2] + h * j2 as f64,
                        x[3] + h * j3 as f64,
                    ];
                    let s = chart.metric_at(y);
                    for c in 0..10 {
                        acc[c] += w * (s[c] - g0[c]);
                    }
                }
            }
        }
    }
    let scale = h.powi(total as i32);
    for v in &mut acc {
        *v /= scale;
    }
    Ok(acc)
}

/// Assemble the full fourth-order jet of the chart metric at `x` with
/// finite-difference step `h` and interior accuracy order `p`.
fn chart_jet(chart: &ChartMetric, x: [f64; 4], h: f64, p: usize) -> Result<NodeJet> {
    let g = chart.metric_at(x);
    let minors = algebra::leading_minors(&g);
    for (order, &m) in minors.iter().enumerate() {
        if !(m > 0.0) {
            return Err(Error::ChartDomain(format!(
                "metric not positive definite at the evaluation point: \
                 leading {n}x{n} minor = {m:.6e}",
                n = order + 1
            )));
        }
    }
    let gi = algebra::inv_sym(&g);
    let mut jet = NodeJet {
        g,
        gi,
        d1: [[0.0; 10]; 4],
        d2: [[0.0; 10]; 10],
        d3: [[0.0; 10]; 20],
        d4: [[0.0; 10]; 35],
    };
    for (i, alpha) in D1.iter().enumerate() {
        jet.d1[i] = chart_partial(chart, x, &g, *alpha, h, p)?;
    }
    for (i, alpha) in D2.iter().enumerate() {
        jet.d2[i] = chart_partial(chart, x, &g, *alpha, h, p)?;
    }
    for (i, alpha) in D3.iter().enumerate() {
        jet.d3[i] = chart_partial(chart, x, &g, *alpha, h, p)?;
    }
    for (i, alpha) in D4.iter().enumerate() {
        jet.d4[i] = chart_partial(chart, x, &g, *alpha, h, p)?;
    }
    Ok(jet)
}

fn combine_sym(fine: &Sym10, coarse: &Sym10, wf: f64, wc: f64) -> Sym10 {
    let mut out = [0.0; 10];
    for c in 0..10 {
        out[c] = wf * fine[c] + wc * coarse[c];
    }
    out
}

fn combine_21(fine: &[f64; 21], coarse: &[f64; 21], wf: f64, wc: f64) -> [f64; 21] {
    let mut out = [0.0; 21];
    for c in 0..21 {
        out[c] = wf * fine[c] + wc * coarse[c];
    }
    out
}

/// Richardson combination of two curvature stacks evaluated at steps
/// h (coarse) and h/2 (fine) with leading error order `p`:
/// `(2^p * fine - coarse) / (2^p - 1)` applied member by member.
fn combine_out(fine: &NodeOut, coarse: &NodeOut, p: usize) -> NodeOut {
    let f = (2.0f64).powi(p as i32);
    let wf = f / (f - 1.0);
    let wc = -1.0 / (f - 1.0);
    let mut christoffel = [[0.0; 10]; 4];
    for k in 0..4 {
        christoffel[k] = combine_sym(&fine.christoffel[k], &coarse.christoffel[k], wf, wc);
    }
    let mut cotton = [[0.0; 6]; 4];
    for i in 0..4 {
        for c in 0..6 {
            cotton[i][c] = wf * fine.cotton[i][c] + wc * coarse.cotton[i][c];
        }
    }
    let mut gauge_vector = [0.0; 4];
    for k in 0..4 {
        gauge_vector[k] = wf * fine.gauge_vector[k] + wc * coarse.gauge_vector[k];
    }
    NodeOut {
        christoffel,
        riemann: combine_21(&fine.riemann, &coarse.riemann, wf, wc),
        ricci: combine_sym(&fine.ricci, &coarse.ricci, wf, wc),
        scalar: wf * fine.scalar + wc * coarse.scalar,
        schouten: combine_sym(&fine.schouten, &coarse.schouten, wf, wc),
        cotton,
        weyl: combine_21(&fine.weyl, &coarse.weyl, wf, wc),
        bach: combine_sym(&fine.bach, &coarse.bach, wf, wc),
        lap_scalar: wf * fine.lap_scalar + wc * coarse.lap_scalar,
        q_scalar: wf * fine.q_scalar + wc * coarse.q_scalar,
        adjusted: combine_sym(&fine.adjusted, &coarse.adjusted, wf, wc),
        bach_alt: combine_sym(&fine.bach_alt, &coarse.bach_alt, wf, wc),
        gauge_vector,
    }
}

/// Evaluate the full curvature stack of a closed-form chart at one point.
///
/// Preconditions: the point must sit at least `4 * fd_step * (stencil
/// half-width)` inside the admissible domain, and the metric must be
/// positive definite there. The stack is evaluated at steps `fd_step` and
/// `fd_step / 2` and Richardson-extrapolated, so its accuracy order is at
/// least `p + 1` (generically `p + 2`, central stencils having even error
/// expansions).
pub fn chart_eval(
    chart: &ChartMetric,
    point: [f64; 4],
    fd_step: f64,
    opts: &CurvatureOptions,
) -> Result<ChartPoint> {
    chart.validate()?;
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::BadConfig(format!(
            "finite-difference step must be positive and finite, got {fd_step}"
        )));
    }
    if point.iter().any(|c| !c.is_finite()) {
        return Err(Error::ChartDomain(
            "evaluation point has non-finite coordinates".into(),
        ));
    }
    let p = opts.accuracy_order;
    let half_width = (max_footprint(p)? - 1) / 2;
    let needed = 4.0 * fd_step * half_width as f64;
    let margin = chart.domain_margin(point);
    if margin < needed {
        return Err(Error::ChartDomain(format!(
            "point sits {margin:.6e} from the domain boundary but the stencil \
             cube needs a margin of {needed:.6e}; move the point inward or \
             shrink fd_step"
        )));
    }
    let jet_coarse = chart_jet(chart, point, fd_step, p)?;
    let jet_fine = chart_jet(chart, point, fd_step / 2.0, p)?;
    let coarse = node_kernel(&jet_coarse, opts);
    let fine = node_kernel(&jet_fine, opts);
    let values = combine_out(&fine, &coarse, p);
    Ok(ChartPoint {
        g: jet_coarse.g,
        gi: jet_coarse.gi,
        values,
        coarse,
        fine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::SYM_INDEX;

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    fn cotton_max(c: &[[f64; 6]; 4]) -> f64 {
        c.iter().map(|row| max_abs(row)).fold(0.0, f64::max)
    }

    fn stack_max(out: &NodeOut, with_alt: bool) -> f64 {
        let mut m = 0.0f64;
        for k in 0..4 {
            m = m.max(max_abs(&out.christoffel[k]));
        }
        m = m.max(max_abs(&out.riemann));
        m = m.max(max_abs(&out.ricci));
        m = m.max(out.scalar.abs());
        m = m.max(max_abs(&out.schouten));
        m = m.max(cotton_max(&out.cotton));
        m = m.max(max_abs(&out.weyl));
        m = m.max(max_abs(&out.bach));
        m = m.max(out.lap_scalar.abs());
        m = m.max(out.q_scalar.abs());
        m = m.max(max_abs(&out.adjusted));
        if with_alt {
            m = m.max(max_abs(&out.bach_alt));
        }
        m
    }

    fn opts_all() -> CurvatureOptions {
        CurvatureOptions {
            accuracy_order: 4,
            alternative_bach: true,
            gauge_vector: false,
        }
    }

    #[test]
    fn flat_chart_evaluates_to_exact_zeros() {
        let pt = chart_eval(
            &ChartMetric::Flat,
            [0.37, -1.2, 0.05, 2.4],
            1e-2,
            &opts_all(),
        )
        .unwrap();
        for i in 0..4 {
            assert_eq!(pt.g[SYM_INDEX[i][i]], 1.0);
        }
        // Every sampled difference is exactly 0.0, so the whole stack must
        // be bitwise zero: no cancellation noise at all.
        assert_eq!(stack_max(&pt.values, true), 0.0);
        assert_eq!(stack_max(&pt.coarse, true), 0.0);
        assert_eq!(stack_max(&pt.fine, true), 0.0);
    }

    #[test]
    fn constant_conformal_chart_is_exactly_flat() {
        let chart = ChartMetric::ConstantConformal { factor: 3.25 };
        let pt = chart_eval(&chart, [1.0, 2.0, -0.5, 0.0], 1e-2, &opts_all()).unwrap();
        for i in 0..4 {
            assert_eq!(pt.g[SYM_INDEX[i][i]], 3.25);
        }
        assert_eq!(stack_max(&pt.values, true), 0.0);
    }

    #[test]
    fn unit_sphere_matches_closed_form_curvature() {
        let chart = ChartMetric::SphereStereographic { radius: 1.0 };
        let pt = chart_eval(&chart, [0.0; 4], 1e-2, &opts_all()).unwrap();
        let out = &pt.values;
        // Scalar curvature n(n-1)/r^2 = 12.
        assert!(
            (out.scalar - 12.0).abs() <= 1e-6 * 12.0,
            "scalar = {}",
            out.scalar
        );
        // Ricci = 3 g, Schouten = g/2, componentwise.
        for c in 0..10 {
            assert!(
                (out.ricci[c] - 3.0 * pt.g[c]).abs() <= 3.0 * 1e-6,
                "ricci[{c}] = {} vs {}",
                out.ricci[c],
                3.0 * pt.g[c]
            );
            assert!(
                (out.schouten[c] - 0.5 * pt.g[c]).abs() <= 1e-6,
                "schouten[{c}]"
            );
        }
        // Conformally flat and Einstein: Cotton, Weyl, both obstruction
        // routes all vanish.
        assert!(cotton_max(&out.cotton) <= 1e-6);
        assert!(max_abs(&out.weyl) <= 1e-6);
        assert!(max_abs(&out.bach) <= 1e-6);
        assert!(max_abs(&out.bach_alt) <= 1e-6);
        // Q-curvature: -1/6 lap R - 1/2 |Ric|^2 + 1/6 R^2 = -18 + 24 = 6.
        assert!(
            (out.q_scalar - 6.0).abs() <= 1e-6 * 6.0,
            "q = {}",
            out.q_scalar
        );
        // R constant: lap R = 0, so the adjusted right-hand side vanishes.
        assert!(max_abs(&out.adjusted) <= 1e-5);
    }

    #[test]
    fn sphere_values_are_homogeneous_and_scale_with_radius() {
        // Away from the projection origin the chart components vary, but
        // the sphere is homogeneous: same invariants at every point.
        let chart = ChartMetric::SphereStereographic { radius: 2.0 };
        let pt = chart_eval(&chart, [0.3, -0.2, 0.1, 0.4], 1e-2, &opts_all()).unwrap();
        let out = &pt.values;
        // R = 12 / r^2 = 3; Einstein constant 3/r^2 = 3/4;
        // Q = (2/3) lambda^2 = 3/8.
        assert!((out.scalar - 3.0).abs() <= 1e-6 * 3.0, "scalar = {}", out.scalar);
        for c in 0..10 {
            assert!((out.ricci[c] - 0.75 * pt.g[c]).abs() <= 1e-6);
        }
        assert!((out.q_scalar - 0.375).abs() <= 1e-6, "q = {}", out.q_scalar);
        assert!(max_abs(&out.bach) <= 1e-6);
    }

    #[test]
    fn equal_radius_product_is_einstein_with_vanishing_obstruction() {
        let chart = ChartMetric::ProductSpheres { r1: 1.0, r2: 1.0 };
        let x = [1.3, 0.4, 1.8, -2.0];
        let pt = chart_eval(&chart, x, 1e-2, &opts_all()).unwrap();
        let out = &pt.values;
        // Each S^2(1) factor contributes scalar curvature 2.
        assert!((out.scalar - 4.0).abs() <= 1e-6 * 4.0, "scalar = {}", out.scalar);
        // Einstein with lambda = 1: Ric = g.
        for c in 0..10 {
            assert!(
                (out.ricci[c] - pt.g[c]).abs() <= 1e-6 * (1.0 + pt.g[c].abs()),
                "ricci[{c}]"
            );
        }
        // Obstruction-flat even though the Weyl tensor is NOT zero here.
        assert!(max_abs(&out.weyl) > 0.1);
        assert!(max_abs(&out.bach) <= 1e-6, "bach = {:e}", max_abs(&out.bach));
        assert!(max_abs(&out.bach_alt) <= 1e-6);
        // Q = (2/3) lambda^2 = 2/3.
        assert!((out.q_scalar - 2.0 / 3.0).abs() <= 1e-6);
    }

    #[test]
    fn unequal_radius_product_has_nonzero_obstruction() {
        let chart = ChartMetric::ProductSpheres { r1: 1.0, r2: 2.0 };
        let x = [1.3, 0.4, 1.8, -2.0];
        let pt = chart_eval(&chart, x, 1e-2, &opts_all()).unwrap();
        // Decisively above the vanishing tolerance: an order of magnitude
        // or more.
        let b = max_abs(&pt.values.bach);
        assert!(b > 10.0 * 1e-6, "bach norm only {b:e}");
    }

    #[test]
    fn conformally_flat_chart_has_zero_weyl_and_obstruction() {
        let chart = ChartMetric::ConformallyFlat {
            amplitude: 0.3,
            width: 1.5,
            center: [0.2, -0.1, 0.0, 0.4],
        };
        let pt = chart_eval(&chart, [0.7, 0.3, -0.2, 0.1], 1e-2, &opts_all()).unwrap();
        let out = &pt.values;
        // Weyl vanishes pointwise for any conformally flat metric; the
        // obstruction tensor vanishes too (it is conformally covariant and
        // zero on flat space). Curvature itself is NOT zero.
        assert!(out.scalar.abs() > 1e-3, "scalar = {}", out.scalar);
        assert!(max_abs(&out.riemann) > 1e-3);
        assert!(max_abs(&out.weyl) <= 1e-7, "weyl = {:e}", max_abs(&out.weyl));
        assert!(max_abs(&out.bach) <= 1e-6, "bach = {:e}", max_abs(&out.bach));
        // In dimension four the Cotton tensor is a multiple of the
        // divergence of Weyl, so it vanishes together with Weyl.
        assert!(cotton_max(&out.cotton) <= 1e-6);
    }

    #[test]
    fn richardson_extrapolation_gains_at_least_one_order() {
        // On the unit sphere the scalar curvature is exactly 12, so the
        // extrapolated error can be measured directly. Steps are kept
        // large enough that truncation dominates rounding.
        let chart = ChartMetric::SphereStereographic { radius: 1.0 };
        let x = [0.3, -0.2, 0.1, 0.4];
        let opts = opts_all();
        let err = |h: f64| -> f64 {
            let pt = chart_eval(&chart, x, h, &opts).unwrap();
            (pt.values.scalar - 12.0).abs()
        };
        let e1 = err(0.16);
        let e2 = err(0.08);
        let order = (e1 / e2).log2();
        // p = 4 and an even error expansion: expect ~6, demand > 5.
        assert!(
            order >= 5.0,
            "observed extrapolated order {order:.2} (errors {e1:.3e} -> {e2:.3e})"
        );
        // The raw (un-extrapolated) evaluations converge at order p only.
        let raw = |h: f64| -> f64 {
            let pt = chart_eval(&chart, x, h, &opts).unwrap();
            (pt.coarse.scalar - 12.0).abs()
        };
        let raw_order = (raw(0.16) / raw(0.08)).log2();
        assert!(
            (raw_order - 4.0).abs() < 0.7,
            "raw stencil order {raw_order:.2}"
        );
    }

    #[test]
    fn product_chart_rejects_points_near_the_poles() {
        let chart = ChartMetric::ProductSpheres { r1: 1.0, r2: 1.0 };
        // Margin 0.01 but the stencil cube needs 4 * 1e-2 * 3 = 0.12.
        let x = [QUARTER_PI + 0.01, 0.0, 1.6, 0.0];
        let err = chart_eval(&chart, x, 1e-2, &opts_all()).unwrap_err();
        match err {
            Error::ChartDomain(msg) => assert!(msg.contains("margin")),
            other => panic!("expected domain error, got {other:?}"),
        }
        // Same point passes once the step shrinks enough.
        assert!(chart_eval(&chart, x, 4e-4, &opts_all()).is_ok());
        // A comfortably interior point fails if the step is too large.
        let y = [1.5, 0.0, 1.6, 0.0];
        assert!(chart_eval(&chart, y, 1e-2, &opts_all()).is_ok());
        assert!(chart_eval(&chart, y, 0.2, &opts_all()).is_err());
    }

    #[test]
    fn invalid_chart_parameters_are_rejected() {
        assert!(matches!(
            chart_eval(
                &ChartMetric::SphereStereographic { radius: 0.0 },
                [0.0; 4],
                1e-2,
                &opts_all()
            ),
            Err(Error::BadConfig(_))
        ));
        assert!(matches!(
            chart_eval(&ChartMetric::Flat, [0.0; 4], -1e-2, &opts_all()),
            Err(Error::BadConfig(_))
        ));
        assert!(matches!(
            chart_eval(&ChartMetric::Flat, [f64::NAN, 0.0, 0.0, 0.0], 1e-2, &opts_all()),
            Err(Error::ChartDomain(_))
        ));
    }

    #[test]
    fn order_six_stencils_are_supported_in_charts() {
        let chart = ChartMetric::SphereStereographic { radius: 1.0 };
        let opts = CurvatureOptions {
            accuracy_order: 6,
            alternative_bach: false,
            gauge_vector: false,
        };
        let pt = chart_eval(&chart, [0.1, 0.2, -0.3, 0.0], 0.05, &opts).unwrap();
        assert!((pt.values.scalar - 12.0).abs() <= 1e-8 * 12.0);
    }
}
