//! Time evolution of the metric by its fourth-order curvature flow: the
//! right-hand side is the obstruction tensor plus the scalar-curvature
//! adjustment, optionally gauge-fixed by a flow-of-diffeomorphisms term so
//! that the linearization about a flat metric is strictly parabolic.
//!
//! Stepping is classical fourth-order Runge-Kutta with the step size tied to
//! the grid spacing and the current curvature size,
//! `dt = sigma * h_min^4 / (1 + sup |Rm|)`.

use serde::{Deserialize, Serialize};

use crate::algebra;
use crate::curvature::{assemble, CurvatureBundle, CurvatureOptions};
use crate::diag::{self, DiagnosticsRecord};
use crate::grid::{Field, GridSpec};
use crate::stencil;
use crate::tensor::MetricField;
use crate::{Error, Result, DIM};

/// Gauge of the evolution equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gauge {
    /// The bare equation `d/dt g = O + (1/12)(lap R) g`.
    Plain,
    /// Adds the Lie-derivative term `L_W g` with
    /// `W^k = -(1/4) lap X^k + (1/12) (grad R)^k`, `X^k = g^{ij} G^k_{ij}`,
    /// measured against the flat torus background, whose connection
    /// coefficients vanish in these periodic coordinates.
    Deturck,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The evolution reached the requested horizon.
    ReachedTEnd,
    /// sup |Rm| crossed the configured ceiling.
    CurvatureBlowup,
    /// Ten successive halvings of dt still produced an invalid stage.
    StepUnderflow,
    /// The state itself stopped being finite, so no step size can help.
    Nan,
}

/// Evolution parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Spatial accuracy order of every derivative (2, 4 or 6).
    pub accuracy_order: usize,
    pub gauge: Gauge,
    /// Step-size factor: dt = sigma * h_min^4 / (1 + sup |Rm|). Checked
    /// against the linear stability bound of the grid at validation.
    pub sigma: f64,
    pub t_end: f64,
    /// Hard cap on the number of accepted steps; exhausting it is reported
    /// as an error, not a termination.
    pub max_steps: usize,
    /// Diagnostics cadence in steps (the initial and final states are
    /// always recorded).
    pub record_every: usize,
    /// Snapshot cadence in steps (the initial and final states are always
    /// kept).
    pub snapshot_every: usize,
    /// Ceiling for sup |Rm|; crossing it terminates with CurvatureBlowup.
    /// Default: 1000 * (1 + initial sup |Rm|).
    pub curvature_ceiling: Option<f64>,
    /// Highest covariant-derivative order of Rm tracked in records
    /// (0 disables derivative tracking; expensive on large grids).
    pub derivative_orders: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            accuracy_order: 4,
            gauge: Gauge::Plain,
            sigma: 0.02,
            t_end: 1e-3,
            max_steps: 10_000_000,
            record_every: 10,
            snapshot_every: 10,
            curvature_ceiling: None,
            derivative_orders: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::BadConfig("sigma must be positive".into()));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::BadConfig("t_end must be nonnegative".into()));
        }
        if self.record_every == 0 || self.snapshot_every == 0 {
            return Err(Error::BadConfig("cadences must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::BadConfig("max_steps must be at least 1".into()));
        }
        if self.derivative_orders > 3 {
            return Err(Error::BadConfig(
                "derivative tracking is limited to order 3".into(),
            ));
        }
        if let Some(c) = self.curvature_ceiling {
            if !(c > 0.0) {
                return Err(Error::BadConfig("curvature ceiling must be positive".into()));
            }
        }
        let bound = stability_sigma_bound(grid, self.accuracy_order)?;
        if self.sigma > bound {
            return Err(Error::BadConfig(format!(
                "sigma {} exceeds the linear stability bound {:.4} of this grid \
                 at accuracy order {}",
                self.sigma, bound, self.accuracy_order
            )));
        }
        Ok(())
    }
}

/// Largest stable step-size factor for the linearized (gauge-fixed)
/// equation on this grid: the dominant symbol is a quarter of the discrete
/// bi-Laplacian, classical RK4 tolerates real eigenvalues down to about
/// -2.785, and dt = sigma * h_min^4. Per-axis symbol maxima are scanned
/// numerically; for central stencils both the second- and fourth-derivative
/// symbols peak at the Nyquist angle simultaneously, so combining the
/// per-axis maxima is tight, not merely safe.
pub fn stability_sigma_bound(grid: &GridSpec, accuracy_order: usize) -> Result<f64> {
    let t2 = stencil::stencil_coefficients(2, accuracy_order)?;
    let t4 = stencil::stencil_coefficients(4, accuracy_order)?;
    let mut s2max = 0.0f64;
    let mut s4max = 0.0f64;
    let m = 4096;
    for i in 0..=m {
        let theta = std::f64::consts::PI * i as f64 / m as f64;
        s2max = s2max.max(-t2.symbol(theta));
        s4max = s4max.max(t4.symbol(theta));
    }
    let active: Vec<usize> = (0..DIM).filter(|&a| grid.is_active(a)).collect();
    let mut lam_max = 0.0;
    for (pos, &a) in active.iter().enumerate() {
        let ha2 = grid.spacing(a) * grid.spacing(a);
        lam_max += s4max / (ha2 * ha2);
        for &b in &active[pos + 1..] {
            let hb2 = grid.spacing(b) * grid.spacing(b);
            lam_max += 2.0 * s2max * s2max / (ha2 * hb2);
        }
    }
    lam_max *= 0.25;
    if lam_max <= 0.0 {
        // no active axis: the right-hand side is identically zero
        return Ok(f64::INFINITY);
    }
    const RK4_REAL_AXIS: f64 = 2.785_293;
    Ok(RK4_REAL_AXIS / (grid.h_min().powi(4) * lam_max))
}

/// One stored state of a run.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub step: usize,
    pub g: MetricField,
}

/// A completed run: sampled states, scalar diagnostics, and why it stopped.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Sampled states at strictly increasing times, always including the
    /// initial and final ones.
    pub snapshots: Vec<FlowState>,
    pub records: Vec<DiagnosticsRecord>,
    pub termination: Termination,
    pub final_time: f64,
    pub steps_taken: usize,
    pub gauge: Gauge,
    pub accuracy_order: usize,
    /// True when this trajectory was produced by parabolic rescaling rather
    /// than direct evolution.
    pub rescaled: bool,
}

/// A right-hand-side evaluation, keeping the curvature bundle it came from
/// so diagnostics can reuse it.
pub struct RhsEval {
    /// d/dt of the packed metric components.
    pub rhs: Field,
    pub bundle: CurvatureBundle,
}

/// Evaluate the evolution right-hand side at `g`.
pub fn flow_rhs(g: &MetricField, gauge: Gauge, accuracy_order: usize) -> Result<RhsEval> {
    let opts = CurvatureOptions {
        accuracy_order,
        alternative_bach: false,
        gauge_vector: gauge == Gauge::Deturck,
    };
    let bundle = assemble(g, &opts)?;
    let rhs = match gauge {
        Gauge::Plain => bundle.adjusted.clone(),
        Gauge::Deturck => {
            let lie = lie_derivative_of_metric(&bundle)?;
            bundle.adjusted.axpy(1.0, &lie)
        }
    };
    if !rhs.is_finite() {
        return Err(Error::NonFinite { context: "flow right-hand side" });
    }
    Ok(RhsEval { rhs, bundle })
}

/// The Lie derivative of the metric along the bundle's gauge vector field:
/// lower the vector, differentiate the stored covector components, and
/// correct with the connection,
/// `(L_W g)_ij = d_i W_j + d_j W_i - 2 G^p_{ij} W_p`.
pub fn lie_derivative_of_metric(bundle: &CurvatureBundle) -> Result<Field> {
    let wvec = bundle
        .gauge_vector
        .as_ref()
        .ok_or_else(|| Error::BadConfig("bundle was assembled without the gauge vector".into()))?;
    let grid = bundle.grid();
    let nn = grid.num_nodes();
    let p = bundle.options.accuracy_order;

    let mut wlow = Field::zeros(grid, 4);
    for node in 0..nn {
        let gm = algebra::unpack_sym(&bundle.metric.at(node));
        for j in 0..4 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += gm[j][k] * wvec.comp(k)[node];
            }
            wlow.comp_mut(j)[node] = acc;
        }
    }
    // dw[a * 4 + j] = d_a W_j
    let mut dw = Vec::with_capacity(16);
    for a in 0..4 {
        let mut alpha = [0u8; 4];
        alpha[a] = 1;
        for j in 0..4 {
            dw.push(stencil::partial_derivative_plane(wlow.comp(j), grid, alpha, p)?);
        }
    }
    let mut lie = Field::zeros(grid, 10);
    for (c, &(i, j)) in algebra::SYM_PAIRS.iter().enumerate() {
        let di = &dw[i * 4 + j];
        let dj = &dw[j * 4 + i];
        let out = lie.comp_mut(c);
        for node in 0..nn {
            let mut s = di[node] + dj[node];
            for q in 0..4 {
                s -= 2.0 * bundle.christoffel.comp(q * 10 + c)[node] * wlow.comp(q)[node];
            }
            out[node] = s;
        }
    }
    Ok(lie)
}

fn metric_plus(g: &MetricField, s: f64, k: &Field) -> Result<MetricField> {
    MetricField::new(g.comps().axpy(s, k))
}

/// One classical RK4 step of size `dt` from `g`, reusing the caller's stage-1
/// right-hand side. Any non-positive-definite or non-finite stage aborts the
/// attempt.
fn rk4_step(
    g: &MetricField,
    dt: f64,
    gauge: Gauge,
    accuracy_order: usize,
    k1: &Field,
) -> Result<MetricField> {
    let g2 = metric_plus(g, 0.5 * dt, k1)?;
    let k2 = flow_rhs(&g2, gauge, accuracy_order)?.rhs;
    let g3 = metric_plus(g, 0.5 * dt, &k2)?;
    let k3 = flow_rhs(&g3, gauge, accuracy_order)?.rhs;
    let g4 = metric_plus(g, dt, &k3)?;
    let k4 = flow_rhs(&g4, gauge, accuracy_order)?.rhs;
    let mut incr = k1.scale(dt / 6.0);
    incr = incr.axpy(dt / 3.0, &k2);
    incr = incr.axpy(dt / 3.0, &k3);
    incr = incr.axpy(dt / 6.0, &k4);
    metric_plus(g, 1.0, &incr)
}

/// Evolve `g0` under the configured flow.
///
/// Each iteration assembles the curvature of the current state once; that
/// evaluation provides the first RK4 stage, the step-size policy, the
/// blow-up check and (at the configured cadence) a diagnostics record. A
/// failed step (loss of positivity or finiteness at any stage) halves dt and
/// retries up to ten times before terminating with StepUnderflow.
pub fn run_flow(g0: &MetricField, cfg: &FlowConfig) -> Result<Trajectory> {
    let grid = g0.grid();
    cfg.validate(grid)?;
    let p = cfg.accuracy_order;
    let h4 = grid.h_min().powi(4);

    let mut g = g0.clone();
    let mut t = 0.0f64;
    let mut step = 0usize;
    let mut snapshots = vec![FlowState { t, step, g: g.clone() }];
    let mut records: Vec<DiagnosticsRecord> = Vec::new();
    let mut last_recorded: Option<usize> = None;
    let mut ceiling: Option<f64> = cfg.curvature_ceiling;
    let mut last_eval: Option<RhsEval> = None;

    // `t_end` is reached when the remaining gap is pure rounding
    let done = |t: f64| t >= cfg.t_end - 1e-12 * cfg.t_end.max(1.0);

    let termination = loop {
        let eval = match flow_rhs(&g, cfg.gauge, p) {
            Ok(e) => e,
            Err(Error::NonFinite { .. }) => break Termination::Nan,
            Err(e) => return Err(e),
        };
        let sup_rm = eval.bundle.riemann_sup_norm();
        let cap = *ceiling.get_or_insert_with(|| 1e3 * (1.0 + sup_rm));
        if step % cfg.record_every == 0 && last_recorded != Some(step) {
            records.push(diag::record(&eval.bundle, t, step, cfg.derivative_orders)?);
            last_recorded = Some(step);
        }
        let k1 = eval.rhs.clone();
        last_eval = Some(eval);
        if done(t) {
            break Termination::ReachedTEnd;
        }
        if sup_rm > cap {
            break Termination::CurvatureBlowup;
        }
        if step >= cfg.max_steps {
            return Err(Error::Trajectory(format!(
                "step budget {} exhausted at t = {:.6e} before t_end = {:.6e}",
                cfg.max_steps, t, cfg.t_end
            )));
        }

        let mut dt = (cfg.sigma * h4 / (1.0 + sup_rm)).min(cfg.t_end - t);
        let mut next = None;
        for _ in 0..=10 {
            match rk4_step(&g, dt, cfg.gauge, p, &k1) {
                Ok(ng) => {
                    next = Some((ng, dt));
                    break;
                }
                Err(_) => dt *= 0.5,
            }
        }
        let Some((ng, used_dt)) = next else {
            break Termination::StepUnderflow;
        };
        g = ng;
        t += used_dt;
        step += 1;
        if step % cfg.snapshot_every == 0 {
            snapshots.push(FlowState { t, step, g: g.clone() });
        }
    };

    // make sure the final state is recorded and kept even off-cadence
    if last_recorded != Some(step) {
        if let Some(ev) = &last_eval {
            records.push(diag::record(&ev.bundle, t, step, cfg.derivative_orders)?);
        }
    }
    if snapshots.last().map(|s| s.step) != Some(step) {
        snapshots.push(FlowState { t, step, g: g.clone() });
    }

    Ok(Trajectory {
        snapshots,
        records,
        termination,
        final_time: t,
        steps_taken: step,
        gauge: cfg.gauge,
        accuracy_order: p,
        rescaled: false,
    })
}

/// Parabolic rescaling of a stored trajectory: the snapshot at time `t`
/// becomes `lambda * g` at the new time `lambda^2 (t - t0)`. Only snapshots
/// with `t >= t0` are kept (the map must not produce negative times); the
/// stored diagnostics describe the original parameterization and are not
/// carried over.
pub fn parabolic_rescale(traj: &Trajectory, lambda: f64, t0: f64) -> Result<Trajectory> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::BadConfig("rescaling factor must be positive".into()));
    }
    if !t0.is_finite() {
        return Err(Error::BadConfig("rescaling origin must be finite".into()));
    }
    let lam_sq = lambda * lambda;
    let mut snapshots = Vec::new();
    for s in &traj.snapshots {
        if s.t < t0 {
            continue;
        }
        let g = MetricField::new(s.g.comps().scale(lambda))?;
        snapshots.push(FlowState { t: lam_sq * (s.t - t0), step: s.step, g });
    }
    if snapshots.is_empty() {
        return Err(Error::Trajectory(format!(
            "no snapshots at or after the rescaling origin t0 = {t0}"
        )));
    }
    Ok(Trajectory {
        snapshots,
        records: Vec::new(),
        termination: traj.termination,
        final_time: traj
            .snapshots
            .last()
            .map(|s| lam_sq * (s.t - t0))
            .unwrap_or(0.0),
        steps_taken: traj.steps_taken,
        gauge: traj.gauge,
        accuracy_order: traj.accuracy_order,
        rescaled: true,
    })
}

/// How well a stored trajectory satisfies the evolution equation, measured
/// per interior snapshot: a three-point finite difference in time (exact on
/// quadratics, second order on uneven spacing) minus the right-hand side at
/// the middle state, in the curved L2 norm of the middle metric.
#[derive(Debug, Clone, Serialize)]
pub struct FlowResidual {
    /// (t, absolute residual, residual relative to ||rhs|| at that time).
    pub per_snapshot: Vec<(f64, f64, f64)>,
    pub max_absolute: f64,
    pub max_relative: f64,
}

/// Curved L2 norm of a packed symmetric 2-tensor field against `g`.
fn sym2_l2(bundle: &CurvatureBundle, f: &Field) -> Result<f64> {
    let sq = bundle.sym2_norm_squared(f);
    Ok(crate::tensor::integrate_scalar(&sq, &bundle.metric)?.max(0.0).sqrt())
}

pub fn flow_residual(traj: &Trajectory) -> Result<FlowResidual> {
    if traj.snapshots.len() < 3 {
        return Err(Error::Trajectory(
            "residual check needs at least three snapshots".into(),
        ));
    }
    let mut per_snapshot = Vec::new();
    let mut max_absolute = 0.0f64;
    let mut max_relative = 0.0f64;
    for w in traj.snapshots.windows(3) {
        let (s0, s1, s2) = (&w[0], &w[1], &w[2]);
        let d0 = s1.t - s0.t;
        let d1 = s2.t - s1.t;
        if !(d0 > 0.0) || !(d1 > 0.0) {
            return Err(Error::Trajectory(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        // three-point derivative at the middle time on uneven spacing
        let c0 = -d1 / (d0 * (d0 + d1));
        let c1 = (d1 - d0) / (d0 * d1);
        let c2 = d0 / (d1 * (d0 + d1));
        let mut dg = s0.g.comps().scale(c0);
        dg = dg.axpy(c1, s1.g.comps());
        dg = dg.axpy(c2, s2.g.comps());

        let eval = flow_rhs(&s1.g, traj.gauge, traj.accuracy_order)?;
        let diff = dg.axpy(-1.0, &eval.rhs);
        let abs = sym2_l2(&eval.bundle, &diff)?;
        let rhs_norm = sym2_l2(&eval.bundle, &eval.rhs)?;
        let rel = abs / (rhs_norm + 1e-300);
        max_absolute = max_absolute.max(abs);
        max_relative = max_relative.max(rel);
        per_snapshot.push((s1.t, abs, rel));
    }
    Ok(FlowResidual { per_snapshot, max_absolute, max_relative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded;
    use crate::tensor;

    fn short_cfg(gauge: Gauge, t_end: f64) -> FlowConfig {
        FlowConfig {
            gauge,
            t_end,
            sigma: 0.02,
            record_every: 5,
            snapshot_every: 5,
            ..Default::default()
        }
    }

    #[test]
    fn stability_bound_matches_hand_values() {
        // order-4 stencil symbols peak at 16/3 (second derivative) and 80/3
        // (fourth); one active axis then gives
        //   2.785 / ((1/4) * 80/3) = 0.4178 at unit spacing ratio h^4
        let g1 = GridSpec::cubic([16, 1, 1, 1]).unwrap();
        let b1 = stability_sigma_bound(&g1, 4).unwrap();
        assert!((b1 - 0.41779).abs() < 1e-3, "one-axis bound {b1}");
        let g2 = GridSpec::cubic([16, 16, 1, 1]).unwrap();
        let b2 = stability_sigma_bound(&g2, 4).unwrap();
        assert!((b2 - 0.10110).abs() < 1e-3, "two-axis bound {b2}");
        let g4 = GridSpec::cubic([8, 8, 8, 8]).unwrap();
        let b4 = stability_sigma_bound(&g4, 4).unwrap();
        assert!((b4 - 0.024873).abs() < 3e-4, "four-axis bound {b4}");
    }

    #[test]
    fn config_validation_rejects_unstable_sigma() {
        let grid = GridSpec::cubic([16, 16, 1, 1]).unwrap();
        let cfg = FlowConfig { sigma: 0.2, ..Default::default() };
        assert!(matches!(cfg.validate(&grid), Err(Error::BadConfig(_))));
        let ok = FlowConfig { sigma: 0.08, ..Default::default() };
        assert!(ok.validate(&grid).is_ok());
    }

    #[test]
    fn flat_metric_is_stationary() {
        let grid = GridSpec::cubic([12, 12, 1, 1]).unwrap();
        let g0 = MetricField::identity(&grid);
        for gauge in [Gauge::Plain, Gauge::Deturck] {
            let traj = run_flow(&g0, &short_cfg(gauge, 1e-3)).unwrap();
            assert_eq!(traj.termination, Termination::ReachedTEnd);
            let last = &traj.snapshots.last().unwrap().g;
            let drift = tensor::coordinate_l2_diff(last, &g0);
            // the right-hand side sits at the stencil rounding floor
            // (~1e-13), and t_end further scales it down
            assert!(drift < 1e-12, "{gauge:?} drift {drift}");
        }
    }

    #[test]
    fn constant_rescaled_flat_is_stationary() {
        let grid = GridSpec::cubic([10, 10, 1, 1]).unwrap();
        let g0 =
            MetricField::constant(&grid, [2.5, 0.0, 0.0, 0.0, 2.5, 0.0, 0.0, 2.5, 0.0, 2.5]);
        let traj = run_flow(&g0, &short_cfg(Gauge::Deturck, 1e-3)).unwrap();
        let drift = tensor::coordinate_l2_diff(&traj.snapshots.last().unwrap().g, &g0);
        assert!(drift < 1e-12, "drift {drift}");
    }

    #[test]
    fn gauge_fixed_linearization_decays_single_mode() {
        // g = delta + eps sin(x0) e22: the linearized gauge-fixed equation
        // predicts d/dt h = -(1/4) |k|^4 h, so the amplitude after time t
        // shrinks by exp(-t/4) for |k| = 1
        let grid = GridSpec::cubic([16, 1, 1, 1]).unwrap();
        let eps = 1e-4;
        let mut comps = MetricField::identity(&grid).comps().clone();
        comps.fill_comp(algebra::SYM_INDEX[2][2], |x| 1.0 + eps * x[0].sin());
        let g0 = MetricField::new(comps).unwrap();
        let flat = MetricField::identity(&grid);

        let t_end = 1.0;
        let cfg = FlowConfig {
            gauge: Gauge::Deturck,
            sigma: 0.08,
            t_end,
            snapshot_every: 50,
            record_every: 1000,
            ..Default::default()
        };
        let traj = run_flow(&g0, &cfg).unwrap();
        let a0 = tensor::coordinate_l2_diff(&traj.snapshots[0].g, &flat);
        let a1 = tensor::coordinate_l2_diff(&traj.snapshots.last().unwrap().g, &flat);
        let measured = (a0 / a1).ln() / t_end;
        assert!(
            (measured - 0.25).abs() < 0.0125,
            "decay rate {measured} vs predicted 0.25"
        );
    }

    #[test]
    fn blowup_ceiling_terminates_run() {
        // an engineered ceiling below the initial curvature fires on the
        // very first check
        let grid = GridSpec::cubic([12, 1, 1, 1]).unwrap();
        let g0 = seeded::random_metric(&grid, 1, 0.05, 4, 7).unwrap();
        let cfg = FlowConfig {
            gauge: Gauge::Plain,
            curvature_ceiling: Some(1e-6),
            t_end: 1.0,
            ..Default::default()
        };
        let traj = run_flow(&g0, &cfg).unwrap();
        assert_eq!(traj.termination, Termination::CurvatureBlowup);
        assert_eq!(traj.steps_taken, 0);
        assert!(!traj.records.is_empty());
    }

    #[test]
    fn records_include_initial_and_final_states() {
        let grid = GridSpec::cubic([10, 1, 1, 1]).unwrap();
        let g0 = seeded::random_metric(&grid, 1, 0.02, 4, 3).unwrap();
        let cfg = FlowConfig {
            gauge: Gauge::Deturck,
            sigma: 0.05,
            t_end: 5e-3,
            record_every: 7,
            snapshot_every: 11,
            ..Default::default()
        };
        let traj = run_flow(&g0, &cfg).unwrap();
        assert_eq!(traj.termination, Termination::ReachedTEnd);
        assert_eq!(traj.records.first().unwrap().step, 0);
        assert_eq!(traj.records.last().unwrap().step, traj.steps_taken);
        assert_eq!(traj.snapshots.first().unwrap().step, 0);
        assert_eq!(traj.snapshots.last().unwrap().step, traj.steps_taken);
        assert!((traj.final_time - 5e-3).abs() < 1e-12);
        for w in traj.snapshots.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn volume_and_q_integral_drift_stays_small() {
        // on a small perturbation both int Q dV and the total volume move
        // only at second order along the flow; over a short run the relative
        // drift must stay tiny
        let grid = GridSpec::cubic([12, 12, 1, 1]).unwrap();
        let g0 = seeded::random_metric(&grid, 1, 0.03, 6, 17).unwrap();
        let cfg = FlowConfig {
            gauge: Gauge::Deturck,
            sigma: 0.05,
            t_end: 2e-4,
            record_every: 1,
            ..Default::default()
        };
        let traj = run_flow(&g0, &cfg).unwrap();
        let v0 = traj.records.first().unwrap().volume;
        let v1 = traj.records.last().unwrap().volume;
        assert!((v1 - v0).abs() < 1e-5 * v0, "volume drift {} -> {}", v0, v1);
    }

    #[test]
    fn rescale_identity_is_bitwise() {
        let grid = GridSpec::cubic([10, 1, 1, 1]).unwrap();
        let g0 = seeded::random_metric(&grid, 1, 0.02, 4, 5).unwrap();
        let traj = run_flow(&g0, &short_cfg(Gauge::Deturck, 1e-3)).unwrap();
        let re = parabolic_rescale(&traj, 1.0, 0.0).unwrap();
        assert!(re.rescaled);
        assert_eq!(re.snapshots.len(), traj.snapshots.len());
        for (a, b) in traj.snapshots.iter().zip(&re.snapshots) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(a.g.comps().data(), b.g.comps().data());
        }
    }

    #[test]
    fn rescale_scales_metric_and_time() {
        let grid = GridSpec::cubic([10, 1, 1, 1]).unwrap();
        let g0 = seeded::random_metric(&grid, 1, 0.02, 4, 5).unwrap();
        let traj = run_flow(&g0, &short_cfg(Gauge::Deturck, 1e-3)).unwrap();
        let t0 = traj.snapshots[1].t;
        let re = parabolic_rescale(&traj, 2.0, t0).unwrap();
        assert_eq!(re.snapshots.len(), traj.snapshots.len() - 1);
        assert_eq!(re.snapshots[0].t, 0.0);
        let orig = &traj.snapshots[1].g;
        let newg = &re.snapshots[0].g;
        for c in 0..10 {
            for (x, y) in orig.comps().comp(c).iter().zip(newg.comps().comp(c)) {
                assert_eq!(2.0 * x, *y);
            }
        }
        for (a, b) in traj.snapshots[1..].iter().zip(&re.snapshots) {
            assert!((b.t - 4.0 * (a.t - t0)).abs() <= 1e-15 * b.t.abs().max(1.0));
        }
    }

    #[test]
    fn residual_vanishes_on_flat_trajectory() {
        let grid = GridSpec::cubic([10, 10, 1, 1]).unwrap();
        let g0 = MetricField::identity(&grid);
        let cfg = FlowConfig {
            gauge: Gauge::Deturck,
            t_end: 0.02,
            snapshot_every: 2,
            ..Default::default()
        };
        let traj = run_flow(&g0, &cfg).unwrap();
        assert!(traj.snapshots.len() >= 3);
        let res = flow_residual(&traj).unwrap();
        // the time derivative of an (up to rounding) constant trajectory and
        // the right-hand side are both at the rounding floor
        assert!(res.max_absolute < 1e-9, "absolute residual {}", res.max_absolute);
    }

    #[test]
    fn residual_is_small_and_second_order_in_snapshot_spacing() {
        let grid = GridSpec::cubic([12, 1, 1, 1]).unwrap();
        let g0 = seeded::random_metric(&grid, 1, 0.05, 4, 23).unwrap();
        let mut rels = Vec::new();
        for every in [8usize, 4, 2] {
            let cfg = FlowConfig {
                gauge: Gauge::Deturck,
                sigma: 0.05,
                t_end: 0.12,
                snapshot_every: every,
                record_every: 1_000_000,
                ..Default::default()
            };
            let traj = run_flow(&g0, &cfg).unwrap();
            assert!(traj.snapshots.len() >= 4);
            rels.push(flow_residual(&traj).unwrap().max_relative);
        }
        // the three-point formula is second order: halving the snapshot
        // spacing should cut the residual by about 4; demand at least 3x
        assert!(rels[0] < 0.05, "coarse relative residual {}", rels[0]);
        assert!(rels[0] / rels[1] > 3.0, "{:?}", rels);
        assert!(rels[1] / rels[2] > 3.0, "{:?}", rels);
    }

    #[test]
    fn rescaled_residual_matches_original() {
        // the equation is parabolic-scaling covariant, so rescaling a
        // trajectory cannot degrade how well it satisfies the equation
        let grid = GridSpec::cubic([12, 1, 1, 1]).unwrap();
        let g0 = seeded::random_metric(&grid, 1, 0.05, 4, 29).unwrap();
        let cfg = FlowConfig {
            gauge: Gauge::Plain,
            sigma: 0.05,
            t_end: 0.02,
            snapshot_every: 2,
            record_every: 1_000_000,
            ..Default::default()
        };
        let traj = run_flow(&g0, &cfg).unwrap();
        assert!(traj.snapshots.len() >= 3);
        let base = flow_residual(&traj).unwrap().max_relative;
        let re = parabolic_rescale(&traj, 2.0, 0.0).unwrap();
        let scaled = flow_residual(&re).unwrap().max_relative;
        assert!(
            scaled <= 2.0 * base,
            "rescaled residual {scaled} vs original {base}"
        );
    }

    #[test]
    fn zero_horizon_returns_initial_state_only() {
        let grid = GridSpec::cubic([8, 1, 1, 1]).unwrap();
        let g0 = MetricField::identity(&grid);
        let traj = run_flow(&g0, &short_cfg(Gauge::Plain, 0.0)).unwrap();
        assert_eq!(traj.termination, Termination::ReachedTEnd);
        assert_eq!(traj.steps_taken, 0);
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.records.len(), 1);
    }

    #[test]
    fn step_budget_exhaustion_is_an_error() {
        let grid = GridSpec::cubic([10, 1, 1, 1]).unwrap();
        let g0 = seeded::random_metric(&grid, 1, 0.02, 4, 3).unwrap();
        let cfg = FlowConfig { max_steps: 3, t_end: 10.0, ..Default::default() };
        assert!(matches!(run_flow(&g0, &cfg), Err(Error::Trajectory(_))));
    }
}
