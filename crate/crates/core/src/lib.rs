//! Numerical laboratory for the ambient obstruction flow on the 4-torus.
//!
//! The flow evolves a Riemannian metric by the adjusted obstruction tensor,
//! `dg/dt = B + (1/12)(lap R) g`, where `B` is the Bach tensor. Everything
//! spatial lives on a periodic structured grid; all differentiation funnels
//! through central finite-difference stencils, and every curvature object is
//! pointwise polynomial algebra in the metric and its partials through fourth
//! order.
//!
//! Sign conventions (the literature does not agree on these; ours are fixed
//! so the round sphere has positive scalar curvature):
//!
//! * lowered Riemann tensor
//!   `R_ijkl = (d_i d_k g_jl + d_j d_l g_ik - d_i d_l g_jk - d_j d_k g_il)/2
//!             + g^mp (G_mik G_pjl - G_mil G_pjk)`
//!   with `G_lij` the first-kind Christoffel symbols; on the unit sphere this
//!   gives `Rm = g (x) g` in the sense `R_ijkl = g_il g_jk - g_ik g_jl`.
//! * `Rc_jk = g^il R_ijkl` (trace on the first and last slots), so the unit
//!   sphere has `Rc = 3g`, `R = 12`.
//! * Kulkarni-Nomizu product ordered to match:
//!   `(h (x) k)_ijkl = h_il k_jk + h_jk k_il - h_ik k_jl - h_jl k_ik`.
//! * With those choices the Bach tensor is `B_ij = div^k C_ijk + A^kl W_kijl`
//!   and equivalently `B_ij = grad^l grad^k W_kijl + (1/2) Rc^kl W_kijl`;
//!   the scalar identity `grad^l grad^k W_kijl = div^k C_ijk` holds exactly
//!   at the level of metric jets. `d/de Int Q dV = Int <B, h> dV` fixes the
//!   overall sign (checked in tests).
//! * `Delta` is the rough Laplacian (trace of the second covariant
//!   derivative), negative on sine modes of the flat torus.

pub mod algebra;
pub mod chart;
pub mod curvature;
pub mod diag;
pub mod flow;
pub mod grid;
pub mod io;
pub mod seeded;
pub mod stencil;
pub mod tensor;

pub use grid::{Field, GridSpec};
pub use tensor::{MetricField, TensorField, Variance};

/// Spatial dimension of the manifold. Fixed: the obstruction tensor equals
/// the Bach tensor only in dimension 4, and every coefficient below bakes
/// that in.
pub const DIM: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("metric not positive definite at node {node}: leading {order}x{order} minor = {minor:.6e}")]
    NonSpd {
        node: usize,
        order: usize,
        minor: f64,
    },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("grid axis {axis} has {nodes} nodes but the requested stencil needs {needed}")]
    GridTooSmall {
        axis: usize,
        nodes: usize,
        needed: usize,
    },
    #[error("unsupported stencil request: derivative order {k}, accuracy {p}")]
    BadStencil { k: usize, p: usize },
    #[error("derivative multi-index exceeds total order 4: {order}")]
    DerivativeOrder { order: usize },
    #[error("tensor rank {rank} out of range for {op} (max {max})")]
    RankRange {
        rank: usize,
        op: &'static str,
        max: usize,
    },
    #[error("index slot {slot} invalid: {reason}")]
    BadSlot { slot: usize, reason: String },
    #[error("grids do not match: {0}")]
    GridMismatch(String),
    #[error("chart evaluation point violates the admissible domain: {0}")]
    ChartDomain(String),
    #[error("flow configuration invalid: {0}")]
    BadConfig(String),
    #[error("trajectory operation failed: {0}")]
    Trajectory(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),
    #[error("config parse error: {0}")]
    ConfigParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
