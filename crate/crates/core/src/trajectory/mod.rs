//! Minimum-effort trajectories inside a control zone.

mod arc;
mod bvp;
mod costate;
pub mod linalg;
pub mod poly;
mod safety;

use thiserror::Error;

pub use arc::{CubicArc, LeaderOffsetArc, PiecewiseTrajectory, PosPiece, Segment, State};
pub use bvp::{
    solve_constrained, solve_constrained_with, solve_unconstrained, BvpProblem, ConstrainedSolution, Contact,
    SolverOptions,
};
pub use costate::{ArcCostate, CostateRecord, JumpMultiplier};
pub use safety::{
    check_bounds, detect_rear_end_violation, margin_pieces, min_margin, violation_intervals, BoundExcursion, BoundKind,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("time {t} outside trajectory span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("singular boundary problem on [{t0}, {tf}]")]
    Singular { t0: f64, tf: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("initial gap to the leader is already {margin} m short")]
    InitialViolation { margin: f64 },
    #[error("terminal position overruns the leader offset by {margin} m")]
    TerminalInfeasible { margin: f64 },
    #[error("constrained solver did not converge: {detail}")]
    NoConvergence { detail: String },
    #[error("constraint violations remain after {rounds} active-set rounds")]
    ActiveSetExhausted { rounds: usize },
}
