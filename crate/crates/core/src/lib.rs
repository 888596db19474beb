//! Two-level coordination of connected automated vehicles through a corridor
//! of conflict zones: first-come-first-served entry-time scheduling at each
//! zone, minimum-effort trajectories with rear-end safety inside each control
//! zone, and a simulator comparing the result against car-following traffic.

pub mod cli;
pub mod corridor;
pub mod io;
pub mod scalar;
pub mod scheduler;
pub mod sim;
pub mod trajectory;

pub use corridor::{CorridorSpec, GlobalParams, Route, RouteLeg};
pub use scheduler::{ArrivalRequest, ScheduleLedger, VehicleId};
pub use sim::{run_scenario, Arrival, Mode, Scenario, ScenarioResult, SimOptions};
pub use trajectory::{BvpProblem, CubicArc, PiecewiseTrajectory};

/// Trajectory in double precision, as used by the simulator.
pub type Trajectory = PiecewiseTrajectory<f64>;
/// Single-precision trajectory.
pub type TrajectoryF32 = PiecewiseTrajectory<f32>;
/// Scheduler ledger in double precision.
pub type Ledger = ScheduleLedger<f64>;
/// Scheduler ledger in exact rational arithmetic.
pub type ExactLedger = ScheduleLedger<num_rational::Rational64>;
/// Boundary-value problem in double precision.
pub type Problem = BvpProblem<f64>;
