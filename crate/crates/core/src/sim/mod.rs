//! Corridor simulation in two modes: coordinated optimal control and an
//! uncoordinated car-following baseline with first-come stop-line priority.

pub mod baseline;
pub mod geometry;
pub mod metrics;
pub mod optimal;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corridor::{ApproachId, CorridorSpec, LinkId, Route, ZoneId};
use crate::scheduler::{ScheduleCase, ScheduleError, ScheduleLedger, VehicleId};
use crate::trajectory::{PiecewiseTrajectory, TrajectoryError};

pub use baseline::{baseline_step, idm_acceleration, BaselineWorld, IdmParams};
pub use geometry::{leader_ahead, LaneKey, LanePosition, LegGeometry, Phase, RoutePlan};
pub use metrics::{compute_metrics, Sample, Summary, VehicleMetrics};
pub use optimal::{SimEvent, SimEventKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Optimal,
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Optimal => "optimal",
            Mode::Baseline => "baseline",
        }
    }
}

/// A vehicle appearing at the first control-zone entry of its route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arrival {
    pub t0: f64,
    pub v0: f64,
    pub route: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Output sampling step (s).
    pub sample_dt: f64,
    /// Integration step of the baseline (s).
    pub baseline_dt: f64,
    /// Simulated time allowed after the last arrival before giving up (s).
    pub drain_time: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            sample_dt: 0.05,
            baseline_dt: 0.05,
            drain_time: 3600.0,
        }
    }
}

/// Everything needed to run one mode.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub corridor: CorridorSpec,
    pub routes: BTreeMap<String, Route>,
    pub arrivals: Vec<Arrival>,
    pub options: SimOptions,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0}")]
    Geometry(String),
    #[error("arrival {index}: {message}")]
    Arrival { index: usize, message: String },
    #[error("vehicle {vehicle} enters zone `{zone}` {gap:.3} m behind vehicle {leader}, closer than the minimum gap")]
    InitialGap {
        vehicle: VehicleId,
        leader: VehicleId,
        zone: ZoneId,
        gap: f64,
        at_spawn: bool,
    },
    #[error("vehicle {vehicle} at zone `{zone}`: {source}")]
    Schedule {
        vehicle: VehicleId,
        zone: ZoneId,
        source: ScheduleError,
    },
    #[error("vehicle {vehicle} at zone `{zone}`: {source}")]
    Trajectory {
        vehicle: VehicleId,
        zone: ZoneId,
        source: TrajectoryError,
    },
    #[error("vehicle {vehicle} would reach the conflict zone of `{zone}` at {speed:.3} m/s")]
    Stalled {
        vehicle: VehicleId,
        zone: ZoneId,
        speed: f64,
    },
    #[error("vehicle {vehicle} finds no entry time at `{zone}` that keeps the minimum gap downstream")]
    DownstreamGap { vehicle: VehicleId, zone: ZoneId },
    #[error("baseline did not clear all vehicles by t = {t:.1} s")]
    Stuck { t: f64 },
}

impl SimError {
    pub(crate) fn schedule(vehicle: VehicleId, zone: &ZoneId, source: ScheduleError) -> Self {
        SimError::Schedule {
            vehicle,
            zone: zone.clone(),
            source,
        }
    }

    /// Whether the failure stems from the input rather than from the run.
    pub fn is_config(&self) -> bool {
        match self {
            SimError::Geometry(_) | SimError::Arrival { .. } => true,
            SimError::InitialGap { at_spawn, .. } => *at_spawn,
            SimError::Schedule { source, .. } => matches!(
                source,
                ScheduleError::SpeedOutOfBounds { .. } | ScheduleError::UnknownZone(_) | ScheduleError::Corridor(_)
            ),
            _ => false,
        }
    }
}

/// One traversal of control zone, conflict zone and exit link.
#[derive(Debug, Clone)]
pub struct LegRecord {
    pub zone: ZoneId,
    pub approach: ApproachId,
    pub exit_link: LinkId,
    pub control_entry: f64,
    pub entry_speed: f64,
    pub conflict_entry: f64,
    pub conflict_exit: f64,
    /// Time the vehicle reaches the next control zone or leaves the corridor.
    pub leg_end: f64,
    /// Speed at the conflict-zone entry.
    pub exit_speed: f64,
    /// Control-zone effort; NaN when not tracked per leg.
    pub effort: f64,
    pub trajectory: Option<Arc<PiecewiseTrajectory<f64>>>,
    pub contacts: usize,
    pub bound_warnings: usize,
    pub case: Option<ScheduleCase>,
    pub commit_seq: Option<u64>,
    /// Vehicles whose committed plans this leg was computed against, with
    /// the commit sequence number of each.
    pub depends_on: Vec<(VehicleId, u64)>,
}

/// Scheduled (optimal) or observed (baseline) conflict-zone entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneEntry {
    pub vehicle: VehicleId,
    pub approach: ApproachId,
    pub entry_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<ScheduleCase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

/// Dense `(t, s, v, u)` history point; `u` is the acceleration applied
/// from `t` to the next point.
pub type HistoryPoint = (f64, f64, f64, f64);

#[derive(Debug, Clone)]
pub struct RawVehicle {
    pub id: VehicleId,
    pub plan: Arc<RoutePlan>,
    pub arrival: f64,
    pub spawn_speed: f64,
    pub exit_time: f64,
    pub legs: Vec<LegRecord>,
    /// Integration history; empty in optimal mode.
    pub history: Vec<HistoryPoint>,
}

impl RawVehicle {
    /// State `(s, v, u)` at `t` in route coordinates, for `t` within the
    /// vehicle's presence.
    pub fn state(&self, t: f64) -> (f64, f64, f64) {
        if !self.history.is_empty() {
            return interpolate(&self.history, t);
        }
        for (k, leg) in self.legs.iter().enumerate() {
            let g = self.plan.legs[k];
            if t <= leg.conflict_entry {
                if let Some(tr) = &leg.trajectory {
                    let s = tr.evaluate_extended(t.max(leg.control_entry));
                    return (g.control_start + s.p, s.v, s.u);
                }
            }
            if t <= leg.leg_end {
                return (
                    g.conflict_start + leg.exit_speed * (t - leg.conflict_entry),
                    leg.exit_speed,
                    0.0,
                );
            }
        }
        let (s, v) = self
            .legs
            .last()
            .map_or((0.0, self.spawn_speed), |l| (self.plan.length(), l.exit_speed));
        (s, v, 0.0)
    }

    pub fn travel_time(&self) -> f64 {
        self.exit_time - self.arrival
    }
}

fn interpolate(h: &[HistoryPoint], t: f64) -> (f64, f64, f64) {
    let i = h.partition_point(|p| p.0 <= t);
    if i == 0 {
        let p = h[0];
        return (p.1, p.2, p.3);
    }
    if i == h.len() {
        let p = h[h.len() - 1];
        return (p.1, p.2, p.3);
    }
    let (a, b) = (h[i - 1], h[i]);
    let w = if b.0 > a.0 { (t - a.0) / (b.0 - a.0) } else { 0.0 };
    (a.1 + w * (b.1 - a.1), a.2 + w * (b.2 - a.2), a.3 + w * (b.3 - a.3))
}

#[derive(Debug, Clone)]
pub struct RawRun {
    pub vehicles: Vec<RawVehicle>,
    pub schedule: BTreeMap<ZoneId, Vec<ZoneEntry>>,
    /// Final scheduler state (optimal mode only).
    pub ledger: Option<ScheduleLedger<f64>>,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub mode: Mode,
    pub raw: RawRun,
    pub vehicles: Vec<VehicleMetrics>,
    pub samples: Vec<Vec<Sample>>,
    pub summary: Summary,
}

pub(crate) struct SimInput<'a> {
    pub corridor: &'a CorridorSpec,
    pub plans: BTreeMap<String, Arc<RoutePlan>>,
    pub arrivals: &'a [Arrival],
    pub options: SimOptions,
}

/// Route plans for every named route.
pub fn plan_routes(
    corridor: &CorridorSpec,
    routes: &BTreeMap<String, Route>,
) -> Result<BTreeMap<String, Arc<RoutePlan>>, SimError> {
    routes
        .iter()
        .map(|(name, r)| {
            RoutePlan::new(name, r, corridor)
                .map(|p| (name.clone(), Arc::new(p)))
                .map_err(|e| SimError::Geometry(e.0))
        })
        .collect()
}

/// Runs one mode over the scenario and computes per-vehicle metrics.
pub fn run_scenario(scenario: &Scenario, mode: Mode) -> Result<ScenarioResult, SimError> {
    let plans = plan_routes(&scenario.corridor, &scenario.routes)?;
    let mut arrivals = scenario.arrivals.clone();
    for (index, a) in arrivals.iter().enumerate() {
        if !plans.contains_key(&a.route) {
            return Err(SimError::Arrival {
                index,
                message: format!("unknown route `{}`", a.route),
            });
        }
        if !(a.t0.is_finite() && a.v0.is_finite()) {
            return Err(SimError::Arrival {
                index,
                message: "t0 and v0 must be finite".into(),
            });
        }
    }
    arrivals.sort_by(|a, b| a.t0.total_cmp(&b.t0));
    let input = SimInput {
        corridor: &scenario.corridor,
        plans,
        arrivals: &arrivals,
        options: scenario.options,
    };
    let raw = match mode {
        Mode::Optimal => optimal::run(&input)?,
        Mode::Baseline => baseline::run(&input)?,
    };
    Ok(compute_metrics(mode, raw, &scenario.corridor, &scenario.options))
}
