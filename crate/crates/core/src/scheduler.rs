//! Upper-level coordination: assigns each vehicle the time it enters a
//! conflict zone so that lateral conflicts are separated by the headway and
//! same-lane vehicles keep their order, processing arrivals first come first
//! served. Assigned times are stored per zone and never revised.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corridor::ApproachSpec;
use crate::corridor::{
    feasible_time_bounds, ApproachId, ConflictZoneSpec, CorridorError, CorridorSpec, GlobalParams, ZoneId,
};
use crate::scalar::TimeValue;

/// Coordinator-assigned vehicle identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("conflicting entry times must be sorted ascending")]
    Unsorted,
    #[error("entry speed {speed} outside [{v_min}, {v_max}]")]
    SpeedOutOfBounds { speed: f64, v_min: f64, v_max: f64 },
    #[error("vehicle {vehicle} already holds an entry time at zone `{zone}`")]
    AlreadyAssigned { vehicle: VehicleId, zone: ZoneId },
    #[error("vehicle {vehicle} cannot enter zone `{zone}` safely before its latest feasible time {t_max:.3} s (needs {required:.3} s)")]
    Infeasible {
        vehicle: VehicleId,
        zone: ZoneId,
        required: f64,
        t_max: f64,
    },
    #[error("unknown zone `{0}`")]
    UnknownZone(ZoneId),
    #[error(transparent)]
    Corridor(#[from] CorridorError),
}

/// Which branch of the recursive entry-time rule produced an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleCase {
    /// No conflicting vehicle is scheduled at or after the candidate.
    AfterAllConflicts,
    /// The candidate leaves a full headway before the next conflicting entry.
    BeforeNextConflict,
    /// Slotted one headway after a conflicting entry that leaves room.
    InGap,
    /// No gap fits: one headway after the last conflicting entry.
    AfterLastConflict,
}

/// Clip a same-lane follower's earliest entry (predecessor entry plus
/// headway) to the feasible window.
pub fn entry_time_same_lane<T: TimeValue>(t_k: T, rho: T, t_min: T, t_max: T) -> T {
    (t_k + rho).min_of(t_max).max_of(t_min)
}

/// The desired entry time of an unconstrained vehicle: constant-speed travel
/// through the control zone, clipped to the feasible window.
pub fn first_vehicle_time<T: TimeValue>(
    t0: T,
    v0: T,
    approach: &ApproachSpec<T>,
    params: &GlobalParams<T>,
) -> Result<T, ScheduleError> {
    if v0 < params.v_min || v0 > params.v_max || v0 <= T::zero() {
        return Err(ScheduleError::SpeedOutOfBounds {
            speed: to_f64(v0),
            v_min: to_f64(params.v_min),
            v_max: to_f64(params.v_max),
        });
    }
    let (t_min, t_max) = feasible_time_bounds(approach, t0, params)?;
    let natural = t0 + approach.control_zone_length / v0;
    Ok(natural.max_of(t_min).min_of(t_max))
}

/// Conflicting entries at or after the candidate (`A`), and the subset that
/// leaves room for one more vehicle before its successor (`L`). The last
/// element of `A` has no successor and never belongs to `L`.
pub fn build_sets_a_l<T: TimeValue>(
    candidate: T,
    conflicting_times: &[T],
    rho: T,
) -> Result<(Vec<T>, Vec<T>), ScheduleError> {
    if conflicting_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(ScheduleError::Unsorted);
    }
    let later: Vec<T> = conflicting_times.iter().copied().filter(|&t| t >= candidate).collect();
    let gaps = later
        .windows(2)
        .filter(|w| w[0] + rho <= w[1] - rho)
        .map(|w| w[0])
        .collect();
    Ok((later, gaps))
}

/// Earliest entry at or after `candidate` that keeps at least `rho` from every
/// conflicting entry, following the four-branch recursion.
///
/// Conflicting entries earlier than the candidate but within one headway of it
/// raise the lower bound before the branches are tested.
pub fn resolve_lateral<T: TimeValue>(
    candidate: T,
    conflicting_times: &[T],
    rho: T,
) -> Result<(T, ScheduleCase), ScheduleError> {
    let (later, gaps) = build_sets_a_l(candidate, conflicting_times, rho)?;
    let lower = conflicting_times
        .iter()
        .copied()
        .filter(|&t| t < candidate)
        .fold(candidate, |acc, t| acc.max_of(t + rho));

    let Some(&first_later) = later.first() else {
        return Ok((lower, ScheduleCase::AfterAllConflicts));
    };
    if lower + rho <= first_later {
        return Ok((lower, ScheduleCase::BeforeNextConflict));
    }
    if let Some(&gap_start) = gaps.first() {
        return Ok((gap_start + rho, ScheduleCase::InGap));
    }
    let last = *later.last().expect("non-empty");
    Ok((last + rho, ScheduleCase::AfterLastConflict))
}

fn to_f64<T: TimeValue>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment<T = f64> {
    pub vehicle: VehicleId,
    pub approach: ApproachId,
    pub entry_time: T,
    pub case: ScheduleCase,
    /// Order in which assignments were committed across the whole corridor.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneLedger<T = f64> {
    pub zone: ZoneId,
    /// Assignments in the order they were made.
    pub assignments: Vec<Assignment<T>>,
    /// Vehicles currently inside the control zone, in arrival order.
    pub queue: Vec<VehicleId>,
}

/// Per-zone record of assigned conflict-zone entry times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleLedger<T = f64> {
    pub zones: BTreeMap<ZoneId, ZoneLedger<T>>,
    next_seq: u64,
}

/// One control-zone arrival to be scheduled.
#[derive(Debug, Clone)]
pub struct ArrivalRequest<T> {
    pub vehicle: VehicleId,
    pub approach: ApproachId,
    pub t0: T,
    /// Speed the vehicle would like to hold through the control zone.
    pub cruise_speed: T,
    /// Same-lane headway to use instead of `rho` when larger.
    pub rear_headway: Option<T>,
    /// Earliest acceptable entry time, applied before lateral resolution.
    pub not_before: Option<T>,
}

impl<T: TimeValue> ScheduleLedger<T> {
    pub fn new<'a>(zones: impl IntoIterator<Item = &'a ZoneId>) -> Self {
        Self {
            zones: zones
                .into_iter()
                .map(|z| {
                    (
                        z.clone(),
                        ZoneLedger {
                            zone: z.clone(),
                            assignments: Vec::new(),
                            queue: Vec::new(),
                        },
                    )
                })
                .collect(),
            next_seq: 0,
        }
    }

    pub fn for_corridor(corridor: &CorridorSpec<T>) -> Self {
        Self::new(corridor.zones.iter().map(|z| &z.id))
    }

    pub fn zone(&self, zone: &ZoneId) -> Option<&ZoneLedger<T>> {
        self.zones.get(zone)
    }

    fn zone_mut(&mut self, zone: &ZoneId) -> Result<&mut ZoneLedger<T>, ScheduleError> {
        self.zones
            .get_mut(zone)
            .ok_or_else(|| ScheduleError::UnknownZone(zone.clone()))
    }

    pub fn assignment(&self, zone: &ZoneId, vehicle: VehicleId) -> Option<&Assignment<T>> {
        self.zone(zone)?.assignments.iter().find(|a| a.vehicle == vehicle)
    }

    /// Most recent assignment on the same approach lane.
    pub fn same_lane_predecessor(&self, zone: &ZoneId, approach: &ApproachId) -> Option<&Assignment<T>> {
        self.zone(zone)?
            .assignments
            .iter()
            .rev()
            .find(|a| &a.approach == approach)
    }

    /// Sorted entry times of assignments that laterally conflict with `approach`.
    pub fn conflicting_times(&self, zone: &ConflictZoneSpec<T>, approach: &ApproachId) -> Vec<T> {
        let mut times: Vec<T> = self
            .zone(&zone.id)
            .map(|l| {
                l.assignments
                    .iter()
                    .filter(|a| zone.conflicts(&a.approach, approach))
                    .map(|a| a.entry_time)
                    .collect()
            })
            .unwrap_or_default();
        times.sort_by(|a, b| a.partial_cmp(b).expect("comparable times"));
        times
    }

    pub fn enter_control_zone(&mut self, zone: &ZoneId, vehicle: VehicleId) -> Result<(), ScheduleError> {
        self.zone_mut(zone)?.queue.push(vehicle);
        Ok(())
    }

    pub fn enter_conflict_zone(&mut self, zone: &ZoneId, vehicle: VehicleId) -> Result<(), ScheduleError> {
        self.zone_mut(zone)?.queue.retain(|v| *v != vehicle);
        Ok(())
    }

    /// Resolve lateral conflicts for `t_candidate`, check feasibility against
    /// `t_max` and the same-lane predecessor, and store the result.
    #[allow(clippy::too_many_arguments)]
    pub fn schedule_entry(
        &mut self,
        zone: &ConflictZoneSpec<T>,
        vehicle: VehicleId,
        approach: &ApproachId,
        t_candidate: T,
        t_max: T,
        rho: T,
        rear_headway: T,
    ) -> Result<Assignment<T>, ScheduleError> {
        if self.assignment(&zone.id, vehicle).is_some() {
            return Err(ScheduleError::AlreadyAssigned {
                vehicle,
                zone: zone.id.clone(),
            });
        }
        let conflicting = self.conflicting_times(zone, approach);
        let (time, case) = resolve_lateral(t_candidate, &conflicting, rho)?;
        let required = match self.same_lane_predecessor(&zone.id, approach) {
            Some(pred) => time.max_of(pred.entry_time + rear_headway),
            None => time,
        };
        if required > t_max || required > time {
            return Err(ScheduleError::Infeasible {
                vehicle,
                zone: zone.id.clone(),
                required: to_f64(required),
                t_max: to_f64(t_max),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let assignment = Assignment {
            vehicle,
            approach: approach.clone(),
            entry_time: time,
            case,
            seq,
        };
        self.zone_mut(&zone.id)?.assignments.push(assignment.clone());
        Ok(assignment)
    }

    /// Full arrival pipeline: feasible window, desired time, same-lane
    /// headway, lateral resolution. Registers the vehicle in the zone queue.
    pub fn assign_arrival(
        &mut self,
        corridor: &CorridorSpec<T>,
        zone_id: &ZoneId,
        request: &ArrivalRequest<T>,
    ) -> Result<Assignment<T>, ScheduleError> {
        let zone = corridor
            .zone(zone_id)
            .ok_or_else(|| ScheduleError::UnknownZone(zone_id.clone()))?;
        let approach = zone
            .approach(&request.approach)
            .ok_or_else(|| CorridorError::UnknownApproach {
                zone: zone_id.clone(),
                approach: request.approach.clone(),
            })?;
        let params = &corridor.params;
        let (t_min, t_max) = feasible_time_bounds(approach, request.t0, params)?;
        let desired = first_vehicle_time(request.t0, request.cruise_speed, approach, params)?;
        let headway = request.rear_headway.map_or(params.rho, |h| h.max_of(params.rho));
        let candidate = match self.same_lane_predecessor(zone_id, &request.approach) {
            Some(pred) => desired.max_of(entry_time_same_lane(pred.entry_time, headway, t_min, t_max)),
            None => desired,
        };
        let candidate = request.not_before.map_or(candidate, |t| candidate.max_of(t));
        self.enter_control_zone(zone_id, request.vehicle)?;
        self.schedule_entry(
            zone,
            request.vehicle,
            &request.approach,
            candidate,
            t_max,
            params.rho,
            headway,
        )
    }
}
