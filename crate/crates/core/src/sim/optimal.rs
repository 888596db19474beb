//! Event-driven optimal mode: schedule on control-zone entry, commit a
//! minimum-effort trajectory, cross the conflict zone and the following link
//! at the terminal speed.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::corridor::{CorridorSpec, ZoneId};
use crate::scheduler::{ArrivalRequest, ScheduleLedger, VehicleId};
use crate::trajectory::{check_bounds, solve_constrained_with, BvpProblem, SolverOptions};

use super::geometry::RoutePlan;
use super::{LegRecord, RawRun, RawVehicle, SimError, SimInput, ZoneEntry};

/// Slowest terminal speed accepted for crossing a conflict zone.
const MIN_CROSSING_SPEED: f64 = 0.5;
const MAX_GUARD_ATTEMPTS: usize = 40;
/// Step used to scan the constant-speed stretch after the conflict zone.
const GUARD_SCAN_DT: f64 = 0.02;
/// Share of the braking capability assumed when a faster vehicle closes in
/// on a slower one downstream.
const GUARD_BRAKE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SimEventKind {
    ConflictZoneExit,
    ConflictZoneEntry,
    ControlZoneEntry,
}

/// Ordered by time, then kind (exits first), then vehicle id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub t: f64,
    pub kind: SimEventKind,
    pub vehicle: VehicleId,
    pub leg: usize,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.kind.cmp(&other.kind))
            .then(self.vehicle.cmp(&other.vehicle))
            .then(self.leg.cmp(&other.leg))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Vehicle {
    id: VehicleId,
    plan: Arc<RoutePlan>,
    arrival: f64,
    speed: f64,
    legs: Vec<LegRecord>,
}

impl Vehicle {
    fn leg_at(&self, zone: &ZoneId) -> Option<&LegRecord> {
        self.legs.iter().find(|l| &l.zone == zone)
    }

    /// Route position and speed at `t` from committed legs, holding the last
    /// known speed beyond them; `None` before spawn or after leaving.
    fn position(&self, t: f64) -> Option<(f64, f64)> {
        let first = self.legs.first()?;
        if t < first.control_entry {
            return None;
        }
        for (k, leg) in self.legs.iter().enumerate() {
            let g = self.plan.legs[k];
            if t <= leg.conflict_entry {
                let s = leg.trajectory.as_ref()?.evaluate(t.max(leg.control_entry)).ok()?;
                return Some((g.control_start + s.p, s.v));
            }
            if t <= leg.leg_end {
                return Some((
                    g.conflict_start + leg.exit_speed * (t - leg.conflict_entry),
                    leg.exit_speed,
                ));
            }
        }
        let last = self.legs.last()?;
        if self.legs.len() == self.plan.legs.len() {
            return None;
        }
        let g = self.plan.legs[self.legs.len() - 1];
        Some((g.link_end + last.exit_speed * (t - last.leg_end), last.exit_speed))
    }
}

pub(crate) fn run(input: &SimInput<'_>) -> Result<RawRun, SimError> {
    let corridor = input.corridor;
    let mut ledger = ScheduleLedger::for_corridor(corridor);
    let mut vehicles: Vec<Vehicle> = input
        .arrivals
        .iter()
        .enumerate()
        .map(|(i, a)| Vehicle {
            id: VehicleId(i as u32 + 1),
            plan: Arc::clone(&input.plans[&a.route]),
            arrival: a.t0,
            speed: a.v0,
            legs: Vec::new(),
        })
        .collect();
    let mut events = BinaryHeap::new();
    for v in &vehicles {
        events.push(Reverse(SimEvent {
            t: v.arrival,
            kind: SimEventKind::ControlZoneEntry,
            vehicle: v.id,
            leg: 0,
        }));
    }
    let opts = SolverOptions::default();
    let mut commit_seq = 0u64;
    let mut last_t = f64::NEG_INFINITY;
    while let Some(Reverse(ev)) = events.pop() {
        debug_assert!(ev.t >= last_t);
        last_t = ev.t;
        let idx = ev.vehicle.0 as usize - 1;
        match ev.kind {
            SimEventKind::ConflictZoneExit => {}
            SimEventKind::ConflictZoneEntry => {
                let zone = vehicles[idx].plan.route.legs[ev.leg].zone.clone();
                ledger
                    .enter_conflict_zone(&zone, ev.vehicle)
                    .map_err(|e| SimError::schedule(ev.vehicle, &zone, e))?;
            }
            SimEventKind::ControlZoneEntry => {
                let record = commit_leg(corridor, &mut ledger, &vehicles, idx, ev.leg, ev.t, &opts, commit_seq)?;
                commit_seq += 1;
                let (t_star, t_exit, t_end) = (record.conflict_entry, record.conflict_exit, record.leg_end);
                let vehicle = &mut vehicles[idx];
                vehicle.legs.push(record);
                for (t, kind, leg) in [
                    (t_star, SimEventKind::ConflictZoneEntry, ev.leg),
                    (t_exit, SimEventKind::ConflictZoneExit, ev.leg),
                ] {
                    events.push(Reverse(SimEvent {
                        t,
                        kind,
                        vehicle: ev.vehicle,
                        leg,
                    }));
                }
                if ev.leg + 1 < vehicle.plan.legs.len() {
                    events.push(Reverse(SimEvent {
                        t: t_end,
                        kind: SimEventKind::ControlZoneEntry,
                        vehicle: ev.vehicle,
                        leg: ev.leg + 1,
                    }));
                }
            }
        }
    }

    let schedule = corridor
        .zones
        .iter()
        .map(|z| {
            let mut entries: Vec<ZoneEntry> = ledger
                .zone(&z.id)
                .map(|zl| {
                    zl.assignments
                        .iter()
                        .map(|a| ZoneEntry {
                            vehicle: a.vehicle,
                            approach: a.approach.clone(),
                            entry_time: a.entry_time,
                            case: Some(a.case),
                            seq: Some(a.seq),
                        })
                        .collect()
                })
                .unwrap_or_default();
            entries.sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.vehicle.cmp(&b.vehicle)));
            (z.id.clone(), entries)
        })
        .collect();
    let raw = vehicles
        .into_iter()
        .map(|v| {
            let exit_time = v.legs.last().map_or(v.arrival, |l| l.leg_end);
            RawVehicle {
                id: v.id,
                plan: v.plan,
                arrival: v.arrival,
                spawn_speed: v.speed,
                exit_time,
                legs: v.legs,
                history: Vec::new(),
            }
        })
        .collect();
    Ok(RawRun {
        vehicles: raw,
        schedule,
        ledger: Some(ledger),
    })
}

#[allow(clippy::too_many_arguments)]
fn commit_leg(
    corridor: &CorridorSpec,
    ledger: &mut ScheduleLedger<f64>,
    vehicles: &[Vehicle],
    idx: usize,
    k: usize,
    t: f64,
    opts: &SolverOptions<f64>,
    commit_seq: u64,
) -> Result<LegRecord, SimError> {
    let params = &corridor.params;
    let me = &vehicles[idx];
    let leg = &me.plan.route.legs[k];
    let geom = me.plan.legs[k];
    let zone = corridor
        .zone(&leg.zone)
        .ok_or_else(|| SimError::Geometry(format!("unknown zone {}", leg.zone)))?;
    let v_in = if k == 0 { me.speed } else { me.legs[k - 1].exit_speed };

    let pred = ledger.same_lane_predecessor(&zone.id, &leg.approach).map(|a| a.vehicle);
    let pred_leg = pred.and_then(|p| vehicles[p.0 as usize - 1].leg_at(&zone.id));
    let leader = pred_leg.and_then(|l| l.trajectory.clone());
    let mut rear_headway = None;
    if let (Some(p), Some(lt)) = (pred, leader.as_ref()) {
        let gap = lt.evaluate_extended(t).p;
        if gap < params.delta - 1e-9 {
            return Err(SimError::InitialGap {
                vehicle: me.id,
                leader: p,
                zone: zone.id.clone(),
                gap,
                at_spawn: k == 0,
            });
        }
        let v_kf = lt.terminal_state().v;
        rear_headway = Some(params.rho.max(params.delta / v_kf));
    }

    let mut deps: Vec<(VehicleId, u64)> = Vec::new();
    if let Some(l) = pred_leg {
        deps.push((
            pred.expect("leader leg implies predecessor"),
            l.commit_seq.unwrap_or(u64::MAX),
        ));
    }
    for a in ledger.zone(&zone.id).map(|z| z.assignments.as_slice()).unwrap_or(&[]) {
        if zone.conflicts(&a.approach, &leg.approach) {
            let seq = vehicles[a.vehicle.0 as usize - 1]
                .leg_at(&zone.id)
                .and_then(|l| l.commit_seq)
                .unwrap_or(u64::MAX);
            deps.push((a.vehicle, seq));
        }
    }

    let mut not_before = None;
    for _ in 0..MAX_GUARD_ATTEMPTS {
        let mut trial = ledger.clone();
        let request = ArrivalRequest {
            vehicle: me.id,
            approach: leg.approach.clone(),
            t0: t,
            cruise_speed: me.speed,
            rear_headway,
            not_before,
        };
        let assignment = trial
            .assign_arrival(corridor, &zone.id, &request)
            .map_err(|e| SimError::schedule(me.id, &zone.id, e))?;
        let t_star = assignment.entry_time;
        let mut problem = BvpProblem::new(t, t_star, v_in, 0.0, geom.control_length());
        if let Some(lt) = leader.as_ref() {
            problem = problem.with_leader(Arc::clone(lt), params.delta);
        }
        let solution = solve_constrained_with(&problem, opts).map_err(|e| SimError::Trajectory {
            vehicle: me.id,
            zone: zone.id.clone(),
            source: e,
        })?;
        let exit_speed = solution.trajectory.terminal_state().v;
        if exit_speed < MIN_CROSSING_SPEED {
            return Err(SimError::Stalled {
                vehicle: me.id,
                zone: zone.id.clone(),
                speed: exit_speed,
            });
        }
        let trajectory = solution.trajectory.with_owner(me.id, zone.id.clone());
        let bound_warnings = check_bounds(&trajectory, params).len();
        let conflict_exit = t_star + geom.zone_length() / exit_speed;
        let record = LegRecord {
            zone: zone.id.clone(),
            approach: leg.approach.clone(),
            exit_link: leg.exit_link.clone(),
            control_entry: t,
            entry_speed: v_in,
            conflict_entry: t_star,
            conflict_exit,
            leg_end: conflict_exit + geom.link_length() / exit_speed,
            exit_speed,
            effort: trajectory.effort(),
            trajectory: Some(Arc::new(trajectory)),
            contacts: solution.contacts.len(),
            bound_warnings,
            case: Some(assignment.case),
            commit_seq: Some(commit_seq),
            depends_on: deps.clone(),
        };
        match downstream_guard(corridor, vehicles, me, k, &record) {
            None => {
                *ledger = trial;
                return Ok(record);
            }
            Some(later) => not_before = Some(later.max(t_star + 1e-3)),
        }
    }
    Err(SimError::DownstreamGap {
        vehicle: me.id,
        zone: zone.id.clone(),
    })
}

/// Checks the constant-speed stretch from the conflict-zone entry to the
/// next control zone against committed vehicles sharing the approach or the
/// exit link. The gap must stay above `delta` plus the distance needed to
/// shed any closing speed. Returns an earliest entry time for a retry when it
/// does not.
fn downstream_guard(
    corridor: &CorridorSpec,
    vehicles: &[Vehicle],
    me: &Vehicle,
    k: usize,
    cand: &LegRecord,
) -> Option<f64> {
    let params = &corridor.params;
    let g = me.plan.legs[k];
    let zone_len = g.zone_length();
    let x_me = |t: f64| cand.exit_speed * (t - cand.conflict_entry) - zone_len;
    let mut proposal: Option<f64> = None;
    for other in vehicles {
        if other.id == me.id {
            continue;
        }
        let Some(kx) = other.legs.iter().position(|l| l.zone == cand.zone) else {
            continue;
        };
        let ol = &other.legs[kx];
        let same_approach = ol.approach == cand.approach;
        if !same_approach && ol.exit_link != cand.exit_link {
            continue;
        }
        let shared_from = if same_approach { -zone_len } else { 0.0 };
        let shared_to = if ol.exit_link == cand.exit_link {
            f64::INFINITY
        } else {
            0.0
        };
        let exit_x = other.plan.legs[kx].conflict_end;
        let (t0, t1) = (cand.conflict_entry, cand.leg_end);
        let steps = ((t1 - t0) / GUARD_SCAN_DT).ceil().max(1.0) as usize;
        let brake = GUARD_BRAKE_FRACTION * -params.u_min;
        let required = |closing: f64| params.delta + 1e-6 + closing.max(0.0).powi(2) / (2.0 * brake);
        let other_first =
            ol.conflict_entry < cand.conflict_entry || (ol.conflict_entry == cand.conflict_entry && other.id < me.id);
        let mut deficit = f64::NEG_INFINITY;
        for n in 0..=steps {
            let t = if n == steps { t1 } else { t0 + GUARD_SCAN_DT * n as f64 };
            let xi = x_me(t);
            if xi < shared_from || xi > shared_to {
                continue;
            }
            let Some((s_other, v_other)) = other.position(t) else {
                continue;
            };
            let xo = s_other - exit_x;
            if xo < shared_from || xo > shared_to {
                continue;
            }
            deficit = deficit.max(if other_first {
                required(cand.exit_speed - v_other) - (xo - xi)
            } else {
                required(v_other - cand.exit_speed) - (xi - xo)
            });
        }
        if deficit > 0.0 {
            let t = if other_first {
                cand.conflict_entry + (deficit + 1e-3) / cand.exit_speed
            } else {
                ol.conflict_entry + params.rho.max(params.delta / ol.exit_speed) + 1e-3
            };
            proposal = Some(proposal.map_or(t, |p: f64| p.max(t)));
        }
    }
    proposal
}
