//! Baseline mode: intelligent-driver car following, first-come-first-served
//! stop-line permission at every conflict zone, fixed-step integration.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::corridor::{ApproachId, CorridorSpec, GlobalParams, ZoneId};
use crate::scheduler::VehicleId;

use super::geometry::{leader_ahead, LaneKey, LanePosition, RoutePlan};
use super::{HistoryPoint, LegRecord, RawRun, RawVehicle, SimError, SimInput, ZoneEntry};

/// Distance within which a vehicle reacts to the one ahead (m).
const LOOKAHEAD: f64 = 1000.0;
/// Distance before the stop line at which a waiting vehicle aims to halt (m).
const STOP_SETBACK: f64 = 1.0;
/// Reaction distance per m/s used when deciding whether a spawn is safe (s).
const SPAWN_REACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub time_headway: f64,
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub exponent: f64,
}

impl IdmParams {
    pub fn from_params(p: &GlobalParams) -> Self {
        Self {
            time_headway: 1.2,
            min_gap: p.delta,
            max_accel: p.u_max,
            comfort_decel: 2.0f64.min(-p.u_min),
            exponent: 4.0,
        }
    }
}

/// Unclamped IDM acceleration. `leader` is `(gap, leader speed)`.
pub fn idm_acceleration(v: f64, v_desired: f64, leader: Option<(f64, f64)>, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / v_desired.max(1e-6)).max(0.0).powf(p.exponent);
    let interaction = leader.map_or(0.0, |(gap, vl)| {
        let dyn_gap = v * p.time_headway + v * (v - vl) / (2.0 * (p.max_accel * p.comfort_decel).sqrt());
        let s_star = p.min_gap + dyn_gap.max(0.0);
        (s_star / gap.max(1e-3)).powi(2)
    });
    p.max_accel * (free - interaction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pending,
    Active,
    Done,
}

#[derive(Debug, Clone)]
struct Vehicle {
    id: VehicleId,
    plan: Arc<RoutePlan>,
    arrival: f64,
    spawn_speed: f64,
    desired: f64,
    status: Status,
    s: f64,
    v: f64,
    u: f64,
    control_entry: Vec<Option<(f64, f64)>>,
    conflict_entry: Vec<Option<(f64, f64)>>,
    conflict_exit: Vec<Option<f64>>,
    permission: Vec<bool>,
    exit_time: Option<f64>,
    history: Vec<HistoryPoint>,
}

impl Vehicle {
    /// Index of the next conflict zone the vehicle has not entered yet.
    fn next_leg(&self) -> Option<usize> {
        self.conflict_entry.iter().position(Option::is_none)
    }
}

#[derive(Debug, Clone, Default)]
struct ZoneLog {
    control: Vec<(f64, VehicleId, ApproachId)>,
    conflict: Vec<(f64, VehicleId, ApproachId)>,
}

/// Complete baseline state; advanced with [`BaselineWorld::step`] or the
/// pure [`baseline_step`].
#[derive(Debug, Clone)]
pub struct BaselineWorld {
    pub t: f64,
    corridor: Arc<CorridorSpec>,
    idm: IdmParams,
    vehicles: Vec<Vehicle>,
    zones: BTreeMap<ZoneId, ZoneLog>,
    /// Crossings of a stop line without permission (should stay zero).
    pub overruns: usize,
}

/// One integration step as a pure function of the previous world.
pub fn baseline_step(world: &BaselineWorld, dt: f64) -> BaselineWorld {
    let mut next = world.clone();
    next.step(dt);
    next
}

impl BaselineWorld {
    pub(crate) fn new(input: &SimInput<'_>) -> Self {
        let vehicles = input
            .arrivals
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let plan = Arc::clone(&input.plans[&a.route]);
                let n = plan.legs.len();
                Vehicle {
                    id: VehicleId(i as u32 + 1),
                    plan,
                    arrival: a.t0,
                    spawn_speed: a.v0,
                    desired: a.v0.min(input.corridor.params.v_max),
                    status: Status::Pending,
                    s: 0.0,
                    v: a.v0,
                    u: 0.0,
                    control_entry: vec![None; n],
                    conflict_entry: vec![None; n],
                    conflict_exit: vec![None; n],
                    permission: vec![false; n],
                    exit_time: None,
                    history: Vec::new(),
                }
            })
            .collect();
        Self {
            t: input.arrivals.first().map_or(0.0, |a| a.t0.min(0.0)),
            corridor: Arc::new(input.corridor.clone()),
            idm: IdmParams::from_params(&input.corridor.params),
            vehicles,
            zones: input
                .corridor
                .zones
                .iter()
                .map(|z| (z.id.clone(), ZoneLog::default()))
                .collect(),
            overruns: 0,
        }
    }

    pub fn finished(&self) -> bool {
        self.vehicles.iter().all(|v| v.status == Status::Done)
    }

    pub fn active_count(&self) -> usize {
        self.vehicles.iter().filter(|v| v.status == Status::Active).count()
    }

    /// `(id, s, v)` of every vehicle currently in the corridor.
    pub fn positions(&self) -> Vec<(VehicleId, f64, f64)> {
        self.vehicles
            .iter()
            .filter(|v| v.status == Status::Active)
            .map(|v| (v.id, v.s, v.v))
            .collect()
    }

    fn lane_positions(&self) -> Vec<LanePosition<'_>> {
        self.vehicles
            .iter()
            .filter(|v| v.status == Status::Active)
            .map(|v| LanePosition {
                id: v.id.0,
                plan: &v.plan,
                s: v.s,
                v: v.v,
            })
            .collect()
    }

    pub fn step(&mut self, dt: f64) {
        self.spawn();
        let accels = self.accelerations();
        let t = self.t;
        for (i, a) in accels {
            self.advance(i, a, t, dt);
        }
        self.t = t + dt;
    }

    fn spawn(&mut self) {
        let params = self.corridor.params.clone();
        let mut blocked: BTreeSet<LaneKey> = BTreeSet::new();
        for i in 0..self.vehicles.len() {
            let veh = &self.vehicles[i];
            if veh.status != Status::Pending || veh.arrival > self.t + 1e-9 {
                continue;
            }
            let key = veh.plan.segments[0].key.clone();
            if blocked.contains(&key) {
                continue;
            }
            let me = LanePosition {
                id: veh.id.0,
                plan: &veh.plan,
                s: 0.0,
                v: veh.spawn_speed,
            };
            let leader = leader_ahead(&me, self.lane_positions(), LOOKAHEAD);
            let brake = -params.u_min;
            let safe =
                |v: f64, vl: f64| params.delta + SPAWN_REACTION * v + ((v * v - vl * vl) / (2.0 * brake)).max(0.0);
            let speed = match leader {
                None => Some(veh.spawn_speed),
                Some((gap, vl, _)) => {
                    if gap >= safe(veh.spawn_speed, vl) {
                        Some(veh.spawn_speed)
                    } else {
                        let v = veh.spawn_speed.min(vl);
                        (gap >= safe(v, vl)).then_some(v)
                    }
                }
            };
            let Some(v) = speed else {
                blocked.insert(key);
                continue;
            };
            let t = self.t;
            let veh = &mut self.vehicles[i];
            veh.status = Status::Active;
            veh.s = 0.0;
            veh.v = v;
            veh.control_entry[0] = Some((t, v));
            veh.history.push((t, 0.0, v, 0.0));
            let (id, zone, approach) = (
                veh.id,
                veh.plan.route.legs[0].zone.clone(),
                veh.plan.route.legs[0].approach.clone(),
            );
            if let Some(log) = self.zones.get_mut(&zone) {
                log.control.push((t, id, approach));
            }
        }
    }

    fn accelerations(&mut self) -> Vec<(usize, f64)> {
        let params = self.corridor.params.clone();
        let mut grants = Vec::new();
        for (i, veh) in self.vehicles.iter().enumerate() {
            if veh.status != Status::Active {
                continue;
            }
            if let Some(k) = veh.next_leg() {
                if !veh.permission[k] && veh.control_entry[k].is_some() && self.may_enter(veh, k) {
                    grants.push((i, k));
                }
            }
        }
        for (i, k) in grants {
            self.vehicles[i].permission[k] = true;
        }
        let positions = self.lane_positions();
        let mut out = Vec::new();
        for (i, veh) in self.vehicles.iter().enumerate() {
            if veh.status != Status::Active {
                continue;
            }
            let me = LanePosition {
                id: veh.id.0,
                plan: &veh.plan,
                s: veh.s,
                v: veh.v,
            };
            let leader = leader_ahead(&me, positions.iter().copied(), LOOKAHEAD).map(|(g, v, _)| (g, v));
            let mut a = idm_acceleration(veh.v, veh.desired, leader, &self.idm);
            if let Some(k) = veh.next_leg() {
                if !veh.permission[k] {
                    let d = veh.plan.legs[k].conflict_start - STOP_SETBACK - veh.s;
                    let stop = idm_acceleration(veh.v, veh.desired, Some((d + params.delta, 0.0)), &self.idm);
                    a = a.min(stop);
                }
            }
            out.push((i, a.clamp(params.u_min, params.u_max)));
        }
        out
    }

    /// First-come-first-served permission to cross the stop line of leg `k`.
    fn may_enter(&self, veh: &Vehicle, k: usize) -> bool {
        let leg = &veh.plan.route.legs[k];
        let Some(zone) = self.corridor.zone(&leg.zone) else {
            return true;
        };
        let Some(log) = self.zones.get(&leg.zone) else {
            return true;
        };
        let (my_entry, _) = veh.control_entry[k].expect("permission asked inside the control zone");
        let entered: BTreeSet<VehicleId> = log.conflict.iter().map(|c| c.1).collect();
        for (t, id, approach) in &log.control {
            if *id != veh.id
                && zone.conflicts(approach, &leg.approach)
                && (*t, *id) < (my_entry, veh.id)
                && !entered.contains(id)
            {
                return false;
            }
        }
        let last = log
            .conflict
            .iter()
            .filter(|c| zone.conflicts(&c.2, &leg.approach))
            .map(|c| c.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let earliest = self.t + (veh.plan.legs[k].conflict_start - veh.s) / self.corridor.params.v_max;
        earliest >= last + self.corridor.params.rho
    }

    fn advance(&mut self, i: usize, a: f64, t: f64, dt: f64) {
        let veh = &mut self.vehicles[i];
        let (s0, v0) = (veh.s, veh.v);
        let mut v1 = v0 + a * dt;
        let mut s1 = if v1 < 0.0 {
            v1 = 0.0;
            s0 - v0 * v0 / (2.0 * a)
        } else {
            s0 + v0 * dt + 0.5 * a * dt * dt
        };
        // A vehicle without permission never crosses its stop line.
        if let Some(k) = veh.next_leg() {
            let line = veh.plan.legs[k].conflict_start;
            if !veh.permission[k] && s1 >= line && s0 < line {
                s1 = line - 1e-6;
                v1 = 0.0;
            }
        }
        veh.s = s1;
        veh.v = v1;
        veh.u = a;
        if let Some(last) = veh.history.last_mut() {
            last.3 = a;
        }
        let cross = |x: f64| -> Option<(f64, f64)> {
            (s0 < x && s1 >= x).then(|| {
                let w = if s1 > s0 { (x - s0) / (s1 - s0) } else { 1.0 };
                (t + w * dt, v0 + w * (v1 - v0))
            })
        };
        for k in 0..veh.plan.legs.len() {
            let g = veh.plan.legs[k];
            let leg = &veh.plan.route.legs[k];
            if k > 0 && veh.control_entry[k].is_none() {
                if let Some(c) = cross(g.control_start) {
                    veh.control_entry[k] = Some(c);
                    if let Some(log) = self.zones.get_mut(&leg.zone) {
                        log.control.push((c.0, veh.id, leg.approach.clone()));
                    }
                }
            }
            if veh.conflict_entry[k].is_none() {
                if let Some(c) = cross(g.conflict_start) {
                    if !veh.permission[k] {
                        self.overruns += 1;
                    }
                    veh.conflict_entry[k] = Some(c);
                    if let Some(log) = self.zones.get_mut(&leg.zone) {
                        log.conflict.push((c.0, veh.id, leg.approach.clone()));
                    }
                }
            }
            if veh.conflict_exit[k].is_none() {
                if let Some(c) = cross(g.conflict_end) {
                    veh.conflict_exit[k] = Some(c.0);
                }
            }
        }
        let length = veh.plan.length();
        if s1 >= length {
            let (te, ve) = cross(length).unwrap_or((t + dt, v1));
            veh.exit_time = Some(te);
            veh.status = Status::Done;
            veh.history.push((te, length, ve, a));
        } else {
            veh.history.push((t + dt, s1, v1, a));
        }
    }

    fn into_raw(self) -> RawRun {
        let mut schedule: BTreeMap<ZoneId, Vec<ZoneEntry>> = BTreeMap::new();
        for (zone, log) in &self.zones {
            let mut entries: Vec<ZoneEntry> = log
                .conflict
                .iter()
                .map(|(t, id, approach)| ZoneEntry {
                    vehicle: *id,
                    approach: approach.clone(),
                    entry_time: *t,
                    case: None,
                    seq: None,
                })
                .collect();
            entries.sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.vehicle.cmp(&b.vehicle)));
            schedule.insert(zone.clone(), entries);
        }
        let vehicles = self
            .vehicles
            .into_iter()
            .map(|v| {
                let exit_time = v.exit_time.unwrap_or(f64::NAN);
                let legs = (0..v.plan.legs.len())
                    .filter_map(|k| {
                        let leg = &v.plan.route.legs[k];
                        let (ce, ve) = v.control_entry[k]?;
                        let (te, vs) = v.conflict_entry[k]?;
                        let leg_end = v.control_entry.get(k + 1).copied().flatten().map_or(exit_time, |c| c.0);
                        Some(LegRecord {
                            zone: leg.zone.clone(),
                            approach: leg.approach.clone(),
                            exit_link: leg.exit_link.clone(),
                            control_entry: ce,
                            entry_speed: ve,
                            conflict_entry: te,
                            conflict_exit: v.conflict_exit[k].unwrap_or(f64::NAN),
                            leg_end,
                            exit_speed: vs,
                            effort: f64::NAN,
                            trajectory: None,
                            contacts: 0,
                            bound_warnings: 0,
                            case: None,
                            commit_seq: None,
                            depends_on: Vec::new(),
                        })
                    })
                    .collect();
                RawVehicle {
                    id: v.id,
                    plan: v.plan,
                    arrival: v.arrival,
                    spawn_speed: v.spawn_speed,
                    exit_time,
                    legs,
                    history: v.history,
                }
            })
            .collect();
        RawRun {
            vehicles,
            schedule,
            ledger: None,
        }
    }
}

pub(crate) fn run(input: &SimInput<'_>) -> Result<RawRun, SimError> {
    let dt = input.options.baseline_dt;
    let mut world = BaselineWorld::new(input);
    let last_arrival = input.arrivals.iter().map(|a| a.t0).fold(0.0, f64::max);
    let limit = last_arrival + input.options.drain_time;
    let start = world.t;
    let mut n: u64 = 0;
    while !world.finished() {
        if world.t > limit {
            return Err(SimError::Stuck { t: world.t });
        }
        world.step(dt);
        n += 1;
        // Keep the clock on the integer grid instead of accumulating sums.
        world.t = start + n as f64 * dt;
    }
    Ok(world.into_raw())
}
