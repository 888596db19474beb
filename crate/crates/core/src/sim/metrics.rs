//! Per-vehicle and aggregate performance metrics.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corridor::{CorridorSpec, ZoneId};
use crate::scheduler::VehicleId;

use super::geometry::{leader_ahead, LanePosition};
use super::{Mode, RawRun, RawVehicle, ScenarioResult, SimOptions};

/// Speed below which a vehicle counts as stopped (m/s).
pub const STOP_SPEED: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub u: f64,
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleMetrics {
    pub vehicle: VehicleId,
    pub route: String,
    pub arrival: f64,
    pub exit_time: f64,
    pub travel_time: f64,
    pub effort: f64,
    pub stop_and_go: usize,
    pub min_rear_gap: Option<f64>,
    pub min_lateral_headway: Option<f64>,
    pub lateral_headway_by_zone: BTreeMap<ZoneId, f64>,
    pub contacts: usize,
    pub bound_warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub vehicles: usize,
    pub mean_travel_time: f64,
    pub max_travel_time: f64,
    pub mean_effort: f64,
    pub total_effort: f64,
    pub stop_and_go_total: usize,
    pub stop_and_go_mean: f64,
    pub min_rear_gap: Option<f64>,
    pub min_lateral_headway: Option<f64>,
    pub contacts: usize,
    pub bound_warnings: usize,
}

fn presence(v: &RawVehicle) -> (f64, f64) {
    let start = v.history.first().map_or(v.arrival, |h| h.0);
    (start, v.exit_time)
}

/// Samples on the global grid `k * dt` inside the presence window, plus the
/// window end points. Where the control jumps on entering a later control
/// zone, the entry time appears twice: link side first, then zone side.
pub fn sample_vehicle(v: &RawVehicle, dt: f64) -> Vec<Sample> {
    let (start, end) = presence(v);
    let mut times = vec![start];
    let mut k = (start / dt).floor() as i64 + 1;
    loop {
        let t = k as f64 * dt;
        if t >= end - 1e-9 {
            break;
        }
        if t > start + 1e-9 {
            times.push(t);
        }
        k += 1;
    }
    if end > start {
        times.push(end);
    }
    let at = |t: f64| {
        let (s, vel, u) = v.state(t);
        Sample {
            t,
            s,
            v: vel,
            u,
            phase: v.plan.segment_at(s).label(),
        }
    };
    let mut out: Vec<Sample> = times.into_iter().map(at).collect();
    if v.history.is_empty() {
        for (leg, g) in v.legs.iter().zip(&v.plan.legs).skip(1) {
            let Some(tr) = &leg.trajectory else { continue };
            let te = leg.control_entry;
            if te <= start || te >= end {
                continue;
            }
            let right = tr.evaluate_extended(te);
            let zone_side = Sample {
                t: te,
                s: g.control_start + right.p,
                v: right.v,
                u: right.u,
                phase: v.plan.segment_at(g.control_start).label(),
            };
            let link_phase = v.plan.segment_at(g.control_start - 1e-9).label();
            let i = out.partition_point(|x| x.t <= te);
            if out[i - 1].t == te {
                out[i - 1].phase = link_phase;
                out.insert(i, zone_side);
            } else {
                let link_side = Sample {
                    phase: link_phase,
                    ..at(te)
                };
                out.splice(i..i, [link_side, zone_side]);
            }
        }
    }
    out
}

fn effort(v: &RawVehicle) -> f64 {
    if v.history.is_empty() {
        v.legs.iter().map(|l| l.effort).sum()
    } else {
        v.history
            .windows(2)
            .map(|w| 0.25 * (w[0].3 * w[0].3 + w[1].3 * w[1].3) * (w[1].0 - w[0].0))
            .sum()
    }
}

/// Number of maximal episodes with speed below [`STOP_SPEED`].
pub fn stop_and_go_episodes(speeds: impl IntoIterator<Item = f64>) -> usize {
    let mut count = 0;
    let mut stopped = false;
    for v in speeds {
        let now = v < STOP_SPEED;
        if now && !stopped {
            count += 1;
        }
        stopped = now;
    }
    count
}

/// Smallest gap to the same-lane leader seen by each vehicle, evaluated on
/// the global sample grid.
fn rear_gaps(raw: &RawRun, dt: f64) -> Vec<Option<f64>> {
    let windows: Vec<(f64, f64)> = raw.vehicles.iter().map(presence).collect();
    let mut out = vec![None::<f64>; raw.vehicles.len()];
    let Some(t_lo) = windows.iter().map(|w| w.0).reduce(f64::min) else {
        return out;
    };
    let t_hi = windows.iter().map(|w| w.1).fold(t_lo, f64::max);
    let mut k = (t_lo / dt).ceil() as i64;
    while (k as f64) * dt <= t_hi {
        let t = k as f64 * dt;
        k += 1;
        let present: Vec<usize> = (0..raw.vehicles.len())
            .filter(|&i| windows[i].0 <= t && t < windows[i].1)
            .collect();
        if present.len() < 2 {
            continue;
        }
        let pos: Vec<LanePosition<'_>> = present
            .iter()
            .map(|&i| {
                let (s, v, _) = raw.vehicles[i].state(t);
                LanePosition {
                    id: raw.vehicles[i].id.0,
                    plan: &raw.vehicles[i].plan,
                    s,
                    v,
                }
            })
            .collect();
        for (j, &i) in present.iter().enumerate() {
            if let Some((gap, _, _)) = leader_ahead(&pos[j], pos.iter().copied(), f64::INFINITY) {
                out[i] = Some(out[i].map_or(gap, |g: f64| g.min(gap)));
            }
        }
    }
    out
}

fn lateral_headways(raw: &RawRun, corridor: &CorridorSpec, v: &RawVehicle) -> BTreeMap<ZoneId, f64> {
    let mut out = BTreeMap::new();
    for leg in &v.legs {
        let (Some(zone), Some(entries)) = (corridor.zone(&leg.zone), raw.schedule.get(&leg.zone)) else {
            continue;
        };
        let Some(mine) = entries.iter().find(|e| e.vehicle == v.id) else {
            continue;
        };
        let best = entries
            .iter()
            .filter(|e| e.vehicle != v.id && zone.conflicts(&e.approach, &leg.approach))
            .map(|e| (e.entry_time - mine.entry_time).abs())
            .reduce(f64::min);
        if let Some(h) = best {
            out.insert(leg.zone.clone(), h);
        }
    }
    out
}

pub fn compute_metrics(mode: Mode, raw: RawRun, corridor: &CorridorSpec, options: &SimOptions) -> ScenarioResult {
    let samples: Vec<Vec<Sample>> = raw
        .vehicles
        .iter()
        .map(|v| sample_vehicle(v, options.sample_dt))
        .collect();
    let gaps = rear_gaps(&raw, options.sample_dt);
    let vehicles: Vec<VehicleMetrics> = raw
        .vehicles
        .iter()
        .zip(&samples)
        .zip(gaps)
        .map(|((v, samp), min_rear_gap)| {
            let stop_and_go = if v.history.is_empty() {
                stop_and_go_episodes(samp.iter().map(|s| s.v))
            } else {
                stop_and_go_episodes(v.history.iter().map(|h| h.2))
            };
            let by_zone = lateral_headways(&raw, corridor, v);
            VehicleMetrics {
                vehicle: v.id,
                route: v.plan.name.clone(),
                arrival: v.arrival,
                exit_time: v.exit_time,
                travel_time: v.travel_time(),
                effort: effort(v),
                stop_and_go,
                min_rear_gap,
                min_lateral_headway: by_zone.values().copied().reduce(f64::min),
                lateral_headway_by_zone: by_zone,
                contacts: v.legs.iter().map(|l| l.contacts).sum(),
                bound_warnings: v.legs.iter().map(|l| l.bound_warnings).sum(),
            }
        })
        .collect();
    let summary = summarize(&vehicles);
    ScenarioResult {
        mode,
        raw,
        vehicles,
        samples,
        summary,
    }
}

pub fn summarize(vehicles: &[VehicleMetrics]) -> Summary {
    let n = vehicles.len();
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    let total_effort: f64 = vehicles.iter().map(|v| v.effort).sum();
    let stop_and_go_total: usize = vehicles.iter().map(|v| v.stop_and_go).sum();
    Summary {
        vehicles: n,
        mean_travel_time: mean(vehicles.iter().map(|v| v.travel_time).sum()),
        max_travel_time: vehicles.iter().map(|v| v.travel_time).fold(0.0, f64::max),
        mean_effort: mean(total_effort),
        total_effort,
        stop_and_go_total,
        stop_and_go_mean: mean(stop_and_go_total as f64),
        min_rear_gap: vehicles.iter().filter_map(|v| v.min_rear_gap).reduce(f64::min),
        min_lateral_headway: vehicles.iter().filter_map(|v| v.min_lateral_headway).reduce(f64::min),
        contacts: vehicles.iter().map(|v| v.contacts).sum(),
        bound_warnings: vehicles.iter().map(|v| v.bound_warnings).sum(),
    }
}
