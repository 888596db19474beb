//! Scheduler instances on an exact 0.1 s grid, an exhaustive grid-search
//! reference, and a random multi-zone driver for invariant checks.

use cav_corridor::corridor::{ApproachId, ApproachSpec, ConflictZoneSpec, CorridorSpec, GlobalParams, ZoneId};
use cav_corridor::scheduler::{ArrivalRequest, ScheduleError, ScheduleLedger, VehicleId};
use num_rational::Rational64;
use num_traits::Signed;
use rand::Rng;

pub type Q = Rational64;

pub fn tenths(k: i64) -> Q {
    Q::new(k, 10)
}

fn on_grid(x: Q) -> bool {
    (x * Q::from_integer(10)).is_integer()
}

#[derive(Debug, Clone)]
pub struct GridArrival {
    pub vehicle: VehicleId,
    pub approach: usize,
    pub t0: Q,
    pub v0: Q,
    pub not_before: Option<Q>,
}

#[derive(Debug, Clone)]
pub struct GridInstance {
    pub corridor: CorridorSpec<Q>,
    pub zone: ZoneId,
    pub approaches: Vec<ApproachId>,
    pub arrivals: Vec<GridArrival>,
}

impl GridInstance {
    pub fn request(&self, a: &GridArrival) -> ArrivalRequest<Q> {
        ArrivalRequest {
            vehicle: a.vehicle,
            approach: self.approaches[a.approach].clone(),
            t0: a.t0,
            cruise_speed: a.v0,
            rear_headway: None,
            not_before: a.not_before,
        }
    }
}

/// One zone, one or two approaches (conflicting when two), up to five
/// vehicles. Every time the scheduler can produce lies on the 0.1 s grid.
pub fn grid_instance<R: Rng>(rng: &mut R) -> GridInstance {
    let params = GlobalParams {
        rho: tenths(rng.random_range(5..=20)),
        delta: Q::from_integer(5),
        v_min: Q::from_integer(5),
        v_max: Q::from_integer(20),
        u_min: Q::from_integer(-3),
        u_max: Q::from_integer(2),
        horizon_cap: None,
    };
    let n_approaches = rng.random_range(1..=2);
    let lengths = [60, 80, 100, 120, 150, 200];
    let approaches: Vec<ApproachId> = ["a", "b"][..n_approaches].iter().map(|s| ApproachId::new(*s)).collect();
    let specs: Vec<ApproachSpec<Q>> = approaches
        .iter()
        .map(|id| ApproachSpec {
            id: id.clone(),
            control_zone_length: Q::from_integer(lengths[rng.random_range(0..lengths.len())]),
        })
        .collect();
    let zone = ZoneId::new("z");
    let conflict_pairs = if n_approaches == 2 {
        vec![(approaches[0].clone(), approaches[1].clone())]
    } else {
        Vec::new()
    };
    let corridor = CorridorSpec {
        params,
        zones: vec![ConflictZoneSpec {
            id: zone.clone(),
            zone_length: Q::from_integer(20),
            approaches: specs.clone(),
            conflict_pairs,
        }],
    };
    let n: u32 = rng.random_range(1..=5);
    let mut t = 0i64;
    let mut arrivals = Vec::new();
    for i in 0..n {
        t += rng.random_range(0..=30);
        let approach = rng.random_range(0..n_approaches);
        let length = specs[approach].control_zone_length;
        let v0 = loop {
            let v = tenths(rng.random_range(50..=200));
            if on_grid(length / v) {
                break v;
            }
        };
        let not_before = rng
            .random_bool(0.2)
            .then(|| tenths(t) + length / v0 + tenths(rng.random_range(0..=40)));
        arrivals.push(GridArrival {
            vehicle: VehicleId(i + 1),
            approach,
            t0: tenths(t),
            v0,
            not_before,
        });
    }
    GridInstance {
        corridor,
        zone,
        approaches,
        arrivals,
    }
}

/// Outcome of one arrival: the assigned entry time, or `None` when the
/// arrival cannot be placed inside its feasible window.
pub type Outcome = Option<Q>;

/// Reference scheduler: for each arrival in order, the earliest 0.1 s grid
/// time at or after its candidate that keeps `rho` from every conflicting
/// entry and from the same-lane predecessor, within the latest feasible time.
/// Stops at the first arrival that cannot be placed.
pub fn greedy_grid(inst: &GridInstance) -> Vec<Outcome> {
    let zone = &inst.corridor.zones[0];
    let p = &inst.corridor.params;
    let mut placed: Vec<(usize, Q)> = Vec::new();
    let mut out = Vec::new();
    for a in &inst.arrivals {
        let length = zone.approaches[a.approach].control_zone_length;
        let t_min = a.t0 + length / p.v_max;
        let t_max = a.t0 + length / p.v_min;
        let clamp = |x: Q| x.max(t_min).min(t_max);
        let pred = placed.iter().rev().find(|(ap, _)| *ap == a.approach).map(|&(_, t)| t);
        let mut lower = clamp(a.t0 + length / a.v0);
        if let Some(tp) = pred {
            lower = lower.max(clamp(tp + p.rho));
        }
        if let Some(nb) = a.not_before {
            lower = lower.max(nb);
        }
        let conflicting: Vec<Q> = placed
            .iter()
            .filter(|(ap, _)| *ap != a.approach)
            .map(|&(_, t)| t)
            .collect();
        let ok = |t: Q| pred.is_none_or(|tp| t >= tp + p.rho) && conflicting.iter().all(|&c| (t - c).abs() >= p.rho);
        let mut t = lower;
        let found = loop {
            if t > t_max {
                break None;
            }
            if ok(t) {
                break Some(t);
            }
            t += tenths(1);
        };
        out.push(found);
        match found {
            Some(t) => placed.push((a.approach, t)),
            None => break,
        }
    }
    out
}

/// The scheduler under test on the same instance, in exact arithmetic.
pub fn scheduled(inst: &GridInstance) -> Result<Vec<Outcome>, ScheduleError> {
    let mut ledger = ScheduleLedger::for_corridor(&inst.corridor);
    let mut out = Vec::new();
    for a in &inst.arrivals {
        match ledger.assign_arrival(&inst.corridor, &inst.zone, &inst.request(a)) {
            Ok(asg) => out.push(Some(asg.entry_time)),
            Err(ScheduleError::Infeasible { .. }) => {
                out.push(None);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// A multi-zone scenario: vehicles traverse a sequence of zones, each arrival
/// at the next zone following the previous assignment. Returns the final
/// ledger, the corridor and the number of arrivals rejected as infeasible.
pub fn random_corridor_run<R: Rng>(rng: &mut R) -> (CorridorSpec<f64>, ScheduleLedger<f64>, usize) {
    let params = GlobalParams {
        rho: rng.random_range(0.5..=2.5),
        delta: 5.0,
        v_min: rng.random_range(2.0..=6.0),
        v_max: rng.random_range(15.0..=25.0),
        u_min: -3.0,
        u_max: 2.5,
        horizon_cap: None,
    };
    let n_zones = rng.random_range(1..=4);
    let zones: Vec<ConflictZoneSpec<f64>> = (0..n_zones)
        .map(|z| {
            let n_app = rng.random_range(1..=3);
            let approaches: Vec<ApproachSpec<f64>> = (0..n_app)
                .map(|a| ApproachSpec {
                    id: ApproachId::new(format!("a{a}")),
                    control_zone_length: rng.random_range(50.0..=250.0),
                })
                .collect();
            let mut conflict_pairs = Vec::new();
            for i in 0..n_app {
                for j in i + 1..n_app {
                    if rng.random_bool(0.7) {
                        conflict_pairs.push((approaches[i].id.clone(), approaches[j].id.clone()));
                    }
                }
            }
            ConflictZoneSpec {
                id: ZoneId::new(format!("z{z}")),
                zone_length: rng.random_range(10.0..=40.0),
                approaches,
                conflict_pairs,
            }
        })
        .collect();
    let corridor = CorridorSpec { params, zones };
    let mut ledger = ScheduleLedger::for_corridor(&corridor);

    // (t0, vehicle, zone index, approach index, speed)
    let mut pending: Vec<(f64, u32, usize, usize, f64)> = Vec::new();
    let n_vehicles = rng.random_range(2..=25);
    let mut t = 0.0;
    for v in 0..n_vehicles {
        t += rng.random_range(0.0..=4.0);
        let z = rng.random_range(0..n_zones);
        let a = rng.random_range(0..corridor.zones[z].approaches.len());
        pending.push((
            t,
            v + 1,
            z,
            a,
            rng.random_range(corridor.params.v_min..=corridor.params.v_max),
        ));
    }
    let mut rejected = 0;
    while !pending.is_empty() {
        let k = (0..pending.len())
            .min_by(|&i, &j| {
                pending[i]
                    .0
                    .total_cmp(&pending[j].0)
                    .then(pending[i].1.cmp(&pending[j].1))
            })
            .expect("non-empty");
        let (t0, v, z, a, speed) = pending.swap_remove(k);
        let zone = &corridor.zones[z];
        let request = ArrivalRequest {
            vehicle: VehicleId(v),
            approach: zone.approaches[a].id.clone(),
            t0,
            cruise_speed: speed,
            rear_headway: rng.random_bool(0.3).then(|| rng.random_range(0.0..=3.0)),
            not_before: rng.random_bool(0.2).then(|| t0 + rng.random_range(0.0..=30.0)),
        };
        match ledger.assign_arrival(&corridor, &zone.id, &request) {
            Ok(asg) => {
                if z + 1 < n_zones && rng.random_bool(0.6) {
                    let next = &corridor.zones[z + 1];
                    let na = rng.random_range(0..next.approaches.len());
                    let t_next = asg.entry_time + zone.zone_length / speed + rng.random_range(0.0..=5.0);
                    pending.push((t_next, v, z + 1, na, speed));
                }
            }
            Err(ScheduleError::Infeasible { .. }) => rejected += 1,
            Err(e) => panic!("unexpected scheduler error: {e}"),
        }
    }
    (corridor, ledger, rejected)
}

/// Violations of the lateral and same-lane headway invariants in a ledger.
pub fn headway_violations(corridor: &CorridorSpec<f64>, ledger: &ScheduleLedger<f64>) -> Vec<String> {
    let rho = corridor.params.rho;
    let mut out = Vec::new();
    for zone in &corridor.zones {
        let Some(zl) = ledger.zone(&zone.id) else { continue };
        let asg = &zl.assignments;
        for (i, x) in asg.iter().enumerate() {
            for y in &asg[i + 1..] {
                let gap = y.entry_time - x.entry_time;
                if zone.conflicts(&x.approach, &y.approach) && gap.abs() < rho - 1e-9 {
                    out.push(format!("{}: lateral {} / {} gap {gap}", zone.id, x.vehicle, y.vehicle));
                }
                if x.approach == y.approach && gap < rho - 1e-9 {
                    out.push(format!(
                        "{}: same lane {} -> {} gap {gap}",
                        zone.id, x.vehicle, y.vehicle
                    ));
                }
            }
        }
    }
    out
}
