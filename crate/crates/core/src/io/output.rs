//! Result files: sampled trajectories (CSV), metrics and schedule (JSON),
//! and the optimal-versus-baseline comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::scheduler::VehicleId;
use crate::sim::{ScenarioResult, Summary, VehicleMetrics, ZoneEntry};

pub const CSV_HEADER: &str = "vehicle_id,t,s_along_route,v,u,zone_phase";
pub const CSV_UNITS: &str = "# units: t [s], s_along_route [m], v [m/s], u [m/s^2]";

#[derive(Debug, thiserror::Error)]
#[error("{}: {source}", path.display())]
pub struct OutputError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

fn units() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("time", "s"),
        ("distance", "m"),
        ("speed", "m/s"),
        ("control", "m/s^2"),
        ("effort", "m^2/s^3"),
        ("stop_and_go", "count of episodes below 0.5 m/s"),
    ])
}

/// Fixed six-decimal rendering without a negative zero.
pub fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

pub fn trajectories_csv(result: &ScenarioResult) -> String {
    let mut out = String::new();
    out.push_str(CSV_UNITS);
    out.push('\n');
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (v, samples) in result.raw.vehicles.iter().zip(&result.samples) {
        for s in samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                v.id,
                fixed6(s.t),
                fixed6(s.s),
                fixed6(s.v),
                fixed6(s.u),
                s.phase
            );
        }
    }
    out
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    units: BTreeMap<&'static str, &'static str>,
    mode: &'static str,
    summary: &'a Summary,
    vehicles: &'a [VehicleMetrics],
}

pub fn metrics_json(result: &ScenarioResult) -> String {
    let file = MetricsFile {
        units: units(),
        mode: result.mode.as_str(),
        summary: &result.summary,
        vehicles: &result.vehicles,
    };
    serde_json::to_string_pretty(&file).expect("metrics serialize") + "\n"
}

#[derive(Serialize)]
struct Dependency {
    vehicle: VehicleId,
    seq: u64,
}

#[derive(Serialize)]
struct LegDump {
    vehicle: VehicleId,
    zone: String,
    approach: String,
    control_entry: f64,
    entry_speed: f64,
    conflict_entry: f64,
    conflict_exit: f64,
    exit_speed: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    commit_seq: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    depends_on: Vec<Dependency>,
}

#[derive(Serialize)]
struct ScheduleFile<'a> {
    units: BTreeMap<&'static str, &'static str>,
    mode: &'static str,
    zones: &'a BTreeMap<crate::corridor::ZoneId, Vec<ZoneEntry>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    queues: BTreeMap<String, Vec<VehicleId>>,
    legs: Vec<LegDump>,
}

pub fn schedule_json(result: &ScenarioResult) -> String {
    let queues = result
        .raw
        .ledger
        .as_ref()
        .map(|l| {
            l.zones
                .iter()
                .map(|(z, zl)| (z.to_string(), zl.queue.clone()))
                .collect()
        })
        .unwrap_or_default();
    let mut legs: Vec<LegDump> = result
        .raw
        .vehicles
        .iter()
        .flat_map(|v| {
            v.legs.iter().map(move |l| LegDump {
                vehicle: v.id,
                zone: l.zone.to_string(),
                approach: l.approach.to_string(),
                control_entry: l.control_entry,
                entry_speed: l.entry_speed,
                conflict_entry: l.conflict_entry,
                conflict_exit: l.conflict_exit,
                exit_speed: l.exit_speed,
                commit_seq: l.commit_seq,
                depends_on: l
                    .depends_on
                    .iter()
                    .map(|&(vehicle, seq)| Dependency { vehicle, seq })
                    .collect(),
            })
        })
        .collect();
    legs.sort_by(|a, b| {
        a.control_entry
            .total_cmp(&b.control_entry)
            .then(a.vehicle.cmp(&b.vehicle))
    });
    let file = ScheduleFile {
        units: units(),
        mode: result.mode.as_str(),
        zones: &result.raw.schedule,
        queues,
        legs,
    };
    serde_json::to_string_pretty(&file).expect("schedule serializes") + "\n"
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, OutputError> {
    std::fs::write(&path, contents).map_err(|source| OutputError {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `trajectories.csv`, `metrics.json` and `schedule.json` into `dir`.
pub fn write_results(result: &ScenarioResult, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(vec![
        write(dir.join("trajectories.csv"), &trajectories_csv(result))?,
        write(dir.join("metrics.json"), &metrics_json(result))?,
        write(dir.join("schedule.json"), &schedule_json(result))?,
    ])
}

/// Relative change of optimal against baseline in percent; `None` when the
/// baseline value is zero.
fn pct(optimal: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (optimal - baseline) / baseline)
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub units: BTreeMap<&'static str, &'static str>,
    pub optimal: Summary,
    pub baseline: Summary,
    pub travel_time_change_pct: Option<f64>,
    pub effort_change_pct: Option<f64>,
    pub stop_and_go_change_pct: Option<f64>,
}

impl Comparison {
    pub fn new(optimal: &ScenarioResult, baseline: &ScenarioResult) -> Self {
        let (o, b) = (&optimal.summary, &baseline.summary);
        Self {
            units: units(),
            optimal: o.clone(),
            baseline: b.clone(),
            travel_time_change_pct: pct(o.mean_travel_time, b.mean_travel_time),
            effort_change_pct: pct(o.mean_effort, b.mean_effort),
            stop_and_go_change_pct: pct(o.stop_and_go_mean, b.stop_and_go_mean),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes") + "\n"
    }

    pub fn report(&self) -> String {
        let fmt_pct = |p: Option<f64>| p.map_or_else(|| "n/a".to_string(), |x| format!("{x:+.1}%"));
        let (o, b) = (&self.optimal, &self.baseline);
        let mut s = String::new();
        let _ = writeln!(s, "vehicles: {}", o.vehicles);
        let _ = writeln!(s, "{:<26}{:>14}{:>14}{:>10}", "metric", "baseline", "optimal", "change");
        let _ = writeln!(
            s,
            "{:<26}{:>14.3}{:>14.3}{:>10}",
            "mean travel time [s]",
            b.mean_travel_time,
            o.mean_travel_time,
            fmt_pct(self.travel_time_change_pct)
        );
        let _ = writeln!(
            s,
            "{:<26}{:>14.3}{:>14.3}{:>10}",
            "mean effort [m^2/s^3]",
            b.mean_effort,
            o.mean_effort,
            fmt_pct(self.effort_change_pct)
        );
        let _ = writeln!(
            s,
            "{:<26}{:>14.3}{:>14.3}{:>10}",
            "mean stop-and-go",
            b.stop_and_go_mean,
            o.stop_and_go_mean,
            fmt_pct(self.stop_and_go_change_pct)
        );
        s
    }
}
