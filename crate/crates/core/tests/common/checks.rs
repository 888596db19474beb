//! Measurements on constrained solutions, shared by the integration tests and
//! the acceptance runner.

use cav_corridor::trajectory::{min_margin, solve_constrained_with, Segment, SolverOptions};

use super::instances::LeaderFollower;
use super::transcription::Transcription;

#[derive(Debug, Clone, Copy)]
pub struct ConstrainedCheck {
    /// Smallest `p_leader − p − δ` over the horizon.
    pub margin: f64,
    /// Largest jump in p, v or u across a junction.
    pub continuity: f64,
    /// Largest difference from the leader's offset state on constrained arcs.
    pub identity: f64,
    pub effort: f64,
    pub oracle_effort: f64,
    /// Largest position difference from the oracle on its grid.
    pub position: f64,
    pub constrained_arcs: usize,
    /// Distance from the horizon ends to the nearest contact, in oracle
    /// grid steps.
    pub contact_clearance: f64,
}

pub fn check_constrained(inst: &LeaderFollower, oracle_nodes: usize) -> Result<ConstrainedCheck, String> {
    let pb = &inst.problem;
    let sol = solve_constrained_with(pb, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let traj = &sol.trajectory;
    let (_, margin) = min_margin(traj, &inst.leader, inst.delta, pb.t0, pb.tf);

    let mut continuity = 0.0f64;
    for t in traj.junctions() {
        let l = traj.evaluate_left(t).map_err(|e| e.to_string())?;
        let r = traj.evaluate(t).map_err(|e| e.to_string())?;
        continuity = continuity
            .max((l.p - r.p).abs())
            .max((l.v - r.v).abs())
            .max((l.u - r.u).abs());
    }

    let mut identity = 0.0f64;
    let mut constrained_arcs = 0;
    for seg in traj.segments() {
        if let Segment::LeaderOffset(arc) = seg {
            constrained_arcs += 1;
            for k in 0..=50 {
                let t = arc.t_start + (arc.t_end - arc.t_start) * k as f64 / 50.0;
                let me = traj.evaluate(t).map_err(|e| e.to_string())?;
                let lead = inst.leader.evaluate_extended(t);
                identity = identity
                    .max((me.p - (lead.p - inst.delta)).abs())
                    .max((me.v - lead.v).abs())
                    .max((me.u - lead.u).abs());
            }
        }
    }

    let h = (pb.tf - pb.t0) / oracle_nodes as f64;
    let contact_clearance = traj
        .junctions()
        .into_iter()
        .map(|t| (t - pb.t0).min(pb.tf - t) / h)
        .fold(f64::INFINITY, f64::min);

    let tr = Transcription::new(pb.t0, pb.tf, pb.p0, pb.v0, oracle_nodes);
    let upper: Vec<f64> = (0..=oracle_nodes)
        .map(|k| inst.leader.evaluate_extended(tr.time(k)).p - inst.delta)
        .collect();
    let oracle = tr.solve(pb.pf, &upper)?;
    let mut position = 0.0f64;
    for k in 0..=oracle_nodes {
        let p = traj.evaluate(tr.time(k).min(pb.tf)).map_err(|e| e.to_string())?.p;
        position = position.max((p - oracle.p[k]).abs());
    }

    Ok(ConstrainedCheck {
        margin,
        continuity,
        identity,
        effort: traj.effort(),
        oracle_effort: oracle.effort,
        position,
        constrained_arcs,
        contact_clearance,
    })
}
