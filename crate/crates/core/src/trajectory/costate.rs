//! Adjoint quantities recovered from a solved trajectory.
//!
//! On a free arc `λ^p` equals the constant slope of the control and
//! `λ^v = −u`. Wherever the constraint starts or stops binding, `λ^p` drops by
//! the junction multiplier.

use crate::scalar::Scalar;

use super::arc::{PiecewiseTrajectory, Segment};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcCostate<T> {
    pub t_start: T,
    pub t_end: T,
    pub constrained: bool,
    /// `λ^p` at the start of the arc.
    pub lambda_p: T,
    pub lambda_v_start: T,
    pub lambda_v_end: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpMultiplier<T> {
    pub t: T,
    /// `λ^p(t−) − λ^p(t+)`; non-negative at an optimum.
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostateRecord<T> {
    pub arcs: Vec<ArcCostate<T>>,
    pub jumps: Vec<JumpMultiplier<T>>,
}

impl<T: Scalar> CostateRecord<T> {
    pub fn from_trajectory(traj: &PiecewiseTrajectory<T>) -> Self {
        let arcs = traj
            .segments()
            .iter()
            .map(|seg| {
                let (t_start, t_end) = (seg.t_start(), seg.t_end());
                let lambda_p = match seg {
                    Segment::Cubic(arc) => arc.a,
                    Segment::LeaderOffset(_) => traj.control_slopes(t_start).1,
                };
                ArcCostate {
                    t_start,
                    t_end,
                    constrained: seg.is_constrained(),
                    lambda_p,
                    lambda_v_start: -seg.state(t_start).u,
                    lambda_v_end: -seg.state(t_end).u,
                }
            })
            .collect();
        let mut times: Vec<T> = traj.junctions();
        for seg in traj.segments() {
            if let Segment::LeaderOffset(arc) = seg {
                for piece in arc.leader.position_pieces(arc.t_start, arc.t_end).iter().skip(1) {
                    times.push(piece.t_start);
                }
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite junctions"));
        times.dedup();
        let jumps = times
            .into_iter()
            .map(|t| {
                let (left, right) = traj.control_slopes(t);
                JumpMultiplier { t, value: left - right }
            })
            .collect();
        Self { arcs, jumps }
    }

    /// `λ^v` at the terminal time; zero under the free-terminal-speed condition.
    pub fn terminal_lambda_v(&self) -> T {
        self.arcs.last().map_or(T::zero(), |a| a.lambda_v_end)
    }
}
