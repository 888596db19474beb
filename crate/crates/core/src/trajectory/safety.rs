//! Rear-end margin analysis and speed/control bound checks, both exact on the
//! piecewise cubic representation.

use crate::corridor::GlobalParams;
use crate::scalar::Scalar;

use super::arc::{CubicArc, PiecewiseTrajectory, PosPiece};
use super::poly::{negative_intervals, Poly3};

/// Margin `p_k − δ − p_i` as cubic pieces over `[ta, tb]`, each expressed in
/// time since its own start.
pub fn margin_pieces<T: Scalar>(
    follower: &PiecewiseTrajectory<T>,
    leader: &PiecewiseTrajectory<T>,
    delta: T,
    ta: T,
    tb: T,
) -> Vec<(T, T, Poly3<T>)> {
    let fp = follower.position_pieces(ta, tb);
    let lp = leader.position_pieces(ta, tb);
    merge_pieces(&lp, &fp)
        .into_iter()
        .map(|(lo, hi, l, f)| (lo, hi, l.poly_at(lo).sub(&f.poly_at(lo)).add_constant(-delta)))
        .collect()
}

fn merge_pieces<'a, T: Scalar>(
    a: &'a [PosPiece<T>],
    b: &'a [PosPiece<T>],
) -> Vec<(T, T, &'a PosPiece<T>, &'a PosPiece<T>)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].t_start.max(b[j].t_start);
        let hi = a[i].t_end.min(b[j].t_end);
        if hi > lo {
            out.push((lo, hi, &a[i], &b[j]));
        }
        if a[i].t_end <= b[j].t_end {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Smallest margin over `[ta, tb]` and the earliest time it occurs.
pub fn min_margin<T: Scalar>(
    follower: &PiecewiseTrajectory<T>,
    leader: &PiecewiseTrajectory<T>,
    delta: T,
    ta: T,
    tb: T,
) -> (T, T) {
    let mut best = (ta, T::infinity());
    for (lo, hi, m) in margin_pieces(follower, leader, delta, ta, tb) {
        let (x, y) = m.min_on(T::zero(), hi - lo);
        if y < best.1 {
            best = (lo + x, y);
        }
    }
    best
}

/// Maximal intervals of `[ta, tb]` on which the margin is below `−tol`.
pub fn violation_intervals<T: Scalar>(
    follower: &PiecewiseTrajectory<T>,
    leader: &PiecewiseTrajectory<T>,
    delta: T,
    ta: T,
    tb: T,
    tol: T,
) -> Vec<(T, T)> {
    let mut out: Vec<(T, T)> = Vec::new();
    for (lo, hi, m) in margin_pieces(follower, leader, delta, ta, tb) {
        for (x0, x1) in negative_intervals(&m.add_constant(tol), T::zero(), hi - lo) {
            let (s, e) = (lo + x0, lo + x1);
            match out.last_mut() {
                Some(last) if last.1 >= s => last.1 = e,
                _ => out.push((s, e)),
            }
        }
    }
    out
}

/// Hull of all sub-intervals of `overlap` where `p_k − p_i − δ < 0`, or
/// `None` when the margin never goes negative.
pub fn detect_rear_end_violation<T: Scalar>(
    traj_i: &CubicArc<T>,
    traj_k: &PiecewiseTrajectory<T>,
    delta: T,
    overlap: (T, T),
) -> Option<(T, T)> {
    let follower = PiecewiseTrajectory::single(*traj_i);
    let iv = violation_intervals(&follower, traj_k, delta, overlap.0, overlap.1, T::zero());
    Some((iv.first()?.0, iv.last()?.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    SpeedAboveMax,
    SpeedBelowMin,
    ControlAboveMax,
    ControlBelowMin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundExcursion<T> {
    pub kind: BoundKind,
    pub t_start: T,
    pub t_end: T,
    /// Largest amount by which the bound is exceeded.
    pub worst: T,
}

/// Excursions of `v` outside `[v_min, v_max]` and of `u` outside
/// `[u_min, u_max]`, merged across arcs.
pub fn check_bounds<T: Scalar>(traj: &PiecewiseTrajectory<T>, params: &GlobalParams<T>) -> Vec<BoundExcursion<T>> {
    let pieces = traj.position_pieces(traj.t_start(), traj.t_end());
    let tiny = |bound: T| T::epsilon() * T::lit(64.0) * (T::one() + bound.abs());
    let mut out: Vec<BoundExcursion<T>> = Vec::new();
    for kind in [
        BoundKind::SpeedAboveMax,
        BoundKind::SpeedBelowMin,
        BoundKind::ControlAboveMax,
        BoundKind::ControlBelowMin,
    ] {
        let start = out.len();
        for piece in &pieces {
            let v = piece.poly_at(piece.t_start).derivative();
            let u = v.derivative();
            // `slack` is negative exactly where the bound is exceeded.
            let slack = match kind {
                BoundKind::SpeedAboveMax => constant(params.v_max).sub(&v),
                BoundKind::SpeedBelowMin => v.add_constant(-params.v_min),
                BoundKind::ControlAboveMax => constant(params.u_max).sub(&u),
                BoundKind::ControlBelowMin => u.add_constant(-params.u_min),
            };
            let bound = match kind {
                BoundKind::SpeedAboveMax => params.v_max,
                BoundKind::SpeedBelowMin => params.v_min,
                BoundKind::ControlAboveMax => params.u_max,
                BoundKind::ControlBelowMin => params.u_min,
            };
            let len = piece.t_end - piece.t_start;
            for (x0, x1) in negative_intervals(&slack.add_constant(tiny(bound)), T::zero(), len) {
                let (_, worst) = slack.min_on(x0, x1);
                let (s, e) = (piece.t_start + x0, piece.t_start + x1);
                match out[start..].last_mut() {
                    Some(last) if last.t_end >= s => {
                        last.t_end = e;
                        last.worst = last.worst.max(-worst);
                    }
                    _ => out.push(BoundExcursion {
                        kind,
                        t_start: s,
                        t_end: e,
                        worst: -worst,
                    }),
                }
            }
        }
    }
    out
}

fn constant<T: Scalar>(k: T) -> Poly3<T> {
    Poly3::new([k, T::zero(), T::zero(), T::zero()])
}
