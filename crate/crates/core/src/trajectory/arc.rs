use std::sync::Arc;

use crate::corridor::ZoneId;
use crate::scalar::Scalar;
use crate::scheduler::VehicleId;

use super::poly::Poly3;
use super::TrajectoryError;

/// Position, speed and control at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State<T> {
    pub p: T,
    pub v: T,
    pub u: T,
}

/// Unconstrained arc in local time `τ = t − t_start`:
/// `u = aτ + b`, `v = ½aτ² + bτ + c`, `p = ⅙aτ³ + ½bτ² + cτ + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicArc<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub t_start: T,
    pub t_end: T,
}

impl<T: Scalar> CubicArc<T> {
    pub fn new(a: T, b: T, c: T, d: T, t_start: T, t_end: T) -> Self {
        Self {
            a,
            b,
            c,
            d,
            t_start,
            t_end,
        }
    }

    /// Constant speed `v` from position `p` at `t_start`.
    pub fn cruise(p: T, v: T, t_start: T, t_end: T) -> Self {
        Self::new(T::zero(), T::zero(), v, p, t_start, t_end)
    }

    pub fn duration(&self) -> T {
        self.t_end - self.t_start
    }

    pub fn state_local(&self, tau: T) -> State<T> {
        let half = T::lit(0.5);
        let sixth = T::lit(1.0 / 6.0);
        State {
            p: ((sixth * self.a * tau + half * self.b) * tau + self.c) * tau + self.d,
            v: (half * self.a * tau + self.b) * tau + self.c,
            u: self.a * tau + self.b,
        }
    }

    pub fn state(&self, t: T) -> State<T> {
        self.state_local(t - self.t_start)
    }

    pub fn position_poly(&self) -> Poly3<T> {
        Poly3::new([self.d, self.c, self.b * T::lit(0.5), self.a * T::lit(1.0 / 6.0)])
    }

    /// `½∫u²` from `t_start` to `t_start + τ`, in the expanded form that stays
    /// regular as `a → 0`.
    fn effort_to(&self, tau: T) -> T {
        let (a, b) = (self.a, self.b);
        T::lit(0.5) * tau * (b * b + a * b * tau + a * a * tau * tau / T::lit(3.0))
    }

    /// Effort over `[ta, tb] ∩ [t_start, t_end]`.
    pub fn effort_between(&self, ta: T, tb: T) -> T {
        let lo = ta.max(self.t_start);
        let hi = tb.min(self.t_end);
        if hi <= lo {
            return T::zero();
        }
        self.effort_to(hi - self.t_start) - self.effort_to(lo - self.t_start)
    }

    pub fn effort(&self) -> T {
        self.effort_to(self.duration())
    }
}

/// Constrained arc that shadows a committed leader at a fixed gap.
#[derive(Debug, Clone)]
pub struct LeaderOffsetArc<T> {
    pub leader: Arc<PiecewiseTrajectory<T>>,
    pub offset: T,
    pub t_start: T,
    pub t_end: T,
}

impl<T: Scalar> LeaderOffsetArc<T> {
    pub fn state(&self, t: T) -> State<T> {
        let s = self.leader.evaluate_extended(t);
        State {
            p: s.p - self.offset,
            ..s
        }
    }
}

#[derive(Debug, Clone)]
pub enum Segment<T> {
    Cubic(CubicArc<T>),
    LeaderOffset(LeaderOffsetArc<T>),
}

impl<T: Scalar> Segment<T> {
    pub fn t_start(&self) -> T {
        match self {
            Segment::Cubic(a) => a.t_start,
            Segment::LeaderOffset(a) => a.t_start,
        }
    }

    pub fn t_end(&self) -> T {
        match self {
            Segment::Cubic(a) => a.t_end,
            Segment::LeaderOffset(a) => a.t_end,
        }
    }

    pub fn state(&self, t: T) -> State<T> {
        match self {
            Segment::Cubic(a) => a.state(t),
            Segment::LeaderOffset(a) => a.state(t),
        }
    }

    pub fn is_constrained(&self) -> bool {
        matches!(self, Segment::LeaderOffset(_))
    }

    fn effort_between(&self, ta: T, tb: T) -> T {
        let lo = ta.max(self.t_start());
        let hi = tb.min(self.t_end());
        if hi <= lo {
            return T::zero();
        }
        match self {
            Segment::Cubic(a) => a.effort_between(lo, hi),
            Segment::LeaderOffset(a) => a.leader.effort_between(lo, hi),
        }
    }
}

/// A cubic position polynomial valid on `[t_start, t_end]`, expressed in
/// `t − origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosPiece<T> {
    pub t_start: T,
    pub t_end: T,
    pub origin: T,
    pub poly: Poly3<T>,
}

impl<T: Scalar> PosPiece<T> {
    pub fn state(&self, t: T) -> State<T> {
        let x = t - self.origin;
        let dp = self.poly.derivative();
        State {
            p: self.poly.eval(x),
            v: dp.eval(x),
            u: dp.derivative().eval(x),
        }
    }

    /// Constant time derivative of the control.
    pub fn jerk(&self) -> T {
        T::lit(6.0) * self.poly.c[3]
    }

    /// Same polynomial re-expressed in `t − origin`.
    pub fn poly_at(&self, origin: T) -> Poly3<T> {
        self.poly.shifted(origin - self.origin)
    }
}

/// Ordered, contiguous arcs for one vehicle in one control zone.
#[derive(Debug, Clone)]
pub struct PiecewiseTrajectory<T> {
    pub vehicle: Option<VehicleId>,
    pub zone: Option<ZoneId>,
    segments: Vec<Segment<T>>,
}

impl<T: Scalar> PiecewiseTrajectory<T> {
    pub fn from_segments(segments: Vec<Segment<T>>) -> Result<Self, TrajectoryError> {
        if segments.is_empty() {
            return Err(TrajectoryError::InvalidProblem("trajectory has no arcs".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if s.t_end() <= s.t_start() {
                return Err(TrajectoryError::InvalidProblem(format!(
                    "arc {i} has non-positive duration"
                )));
            }
        }
        for (i, w) in segments.windows(2).enumerate() {
            if w[0].t_end() != w[1].t_start() {
                return Err(TrajectoryError::InvalidProblem(format!(
                    "arcs {i} and {} are not contiguous",
                    i + 1
                )));
            }
        }
        Ok(Self {
            vehicle: None,
            zone: None,
            segments,
        })
    }

    pub fn single(arc: CubicArc<T>) -> Self {
        Self {
            vehicle: None,
            zone: None,
            segments: vec![Segment::Cubic(arc)],
        }
    }

    pub fn with_owner(mut self, vehicle: VehicleId, zone: ZoneId) -> Self {
        self.vehicle = Some(vehicle);
        self.zone = Some(zone);
        self
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn t_start(&self) -> T {
        self.segments[0].t_start()
    }

    pub fn t_end(&self) -> T {
        self.segments[self.segments.len() - 1].t_end()
    }

    /// Junction times between consecutive arcs.
    pub fn junctions(&self) -> Vec<T> {
        self.segments.iter().skip(1).map(Segment::t_start).collect()
    }

    fn check_span(&self, t: T) -> Result<(), TrajectoryError> {
        if t < self.t_start() || t > self.t_end() || t.is_nan() {
            return Err(TrajectoryError::OutOfSpan {
                t: t.to_f64_lossy(),
                start: self.t_start().to_f64_lossy(),
                end: self.t_end().to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// State at `t`; at a junction the later arc is used.
    pub fn evaluate(&self, t: T) -> Result<State<T>, TrajectoryError> {
        self.check_span(t)?;
        let idx = self.segments.partition_point(|s| s.t_start() <= t).max(1) - 1;
        Ok(self.segments[idx].state(t))
    }

    /// State at `t`; at a junction the earlier arc is used.
    pub fn evaluate_left(&self, t: T) -> Result<State<T>, TrajectoryError> {
        self.check_span(t)?;
        let idx = self
            .segments
            .partition_point(|s| s.t_end() < t)
            .min(self.segments.len() - 1);
        Ok(self.segments[idx].state(t))
    }

    /// State at any time: outside the span the vehicle holds its boundary
    /// speed with zero control.
    pub fn evaluate_extended(&self, t: T) -> State<T> {
        let (t_s, t_e) = (self.t_start(), self.t_end());
        let (anchor, s) = if t < t_s {
            (t_s, self.segments[0].state(t_s))
        } else if t > t_e {
            (t_e, self.segments[self.segments.len() - 1].state(t_e))
        } else {
            return self.evaluate(t).expect("t within span");
        };
        State {
            p: s.p + s.v * (t - anchor),
            v: s.v,
            u: T::zero(),
        }
    }

    pub fn terminal_state(&self) -> State<T> {
        self.segments[self.segments.len() - 1].state(self.t_end())
    }

    pub fn initial_state(&self) -> State<T> {
        self.segments[0].state(self.t_start())
    }

    pub fn effort(&self) -> T {
        self.effort_between(self.t_start(), self.t_end())
    }

    /// Effort over `[ta, tb]`; time outside the span contributes nothing.
    pub fn effort_between(&self, ta: T, tb: T) -> T {
        self.segments
            .iter()
            .fold(T::zero(), |acc, s| acc + s.effort_between(ta, tb))
    }

    /// Position as cubic pieces covering `[ta, tb]`, flattening any leader
    /// references and extrapolating outside the span.
    pub fn position_pieces(&self, ta: T, tb: T) -> Vec<PosPiece<T>> {
        let mut out = Vec::new();
        if tb <= ta {
            return out;
        }
        let (t_s, t_e) = (self.t_start(), self.t_end());
        let linear = |anchor: T, s: State<T>, lo: T, hi: T| PosPiece {
            t_start: lo,
            t_end: hi,
            origin: anchor,
            poly: Poly3::new([s.p, s.v, T::zero(), T::zero()]),
        };
        if ta < t_s {
            out.push(linear(t_s, self.initial_state(), ta, tb.min(t_s)));
        }
        for seg in &self.segments {
            let lo = ta.max(seg.t_start());
            let hi = tb.min(seg.t_end());
            if hi <= lo {
                continue;
            }
            match seg {
                Segment::Cubic(arc) => out.push(PosPiece {
                    t_start: lo,
                    t_end: hi,
                    origin: arc.t_start,
                    poly: arc.position_poly(),
                }),
                Segment::LeaderOffset(arc) => {
                    for mut piece in arc.leader.position_pieces(lo, hi) {
                        piece.poly = piece.poly.add_constant(-arc.offset);
                        out.push(piece);
                    }
                }
            }
        }
        if tb > t_e {
            out.push(linear(t_e, self.terminal_state(), ta.max(t_e), tb));
        }
        out
    }

    /// Time derivative of the control just before and just after `t`.
    pub fn control_slopes(&self, t: T) -> (T, T) {
        let pieces = self.position_pieces(t - (T::one() + t.abs()), t + (T::one() + t.abs()));
        let left = pieces
            .iter()
            .rev()
            .find(|p| p.t_start < t)
            .map_or(T::zero(), PosPiece::jerk);
        let right = pieces.iter().find(|p| p.t_end > t).map_or(T::zero(), PosPiece::jerk);
        (left, right)
    }

    /// Samples at `t_start + k·dt` plus the final instant.
    pub fn sample(&self, dt: T) -> Vec<(T, State<T>)> {
        let (t_s, t_e) = (self.t_start(), self.t_end());
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let t = t_s + dt * T::from_usize(k).expect("sample index");
            if t >= t_e {
                break;
            }
            out.push((t, self.evaluate(t).expect("t within span")));
            k += 1;
        }
        out.push((t_e, self.terminal_state()));
        out
    }
}
