//! Minimum-effort boundary value problems: the closed-form unconstrained arc
//! and the rear-end constrained solution stitched from free arcs, touch points
//! and leader-offset arcs.

use std::sync::Arc;

use crate::scalar::Scalar;

use super::arc::{CubicArc, LeaderOffsetArc, PiecewiseTrajectory, PosPiece, Segment, State};
use super::linalg::solve_dense;
use super::safety::{min_margin, violation_intervals};
use super::TrajectoryError;

#[derive(Debug, Clone)]
pub struct BvpProblem<T> {
    pub t0: T,
    pub tf: T,
    pub v0: T,
    pub p0: T,
    pub pf: T,
    pub leader: Option<Arc<PiecewiseTrajectory<T>>>,
    pub delta: T,
}

impl<T: Scalar> BvpProblem<T> {
    pub fn new(t0: T, tf: T, v0: T, p0: T, pf: T) -> Self {
        Self {
            t0,
            tf,
            v0,
            p0,
            pf,
            leader: None,
            delta: T::zero(),
        }
    }

    pub fn with_leader(mut self, leader: Arc<PiecewiseTrajectory<T>>, delta: T) -> Self {
        self.leader = Some(leader);
        self.delta = delta;
        self
    }

    fn validate(&self) -> Result<(), TrajectoryError> {
        let finite = [self.t0, self.tf, self.v0, self.p0, self.pf, self.delta]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(TrajectoryError::InvalidProblem("non-finite boundary data".into()));
        }
        if self.tf <= self.t0 {
            return Err(TrajectoryError::Singular {
                t0: self.t0.to_f64_lossy(),
                tf: self.tf.to_f64_lossy(),
            });
        }
        if self.pf <= self.p0 {
            return Err(TrajectoryError::InvalidProblem(
                "terminal position must exceed initial position".into(),
            ));
        }
        Ok(())
    }
}

/// Position and speed (and optionally control) pinned at the left end of a
/// free arc.
#[derive(Debug, Clone, Copy)]
struct Node<T> {
    t: T,
    p: T,
    v: T,
    u: Option<T>,
}

#[derive(Debug, Clone, Copy)]
enum RightEnd<T> {
    /// Position and speed matched; the control is checked separately.
    Node(Node<T>),
    /// Position matched and control zero (free terminal speed).
    Terminal { t: T, p: T },
}

/// Cubic through the left node's `p, v` and the right end's two conditions,
/// via a dense 4×4 solve in local time.
fn free_arc<T: Scalar>(left: Node<T>, right: RightEnd<T>) -> Option<CubicArc<T>> {
    let t_right = match right {
        RightEnd::Node(n) => n.t,
        RightEnd::Terminal { t, .. } => t,
    };
    let dt = t_right - left.t;
    if dt <= T::zero() {
        return None;
    }
    let (z, one) = (T::zero(), T::one());
    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let p_row = vec![sixth * dt * dt * dt, half * dt * dt, dt, one];
    let (last_row, p_right, last_rhs) = match right {
        RightEnd::Node(n) => (vec![half * dt * dt, dt, one, z], n.p, n.v),
        RightEnd::Terminal { p, .. } => (vec![dt, one, z, z], p, z),
    };
    let m = vec![vec![z, z, z, one], vec![z, z, one, z], p_row, last_row];
    let x = solve_dense(m, vec![left.p, left.v, p_right, last_rhs])?;
    Some(CubicArc::new(x[0], x[1], x[2], x[3], left.t, t_right))
}

/// The unique cubic with `p(t0)=p0`, `v(t0)=v0`, `p(tf)=pf`, `u(tf)=0`.
pub fn solve_unconstrained<T: Scalar>(problem: &BvpProblem<T>) -> Result<CubicArc<T>, TrajectoryError> {
    problem.validate()?;
    let left = Node {
        t: problem.t0,
        p: problem.p0,
        v: problem.v0,
        u: None,
    };
    free_arc(
        left,
        RightEnd::Terminal {
            t: problem.tf,
            p: problem.pf,
        },
    )
    .ok_or(TrajectoryError::Singular {
        t0: problem.t0.to_f64_lossy(),
        tf: problem.tf.to_f64_lossy(),
    })
}

/// Where the follower meets the constraint `p_i = p_k − δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contact<T> {
    /// Isolated touch point.
    Touch { at: T },
    /// Constrained arc on `[entry, exit]`.
    Boundary { entry: T, exit: T },
    /// Constrained arc from `entry` through the terminal time.
    BoundaryToEnd { entry: T },
}

impl<T: Scalar> Contact<T> {
    fn arity(&self) -> usize {
        match self {
            Contact::Boundary { .. } => 2,
            _ => 1,
        }
    }

    fn first_time(&self) -> T {
        match *self {
            Contact::Touch { at } => at,
            Contact::Boundary { entry, .. } | Contact::BoundaryToEnd { entry } => entry,
        }
    }

    fn write(&self, out: &mut Vec<T>) {
        match *self {
            Contact::Touch { at } => out.push(at),
            Contact::Boundary { entry, exit } => out.extend([entry, exit]),
            Contact::BoundaryToEnd { entry } => out.push(entry),
        }
    }

    fn read(&self, x: &[T]) -> Self {
        match self {
            Contact::Touch { .. } => Contact::Touch { at: x[0] },
            Contact::Boundary { .. } => Contact::Boundary {
                entry: x[0],
                exit: x[1],
            },
            Contact::BoundaryToEnd { .. } => Contact::BoundaryToEnd { entry: x[0] },
        }
    }
}

/// Tolerances and limits for the constrained solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    /// Newton stops once every junction residual is below this.
    pub residual_tol: T,
    /// Residual level still accepted when the line search stalls.
    pub accept_tol: T,
    /// Margin below `−feasibility_tol` counts as a violation.
    pub feasibility_tol: T,
    /// Junction multipliers below `−multiplier_tol` reject a contact set.
    pub multiplier_tol: T,
    pub max_newton_iterations: usize,
    pub max_rounds: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        let eps = T::epsilon();
        Self {
            residual_tol: eps.powf(T::lit(0.7)),
            accept_tol: eps.powf(T::lit(0.55)),
            feasibility_tol: eps.sqrt(),
            multiplier_tol: eps.powf(T::lit(0.4)),
            max_newton_iterations: 60,
            max_rounds: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedSolution<T> {
    pub trajectory: PiecewiseTrajectory<T>,
    pub contacts: Vec<Contact<T>>,
    /// Drop in the control's time derivative at each junction where the
    /// constraint becomes or stops being active; non-negative at an optimum.
    pub multipliers: Vec<T>,
    pub max_residual: T,
    pub newton_iterations: usize,
    pub rounds: usize,
}

/// Stitched candidate for one set of contact times.
/// Converged contact set, its assembly and the Newton iteration count.
type Converged<T> = (Vec<Contact<T>>, Assembly<T>, usize);

struct Assembly<T> {
    segments: Vec<Segment<T>>,
    free: Vec<CubicArc<T>>,
    residuals: Vec<T>,
}

struct Constrained<'a, T> {
    problem: &'a BvpProblem<T>,
    leader: &'a Arc<PiecewiseTrajectory<T>>,
    pieces: Vec<PosPiece<T>>,
    opts: SolverOptions<T>,
    min_gap: T,
}

impl<'a, T: Scalar> Constrained<'a, T> {
    fn offset_state(&self, t: T) -> State<T> {
        let s = self.leader.evaluate_extended(t);
        State {
            p: s.p - self.problem.delta,
            ..s
        }
    }

    fn jerk_after(&self, t: T) -> T {
        self.pieces
            .iter()
            .find(|p| p.t_end > t)
            .map_or(T::zero(), PosPiece::jerk)
    }

    fn jerk_before(&self, t: T) -> T {
        self.pieces
            .iter()
            .rev()
            .find(|p| p.t_start < t)
            .map_or(T::zero(), PosPiece::jerk)
    }

    fn ordered(&self, contacts: &[Contact<T>]) -> bool {
        let mut times = vec![self.problem.t0];
        let mut buf = Vec::new();
        for c in contacts {
            buf.clear();
            c.write(&mut buf);
            times.extend(&buf);
        }
        if !matches!(contacts.last(), Some(Contact::BoundaryToEnd { .. })) {
            times.push(self.problem.tf);
        } else {
            times.push(self.problem.tf + self.min_gap);
        }
        times.windows(2).all(|w| w[1] - w[0] >= self.min_gap)
    }

    fn assemble(&self, contacts: &[Contact<T>]) -> Option<Assembly<T>> {
        if !self.ordered(contacts) {
            return None;
        }
        let pb = self.problem;
        let mut segments = Vec::new();
        let mut free = Vec::new();
        let mut residuals = Vec::new();
        let mut left = Some(Node {
            t: pb.t0,
            p: pb.p0,
            v: pb.v0,
            u: None,
        });
        // Control at the end of the previous arc when it ended at a touch point.
        let mut pending: Option<T> = None;
        let close = |arc: CubicArc<T>, left: Node<T>, pending: &mut Option<T>, residuals: &mut Vec<T>| {
            let u_start = arc.state_local(T::zero()).u;
            if let Some(u) = left.u {
                residuals.push(u_start - u);
            }
            if let Some(u) = pending.take() {
                residuals.push(u - u_start);
            }
        };
        for contact in contacts {
            let node = left?;
            match *contact {
                Contact::Touch { at } => {
                    let s = self.offset_state(at);
                    let right = Node {
                        t: at,
                        p: s.p,
                        v: s.v,
                        u: None,
                    };
                    let arc = free_arc(node, RightEnd::Node(right))?;
                    close(arc, node, &mut pending, &mut residuals);
                    pending = Some(arc.state(at).u);
                    segments.push(Segment::Cubic(arc));
                    free.push(arc);
                    left = Some(right);
                }
                Contact::Boundary { entry, exit } => {
                    let s1 = self.offset_state(entry);
                    let right = Node {
                        t: entry,
                        p: s1.p,
                        v: s1.v,
                        u: None,
                    };
                    let arc = free_arc(node, RightEnd::Node(right))?;
                    close(arc, node, &mut pending, &mut residuals);
                    residuals.push(arc.state(entry).u - s1.u);
                    segments.push(Segment::Cubic(arc));
                    free.push(arc);
                    segments.push(self.offset_segment(entry, exit));
                    let s2 = self.offset_state(exit);
                    left = Some(Node {
                        t: exit,
                        p: s2.p,
                        v: s2.v,
                        u: Some(s2.u),
                    });
                }
                Contact::BoundaryToEnd { entry } => {
                    let s1 = self.offset_state(entry);
                    let right = Node {
                        t: entry,
                        p: s1.p,
                        v: s1.v,
                        u: None,
                    };
                    let arc = free_arc(node, RightEnd::Node(right))?;
                    close(arc, node, &mut pending, &mut residuals);
                    residuals.push(arc.state(entry).u - s1.u);
                    segments.push(Segment::Cubic(arc));
                    free.push(arc);
                    segments.push(self.offset_segment(entry, pb.tf));
                    left = None;
                }
            }
        }
        if let Some(node) = left {
            let arc = free_arc(node, RightEnd::Terminal { t: pb.tf, p: pb.pf })?;
            close(arc, node, &mut pending, &mut residuals);
            segments.push(Segment::Cubic(arc));
            free.push(arc);
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return None;
        }
        Some(Assembly {
            segments,
            free,
            residuals,
        })
    }

    fn offset_segment(&self, t_start: T, t_end: T) -> Segment<T> {
        Segment::LeaderOffset(LeaderOffsetArc {
            leader: Arc::clone(self.leader),
            offset: self.problem.delta,
            t_start,
            t_end,
        })
    }

    /// Jump multipliers for each contact, including leader kinks inside
    /// constrained arcs.
    fn multipliers(&self, contacts: &[Contact<T>], asm: &Assembly<T>) -> Vec<T> {
        let mut out = Vec::new();
        let kinks = |lo: T, hi: T, out: &mut Vec<T>| {
            for w in self.pieces.windows(2) {
                let t = w[0].t_end;
                if t > lo && t < hi {
                    out.push(w[0].jerk() - w[1].jerk());
                }
            }
        };
        for (i, c) in contacts.iter().enumerate() {
            let before = asm.free[i].a;
            match *c {
                Contact::Touch { .. } => out.push(before - asm.free[i + 1].a),
                Contact::Boundary { entry, exit } => {
                    out.push(before - self.jerk_after(entry));
                    kinks(entry, exit, &mut out);
                    out.push(self.jerk_before(exit) - asm.free[i + 1].a);
                }
                Contact::BoundaryToEnd { entry } => {
                    out.push(before - self.jerk_after(entry));
                    kinks(entry, self.problem.tf, &mut out);
                }
            }
        }
        out
    }

    /// Residual of the junction at time `at` after inserting `contact`, with
    /// every other contact held fixed. Residuals are stored in junction
    /// order, so the index is the number of junctions before `at`.
    fn junction_residual(&self, contacts: &[Contact<T>], contact: Contact<T>, at: T) -> Option<T> {
        let cand = insert_contact(contacts, contact);
        let mut idx = 0;
        let mut buf = Vec::new();
        for c in &cand {
            buf.clear();
            c.write(&mut buf);
            idx += buf.iter().filter(|&&t| t < at).count();
        }
        self.assemble(&cand).and_then(|a| a.residuals.get(idx).copied())
    }

    /// Sign changes of `f` over `(lo, hi)`, refined by bisection. The grid is
    /// uniform with extra geometrically spaced samples near both ends, where
    /// contacts forced by the initial state sit.
    fn scan_roots(&self, lo: T, hi: T, f: impl Fn(T) -> Option<T>) -> Vec<T> {
        const SAMPLES: usize = 48;
        const GRADED: i32 = 10;
        let step = (hi - lo) / T::lit(SAMPLES as f64);
        let mut grid: Vec<T> = (0..=SAMPLES).map(|k| lo + step * T::lit(k as f64)).collect();
        for k in 1..=GRADED {
            let off = step * T::lit(0.5f64.powi(k));
            grid.push(lo + off);
            grid.push(hi - off);
        }
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
        let mut roots = Vec::new();
        let mut prev: Option<(T, T)> = None;
        for &t in &grid {
            let r = f(t);
            if let (Some((ta, ra)), Some(rb)) = (prev, r) {
                if ra * rb <= T::zero() {
                    let (mut a, mut b, mut fa) = (ta, t, ra);
                    for _ in 0..80 {
                        let mid = (a + b) * T::lit(0.5);
                        match f(mid) {
                            Some(fm) if fm * fa > T::zero() => {
                                a = mid;
                                fa = fm;
                            }
                            Some(_) => b = mid,
                            None => break,
                        }
                        if b - a <= self.min_gap {
                            break;
                        }
                    }
                    roots.push((a + b) * T::lit(0.5));
                }
            }
            prev = r.map(|rb| (t, rb));
        }
        roots
    }

    /// Seeds for a new contact from one-dimensional root scans: touch times
    /// with a continuous control, and boundary arcs whose entry and exit each
    /// match the leader's control. Ordered by distance to the violation
    /// `(ta, tb)`.
    fn scanned_candidates(&self, contacts: &[Contact<T>], ta: T, tb: T, to_end: bool) -> Vec<Vec<Contact<T>>> {
        let (t0, tf) = (self.problem.t0, self.problem.tf);
        let edge = (tf - t0) * T::lit(1e-5);
        let (lo, hi) = (t0 + edge, tf - edge);
        let tiny = self.min_gap * T::lit(4.0);
        let mid = (ta + tb) * T::lit(0.5);
        let by = |key: &dyn Fn(&Contact<T>) -> T, mut v: Vec<Contact<T>>| {
            v.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite contact times"));
            v
        };
        let touches: Vec<Contact<T>> = self
            .scan_roots(lo, hi, |at| self.junction_residual(contacts, Contact::Touch { at }, at))
            .into_iter()
            .map(|at| Contact::Touch { at })
            .collect();
        let entries = self.scan_roots(lo, hi, |e| {
            self.junction_residual(
                contacts,
                Contact::Boundary {
                    entry: e,
                    exit: e + tiny,
                },
                e,
            )
        });
        let mut arcs = Vec::new();
        if to_end {
            arcs.extend(entries.iter().map(|&entry| Contact::BoundaryToEnd { entry }));
        } else {
            let exits = self.scan_roots(lo, hi, |x| {
                self.junction_residual(
                    contacts,
                    Contact::Boundary {
                        entry: x - tiny,
                        exit: x,
                    },
                    x,
                )
            });
            for &entry in &entries {
                for &exit in &exits {
                    if exit > entry + tiny {
                        arcs.push(Contact::Boundary { entry, exit });
                    }
                }
            }
        }
        let touches = by(&|c: &Contact<T>| (c.first_time() - mid).abs(), touches);
        let arcs = by(
            &|c: &Contact<T>| match *c {
                Contact::Boundary { entry, exit } => (entry - ta).abs() + (exit - tb).abs(),
                _ => (c.first_time() - ta).abs(),
            },
            arcs,
        );
        touches
            .into_iter()
            .take(4)
            .chain(arcs.into_iter().take(4))
            .map(|c| insert_contact(contacts, c))
            .collect()
    }

    fn newton(&self, init: &[Contact<T>]) -> Result<Converged<T>, String> {
        let shape = init.to_vec();
        let unpack = |x: &[T]| -> Vec<Contact<T>> {
            let mut k = 0;
            shape
                .iter()
                .map(|c| {
                    let out = c.read(&x[k..]);
                    k += c.arity();
                    out
                })
                .collect()
        };
        let mut x = Vec::new();
        for c in init {
            c.write(&mut x);
        }
        let n = x.len();
        let norm = |r: &[T]| r.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt();
        let max_abs = |r: &[T]| r.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let mut asm = self
            .assemble(&unpack(&x))
            .ok_or_else(|| "initial contact times are not admissible".to_string())?;
        let fd = T::epsilon().cbrt();
        for iter in 0..self.opts.max_newton_iterations {
            let r = asm.residuals.clone();
            if max_abs(&r) <= self.opts.residual_tol {
                return Ok((unpack(&x), asm, iter));
            }
            let mut jac = vec![vec![T::zero(); n]; n];
            for j in 0..n {
                let h = fd * (T::one() + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] = xp[j] + h;
                xm[j] = xm[j] - h;
                let rp = self.assemble(&unpack(&xp)).map(|a| a.residuals);
                let rm = self.assemble(&unpack(&xm)).map(|a| a.residuals);
                let col: Vec<T> = match (rp, rm) {
                    (Some(p), Some(m)) => p.iter().zip(&m).map(|(a, b)| (*a - *b) / (h + h)).collect(),
                    (Some(p), None) => p.iter().zip(&r).map(|(a, b)| (*a - *b) / h).collect(),
                    (None, Some(m)) => r.iter().zip(&m).map(|(a, b)| (*a - *b) / h).collect(),
                    (None, None) => return Err("contact times too close to resolve".into()),
                };
                for (row, v) in col.into_iter().enumerate() {
                    jac[row][j] = v;
                }
            }
            let neg: Vec<T> = r.iter().map(|v| -*v).collect();
            let Some(dx) = solve_dense(jac, neg) else {
                break;
            };
            let r_norm = norm(&r);
            let mut step = T::one();
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<T> = x.iter().zip(&dx).map(|(a, d)| *a + step * *d).collect();
                if let Some(a) = self.assemble(&unpack(&trial)) {
                    if norm(&a.residuals) <= (T::one() - T::lit(1e-4) * step) * r_norm {
                        accepted = Some((trial, a));
                        break;
                    }
                }
                step = step * T::lit(0.5);
            }
            match accepted {
                Some((trial, a)) => {
                    x = trial;
                    asm = a;
                }
                None => break,
            }
        }
        if max_abs(&asm.residuals) <= self.opts.accept_tol {
            let iters = self.opts.max_newton_iterations;
            return Ok((unpack(&x), asm, iters));
        }
        Err(format!(
            "residual {:e} after Newton iterations from {:?}",
            max_abs(&asm.residuals).to_f64_lossy(),
            init
        ))
    }
}

/// Minimum-effort trajectory that keeps `p_i ≤ p_k − δ` on `[t0, tf]`. With no
/// leader, or when the unconstrained arc already respects the gap, returns
/// that single arc.
pub fn solve_constrained<T: Scalar>(problem: &BvpProblem<T>) -> Result<PiecewiseTrajectory<T>, TrajectoryError> {
    solve_constrained_with(problem, &SolverOptions::default()).map(|s| s.trajectory)
}

pub fn solve_constrained_with<T: Scalar>(
    problem: &BvpProblem<T>,
    opts: &SolverOptions<T>,
) -> Result<ConstrainedSolution<T>, TrajectoryError> {
    let free = solve_unconstrained(problem)?;
    let max_residual = T::zero();
    let unconstrained = PiecewiseTrajectory::single(free);
    let Some(leader) = problem.leader.as_ref() else {
        return Ok(ConstrainedSolution {
            trajectory: unconstrained,
            contacts: Vec::new(),
            multipliers: Vec::new(),
            max_residual,
            newton_iterations: 0,
            rounds: 0,
        });
    };
    let (t0, tf) = (problem.t0, problem.tf);
    let ctx = Constrained {
        problem,
        leader,
        pieces: leader.position_pieces(t0, tf),
        opts: *opts,
        min_gap: (tf - t0) * T::lit(1e-9),
    };
    let tol = opts.feasibility_tol;
    let initial_margin = ctx.offset_state(t0).p - problem.p0;
    if initial_margin < -tol {
        return Err(TrajectoryError::InitialViolation {
            margin: initial_margin.to_f64_lossy(),
        });
    }
    let terminal_margin = ctx.offset_state(tf).p - problem.pf;
    if terminal_margin < -tol {
        return Err(TrajectoryError::TerminalInfeasible {
            margin: terminal_margin.to_f64_lossy(),
        });
    }

    let mut traj = unconstrained;
    let mut contacts: Vec<Contact<T>> = Vec::new();
    let mut multipliers = Vec::new();
    let mut max_residual = max_residual;
    let mut newton_iterations = 0;
    for round in 0..=opts.max_rounds {
        let violations = violation_intervals(&traj, leader, problem.delta, t0, tf, tol);
        if violations.is_empty() {
            return Ok(ConstrainedSolution {
                trajectory: traj,
                contacts,
                multipliers,
                max_residual,
                newton_iterations,
                rounds: round,
            });
        }
        if round == opts.max_rounds {
            return Err(TrajectoryError::ActiveSetExhausted { rounds: round });
        }
        let (ta, tb) = deepest(&traj, leader, problem.delta, &violations);
        let (t_min, _) = min_margin(&traj, leader, problem.delta, ta, tb);
        let reaches_end = tb >= tf - ctx.min_gap && terminal_margin.abs() <= tol;
        let mut queue: Vec<Vec<Contact<T>>> = Vec::new();
        for widen in [0.05, 0.25, 0.5] {
            let w = (tb - ta) * T::lit(widen * 0.5);
            let lo = (ta - w).max(t0 + (tf - t0) * T::lit(1e-3));
            let new = if reaches_end {
                Contact::BoundaryToEnd { entry: lo }
            } else {
                let hi = (tb + w).min(tf - (tf - t0) * T::lit(1e-3));
                Contact::Boundary { entry: lo, exit: hi }
            };
            queue.push(insert_contact(&contacts, new));
        }
        queue.push(insert_contact(&contacts, Contact::Touch { at: t_min }));
        for (k, cand) in ctx
            .scanned_candidates(&contacts, ta, tb, reaches_end)
            .into_iter()
            .enumerate()
        {
            queue.insert(k, cand);
        }

        let mut diagnostics = Vec::new();
        let mut best: Option<(T, Converged<T>, Vec<T>)> = None;
        let mut tried = 0;
        while tried < queue.len() && tried < 24 {
            let cand = queue[tried].clone();
            tried += 1;
            let (solved, asm, iters) = match ctx.newton(&cand) {
                Ok(ok) => ok,
                Err(msg) => {
                    diagnostics.push(msg);
                    continue;
                }
            };
            newton_iterations += iters;
            let mult = ctx.multipliers(&solved, &asm);
            if mult.iter().any(|m| *m < -opts.multiplier_tol) {
                let keep = drop_negative(&solved, &mult, opts.multiplier_tol, &ctx);
                if !keep.is_empty() && keep.len() < solved.len() && !queue.contains(&keep) {
                    queue.push(keep);
                }
                diagnostics.push(format!("negative multiplier for {solved:?}"));
                continue;
            }
            let candidate = PiecewiseTrajectory::from_segments(asm.segments.clone())?;
            let (_, m) = min_margin(&candidate, leader, problem.delta, t0, tf);
            let feasible = m >= -tol;
            if best.as_ref().is_none_or(|b| m > b.0) {
                best = Some((m, (solved, asm, iters), mult));
            }
            if feasible {
                break;
            }
        }
        let Some((_, (solved, asm, _), mult)) = best else {
            return Err(TrajectoryError::NoConvergence {
                detail: diagnostics.join("; "),
            });
        };
        max_residual = asm.residuals.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        traj = PiecewiseTrajectory::from_segments(asm.segments)?;
        contacts = solved;
        multipliers = mult;
    }
    unreachable!("loop returns on its last round")
}

/// Violation interval containing the smallest margin.
fn deepest<T: Scalar>(
    traj: &PiecewiseTrajectory<T>,
    leader: &PiecewiseTrajectory<T>,
    delta: T,
    violations: &[(T, T)],
) -> (T, T) {
    let mut best = (violations[0], T::infinity());
    for &(a, b) in violations {
        let (_, m) = min_margin(traj, leader, delta, a, b);
        if m < best.1 {
            best = ((a, b), m);
        }
    }
    best.0
}

/// Adds `new` in time order, replacing any existing contact it overlaps.
fn insert_contact<T: Scalar>(existing: &[Contact<T>], new: Contact<T>) -> Vec<Contact<T>> {
    let span = |c: &Contact<T>| match *c {
        Contact::Touch { at } => (at, at),
        Contact::Boundary { entry, exit } => (entry, exit),
        Contact::BoundaryToEnd { entry } => (entry, T::infinity()),
    };
    let (lo, hi) = span(&new);
    let mut out: Vec<Contact<T>> = existing
        .iter()
        .copied()
        .filter(|c| {
            let (a, b) = span(c);
            b < lo || a > hi
        })
        .collect();
    out.push(new);
    out.sort_by(|a, b| {
        a.first_time()
            .partial_cmp(&b.first_time())
            .expect("finite contact times")
    });
    out
}

/// Removes the contacts whose junction multipliers are negative.
fn drop_negative<T: Scalar>(contacts: &[Contact<T>], mult: &[T], tol: T, ctx: &Constrained<'_, T>) -> Vec<Contact<T>> {
    let mut k = 0;
    let mut keep = Vec::new();
    for c in contacts {
        let count = match *c {
            Contact::Touch { .. } => 1,
            Contact::Boundary { entry, exit } => 2 + kink_count(ctx, entry, exit),
            Contact::BoundaryToEnd { entry } => 1 + kink_count(ctx, entry, ctx.problem.tf),
        };
        if mult[k..k + count].iter().all(|m| *m >= -tol) {
            keep.push(*c);
        }
        k += count;
    }
    keep
}

fn kink_count<T: Scalar>(ctx: &Constrained<'_, T>, lo: T, hi: T) -> usize {
    ctx.pieces
        .windows(2)
        .filter(|w| w[0].t_end > lo && w[0].t_end < hi)
        .count()
}
