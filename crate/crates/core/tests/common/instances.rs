//! Randomised problem generators shared by the integration tests.

use std::sync::Arc;

use cav_corridor::trajectory::{min_margin, solve_unconstrained, BvpProblem, PiecewiseTrajectory};
use rand::Rng;

pub fn unconstrained<R: Rng>(rng: &mut R) -> BvpProblem<f64> {
    let t0 = rng.random_range(0.0..=10.0);
    let horizon = rng.random_range(5.0..=60.0);
    let v0 = rng.random_range(3.0..=20.0);
    let pf = rng.random_range(50.0..=600.0);
    BvpProblem::new(t0, t0 + horizon, v0, 0.0, pf)
}

pub struct LeaderFollower {
    pub leader: Arc<PiecewiseTrajectory<f64>>,
    pub problem: BvpProblem<f64>,
    pub delta: f64,
}

/// A decelerating leader and a faster follower whose free arc would close
/// the gap below `delta`. Retries until the unconstrained arc violates.
pub fn leader_follower<R: Rng>(rng: &mut R) -> LeaderFollower {
    loop {
        let length = rng.random_range(200.0..=300.0);
        let lead_speed = rng.random_range(12.0..=16.0);
        let lead_mean = lead_speed * rng.random_range(0.55..=0.75);
        let lead_tf = length / lead_mean;
        let delta = rng.random_range(5.0..=10.0);
        let arc = solve_unconstrained(&BvpProblem::new(0.0, lead_tf, lead_speed, 0.0, length))
            .expect("leader problem is well posed");
        let leader = Arc::new(PiecewiseTrajectory::single(arc));
        let lead_exit_speed = arc.state(lead_tf).v;

        let t0 = rng.random_range(1.5..=3.0);
        let v0 = lead_speed + rng.random_range(1.0..=5.0);
        if leader.evaluate_extended(t0).p - delta < 0.0 {
            continue;
        }
        let tf = lead_tf + delta / lead_exit_speed + rng.random_range(0.1..=2.0);
        let problem = BvpProblem::new(t0, tf, v0, 0.0, length).with_leader(leader.clone(), delta);
        let free = PiecewiseTrajectory::single(solve_unconstrained(&problem).expect("valid"));
        let (_, m) = min_margin(&free, &leader, delta, t0, tf);
        if m < -1e-3 {
            return LeaderFollower { leader, problem, delta };
        }
    }
}

/// Harder variant: the follower may enter just behind the leader with a
/// large closing speed, and the leader may itself be a constrained,
/// piecewise trajectory behind a third vehicle.
pub fn tight_leader_follower<R: Rng>(rng: &mut R) -> LeaderFollower {
    loop {
        let length = rng.random_range(120.0..=300.0);
        let delta = rng.random_range(4.0..=10.0);
        let head_speed: f64 = rng.random_range(8.0..=16.0);
        let head_tf = length / (head_speed * rng.random_range(0.5..=0.9));
        let head = Arc::new(PiecewiseTrajectory::single(
            solve_unconstrained(&BvpProblem::new(0.0, head_tf, head_speed, 0.0, length)).expect("well posed"),
        ));
        let leader = if rng.random_bool(0.5) {
            head
        } else {
            let t1 = rng.random_range(0.3..=2.5);
            let v1 = head_speed + rng.random_range(0.0..=5.0);
            if head.evaluate_extended(t1).p - delta < 0.0 {
                continue;
            }
            let exit_speed: f64 = head.terminal_state().v;
            let tf1 = head_tf + delta / exit_speed.max(0.5) + rng.random_range(0.1..=2.0);
            let pb = BvpProblem::new(t1, tf1, v1, 0.0, length).with_leader(head.clone(), delta);
            match cav_corridor::trajectory::solve_constrained(&pb) {
                Ok(tr) => Arc::new(tr),
                Err(_) => continue,
            }
        };
        let lead_start = leader.t_start();
        let lead_tf = leader.t_end();
        let lead_exit_speed = leader.terminal_state().v;
        if lead_exit_speed <= 0.5 {
            continue;
        }
        let t0 = lead_start + rng.random_range(0.3..=3.0);
        let v0 = leader.evaluate_extended(t0).v + rng.random_range(0.0..=6.0);
        if leader.evaluate_extended(t0).p - delta < 0.0 {
            continue;
        }
        let tf = lead_tf + delta / lead_exit_speed + rng.random_range(0.05..=3.0);
        let problem = BvpProblem::new(t0, tf, v0, 0.0, length).with_leader(leader.clone(), delta);
        let free = PiecewiseTrajectory::single(solve_unconstrained(&problem).expect("valid"));
        let (_, m) = min_margin(&free, &leader, delta, t0, tf);
        if m < -1e-3 {
            return LeaderFollower { leader, problem, delta };
        }
    }
}
