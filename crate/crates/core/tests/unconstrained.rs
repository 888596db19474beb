mod common;

use approx::assert_relative_eq;
use cav_corridor::trajectory::{solve_unconstrained, BvpProblem, CubicArc};
use common::instances::unconstrained;
use common::transcription::Transcription;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn residuals(pb: &BvpProblem<f64>, arc: &CubicArc<f64>) -> [f64; 4] {
    let start = arc.state(pb.t0);
    let end = arc.state(pb.tf);
    [start.p - pb.p0, start.v - pb.v0, end.p - pb.pf, end.u]
}

#[test]
fn boundary_conditions_hold_to_1e9() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let pb = unconstrained(&mut rng);
        let arc = solve_unconstrained(&pb).unwrap();
        for r in residuals(&pb, &arc) {
            assert!(r.abs() < 1e-9, "{pb:?}: residual {r}");
        }
    }
}

#[test]
fn hand_derived_accelerating_arc() {
    let arc = solve_unconstrained(&BvpProblem::new(0.0, 15.0, 10.0, 0.0, 200.0)).unwrap();
    assert_relative_eq!(arc.a, -2.0 / 45.0, epsilon = 1e-12);
    assert_relative_eq!(arc.b, 2.0 / 3.0, epsilon = 1e-12);
    assert_relative_eq!(arc.state(15.0).v, 15.0, epsilon = 1e-12);
    assert_relative_eq!(arc.effort(), 10.0 / 9.0, epsilon = 1e-12);
}

#[test]
fn no_better_than_transcription_and_close_to_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let pb = unconstrained(&mut rng);
        let arc = solve_unconstrained(&pb).unwrap();
        let tr = Transcription::new(pb.t0, pb.tf, pb.p0, pb.v0, 100);
        let oracle = tr.solve(pb.pf, &[f64::INFINITY; 101]).unwrap();
        assert!(
            arc.effort() <= oracle.effort + 1e-6,
            "case {case}: {} vs {}",
            arc.effort(),
            oracle.effort
        );
        for k in 0..=100 {
            let dp = (arc.state(tr.time(k)).p - oracle.p[k]).abs();
            assert!(dp < 1e-2, "case {case}: node {k} deviates by {dp}");
        }
    }
}

proptest! {
    #[test]
    fn control_is_affine(seed in any::<u64>()) {
        let pb = unconstrained(&mut ChaCha8Rng::seed_from_u64(seed));
        let arc = solve_unconstrained(&pb).unwrap();
        let h = (pb.tf - pb.t0) / 17.0;
        let u: Vec<f64> = (0..=17).map(|k| arc.state(pb.t0 + h * k as f64).u).collect();
        let scale = u.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for w in u.windows(3) {
            prop_assert!((w[0] - 2.0 * w[1] + w[2]).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn position_is_monotone_while_speed_is_nonnegative(seed in any::<u64>()) {
        let pb = unconstrained(&mut ChaCha8Rng::seed_from_u64(seed));
        let arc = solve_unconstrained(&pb).unwrap();
        let samples: Vec<_> = (0..=200).map(|k| arc.state(pb.t0 + (pb.tf - pb.t0) * k as f64 / 200.0)).collect();
        prop_assume!(samples.iter().all(|s| s.v >= 0.0));
        for w in samples.windows(2) {
            prop_assert!(w[1].p >= w[0].p - 1e-12);
        }
    }

    #[test]
    fn time_shift_moves_the_control(shift in 0.0f64..50.0) {
        let base = solve_unconstrained(&BvpProblem::new(0.0, 15.0, 10.0, 0.0, 200.0)).unwrap();
        let moved = solve_unconstrained(&BvpProblem::new(shift, shift + 15.0, 10.0, 0.0, 200.0)).unwrap();
        for k in 0..=10 {
            let tau = 1.5 * k as f64;
            prop_assert!((base.state(tau).u - moved.state(shift + tau).u).abs() < 1e-9);
        }
    }
}
