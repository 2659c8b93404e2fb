use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use usv_core::control::{PidGains, PidState};
use usv_core::geometry::Pose2D;
use usv_core::mission::{SimConfig, Simulation};
use usv_core::sim::{
    sample_lidar_cloud, step_dynamics, stock_shape, DynamicsParams, LidarParams, ObjectKind, SensorNoise,
    ThrustCommand, VesselState, World, WorldObject,
};
use usv_core::Vec2;

fn thrusts() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..200)
}

fn buoy_field() -> World {
    let objects = [(8.0, 3.0), (-5.0, 6.0), (2.0, -9.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let (shape, height) = stock_shape(ObjectKind::ObstacleBuoy, Vec2::new(x, y), 0.0);
            WorldObject { id: i as u32, kind: ObjectKind::ObstacleBuoy, shape, height }
        })
        .collect();
    World::new(objects).unwrap()
}

proptest! {
    #[test]
    fn yaw_stays_in_half_open_interval(yaw in -3.1..3.1f64, cmds in thrusts()) {
        let p = DynamicsParams::default();
        let mut s = VesselState::at_rest(Pose2D::new(0.0, 0.0, yaw));
        for (l, r) in cmds {
            s = step_dynamics(&s, ThrustCommand::new(l, r), p.dt, &p).unwrap();
            prop_assert!(s.pose.yaw > -std::f64::consts::PI && s.pose.yaw <= std::f64::consts::PI);
        }
    }

    #[test]
    fn zero_thrust_never_gains_energy(surge in -2.0..2.0f64, yaw_rate in -0.5..0.5f64, n in 1usize..300) {
        let p = DynamicsParams::default();
        let mut s = VesselState { pose: Pose2D::new(1.0, 2.0, 0.3), surge, yaw_rate };
        for _ in 0..n {
            let next = step_dynamics(&s, ThrustCommand::ZERO, p.dt, &p).unwrap();
            prop_assert!(next.surge.abs() <= s.surge.abs());
            prop_assert!(next.yaw_rate.abs() <= s.yaw_rate.abs());
            s = next;
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), cmds in thrusts()) {
        let config = SimConfig { noise: SensorNoise { gps_sigma: 0.5, compass_sigma: 0.05, seed }, ..SimConfig::default() };
        let run = || {
            let mut sim = Simulation::new(buoy_field(), Pose2D::default(), config).unwrap();
            for &(l, r) in &cmds {
                sim.step(ThrustCommand::new(l, r)).unwrap();
            }
            (sim.log, sim.estimate, sim.collisions)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn lidar_points_stay_within_range(seed in any::<u64>(), x in -4.0..4.0f64, y in -4.0..4.0f64, yaw in -3.0..3.0f64) {
        let params = LidarParams { rays_h: 90, rays_v: 8, max_range: 12.0, range_sigma: 0.05, ..LidarParams::default() };
        let vessel = VesselState::at_rest(Pose2D::new(x, y, yaw));
        let cloud = sample_lidar_cloud(&buoy_field(), &vessel, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for p in &cloud.points {
            prop_assert!((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= params.max_range + 1e-9);
        }
    }

    #[test]
    fn zero_gain_pid_outputs_zero(errors in prop::collection::vec(-100.0..100.0f64, 1..50)) {
        let gains = PidGains::new(0.0, 0.0, 0.0, 1.0, 1.0);
        let mut state = PidState::default();
        for e in errors {
            let (out, next) = state.step(&gains, e, 0.1).unwrap();
            prop_assert_eq!(out, 0.0);
            state = next;
        }
    }

    #[test]
    fn pid_depends_only_on_its_state(kp in -2.0..2.0f64, ki in -1.0..1.0f64, kd in -1.0..1.0f64,
                                     errors in prop::collection::vec(-10.0..10.0f64, 1..50)) {
        let gains = PidGains::new(kp, ki, kd, 5.0, 5.0);
        let mut a = PidState::default();
        let mut b = PidState::default();
        for e in errors {
            let (oa, na) = a.step(&gains, e, 0.1).unwrap();
            let (ob, nb) = b.step(&gains, e, 0.1).unwrap();
            prop_assert_eq!(oa, ob);
            prop_assert_eq!(na, nb);
            a = na;
            b = nb;
        }
    }
}
