use proptest::prelude::*;
use sbrl::env::{integrate, observe, step, EnvConfig, RelativeAction, Termination, VehicleState};
use sbrl::geometry::{ArcLengthCurve, ReferenceTrajectory, Track, Vec2};

fn oval() -> (Track, ReferenceTrajectory) {
    let mut pts = Vec::new();
    let (straight, radius) = (100.0, 40.0);
    for i in 0..50 {
        pts.push(Vec2::new(i as f64 * straight / 50.0, -radius));
    }
    for i in 0..60 {
        let a = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / 60.0;
        pts.push(Vec2::new(straight + radius * a.cos(), radius * a.sin()));
    }
    for i in 0..50 {
        pts.push(Vec2::new(straight - i as f64 * straight / 50.0, radius));
    }
    for i in 0..60 {
        let a = std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / 60.0;
        pts.push(Vec2::new(radius * a.cos(), radius * a.sin()));
    }
    let n = pts.len();
    let curve = ArcLengthCurve::new(pts, true).unwrap();
    let track = Track::new(curve.clone(), vec![6.0; n], vec![6.0; n]).unwrap();
    let reference = ReferenceTrajectory::new(curve, vec![15.0; n]).unwrap();
    (track, reference)
}

fn moving_state() -> impl Strategy<Value = VehicleState> {
    (
        5.0..40.0f64,
        -1.5..1.5f64,
        -0.5..0.5f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
    )
        .prop_map(|(vx, vy, r, a, d)| VehicleState {
            position: Vec2::new(30.0, -40.0),
            v_long: vx,
            v_lat: vy,
            yaw_rate: r,
            current_action: [a, d],
            ..Default::default()
        })
}

proptest! {
    #[test]
    fn step_is_deterministic(s in moving_state(), da in -0.2..0.2f64, dd in -0.2..0.2f64) {
        let (track, _) = oval();
        let cfg = EnvConfig::default();
        let a = step(&cfg, &s, RelativeAction::new(da, dd), &track, 10).unwrap();
        let b = step(&cfg, &s, RelativeAction::new(da, dd), &track, 10).unwrap();
        prop_assert_eq!(a.next_state, b.next_state);
        prop_assert!(a.next_state.current_action.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn coasting_never_gains_energy(s in moving_state(), brake in -1.0..=0.0f64) {
        let cfg = EnvConfig::default();
        let p = &cfg.vehicle;
        let action = [brake, s.current_action[1]];
        let next = integrate(p, &s, action, cfg.dt, cfg.substeps).unwrap();
        prop_assert!(next.kinetic_energy(p) <= s.kinetic_energy(p) * (1.0 + 1e-12));
    }

    #[test]
    fn straight_motion_has_no_slip(vx in 0.0..60.0f64, a in -1.0..1.0f64) {
        let cfg = EnvConfig::default();
        let s = VehicleState { v_long: vx, current_action: [a, 0.0], ..Default::default() };
        let next = integrate(&cfg.vehicle, &s, [a, 0.0], cfg.dt, cfg.substeps).unwrap();
        prop_assert_eq!(next.slip_angle_front, 0.0);
        prop_assert_eq!(next.slip_angle_rear, 0.0);
    }

    #[test]
    fn healthy_observations_are_bounded(s in moving_state(), y in -5.5..5.5f64, dh in -1.2..1.2f64) {
        let (track, reference) = oval();
        let cfg = EnvConfig::default();
        let mut s = s;
        s.position = Vec2::new(50.0, -40.0 + y);
        s.heading = dh;
        let out = step(&cfg, &s, RelativeAction::default(), &track, 1).unwrap();
        if out.terminated == Termination::None {
            let obs = observe(&out.next_state, &track, &reference);
            prop_assert!(obs.iter().all(|v| v.is_finite() && v.abs() <= 20.0));
        }
    }

    #[test]
    fn halving_dt_converges_at_first_order(s in moving_state()) {
        // one step at dt vs two at dt/2: local difference shrinks ~4x per halving
        let cfg = EnvConfig::default();
        let p = &cfg.vehicle;
        let action = [0.3, s.current_action[1] * 0.2];
        let diff = |dt: f64| {
            let one = integrate(p, &s, action, dt, 1).unwrap();
            let half = integrate(p, &s, action, dt / 2.0, 1).unwrap();
            let two = integrate(p, &half, action, dt / 2.0, 1).unwrap();
            (one.v_long - two.v_long).abs() + (one.v_lat - two.v_lat).abs()
                + (one.yaw_rate - two.yaw_rate).abs()
                + (one.position - two.position).norm()
        };
        let (d1, d2) = (diff(0.004), diff(0.002));
        prop_assume!(d1 > 1e-10);
        prop_assert!(d2 / d1 < 0.35, "ratio {}", d2 / d1);
    }
}
