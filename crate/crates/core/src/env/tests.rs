use nalgebra::DVector;
use rand::SeedableRng;

use super::*;

fn rng() -> Rng {
    Rng::seed_from_u64(0)
}

fn zero_action() -> Action {
    Action::zeros(D_ACT)
}

#[test]
fn unforced_velocity_decays_geometrically() {
    let env = ToyEnv::new(EnvConfig::default()).unwrap();
    let mut s = EnvState::walking(Command::forward(0.0), 0.0);
    s.u = 1.0;
    let rate = 1.0 - env.cfg.damping * env.cfg.dt;
    let mut rng = rng();
    for k in 1..=20 {
        s = env
            .step(&s, &zero_action(), [0.0, 0.0], &mut rng)
            .unwrap()
            .0;
        approx::assert_relative_eq!(s.u, rate.powi(k), max_relative = 1e-12);
    }
}

#[test]
fn lateral_push_increment_is_exact() {
    let env = ToyEnv::new(EnvConfig::default()).unwrap();
    let w = env.cfg.body_weight();
    for phase in [0.0, 1.0, 3.0] {
        let s = EnvState::walking(Command::forward(0.0), phase);
        let (next, _) = env.step(&s, &zero_action(), [0.0, w], &mut rng()).unwrap();
        assert_eq!(next.v - s.v, (w / env.cfg.mass) * env.cfg.dt);
    }
}

#[test]
fn forces_superpose_on_velocity() {
    let env = ToyEnv::new(EnvConfig::default()).unwrap();
    let s = EnvState::walking(Command::forward(1.0), 0.7);
    let a = Action(DVector::from_vec(vec![0.3, -0.2, 0.1, 0.05]));
    let base = env.step(&s, &a, [0.0, 0.0], &mut rng()).unwrap().0;
    let f1 = env.step(&s, &a, [12.0, -30.0], &mut rng()).unwrap().0;
    let f2 = env.step(&s, &a, [-4.0, 50.0], &mut rng()).unwrap().0;
    let f12 = env.step(&s, &a, [8.0, 20.0], &mut rng()).unwrap().0;
    approx::assert_relative_eq!(
        f12.u - base.u,
        (f1.u - base.u) + (f2.u - base.u),
        epsilon = 1e-14
    );
    approx::assert_relative_eq!(
        f12.v - base.v,
        (f1.v - base.v) + (f2.v - base.v),
        epsilon = 1e-14
    );
}

#[test]
fn non_finite_action_is_rejected() {
    let env = ToyEnv::new(EnvConfig::default()).unwrap();
    let s = EnvState::walking(Command::forward(1.0), 0.0);
    let a = Action(DVector::from_vec(vec![0.0, f64::INFINITY, 0.0, 0.0]));
    assert!(env.step(&s, &a, [0.0, 0.0], &mut rng()).is_err());
}

#[test]
fn periodic_actions_give_periodic_states() {
    // Zero damping transient aside, the phase-locked state repeats with the
    // gait period once velocities settle.
    let cfg = EnvConfig {
        stride_base_hz: 2.0,
        stride_per_speed_hz: 0.0,
        ..EnvConfig::default()
    };
    let env = ToyEnv::new(cfg).unwrap();
    let period = env.cfg.gait_period_steps(0.0).round() as usize;
    assert_eq!(period, 50);
    let mut s = EnvState::walking(Command::forward(0.0), 0.0);
    let mut history = Vec::new();
    let mut r = rng();
    for t in 0..4000 {
        let theta = std::f64::consts::TAU * (t % period) as f64 / period as f64;
        let a = Action(DVector::from_vec(vec![theta.sin(), theta.cos(), 0.0, 0.0]));
        s = env.step(&s, &a, [0.0, 0.0], &mut r).unwrap().0;
        history.push(s.clone());
    }
    let late = &history[3000];
    let later = &history[3000 + period];
    approx::assert_abs_diff_eq!(late.u, later.u, epsilon = 1e-9);
    approx::assert_abs_diff_eq!(late.v, later.v, epsilon = 1e-9);
    approx::assert_abs_diff_eq!(late.gait_phase, later.gait_phase, epsilon = 1e-9);
}

#[test]
fn fall_requires_sustained_violation() {
    let env = ToyEnv::new(EnvConfig::default()).unwrap();
    let n = env.cfg.fall_steps;
    let mut s = EnvState::walking(Command::forward(1.0), 0.0);
    assert!(!env.is_fallen(&s));

    // One-step spike.
    let mut r = rng();
    s.v = 10.0 * env.cfg.v_fall;
    let s1 = env.step(&s, &zero_action(), [0.0, 0.0], &mut r).unwrap().0;
    let mut s2 = s1.clone();
    s2.v = 0.0;
    let s2 = env.step(&s2, &zero_action(), [0.0, 0.0], &mut r).unwrap().0;
    assert!(!env.is_fallen(&s2));

    // Held for fall_steps.
    let mut s = EnvState::walking(Command::forward(1.0), 0.0);
    for _ in 0..n {
        s.v = 10.0 * env.cfg.v_fall;
        s = env.step(&s, &zero_action(), [0.0, 0.0], &mut r).unwrap().0;
    }
    assert!(env.is_fallen(&s));
}

#[test]
fn noise_free_observation_layout() {
    let env = ToyEnv::new(EnvConfig::default()).unwrap();
    let mut s = EnvState::walking(Command::forward(1.5), 0.4);
    s.prev_action = [1.0, 2.0, 3.0, 4.0];
    let obs = env.observe(&s, &mut rng()).to_vector();
    assert_eq!(obs.len(), D_OBS);
    assert_eq!(
        &obs.as_slice()[..10],
        &[1.5, 0.0, 0.0, 1.5, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0]
    );
    approx::assert_abs_diff_eq!(obs[10], contact_gate(0.4), epsilon = 1e-15);
    approx::assert_abs_diff_eq!(obs[10] + obs[11], 1.0, epsilon = 1e-15);
    let decoded = Observation::from_vector(&obs).unwrap();
    assert_eq!(decoded.to_vector(), obs);
}

#[test]
fn teacher_zero_error_zero_rhythm_is_silent() {
    let teacher = Teacher::default();
    let obs = Observation {
        velocity: [0.0; 3],
        command: [0.0; 3],
        prev_action: [0.0; 4],
        gates: [contact_gate(0.3), contact_gate(0.3 + PI)],
    };
    let a = teacher.action(&obs, 0.3, 0.3);
    for v in a.as_slice() {
        approx::assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-15);
    }
}

#[test]
fn teacher_correction_is_proportional() {
    let teacher = Teacher::new(TeacherGains {
        rhythm_per_speed: 0.0,
        ..TeacherGains::default()
    });
    let gates = [contact_gate(1.0), contact_gate(1.0 + PI)];
    let obs = |err: f64| Observation {
        velocity: [1.0 - err, -err, err],
        command: [1.0, 0.0, 0.0],
        prev_action: [0.0; 4],
        gates,
    };
    let a1 = teacher.action(&obs(0.2), 1.0, 1.0);
    let a2 = teacher.action(&obs(0.4), 1.0, 1.0);
    for k in 0..3 {
        approx::assert_relative_eq!(a2.0[k], 2.0 * a1.0[k], max_relative = 1e-12);
    }
}

#[test]
fn config_validation() {
    let bad = EnvConfig {
        dt: 0.0,
        ..EnvConfig::default()
    };
    assert!(ToyEnv::new(bad).is_err());
    let bad = EnvConfig {
        obs_noise_std: vec![0.1; 3],
        ..EnvConfig::default()
    };
    assert!(ToyEnv::new(bad).is_err());
    let cfg = EnvConfig::default();
    assert_eq!(cfg.steps_for_ms(100.0), 10);
    assert_eq!(cfg.steps_for_ms(200.0), 20);
}
