mod common;

use common::{fixture, load};
use complyctl_core::motor::{current_for_load, DriveState};
use complyctl_core::{Chain, ControllerConfig, Ctl, DriveSignal};
use complyctl_sim::{ContactSurface, SimMotor, SimWorld, TelemetryMode, WorldSetup};
use nalgebra::{DVector, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_LINK: &str = r#"
[motors.servo]
kv = 0.5
rw = 3.0
kt = 0.02
eta = 0.8
vbus = 12.0
eps_vel = 0.01

[[joints]]
name = "shoulder"
axis = [0.0, 1.0, 0.0]
limits = [-3.0, 3.0]
gear_ratio = 200.0
motor = "servo"

[[joints]]
name = "elbow"
parent = 0
origin_translation = [0.3, 0.0, 0.0]
axis = [0.0, 1.0, 0.0]
limits = [-3.0, 3.0]
gear_ratio = 200.0
motor = "servo"

[[links]]
mass = 0.4
com = [0.15, 0.0, 0.0]

[[links]]
mass = 0.2
com = [0.12, 0.0, 0.0]

[[sites]]
name = "tip"
parent = 1
translation = [0.25, 0.0, 0.0]
"#;

fn motors(chain: &Chain, noise: f64, quantization: f64) -> Vec<SimMotor> {
    (0..chain.dof())
        .map(|i| SimMotor {
            params: *chain.motor(i),
            current_noise: noise,
            quantization,
            kp_servo: 200.0,
            kd_servo: 6.0,
            inertia: 0.05,
        })
        .collect()
}

fn world(chain: &Chain, q0: DVector<f64>, noise: f64, surfaces: Vec<ContactSurface>, mode: TelemetryMode) -> SimWorld {
    SimWorld::new(WorldSetup {
        chain: chain.clone(),
        motors: motors(chain, noise, if noise > 0.0 { 0.01 } else { 0.0 }),
        surfaces,
        seed: 3,
        substeps: 12,
        mode,
        gravity_feedforward: true,
        q0,
    })
    .unwrap()
}

fn arm5() -> Chain {
    Chain::load(fixture("arm5.toml")).unwrap()
}

fn q0() -> DVector<f64> {
    DVector::from_vec(vec![0.0, -0.5, 1.6, 0.5, 0.0])
}

fn currents(s: &complyctl_core::Sample) -> &DVector<f64> {
    match &s.drive {
        DriveSignal::Current(c) => c,
        DriveSignal::Pwm(_) => panic!("expected current telemetry"),
    }
}

#[test]
fn resting_arm_draws_gravity_holding_current() {
    let chain = arm5();
    let grav = chain.gravity_torques(&q0()).unwrap();
    let holding: Vec<f64> = (0..5)
        .map(|i| current_for_load(grav[i] / chain.joints()[i].gear_ratio, chain.motor(i), DriveState::Forward))
        .collect();
    let mut quiet = world(&chain, q0(), 0.0, Vec::new(), TelemetryMode::Current);
    let s = quiet.observe().unwrap();
    for (c, h) in currents(&s).iter().zip(&holding) {
        assert!((c - h).abs() < 1e-12);
    }
    let mut noisy = world(&chain, q0(), 0.05, Vec::new(), TelemetryMode::Current);
    for _ in 0..100 {
        let s = noisy.sim_step(&q0(), 0.012).unwrap();
        for (c, h) in currents(&s).iter().zip(&holding) {
            // Five sigma of multiplicative noise plus half a quantization step.
            assert!((c - h).abs() <= 5.0 * 0.05 * h.abs() + 0.005 + 1e-12);
        }
    }
}

#[test]
fn static_press_on_two_link_arm_matches_jacobian_transpose() {
    let chain = Chain::from_toml_str(TWO_LINK).unwrap();
    let q = DVector::from_vec(vec![-0.3, 1.1]);
    let f = Vector3::new(0.0, 0.0, -5.0);
    let mut w = world(&chain, q.clone(), 0.0, Vec::new(), TelemetryMode::Current);
    w.set_push(0, f);
    let ctl = Ctl::new(chain.clone(), ControllerConfig::new(0.012)).unwrap();
    let mut est = complyctl_core::TorqueEstimatorState::new(2, 0.9).unwrap();
    let mut s = w.observe().unwrap();
    ctl.external_torques(&mut est, &s).unwrap();
    for _ in 0..500 {
        s = w.sim_step(&q, 0.012).unwrap();
        ctl.external_torques(&mut est, &s).unwrap();
    }
    assert!(w.qdot().amax() < 1e-12, "not settled: {}", w.qdot().amax());
    let tau = ctl.external_torques(&mut est, &s).unwrap();
    let (jp, _) = chain.jacobian(w.q(), 0).unwrap();
    assert!((&tau - jp.transpose() * f).amax() <= 1e-9, "{tau} vs {}", jp.transpose() * f);
}

#[test]
fn noiseless_telemetry_reproduces_injected_torques() {
    let chain = arm5();
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    for mode in [TelemetryMode::Current, TelemetryMode::Pwm] {
        for _ in 0..5 {
            let f = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
            let mut w = world(&chain, q0(), 0.0, Vec::new(), mode);
            w.set_push(0, f);
            let ctl = Ctl::new(chain.clone(), ControllerConfig::new(0.012)).unwrap();
            let mut est = complyctl_core::TorqueEstimatorState::new(5, 0.9).unwrap();
            let mut s = w.observe().unwrap();
            ctl.external_torques(&mut est, &s).unwrap();
            for _ in 0..500 {
                s = w.sim_step(&q0(), 0.012).unwrap();
                ctl.external_torques(&mut est, &s).unwrap();
            }
            let tau = ctl.external_torques(&mut est, &s).unwrap();
            let truth = w.external_joint_torques().unwrap();
            assert!((&tau - &truth).amax() <= 1e-9, "{mode:?}: {:e}", (&tau - &truth).amax());
        }
    }
}

#[test]
fn seeded_runs_are_identical() {
    let chain = arm5();
    let run = |seed: u64| {
        let mut w = SimWorld::new(WorldSetup { seed, ..setup(&chain) }).unwrap();
        w.set_push(0, Vector3::new(2.0, 0.0, -3.0));
        let target = DVector::from_vec(vec![0.1, -0.4, 1.5, 0.5, 0.1]);
        (0..200).map(|_| w.sim_step(&target, 0.012).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

fn setup(chain: &Chain) -> WorldSetup {
    WorldSetup {
        chain: chain.clone(),
        motors: motors(chain, 0.05, 0.01),
        surfaces: Vec::new(),
        seed: 0,
        substeps: 12,
        mode: TelemetryMode::Current,
        gravity_feedforward: true,
        q0: q0(),
    }
}

fn table_under_tool(chain: &Chain, depth: f64) -> ContactSurface {
    let p = chain.site_pose(&q0(), 0).unwrap().position;
    ContactSurface {
        point: p + Vector3::z() * depth,
        normal: Unit::new_normalize(Vector3::z()),
        stiffness: 2500.0,
        friction: 0.3,
        viscosity: 200.0,
        site: 0,
    }
}

#[test]
fn true_wrench_follows_spring_law() {
    let chain = arm5();
    let free = world(&chain, q0(), 0.0, vec![table_under_tool(&chain, -0.01)], TelemetryMode::Current);
    assert_eq!(free.true_wrench(0).unwrap().force, Vector3::zeros());
    let pressed = world(&chain, q0(), 0.0, vec![table_under_tool(&chain, 0.002)], TelemetryMode::Current);
    let f = pressed.true_wrench(0).unwrap().force;
    assert!((f - Vector3::new(0.0, 0.0, 5.0)).norm() < 1e-9);
}

#[test]
fn joint_reaction_is_jacobian_transpose_of_true_wrench() {
    let chain = arm5();
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let mut w = world(&chain, q0(), 0.0, vec![table_under_tool(&chain, 0.003)], TelemetryMode::Current);
    for _ in 0..50 {
        let q = &q0() + DVector::from_fn(5, |_, _| rng.random_range(-0.02..0.02));
        let qdot = DVector::from_fn(5, |_, _| rng.random_range(-0.5..0.5));
        w.set_state(q.clone(), qdot).unwrap();
        w.set_push(0, Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)));
        let f = w.true_wrench(0).unwrap().force;
        let (jp, _) = chain.jacobian(&q, 0).unwrap();
        let tau = w.external_joint_torques().unwrap();
        assert!((tau - jp.transpose() * f).amax() <= 1e-12);
    }
}

#[test]
fn energy_does_not_grow_with_frozen_targets() {
    let chain = arm5();
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    for feedforward in [true, false] {
        for surfaces in [Vec::new(), vec![table_under_tool(&chain, 0.002)]] {
            let mut w = SimWorld::new(WorldSetup {
                motors: motors(&chain, 0.0, 0.0),
                surfaces,
                gravity_feedforward: feedforward,
                ..setup(&chain)
            })
            .unwrap();
            let target = q0();
            w.set_state(q0(), DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let mut prev = w.energy().unwrap();
            for _ in 0..300 {
                w.sim_step(&target, 0.012).unwrap();
                let e = w.energy().unwrap();
                assert!(e <= prev + 1e-9 * prev.abs().max(1.0), "ff={feedforward}: {prev} -> {e}");
                prev = e;
            }
        }
    }
}

#[test]
fn bad_world_setups_are_rejected() {
    let chain = arm5();
    assert!(SimWorld::new(WorldSetup { substeps: 2, ..setup(&chain) }).is_err());
    assert!(SimWorld::new(WorldSetup { q0: DVector::zeros(4), ..setup(&chain) }).is_err());
    let mut m = motors(&chain, 0.0, 0.0);
    m[0].current_noise = -1.0;
    assert!(SimWorld::new(WorldSetup { motors: m, ..setup(&chain) }).is_err());
    let mut w = SimWorld::new(setup(&chain)).unwrap();
    assert!(w.sim_step(&DVector::zeros(3), 0.012).is_err());
}

#[test]
fn fixture_scenarios_load() {
    for name in ["press_x.scenario", "heart.scenario", "wipe.scenario"] {
        load(name);
    }
}
