use complyctl_core::motor::{calibrate_kt_eta, calibrate_kt_with_eta, calibrate_kv, calibrate_rw};
use complyctl_core::motor::{current_for_load, external_joint_torque, load_torque, pwm_to_current};
use complyctl_core::{DriveState, MotorParams, TorqueEstimatorState};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn params() -> MotorParams<f64> {
    MotorParams { kv: 5.0, rw: 3.0, kt: 0.5, eta: 0.8, vbus: 12.0, eps_vel: 0.01, has_current_sensor: false }
}

#[test]
fn pwm_to_current_examples() {
    let p = params();
    assert_eq!(pwm_to_current(0.5, 0.0, &p).unwrap(), 2.0);
    assert!(pwm_to_current(0.3, 0.3 * 12.0 * 5.0, &p).unwrap().abs() < 1e-15);
    let p2 = MotorParams { kv: 5.0, rw: 2.0, vbus: 16.0, ..p };
    assert!((pwm_to_current(0.8, 20.0, &p2).unwrap() - 4.4).abs() < 1e-12);
    assert!(pwm_to_current(1.2, 0.0, &p).is_err());
}

proptest! {
    #[test]
    fn current_is_affine(a in -1.0f64..1.0, b in -1.0f64..1.0, w in -50.0f64..50.0, v in -50.0f64..50.0) {
        let p = params();
        let i0 = pwm_to_current(0.0, 0.0, &p).unwrap();
        let ia = pwm_to_current(a, w, &p).unwrap();
        let ib = pwm_to_current(b, v, &p).unwrap();
        let mid = pwm_to_current((a + b) / 2.0, (w + v) / 2.0, &p).unwrap();
        prop_assert!((mid - (ia + ib) / 2.0).abs() <= 1e-12 * (1.0 + ia.abs() + ib.abs()));
        prop_assert_eq!(i0, 0.0);
    }

    #[test]
    fn backward_over_forward_is_inverse_eta_squared(i in 0.01f64..10.0, qd in 0.02f64..20.0, eta in 0.3f64..1.0) {
        let p = MotorParams { eta, ..params() };
        let (fwd, d1) = load_torque(i, qd, &p, DriveState::Backward);
        let (bwd, d2) = load_torque(i, -qd, &p, DriveState::Forward);
        prop_assert_eq!(d1, DriveState::Forward);
        prop_assert_eq!(d2, DriveState::Backward);
        prop_assert!((bwd.abs() / fwd.abs() - 1.0 / (eta * eta)).abs() <= 1e-12 / (eta * eta));
    }

    #[test]
    fn ema_stays_within_history(xs in proptest::collection::vec(-10.0f64..10.0, 1..50), alpha in 0.0f64..=1.0) {
        let mut s = TorqueEstimatorState::new(1, alpha).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            lo = lo.min(x);
            hi = hi.max(x);
            let y = s.ema_step(&DVector::from_element(1, x)).unwrap()[0];
            prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
        }
    }
}

#[test]
fn load_torque_examples() {
    let p = params();
    let (t, d) = load_torque(1.0, 2.0, &p, DriveState::Backward);
    assert!((t - 0.4).abs() < 1e-15);
    assert_eq!(d, DriveState::Forward);
    let (t, d) = load_torque(1.0, -2.0, &p, DriveState::Forward);
    assert!((t - 0.625).abs() < 1e-15);
    assert_eq!(d, DriveState::Backward);
    let init = TorqueEstimatorState::<f64>::new(3, 0.9).unwrap();
    assert!(init.drive.iter().all(|&d| d == DriveState::Forward));
    let (t, d) = load_torque(1.0, 0.0, &p, init.drive[0]);
    assert!((t - 0.4).abs() < 1e-15);
    assert_eq!(d, DriveState::Forward);
}

#[test]
fn drive_state_holds_while_slow() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for start in [DriveState::Forward, DriveState::Backward] {
        let mut d = start;
        for _ in 0..100 {
            let qd = rng.random_range(-p.eps_vel..=p.eps_vel);
            d = load_torque(rng.random_range(-5.0..5.0), qd, &p, d).1;
            assert_eq!(d, start);
        }
        // Zero power flow above the debounce threshold also keeps the state.
        assert_eq!(load_torque(0.0, 1.0, &p, start).1, start);
    }
}

#[test]
fn current_for_load_inverts_load_torque() {
    let p = params();
    for d in [DriveState::Forward, DriveState::Backward] {
        let i = current_for_load(0.37, &p, d);
        let qd = if d == DriveState::Forward { i.signum() } else { -i.signum() };
        assert!((load_torque(i, qd, &p, d).0 - 0.37).abs() < 1e-15);
    }
}

#[test]
fn external_torque_examples() {
    assert_eq!(external_joint_torque(0.01, 2.0, 200.0), 0.0);
    assert_eq!(external_joint_torque(1.0, 0.0, 1.0), -1.0);
}

#[test]
fn ema_examples() {
    let x = DVector::from_vec(vec![1.0, -2.0]);
    let mut pass = TorqueEstimatorState::new(2, 1.0).unwrap();
    pass.ema_step(&DVector::zeros(2)).unwrap();
    assert_eq!(pass.ema_step(&x).unwrap(), x);
    let mut frozen = TorqueEstimatorState::new(2, 0.0).unwrap();
    frozen.ema_step(&DVector::zeros(2)).unwrap();
    for _ in 0..5 {
        assert_eq!(frozen.ema_step(&x).unwrap(), DVector::zeros(2));
    }
    let mut s = TorqueEstimatorState::new(1, 0.9).unwrap();
    s.ema_step(&DVector::zeros(1)).unwrap();
    for k in 1..=5 {
        let y = s.ema_step(&DVector::from_element(1, 1.0)).unwrap()[0];
        assert!((y - (1.0 - 0.1f64.powi(k))).abs() < 1e-15);
    }
    assert!(TorqueEstimatorState::<f64>::new(1, 1.5).is_err());
}

struct Truth {
    kv: f64,
    rw: f64,
    kt: f64,
    eta: f64,
    vbus: f64,
}

fn noisy(rng: &mut ChaCha8Rng, x: f64, rel: f64) -> f64 {
    if rel == 0.0 {
        return x;
    }
    x * (1.0 + Normal::new(0.0, rel).unwrap().sample(rng))
}

struct Fit {
    kv: f64,
    rw: f64,
    kt: f64,
    eta: f64,
}

fn synth_and_fit(rng: &mut ChaCha8Rng, t: &Truth, rel: f64) -> Fit {
    let pwms: Vec<f64> = (0..50).map(|i| -0.9 + 1.8 * i as f64 / 49.0).filter(|p: &f64| p.abs() > 0.05).collect();
    let sweep: Vec<(f64, f64)> = pwms.iter().map(|&p| (p, noisy(rng, t.kv * p * t.vbus, rel))).collect();
    let kv = calibrate_kv(&sweep, t.vbus).unwrap().kv;
    let rw_samples: Vec<(f64, f64, f64)> = (0..50)
        .map(|_| {
            let pwm = rng.random_range(0.2..0.9);
            let qdot = rng.random_range(0.0..0.5) * pwm * t.vbus * t.kv;
            let i = (pwm * t.vbus - qdot / t.kv) / t.rw;
            (pwm, qdot, noisy(rng, i, rel))
        })
        .collect();
    let rw = calibrate_rw(&rw_samples, kv, t.vbus).unwrap().rw;
    let currents: Vec<f64> = (0..50).map(|i| 0.1 + 2.0 * i as f64 / 49.0).collect();
    let fwd: Vec<(f64, f64)> = currents.iter().map(|&i| (i, noisy(rng, t.eta * t.kt * i, rel))).collect();
    let bwd: Vec<(f64, f64)> = currents.iter().map(|&i| (i, noisy(rng, t.kt * i / t.eta, rel))).collect();
    let kt = calibrate_kt_eta(&fwd, &bwd).unwrap();
    Fit { kv, rw, kt: kt.kt, eta: kt.eta }
}

#[test]
fn noisy_sweeps_recover_parameters_within_two_percent() {
    let t = Truth { kv: 5.0, rw: 3.0, kt: 0.6, eta: 0.8, vbus: 12.0 };
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = synth_and_fit(&mut rng, &t, 0.01);
        for (name, got, want) in [("kv", f.kv, t.kv), ("rw", f.rw, t.rw), ("kt", f.kt, t.kt), ("eta", f.eta, t.eta)] {
            assert!((got / want - 1.0).abs() <= 0.02, "seed {seed}: {name} {got} vs {want}");
        }
    }
}

#[test]
fn noiseless_sweeps_recover_parameters_exactly() {
    let t = Truth { kv: 5.0, rw: 3.0, kt: 0.6, eta: 0.8, vbus: 12.0 };
    let f = synth_and_fit(&mut ChaCha8Rng::seed_from_u64(0), &t, 0.0);
    for (got, want) in [(f.kv, t.kv), (f.rw, t.rw), (f.kt, t.kt), (f.eta, t.eta)] {
        assert!((got / want - 1.0).abs() <= 1e-10, "{got} vs {want}");
    }
}

#[test]
fn manufacturer_eta_fallback() {
    let fwd: Vec<(f64, f64)> = (1..10).map(|i| (i as f64 * 0.2, 0.8 * 0.6 * i as f64 * 0.2)).collect();
    let fit = calibrate_kt_with_eta(&fwd, 0.8).unwrap();
    assert!((fit.kt - 0.6).abs() < 1e-12);
}

#[test]
fn degenerate_sweeps_are_errors() {
    assert!(calibrate_kv(&[(0.5, 30.0)], 12.0).is_err());
    assert!(calibrate_kv(&[(0.0, 0.0), (0.0, 0.0)], 12.0).is_err());
    assert!(calibrate_rw(&[(0.5, 0.0, 0.0), (0.2, 0.0, 1e-9)], 5.0, 12.0).is_err());
}

#[test]
fn efficiency_above_one_is_clamped() {
    let fwd: Vec<(f64, f64)> = (1..10).map(|i| (i as f64, 0.7 * i as f64)).collect();
    let bwd: Vec<(f64, f64)> = (1..10).map(|i| (i as f64, 0.5 * i as f64)).collect();
    let fit = calibrate_kt_eta(&fwd, &bwd).unwrap();
    assert!(fit.eta_clamped);
    assert_eq!(fit.eta, 1.0);
}

#[test]
fn static_free_space_torque_vanishes() {
    let chain = complyctl_core::Chain::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../sim/fixtures/arm5.toml")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..50 {
        let q = DVector::from_fn(5, |_, _| rng.random_range(-1.5..1.5));
        let grav = chain.gravity_torques(&q).unwrap();
        for (i, j) in chain.joints().iter().enumerate() {
            let m = chain.motor(i);
            let tau_load = grav[i] / j.gear_ratio;
            let current = current_for_load(tau_load, m, DriveState::Forward);
            let (tl, _) = load_torque(current, 0.0, m, DriveState::Forward);
            assert!(external_joint_torque(tl, grav[i], j.gear_ratio).abs() <= 1e-9);
        }
    }
}
