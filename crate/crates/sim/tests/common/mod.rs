#![allow(dead_code)]

use std::path::{Path, PathBuf};

use complyctl_core::motor::TorqueEstimatorState;
use complyctl_core::wrench::estimate;
use complyctl_core::{Ctl, Wrench64};
use complyctl_sim::{Scenario, ScenarioRun, Script};
use nalgebra::Vector3;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(fixture(name)).unwrap()
}

/// The press fixture re-aimed along `axis` with peak `magnitude` and the
/// given current noise and quantization.
pub fn press(axis: [f64; 3], magnitude: f64, noise: f64, quantization: f64) -> Scenario {
    let base = load("press_x.scenario");
    let mut file = base.file.clone();
    file.world.current_noise = noise;
    file.world.quantization = quantization;
    let p = file.press.as_mut().unwrap();
    p.axis = axis;
    p.magnitude = magnitude;
    Scenario::from_file(file, &fixture("")).unwrap()
}

pub const AXES: [[f64; 3]; 6] =
    [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];

/// Mean absolute force error over ticks at or after `from` (s), averaged
/// over the three components.
pub fn force_mae(estimates: &[Vector3<f64>], truth: &[Wrench64], times: &[f64], from: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((e, t), &time) in estimates.iter().zip(truth).zip(times) {
        if time + 1e-9 >= from {
            sum += (e - t.force).abs().sum();
            n += 3;
        }
    }
    sum / n as f64
}

pub fn run_mae(run: &ScenarioRun, from: f64) -> f64 {
    let est: Vec<_> = run.records.iter().map(|r| r.sites[0].f_ext.force).collect();
    let times: Vec<_> = run.records.iter().map(|r| r.t).collect();
    force_mae(&est, &run.truth, &times, from)
}

pub fn settle(s: &Scenario) -> f64 {
    match &s.script {
        Script::Press(p) => p.settle,
        _ => 0.0,
    }
}

/// Re-estimates the site force from recorded telemetry, optionally with
/// joint velocities replaced by zero.
pub fn replay_estimates(ctl: &Ctl, run: &ScenarioRun, freeze_velocity: bool) -> Vec<Vector3<f64>> {
    let chain = ctl.chain();
    let mut est = TorqueEstimatorState::new(chain.dof(), ctl.config().ema_alpha).unwrap();
    run.telemetry
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if freeze_velocity {
                s.qdot.fill(0.0);
            }
            let raw = ctl.external_torques(&mut est, &s).unwrap();
            let tau = est.ema_step(&raw).unwrap();
            let (jp, jr) = chain.jacobian(&s.q, run.site).unwrap();
            estimate(&ctl.config().estimator, &jp, &jr, &tau).unwrap().wrench.force
        })
        .collect()
}
