//! Scripted push-hold-release at a site with estimated vs true force traces.

use complyctl_core::{Ctl, Error, Result, SiteCommand};
use nalgebra::{Unit, Vector3};

use crate::report::{closed_loop, hold_command, ticks_for, PressSummary, ScenarioRun, ScenarioSummary};
use crate::world::SimWorld;

/// Trapezoidal push: zero for `settle`, ramp up, hold, ramp down, zero for `rest`.
#[derive(Clone, Debug, PartialEq)]
pub struct PressProfile {
    pub site: usize,
    pub axis: Unit<Vector3<f64>>,
    /// Peak force (N); negative values push along `-axis`.
    pub magnitude: f64,
    pub settle: f64,
    pub ramp: f64,
    pub hold: f64,
    pub release: f64,
    pub rest: f64,
}

impl PressProfile {
    pub fn new(site: usize, axis: Unit<Vector3<f64>>, magnitude: f64) -> Self {
        Self { site, axis, magnitude, settle: 0.5, ramp: 1.0, hold: 2.0, release: 1.0, rest: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let phases = [self.settle, self.ramp, self.hold, self.release, self.rest];
        if phases.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || !self.magnitude.is_finite() {
            return Err(Error::validation("press profile", "phase durations must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.settle + self.ramp + self.hold + self.release + self.rest
    }

    /// Push magnitude at time `t`.
    pub fn magnitude_at(&self, t: f64) -> f64 {
        let mut t = t - self.settle;
        if t < 0.0 {
            return 0.0;
        }
        if t < self.ramp {
            return self.magnitude * t / self.ramp;
        }
        t -= self.ramp;
        if t < self.hold {
            return self.magnitude;
        }
        t -= self.hold;
        if t < self.release {
            return self.magnitude * (1.0 - t / self.release);
        }
        0.0
    }
}

/// Runs the push with the controller holding the site's initial pose. The
/// error statistics cover everything after the settle phase.
pub fn scenario_press(world: &mut SimWorld, controller: &Ctl, profile: &PressProfile) -> Result<ScenarioRun> {
    profile.validate()?;
    let dt = controller.config().dt;
    let ticks = ticks_for(profile.duration(), dt);
    let hold = hold_command(controller, world.q(), profile.site)?;
    let site = profile.site;
    let out = closed_loop(world, controller, site, ticks, |w, k, _| {
        let t = k as f64 * dt;
        w.set_push(site, profile.axis.into_inner() * profile.magnitude_at(t));
        Ok(vec![SiteCommand { site, command: hold.clone() }])
    })?;

    let mut sum = [0.0; 3];
    let mut max_error: f64 = 0.0;
    let mut peak: f64 = 0.0;
    let mut n = 0usize;
    for ((rec, truth), tel) in out.records.iter().zip(&out.truth).zip(&out.telemetry) {
        peak = peak.max(truth.force.norm());
        if tel.t < profile.settle - 1e-9 {
            continue;
        }
        let est = rec.sites.iter().find(|s| s.site == site).map(|s| s.f_ext.force).unwrap_or_default();
        let err = est - truth.force;
        for c in 0..3 {
            sum[c] += err[c].abs();
            max_error = max_error.max(err[c].abs());
        }
        n += 1;
    }
    let denom = n.max(1) as f64;
    let mae_xyz = sum.map(|s| s / denom);
    let summary = PressSummary {
        site: controller.chain().sites()[site].name.clone(),
        axis: profile.axis.into_inner().into(),
        magnitude: profile.magnitude,
        ticks,
        faults: out.records.iter().filter(|r| r.fault.is_some()).count(),
        mae: mae_xyz.iter().sum::<f64>() / 3.0,
        mae_xyz,
        max_error,
        peak_true_force: peak,
    };
    Ok(ScenarioRun {
        site,
        records: out.records,
        truth: out.truth,
        telemetry: out.telemetry,
        summary: ScenarioSummary::Press(summary),
        latency: out.latency,
    })
}
