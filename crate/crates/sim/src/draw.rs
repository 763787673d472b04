//! Drawing on a surface: approach, press in, then follow a planar path while
//! commanding a normal force.

use std::f64::consts::TAU;

use complyctl_core::admittance::{block_diag, critical_damping, stiffness_from_normal};
use complyctl_core::{Command, ControllerVariant, Ctl, Error, Pose64, Result, SiteCommand, Wrench64};
use nalgebra::{Matrix3, Unit, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::report::{closed_loop, ticks_for, DrawSummary, ScenarioRun, ScenarioSummary, CONTACT_LOSS_FRACTION};
use crate::world::SimWorld;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Heart,
    Line,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrawPlan {
    pub site: usize,
    pub shape: Shape,
    pub center: Vector3<f64>,
    pub normal: Unit<Vector3<f64>>,
    pub heading: Unit<Vector3<f64>>,
    pub size: f64,
    pub lift: f64,
    pub speed: f64,
    pub force: f64,
    pub k_normal: f64,
    pub k_tangential: f64,
    pub k_rotation: f64,
    pub mass: f64,
    pub approach: f64,
    pub press_in: f64,
}

/// Polyline parameterized by arc length.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    points: Vec<Vector3<f64>>,
    cumulative: Vec<f64>,
}

impl Path {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        Self { points, cumulative }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// Point and unit tangent at arc length `s`, clamped to the ends.
    pub fn at(&self, s: f64) -> (Vector3<f64>, Vector3<f64>) {
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let seg = self.points[i + 1] - self.points[i];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        if len <= 0.0 {
            return (self.points[i], Vector3::zeros());
        }
        let frac = (s - self.cumulative[i]) / len;
        (self.points[i] + seg * frac, seg / len)
    }
}

impl DrawPlan {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("size", self.size),
            ("speed", self.speed),
            ("k_normal", self.k_normal),
            ("k_tangential", self.k_tangential),
            ("k_rotation", self.k_rotation),
            ("mass", self.mass),
        ];
        for (what, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::OutOfRange { what, value: v });
            }
        }
        for (what, v) in [("force", self.force), ("approach", self.approach), ("press_in", self.press_in)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::OutOfRange { what, value: v });
            }
        }
        if self.heading.cross(&self.normal).norm() < 1e-6 {
            return Err(Error::validation("draw plan", "heading must not be parallel to the normal"));
        }
        Ok(())
    }

    /// Orthonormal in-plane axes.
    pub fn plane_axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.normal.into_inner();
        let h = self.heading.into_inner();
        let u = (h - n * h.dot(&n)).normalize();
        (u, n.cross(&u))
    }

    /// Waypoints on the believed plane (`lift` above `center`).
    pub fn path(&self) -> Path {
        let (u, v) = self.plane_axes();
        let origin = self.center + self.normal.into_inner() * self.lift;
        let pts: Vec<(f64, f64)> = match self.shape {
            Shape::Line => vec![(-0.5 * self.size, 0.0), (0.5 * self.size, 0.0)],
            Shape::Heart => (0..=200)
                .map(|i| {
                    let s = TAU * i as f64 / 200.0;
                    let x = 16.0 * s.sin().powi(3);
                    let y = 13.0 * s.cos() - 5.0 * (2.0 * s).cos() - 2.0 * (3.0 * s).cos() - (4.0 * s).cos();
                    (x * self.size / 32.0, y * self.size / 32.0)
                })
                .collect(),
        };
        Path::new(pts.into_iter().map(|(x, y)| origin + u * x + v * y).collect())
    }

    pub fn stiffness(&self) -> Result<nalgebra::Matrix6<f64>> {
        let lin = stiffness_from_normal(&self.normal.into_inner(), self.k_normal, self.k_tangential)?;
        Ok(block_diag(&lin, &(Matrix3::identity() * self.k_rotation)))
    }

    pub fn draw_start(&self) -> f64 {
        self.approach + self.press_in
    }

    pub fn duration(&self) -> f64 {
        self.draw_start() + self.path().length() / self.speed
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

pub fn scenario_draw(world: &mut SimWorld, controller: &Ctl, plan: &DrawPlan) -> Result<ScenarioRun> {
    plan.validate()?;
    let dt = controller.config().dt;
    let path = plan.path();
    let length = path.length();
    let t_draw = plan.draw_start();
    let ticks = ticks_for(plan.duration(), dt);
    let start = world.chain().site_pose(world.q(), plan.site)?;
    let n = plan.normal.into_inner();
    let kp = plan.stiffness()?;
    let kd = critical_damping(&kp)?;
    let (first, _) = path.at(0.0);
    let site = plan.site;

    let desired = |t: f64| -> (Vector3<f64>, Vector3<f64>, f64) {
        if t < plan.approach {
            let a = smoothstep(t / plan.approach);
            (start.position + (first - start.position) * a, Vector3::zeros(), 0.0)
        } else if t < t_draw {
            (first, Vector3::zeros(), plan.force * (t - plan.approach) / plan.press_in)
        } else {
            let s = plan.speed * (t - t_draw);
            let (p, tangent) = path.at(s);
            let v = if s < length { tangent * plan.speed } else { Vector3::zeros() };
            (p, v, plan.force)
        }
    };

    let out = closed_loop(world, controller, site, ticks, |_, k, _| {
        let (p, v, f) = desired(k as f64 * dt);
        let command = Command {
            x_des: Pose64::new(p, start.orientation),
            xdot_des: Vector6::new(v.x, v.y, v.z, 0.0, 0.0, 0.0),
            kp,
            kd,
            f_cmd: Wrench64::from_force(-n * f),
            mass: plan.mass,
        };
        Ok(vec![SiteCommand { site, command }])
    })?;

    let mut draw_ticks = 0usize;
    let (mut fn_sum, mut fn_peak, mut err_sum, mut lost) = (0.0, 0.0f64, 0.0, 0usize);
    let (mut track_sq, mut track_max) = (0.0, 0.0f64);
    for (tel, truth) in out.telemetry.iter().zip(&out.truth) {
        if tel.t < t_draw - 1e-9 {
            continue;
        }
        draw_ticks += 1;
        let f_n = truth.force.dot(&n);
        fn_sum += f_n;
        fn_peak = fn_peak.max(f_n);
        err_sum += (f_n - plan.force).abs();
        if f_n <= 0.0 {
            lost += 1;
        }
        let (p, _, _) = desired(tel.t);
        let tip = world.chain().site_pose(&tel.q, site)?.position;
        let d = tip - p;
        let e = (d - n * d.dot(&n)).norm();
        track_sq += e * e;
        track_max = track_max.max(e);
    }
    let m = draw_ticks.max(1) as f64;
    let variant = match controller.config().variant {
        ControllerVariant::Full => "full",
        ControllerVariant::NoFext => "no-fext",
        ControllerVariant::Position => "position",
    };
    let loss = lost as f64 / m;
    let summary = DrawSummary {
        site: controller.chain().sites()[site].name.clone(),
        variant: variant.to_string(),
        ticks,
        faults: out.records.iter().filter(|r| r.fault.is_some()).count(),
        draw_ticks,
        commanded_force: plan.force,
        mean_normal_force: fn_sum / m,
        peak_normal_force: fn_peak,
        normal_force_error: err_sum / m,
        contact_loss_fraction: loss,
        contact_loss: loss > CONTACT_LOSS_FRACTION,
        tracking_rms: (track_sq / m).sqrt(),
        tracking_max: track_max,
    };
    Ok(ScenarioRun {
        site,
        records: out.records,
        truth: out.truth,
        telemetry: out.telemetry,
        summary: ScenarioSummary::Draw(summary),
        latency: out.latency,
    })
}
