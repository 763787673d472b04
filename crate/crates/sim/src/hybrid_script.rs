//! Scripted hybrid force-velocity command sequences.
//!
//! File format: CSV with header `t,vx,vy,vz,k_low,k_high,fx,fy,fz`; lines
//! starting with `#` are ignored. Each row takes effect at `t` and holds
//! until the next one.

use std::path::Path;

use complyctl_core::hybrid::{integrate_velocity, make_compliance_command};
use complyctl_core::{Ctl, Error, HybridCommand, Result, SiteCommand, Wrench64};
use nalgebra::{Matrix3, Vector3};

use crate::report::{closed_loop, ticks_for, HybridSummary, ScenarioRun, ScenarioSummary};
use crate::world::SimWorld;

pub const HYBRID_HEADER: [&str; 9] = ["t", "vx", "vy", "vz", "k_low", "k_high", "fx", "fy", "fz"];

#[derive(Clone, Debug, PartialEq)]
pub struct HybridPlan {
    pub site: usize,
    pub commands: Vec<(f64, HybridCommand<f64>)>,
    pub k_rotation: f64,
    pub duration: Option<f64>,
}

pub fn parse_hybrid_commands(text: &str) -> Result<Vec<(f64, HybridCommand<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let rec_err =
        |e: csv::Error| Error::Record { line: e.position().map(|p| p.line()).unwrap_or(0), message: e.to_string() };
    let headers = rdr.headers().map_err(rec_err)?.clone();
    if headers.iter().ne(HYBRID_HEADER) {
        return Err(Error::Record { line: 1, message: format!("expected header `{}`", HYBRID_HEADER.join(",")) });
    }
    let mut out: Vec<(f64, HybridCommand<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(rec_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut v = [0.0; 9];
        for (i, cell) in rec.iter().enumerate() {
            v[i] = cell.parse().map_err(|_| Error::Record {
                line,
                message: format!("column `{}`: cannot parse `{cell}` as a number", HYBRID_HEADER[i]),
            })?;
        }
        let cmd = HybridCommand {
            velocity: Vector3::new(v[1], v[2], v[3]),
            k_low: v[4],
            k_high: v[5],
            f_offset: Wrench64::from_force(Vector3::new(v[6], v[7], v[8])),
        };
        cmd.validate().map_err(|e| Error::Record { line, message: e.to_string() })?;
        if out.last().is_some_and(|(t, _)| v[0] < *t) {
            return Err(Error::Record { line, message: "timestamps must be non-decreasing".into() });
        }
        out.push((v[0], cmd));
    }
    if out.is_empty() {
        return Err(Error::Record { line: 1, message: "no commands".into() });
    }
    Ok(out)
}

pub fn load_hybrid_commands(path: &Path) -> Result<Vec<(f64, HybridCommand<f64>)>> {
    parse_hybrid_commands(&Error::read(path)?)
}

/// Integrates the commanded velocity into the desired pose from the site's
/// starting pose and runs the resulting compliance commands.
pub fn scenario_hybrid(world: &mut SimWorld, controller: &Ctl, plan: &HybridPlan) -> Result<ScenarioRun> {
    let dt = controller.config().dt;
    let last_t = plan.commands.last().map(|c| c.0).unwrap_or(0.0);
    let duration = plan.duration.unwrap_or(last_t + 1.0);
    let ticks = ticks_for(duration, dt);
    let site = plan.site;
    let rot = Matrix3::identity() * plan.k_rotation;
    let mut x_des = world.chain().site_pose(world.q(), site)?;
    let mut desired = Vec::with_capacity(ticks);
    let mut next = 0usize;
    let mut active: Option<HybridCommand<f64>> = None;
    let out = closed_loop(world, controller, site, ticks, |_, k, _| {
        let t = k as f64 * dt;
        while next < plan.commands.len() && plan.commands[next].0 <= t + 1e-9 {
            active = Some(plan.commands[next].1);
            next += 1;
        }
        let Some(cmd) = active else {
            desired.push(x_des.position);
            return Ok(Vec::new());
        };
        if k > 0 {
            x_des = integrate_velocity(&x_des, &cmd.velocity, dt)?;
        }
        desired.push(x_des.position);
        Ok(vec![SiteCommand { site, command: make_compliance_command(&cmd, x_des, &rot)? }])
    })?;

    let mut sq = 0.0;
    let mut max: f64 = 0.0;
    let mut force = Vector3::zeros();
    for ((tel, truth), des) in out.telemetry.iter().zip(&out.truth).zip(&desired) {
        let e = (world.chain().site_pose(&tel.q, site)?.position - des).norm();
        sq += e * e;
        max = max.max(e);
        force += truth.force;
    }
    let m = ticks.max(1) as f64;
    let final_position = out
        .telemetry
        .last()
        .map(|t| world.chain().site_pose(&t.q, site).map(|p| p.position))
        .transpose()?
        .unwrap_or_default();
    let summary = HybridSummary {
        site: controller.chain().sites()[site].name.clone(),
        ticks,
        faults: out.records.iter().filter(|r| r.fault.is_some()).count(),
        tracking_rms: (sq / m).sqrt(),
        tracking_max: max,
        mean_force: (force / m).into(),
        final_position: final_position.into(),
    };
    Ok(ScenarioRun {
        site,
        records: out.records,
        truth: out.truth,
        telemetry: out.telemetry,
        summary: ScenarioSummary::Hybrid(summary),
        latency: out.latency,
    })
}
