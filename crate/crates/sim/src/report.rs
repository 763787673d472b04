//! Closed-loop driver shared by the scripts, and run summaries.

use std::time::Instant;

use complyctl_core::admittance::critical_damping;
use complyctl_core::controller::{LatencyStats, DEFAULT_STIFFNESS};
use complyctl_core::{Command, Ctl, Record, Result, Sample, SiteCommand, Wrench64};
use nalgebra::{DVector, Matrix6, Vector6};
use serde::Serialize;

use crate::world::SimWorld;

/// Everything a scripted run produced.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    /// Site whose true wrench is recorded in `truth`.
    pub site: usize,
    pub records: Vec<Record>,
    pub truth: Vec<Wrench64>,
    pub telemetry: Vec<Sample>,
    pub summary: ScenarioSummary,
    /// Wall-clock run_step latency; not deterministic, kept out of the summary.
    pub latency: LatencyStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioSummary {
    Press(PressSummary),
    Draw(DrawSummary),
    Hybrid(HybridSummary),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PressSummary {
    pub site: String,
    pub axis: [f64; 3],
    pub magnitude: f64,
    pub ticks: usize,
    pub faults: usize,
    /// Mean absolute force error over time and the three components (N).
    pub mae: f64,
    pub mae_xyz: [f64; 3],
    pub max_error: f64,
    pub peak_true_force: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DrawSummary {
    pub site: String,
    pub variant: String,
    pub ticks: usize,
    pub faults: usize,
    pub draw_ticks: usize,
    pub commanded_force: f64,
    pub mean_normal_force: f64,
    pub peak_normal_force: f64,
    /// Mean |f_n − f_cmd| over the drawing phase (N).
    pub normal_force_error: f64,
    pub contact_loss_fraction: f64,
    pub contact_loss: bool,
    /// In-plane distance between the tool and the desired path (m).
    pub tracking_rms: f64,
    pub tracking_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HybridSummary {
    pub site: String,
    pub ticks: usize,
    pub faults: usize,
    pub tracking_rms: f64,
    pub tracking_max: f64,
    pub mean_force: [f64; 3],
    pub final_position: [f64; 3],
}

/// Fraction of drawing ticks without contact above which contact counts as lost.
pub const CONTACT_LOSS_FRACTION: f64 = 0.2;

pub(crate) struct LoopOutput {
    pub records: Vec<Record>,
    pub truth: Vec<Wrench64>,
    pub telemetry: Vec<Sample>,
    pub latency: LatencyStats,
}

/// Ticks the controller against the world. `script` runs before each tick
/// and returns that tick's commands; it may also change scripted loads for
/// the coming period. Truth is sampled together with the telemetry.
pub(crate) fn closed_loop<F>(
    world: &mut SimWorld,
    controller: &Ctl,
    site: usize,
    ticks: usize,
    mut script: F,
) -> Result<LoopOutput>
where
    F: FnMut(&mut SimWorld, usize, &DVector<f64>) -> Result<Vec<SiteCommand<f64>>>,
{
    let dt = controller.config().dt;
    let mut tel = world.observe()?;
    let mut state = controller.init_state(&tel.q)?;
    let mut out = LoopOutput {
        records: Vec::with_capacity(ticks),
        truth: Vec::with_capacity(ticks),
        telemetry: Vec::with_capacity(ticks),
        latency: LatencyStats::default(),
    };
    let mut lat = Vec::with_capacity(ticks);
    for k in 0..ticks {
        out.truth.push(world.true_wrench(site)?);
        let cmds = script(world, k, &state.q_target)?;
        let start = Instant::now();
        let rec = controller.run_step(&mut state, &tel, &cmds);
        lat.push(start.elapsed().as_secs_f64() * 1e6);
        let next = world.sim_step(&rec.q_target, dt)?;
        out.records.push(rec);
        out.telemetry.push(std::mem::replace(&mut tel, next));
    }
    out.latency = LatencyStats::from_samples(&mut lat);
    Ok(out)
}

/// Command holding the site at its pose for `q`, from the configuration when
/// the site has an entry there.
pub(crate) fn hold_command(controller: &Ctl, q: &DVector<f64>, site: usize) -> Result<Command> {
    if let Some(c) = controller.default_commands(q)?.into_iter().find(|c| c.site == site) {
        return Ok(c.command);
    }
    let pose = controller.chain().site_pose(q, site)?;
    let kp = Matrix6::from_diagonal(&Vector6::from(DEFAULT_STIFFNESS));
    Ok(Command {
        x_des: pose,
        xdot_des: Vector6::zeros(),
        kd: critical_damping(&kp)?,
        kp,
        f_cmd: Wrench64::zero(),
        mass: 1.0,
    })
}

pub(crate) fn ticks_for(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize + 1
}
