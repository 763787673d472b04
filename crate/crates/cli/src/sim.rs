use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use complyctl_core::controller::io::{TelemetryWriter, TraceWriter};
use complyctl_core::Config;
use complyctl_sim::{Scenario, ScenarioRun, ScenarioSummary};
use serde::Serialize;

use crate::svg::{line_plot, Series};
use crate::VariantArg;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Scenario file (TOML)
    scenario: PathBuf,
    /// RNG seed; defaults to the scenario's
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "complyctl-out")]
    out: PathBuf,
    /// Also write force and trajectory SVG plots
    #[arg(long)]
    plot: bool,
    /// Controller variant override
    #[arg(long, value_enum)]
    controller: Option<VariantArg>,
    /// Chain file override
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Controller configuration override (replaces the scenario's [controller])
    #[arg(long)]
    config: Option<PathBuf>,
}

/// What was run, written next to the outputs.
#[derive(Serialize)]
struct RunManifest {
    subcommand: &'static str,
    scenario: PathBuf,
    chain: PathBuf,
    config: Option<PathBuf>,
    seed: u64,
    controller: Option<String>,
    out: PathBuf,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    scenario: String,
    seed: u64,
    #[serde(flatten)]
    summary: &'a ScenarioSummary,
}

#[derive(Serialize)]
struct Timing {
    ticks: usize,
    p50_us: f64,
    p90_us: f64,
    p99_us: f64,
    max_us: f64,
}

pub fn run(args: Args) -> Result<()> {
    let text =
        std::fs::read_to_string(&args.scenario).with_context(|| format!("reading {}", args.scenario.display()))?;
    let mut file = Scenario::parse(&text, &args.scenario)?;
    if let Some(chain) = &args.chain {
        file.chain = std::path::absolute(chain)?;
    }
    let base = args.scenario.parent().unwrap_or(Path::new("."));
    let mut scenario =
        Scenario::from_file(file, base).with_context(|| format!("loading {}", args.scenario.display()))?;
    if let Some(cfg) = &args.config {
        scenario.config =
            Config::load(cfg, &scenario.chain).with_context(|| format!("loading config {}", cfg.display()))?;
    }
    let seed = args.seed.unwrap_or(scenario.file.seed);
    let run = scenario.run(Some(seed), args.controller.map(Into::into))?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_outputs(&scenario, &run, &args.out)?;

    let name = args.scenario.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let summary = serde_json::to_string_pretty(&SummaryFile { scenario: name, seed, summary: &run.summary })? + "\n";
    std::fs::write(args.out.join("summary.json"), &summary)?;
    let timing = Timing {
        ticks: run.records.len(),
        p50_us: run.latency.p50_us,
        p90_us: run.latency.p90_us,
        p99_us: run.latency.p99_us,
        max_us: run.latency.max_us,
    };
    std::fs::write(args.out.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
    let manifest = RunManifest {
        subcommand: "sim",
        scenario: args.scenario.clone(),
        chain: scenario.file.chain.clone(),
        config: args.config.clone(),
        seed,
        controller: args.controller.map(|c| format!("{c:?}").to_lowercase()),
        out: args.out.clone(),
    };
    std::fs::write(args.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    if args.plot {
        write_plots(&scenario, &run, &args.out)?;
    }

    print!("{summary}");
    if let ScenarioSummary::Draw(d) = &run.summary {
        if d.contact_loss {
            println!("FAILURE: contact lost on {:.0}% of drawing ticks", 100.0 * d.contact_loss_fraction);
        }
    }
    println!(
        "run_step latency us: p50 {:.1} p90 {:.1} p99 {:.1} max {:.1}",
        timing.p50_us, timing.p90_us, timing.p99_us, timing.max_us
    );
    Ok(())
}

fn write_outputs(scenario: &Scenario, run: &ScenarioRun, out: &Path) -> Result<()> {
    let chain = &scenario.chain;
    let site_name = chain.sites()[run.site].name.clone();
    let traced: Vec<(usize, String)> = {
        let mut v: Vec<usize> = run.records.iter().flat_map(|r| r.sites.iter().map(|s| s.site)).collect();
        v.sort_unstable();
        v.dedup();
        v.into_iter().map(|i| (i, chain.sites()[i].name.clone())).collect()
    };
    let extras: Vec<String> =
        ["fx", "fy", "fz", "tx", "ty", "tz"].iter().map(|c| format!("f_true_{site_name}_{c}")).collect();
    let f = std::fs::File::create(out.join("trace.csv"))?;
    let mut trace = TraceWriter::new(std::io::BufWriter::new(f), chain.dof(), &traced, &extras)?;
    for (rec, truth) in run.records.iter().zip(&run.truth) {
        trace.write(rec, truth.as_vector().as_slice())?;
    }
    trace.finish()?;

    let f = std::fs::File::create(out.join("telemetry.csv"))?;
    let pwm = matches!(run.telemetry.first().map(|t| &t.drive), Some(complyctl_core::DriveSignal::Pwm(_)));
    let mut tel = TelemetryWriter::new(std::io::BufWriter::new(f), chain.dof(), pwm, &[site_name])?;
    for (sample, truth) in run.telemetry.iter().zip(&run.truth) {
        tel.write(sample, std::slice::from_ref(truth))?;
    }
    tel.finish()?;
    Ok(())
}

fn write_plots(scenario: &Scenario, run: &ScenarioRun, out: &Path) -> Result<()> {
    const COLORS: [&str; 3] = ["#d62728", "#2ca02c", "#1f77b4"];
    let mut series = Vec::new();
    for (c, axis) in ["x", "y", "z"].iter().enumerate() {
        let est = run
            .records
            .iter()
            .map(|r| {
                let f = r.sites.iter().find(|s| s.site == run.site).map(|s| s.f_ext.force[c]).unwrap_or(f64::NAN);
                (r.t, f)
            })
            .collect();
        let truth = run.records.iter().zip(&run.truth).map(|(r, w)| (r.t, w.force[c])).collect();
        series.push(Series { label: format!("estimated f{axis}"), color: COLORS[c], dashed: false, points: est });
        series.push(Series { label: format!("true f{axis}"), color: COLORS[c], dashed: true, points: truth });
    }
    std::fs::write(
        out.join("force.svg"),
        line_plot("Estimated vs true contact force", "t (s)", "force (N)", &series, false),
    )?;

    let chain = &scenario.chain;
    let mut actual = Vec::with_capacity(run.telemetry.len());
    for tel in &run.telemetry {
        let p = chain.site_pose(&tel.q, run.site)?.position;
        actual.push((p.x, p.y));
    }
    let desired = run
        .records
        .iter()
        .filter_map(|r| r.sites.iter().find(|s| s.site == run.site))
        .map(|s| (s.x_des.position.x, s.x_des.position.y))
        .collect();
    let traj = vec![
        Series { label: "desired".into(), color: "#7f7f7f", dashed: true, points: desired },
        Series { label: "tool".into(), color: "#1f77b4", dashed: false, points: actual },
    ];
    std::fs::write(out.join("trajectory.svg"), line_plot("Tool trajectory (top view)", "x (m)", "y (m)", &traj, true))?;
    Ok(())
}
