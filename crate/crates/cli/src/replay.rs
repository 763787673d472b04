use std::path::PathBuf;

use anyhow::{Context, Result};
use complyctl_core::controller::io::{load_telemetry, read_commands, TraceWriter};

use crate::estimate::load_controller;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Telemetry CSV
    telemetry: PathBuf,
    /// Chain description (TOML)
    #[arg(long)]
    chain: PathBuf,
    /// Controller configuration (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Timed compliance commands CSV
    #[arg(long)]
    commands: Option<PathBuf>,
    /// Output trace CSV
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let ctl = load_controller(&args.chain, args.config.as_ref())?;
    let chain = ctl.chain();
    let log = load_telemetry::<f64>(&args.telemetry, chain.dof())
        .with_context(|| format!("reading telemetry {}", args.telemetry.display()))?;
    let commands = match &args.commands {
        Some(p) => {
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_commands(f, chain).with_context(|| format!("reading commands {}", p.display()))?
        }
        None => Vec::new(),
    };
    let sites: Vec<(usize, String)> = chain.sites().iter().enumerate().map(|(i, s)| (i, s.name.clone())).collect();
    let file = std::fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut sink = TraceWriter::new(std::io::BufWriter::new(file), chain.dof(), &sites, &[])?;
    let summary = ctl.run_stream(log.samples, commands, &mut sink)?;
    sink.finish()?;
    println!("ticks = {}", summary.ticks);
    println!("faults = {}", summary.faults);
    println!("stale_ticks = {}", summary.stale_ticks);
    println!(
        "run_step latency us: p50 {:.1} p90 {:.1} p99 {:.1} max {:.1}",
        summary.latency.p50_us, summary.latency.p90_us, summary.latency.p99_us, summary.latency.max_us
    );
    Ok(())
}
