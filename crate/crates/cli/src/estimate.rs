use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use complyctl_core::controller::io::{fmt, load_telemetry};
use complyctl_core::wrench::estimate;
use complyctl_core::{Chain, Config, Ctl, TorqueEstimatorState, Wrench64};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Telemetry CSV
    telemetry: PathBuf,
    /// Chain description (TOML)
    #[arg(long)]
    chain: PathBuf,
    /// Controller configuration (TOML); estimator settings and sites are used
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output wrench CSV (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn load_controller(chain: &PathBuf, config: Option<&PathBuf>) -> Result<Ctl> {
    let chain = Chain::load(chain).with_context(|| format!("loading chain {}", chain.display()))?;
    let config = match config {
        Some(p) => Config::load(p, &chain).with_context(|| format!("loading config {}", p.display()))?,
        None => Config::new(0.012),
    };
    Ok(Ctl::new(chain, config)?)
}

pub fn run(args: Args) -> Result<()> {
    let ctl = load_controller(&args.chain, args.config.as_ref())?;
    let chain = ctl.chain();
    let log = load_telemetry::<f64>(&args.telemetry, chain.dof())
        .with_context(|| format!("reading telemetry {}", args.telemetry.display()))?;
    let sites: Vec<usize> = if ctl.config().sites.is_empty() {
        (0..chain.sites().len()).collect()
    } else {
        ctl.config().sites.iter().map(|s| s.site).collect()
    };

    let out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "# complyctl wrench v1")?;
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for &s in &sites {
        let name = &chain.sites()[s].name;
        header.extend(["fx", "fy", "fz", "tx", "ty", "tz"].iter().map(|c| format!("{name}_{c}")));
        header.push(format!("{name}_cond"));
    }
    wtr.write_record(&header)?;

    let mut state = TorqueEstimatorState::new(chain.dof(), ctl.config().ema_alpha)?;
    let mut estimates: Vec<Vec<Wrench64>> = vec![Vec::with_capacity(log.samples.len()); sites.len()];
    for tel in &log.samples {
        let raw = ctl.external_torques(&mut state, tel).with_context(|| format!("sample at t = {}", tel.t))?;
        let tau = state.ema_step(&raw)?;
        let frames = chain.joint_frames(&tel.q)?;
        let mut row = vec![fmt(tel.t)];
        for (k, &s) in sites.iter().enumerate() {
            let (jp, jr) = chain.jacobian_from_frames(&frames, s);
            let est = estimate(&ctl.config().estimator, &jp, &jr, &tau)
                .with_context(|| format!("sample at t = {}", tel.t))?;
            row.extend(est.wrench.as_vector().iter().map(|v| fmt(*v)));
            row.push(fmt(est.gram_condition));
            estimates[k].push(est.wrench);
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;

    eprintln!("{} samples, {} sites", log.samples.len(), sites.len());
    for series in &log.truth {
        let Some(k) = sites.iter().position(|&s| chain.sites()[s].name == series.site) else {
            continue;
        };
        let mut sum = 0.0;
        for (est, truth) in estimates[k].iter().zip(&series.wrenches) {
            sum += (est.force - truth.force).abs().sum();
        }
        let mae = sum / (3.0 * series.wrenches.len().max(1) as f64);
        eprintln!("mae[{}] = {mae} N", series.site);
    }
    Ok(())
}
