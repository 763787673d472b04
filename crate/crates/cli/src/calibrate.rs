use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use complyctl_core::motor::{calibrate_kt_eta, calibrate_kt_with_eta, calibrate_kv, calibrate_rw};
use complyctl_core::Error;

pub const SWEEP_HEADER: [&str; 5] = ["t", "pwm", "qdot", "current", "torque"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Kv,
    Rw,
    Kt,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Constant to fit
    #[arg(value_enum)]
    kind: Kind,
    /// Sweep CSV with header `t,pwm,qdot,current,torque`
    sweep: PathBuf,
    /// Bus voltage (V); needed for kv and rw
    #[arg(long)]
    vbus: Option<f64>,
    /// Velocity constant (rad/s per V, joint side); needed for rw
    #[arg(long)]
    kv: Option<f64>,
    /// Known efficiency; fits kt from forward-drive rows only
    #[arg(long)]
    eta: Option<f64>,
    /// Torque column is measured at the joint behind this gear ratio
    #[arg(long, default_value_t = 1.0)]
    gear_ratio: f64,
    /// Motor table name in the output fragment
    #[arg(long, default_value = "servo")]
    name: String,
    /// Output file for the motor parameter fragment (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One sweep row; cells left empty are `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub line: u64,
    pub pwm: Option<f64>,
    pub qdot: Option<f64>,
    pub current: Option<f64>,
    pub torque: Option<f64>,
}

pub fn read_sweep(text: &str) -> Result<Vec<SweepRow>, Error> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let to_err =
        |e: csv::Error| Error::Record { line: e.position().map(|p| p.line()).unwrap_or(0), message: e.to_string() };
    let headers = rdr.headers().map_err(to_err)?.clone();
    if headers.is_empty() {
        return Err(Error::Record { line: 1, message: "empty sweep file: missing header".into() });
    }
    if headers.iter().ne(SWEEP_HEADER) {
        return Err(Error::Record { line: 1, message: format!("expected header `{}`", SWEEP_HEADER.join(",")) });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(to_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut cells = [None; 5];
        for (i, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Record {
                line,
                message: format!("column `{}`: cannot parse `{cell}` as a number", SWEEP_HEADER[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Record { line, message: format!("column `{}` is not finite", SWEEP_HEADER[i]) });
            }
            cells[i] = Some(v);
        }
        rows.push(SweepRow { line, pwm: cells[1], qdot: cells[2], current: cells[3], torque: cells[4] });
    }
    if rows.is_empty() {
        return Err(Error::Record { line: 2, message: "sweep file has no samples".into() });
    }
    Ok(rows)
}

fn need(row: &SweepRow, value: Option<f64>, column: &str) -> Result<f64, Error> {
    value.ok_or_else(|| Error::Record { line: row.line, message: format!("column `{column}` is empty") })
}

pub fn run(args: Args) -> Result<()> {
    let text = std::fs::read_to_string(&args.sweep).with_context(|| format!("reading {}", args.sweep.display()))?;
    let rows = read_sweep(&text).with_context(|| args.sweep.display().to_string())?;
    let mut fragment = String::new();
    let mut report = String::new();
    match args.kind {
        Kind::Kv => {
            let Some(vbus) = args.vbus else { bail!("calibrate kv needs --vbus") };
            let data = rows
                .iter()
                .map(|r| Ok((need(r, r.pwm, "pwm")?, need(r, r.qdot, "qdot")?)))
                .collect::<Result<Vec<_>, Error>>()?;
            let fit = calibrate_kv(&data, vbus)?;
            writeln!(report, "kv = {} (rms residual {} rad/s, {} samples)", fit.kv, fit.rms_residual, fit.samples)?;
            writeln!(fragment, "# fitted kv: rms residual {} rad/s over {} samples", fit.rms_residual, fit.samples)?;
            writeln!(fragment, "[motors.{}]\nkv = {}\nvbus = {vbus}", args.name, fit.kv)?;
        }
        Kind::Rw => {
            let (Some(vbus), Some(kv)) = (args.vbus, args.kv) else { bail!("calibrate rw needs --vbus and --kv") };
            let data = rows
                .iter()
                .map(|r| Ok((need(r, r.pwm, "pwm")?, need(r, r.qdot, "qdot")?, need(r, r.current, "current")?)))
                .collect::<Result<Vec<_>, Error>>()?;
            let fit = calibrate_rw(&data, kv, vbus)?;
            writeln!(report, "rw = {} (rms residual {} V, {} samples)", fit.rw, fit.rms_residual, fit.samples)?;
            writeln!(fragment, "# fitted rw: rms residual {} V over {} samples", fit.rms_residual, fit.samples)?;
            writeln!(fragment, "[motors.{}]\nkv = {kv}\nrw = {}\nvbus = {vbus}", args.name, fit.rw)?;
        }
        Kind::Kt => {
            if !(args.gear_ratio > 0.0) {
                bail!("--gear-ratio must be positive");
            }
            let (mut fwd, mut bwd) = (Vec::new(), Vec::new());
            let mut skipped = 0usize;
            for r in &rows {
                let i = need(r, r.current, "current")?;
                let tau = need(r, r.torque, "torque")? / args.gear_ratio;
                let qdot = need(r, r.qdot, "qdot")?;
                let power = i * qdot;
                if power > 0.0 {
                    fwd.push((i, tau));
                } else if power < 0.0 {
                    bwd.push((i, tau));
                } else {
                    skipped += 1;
                }
            }
            if skipped > 0 {
                log::warn!("{skipped} rows with zero power flow were skipped");
            }
            let fit = match args.eta {
                Some(eta) => calibrate_kt_with_eta(&fwd, eta)?,
                None => calibrate_kt_eta(&fwd, &bwd)?,
            };
            writeln!(
                report,
                "kt = {} eta = {} (forward slope {}, rms {}; {} forward / {} backward rows)",
                fit.kt,
                fit.eta,
                fit.slope_forward,
                fit.rms_forward,
                fwd.len(),
                bwd.len()
            )?;
            if fit.eta_clamped {
                writeln!(report, "warning: fitted efficiency exceeded 1 and was clamped")?;
            }
            writeln!(fragment, "# fitted kt/eta: forward rms {} N*m", fit.rms_forward)?;
            if let Some(rb) = fit.rms_backward {
                writeln!(fragment, "# backward rms {rb} N*m")?;
            }
            writeln!(fragment, "[motors.{}]\nkt = {}\neta = {}", args.name, fit.kt, fit.eta)?;
        }
    }
    print!("{report}");
    match &args.out {
        Some(path) => std::fs::write(path, &fragment).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{fragment}"),
    }
    Ok(())
}
