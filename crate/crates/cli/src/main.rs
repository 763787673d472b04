// `!(x > 0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use complyctl_core::ControllerVariant;

mod calibrate;
mod estimate;
mod replay;
mod sim;
mod svg;

#[derive(Parser, Debug)]
#[command(
    name = "complyctl",
    version,
    about = "Sensorless compliance control: calibration, estimation replay and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit motor constants from a sweep CSV (`t,pwm,qdot,current,torque`)
    Calibrate(calibrate::Args),
    /// Replay telemetry through torque and wrench estimation
    Estimate(estimate::Args),
    /// Run a closed-loop simulation scenario
    Sim(sim::Args),
    /// Run the full controller over recorded telemetry at a fixed rate
    Replay(replay::Args),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Full,
    NoFext,
    Position,
    None,
}

impl From<VariantArg> for ControllerVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => ControllerVariant::Full,
            VariantArg::NoFext => ControllerVariant::NoFext,
            VariantArg::Position | VariantArg::None => ControllerVariant::Position,
        }
    }
}

/// Input problems exit with 1, numerically degenerate data with 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().filter_map(|e| e.downcast_ref::<complyctl_core::Error>()).any(|e| e.is_numerical());
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COMPLYCTL_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Calibrate(args) => calibrate::run(args),
        Command::Estimate(args) => estimate::run(args),
        Command::Sim(args) => sim::run(args),
        Command::Replay(args) => replay::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
