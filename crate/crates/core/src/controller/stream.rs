//! Fixed-rate loop over a telemetry stream with zero-order hold.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::admittance::ComplianceCommand;
use crate::error::Result;
use crate::scalar::{lit, to_f64, Real};

use super::{Controller, SiteCommand, Telemetry, TraceRecord};

/// A command that takes effect at `t` and stays latched until replaced.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedCommand<T: Real> {
    pub t: T,
    pub site: usize,
    pub command: ComplianceCommand<T>,
}

/// Receives one record per tick.
pub trait TraceSink<T: Real> {
    fn record(&mut self, record: &TraceRecord<T>) -> Result<()>;
}

impl<T: Real> TraceSink<T> for Vec<TraceRecord<T>> {
    fn record(&mut self, record: &TraceRecord<T>) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatencyStats {
    pub p50_us: f64,
    pub p90_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &mut [f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_by(f64::total_cmp);
        let pick = |p: f64| samples[((samples.len() - 1) as f64 * p).round() as usize];
        Self { p50_us: pick(0.5), p90_us: pick(0.9), p99_us: pick(0.99), max_us: samples[samples.len() - 1] }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamSummary {
    pub ticks: usize,
    pub faults: usize,
    pub stale_ticks: usize,
    pub latency: LatencyStats,
}

impl<T: Real> Controller<T> {
    /// Ticks at `t0 + k·dt` for as long as telemetry lasts, using the newest
    /// sample not later than each tick. Samples older than `stale_ticks·dt`
    /// fault the tick. Commands are applied from their timestamp on; sites in
    /// the configuration start with their default command.
    pub fn run_stream<I, C, S>(&self, telemetry: I, commands: C, sink: &mut S) -> Result<StreamSummary>
    where
        I: IntoIterator<Item = Telemetry<T>>,
        C: IntoIterator<Item = TimedCommand<T>>,
        S: TraceSink<T> + ?Sized,
    {
        let mut tel = telemetry.into_iter().peekable();
        let mut cmds = commands.into_iter().peekable();
        let Some(mut latest) = tel.next() else {
            return Ok(StreamSummary::default());
        };
        let mut state = self.init_state(&latest.q)?;
        let mut latched: BTreeMap<usize, ComplianceCommand<T>> =
            self.default_commands(&state.q_target)?.into_iter().map(|c| (c.site, c.command)).collect();

        let dt = self.config.dt;
        let eps = dt * lit(1e-6);
        let stale_after = dt * self.config.stale_ticks;
        let t0 = latest.t;
        let mut summary = StreamSummary::default();
        let mut latencies = Vec::new();
        for k in 0usize.. {
            let tk = t0 + dt * lit(k as f64);
            while let Some(next) = tel.peek() {
                if next.t <= tk + eps {
                    latest = tel.next().unwrap();
                } else {
                    break;
                }
            }
            if tel.peek().is_none() && tk > latest.t + eps {
                break;
            }
            while let Some(c) = cmds.peek() {
                if c.t <= tk + eps {
                    let c = cmds.next().unwrap();
                    latched.insert(c.site, c.command);
                } else {
                    break;
                }
            }
            let record = if tk - latest.t > stale_after + eps {
                summary.stale_ticks += 1;
                let mut held = latest.clone();
                held.t = tk;
                self.fault_record(&state, &held, format!("telemetry stale by {} s", to_f64(tk - latest.t)))
            } else {
                let active: Vec<SiteCommand<T>> = latched
                    .iter()
                    .map(|(site, command)| SiteCommand { site: *site, command: command.clone() })
                    .collect();
                let start = Instant::now();
                let r = self.run_step(&mut state, &latest, &active);
                latencies.push(start.elapsed().as_secs_f64() * 1e6);
                r
            };
            summary.ticks += 1;
            if record.fault.is_some() {
                summary.faults += 1;
            }
            sink.record(&record)?;
        }
        summary.latency = LatencyStats::from_samples(&mut latencies);
        Ok(summary)
    }
}
