//! CSV forms of telemetry, traces and timed compliance commands.
//!
//! Every file starts with a `# complyctl <kind> v1` line followed by a header
//! row. Numbers are written in shortest round-trip form.
//!
//! Telemetry columns: `t`, `q0..`, `qdot0..`, then either `pwm0..` or
//! `cur0..`, then optional ground-truth wrench columns
//! `f_true_<site>_{fx,fy,fz,tx,ty,tz}`.
//!
//! Command columns: `t,site,px,py,pz,rx,ry,rz,vx,vy,vz,wx,wy,wz,kp0..kp5,kd0..kd5,fx,fy,fz,tx,ty,tz,mass`
//! with diagonal gains; empty `kd` cells mean critical damping.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DVector, Matrix6, Vector3, Vector6};

use crate::admittance::{critical_damping, ComplianceCommand};
use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::scalar::{lit, to_f64, Real};
use crate::wrench::Wrench;

use super::{DriveSignal, Telemetry, TimedCommand, TraceRecord, TraceSink};

pub const FORMAT_VERSION: u32 = 1;
const WRENCH_SUFFIXES: [&str; 6] = ["fx", "fy", "fz", "tx", "ty", "tz"];
const POSE_SUFFIXES: [&str; 6] = ["px", "py", "pz", "rx", "ry", "rz"];

pub fn fmt<T: Real>(v: T) -> String {
    format!("{}", to_f64(v))
}

fn magic(kind: &str) -> String {
    format!("# complyctl {kind} v{FORMAT_VERSION}")
}

fn check_magic(text: &str, kind: &str) -> Result<()> {
    let first = text.lines().next().unwrap_or("").trim();
    if first.starts_with("# complyctl") && first != magic(kind) {
        return Err(Error::Record { line: 1, message: format!("expected `{}`, found `{first}`", magic(kind)) });
    }
    Ok(())
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Record { line, message: e.to_string() }
}

fn parse_cell<T: Real>(record: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    let raw = record.get(idx).unwrap_or("");
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::Record { line, message: format!("column `{name}`: cannot parse `{raw}` as a number") })?;
    Ok(lit(v))
}

struct Columns {
    index: HashMap<String, usize>,
    used: Vec<bool>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, h) in headers.iter().enumerate() {
            if index.insert(h.to_string(), i).is_some() {
                return Err(Error::Record { line: 2, message: format!("duplicate column `{h}`") });
            }
        }
        Ok(Self { index, used: vec![false; headers.len()] })
    }

    fn take(&mut self, name: &str) -> Option<usize> {
        let i = *self.index.get(name)?;
        self.used[i] = true;
        Some(i)
    }

    fn require(&mut self, name: &str) -> Result<usize> {
        self.take(name).ok_or_else(|| Error::Record { line: 2, message: format!("missing column `{name}`") })
    }

    fn unused(&self) -> Vec<&str> {
        let mut names: Vec<(&usize, &String)> = self.index.iter().map(|(k, v)| (v, k)).collect();
        names.sort();
        names.into_iter().filter(|(i, _)| !self.used[**i]).map(|(_, n)| n.as_str()).collect()
    }
}

/// Ground-truth wrench series for one site carried alongside telemetry.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthSeries<T: Real> {
    pub site: String,
    pub wrenches: Vec<Wrench<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TelemetryLog<T: Real> {
    pub samples: Vec<Telemetry<T>>,
    pub truth: Vec<TruthSeries<T>>,
}

pub fn read_telemetry<T: Real, R: Read>(mut input: R, dof: usize) -> Result<TelemetryLog<T>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    check_magic(&text, "telemetry")?;
    let mut rdr = reader(&text);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut cols = Columns::new(&headers)?;
    let t_col = cols.require("t")?;
    let q_cols = (0..dof).map(|i| cols.require(&format!("q{i}"))).collect::<Result<Vec<_>>>()?;
    let qd_cols = (0..dof).map(|i| cols.require(&format!("qdot{i}"))).collect::<Result<Vec<_>>>()?;
    let (pwm, drive_cols) = if cols.index.contains_key("pwm0") {
        (true, (0..dof).map(|i| cols.require(&format!("pwm{i}"))).collect::<Result<Vec<_>>>()?)
    } else if cols.index.contains_key("cur0") {
        (false, (0..dof).map(|i| cols.require(&format!("cur{i}"))).collect::<Result<Vec<_>>>()?)
    } else {
        return Err(Error::Record { line: 2, message: "missing drive columns `pwm0..` or `cur0..`".into() });
    };

    let mut truth_sites: Vec<String> = Vec::new();
    for name in headers.iter() {
        if let Some(rest) = name.strip_prefix("f_true_") {
            if let Some(site) = WRENCH_SUFFIXES.iter().find_map(|s| rest.strip_suffix(&format!("_{s}"))) {
                if !truth_sites.iter().any(|s| s == site) {
                    truth_sites.push(site.to_string());
                }
            }
        }
    }
    let truth_cols: Vec<[Option<usize>; 6]> =
        truth_sites.iter().map(|site| WRENCH_SUFFIXES.map(|s| cols.take(&format!("f_true_{site}_{s}")))).collect();
    let unused = cols.unused();
    if !unused.is_empty() {
        return Err(Error::Record { line: 2, message: format!("unknown columns: {}", unused.join(", ")) });
    }

    let mut samples = Vec::new();
    let mut truth: Vec<TruthSeries<T>> =
        truth_sites.iter().map(|s| TruthSeries { site: s.clone(), wrenches: Vec::new() }).collect();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let vec_of = |idx: &[usize], prefix: &str| -> Result<DVector<T>> {
            let v = idx
                .iter()
                .enumerate()
                .map(|(i, c)| parse_cell(&rec, *c, &format!("{prefix}{i}")))
                .collect::<Result<Vec<T>>>()?;
            Ok(DVector::from_vec(v))
        };
        let t = parse_cell(&rec, t_col, "t")?;
        let q = vec_of(&q_cols, "q")?;
        let qdot = vec_of(&qd_cols, "qdot")?;
        let drive = if pwm {
            DriveSignal::Pwm(vec_of(&drive_cols, "pwm")?)
        } else {
            DriveSignal::Current(vec_of(&drive_cols, "cur")?)
        };
        if let Some(prev) = samples.last().map(|s: &Telemetry<T>| s.t) {
            if t < prev {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                return Err(Error::Record { line, message: "timestamps must be non-decreasing".into() });
            }
        }
        samples.push(Telemetry { t, q, qdot, drive });
        for (series, idx) in truth.iter_mut().zip(&truth_cols) {
            let mut w = Vector6::zeros();
            for k in 0..6 {
                if let Some(c) = idx[k] {
                    w[k] = parse_cell(&rec, c, WRENCH_SUFFIXES[k])?;
                }
            }
            series.wrenches.push(Wrench::from_vector(&w));
        }
    }
    Ok(TelemetryLog { samples, truth })
}

pub fn load_telemetry<T: Real>(path: impl AsRef<Path>, dof: usize) -> Result<TelemetryLog<T>> {
    read_telemetry(std::fs::File::open(path)?, dof)
}

pub struct TelemetryWriter<W: Write> {
    wtr: csv::Writer<W>,
    dof: usize,
    pwm: bool,
    truth_sites: usize,
}

impl<W: Write> TelemetryWriter<W> {
    pub fn new(mut out: W, dof: usize, pwm: bool, truth_sites: &[String]) -> Result<Self> {
        writeln!(out, "{}", magic("telemetry"))?;
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..dof).map(|i| format!("q{i}")));
        header.extend((0..dof).map(|i| format!("qdot{i}")));
        let p = if pwm { "pwm" } else { "cur" };
        header.extend((0..dof).map(|i| format!("{p}{i}")));
        for site in truth_sites {
            header.extend(WRENCH_SUFFIXES.iter().map(|s| format!("f_true_{site}_{s}")));
        }
        wtr.write_record(&header).map_err(csv_err)?;
        Ok(Self { wtr, dof, pwm, truth_sites: truth_sites.len() })
    }

    pub fn write<T: Real>(&mut self, sample: &Telemetry<T>, truth: &[Wrench<T>]) -> Result<()> {
        let ok = sample.q.len() == self.dof
            && sample.qdot.len() == self.dof
            && sample.drive.values().len() == self.dof
            && matches!(sample.drive, DriveSignal::Pwm(_)) == self.pwm
            && truth.len() == self.truth_sites;
        if !ok {
            return Err(Error::validation("telemetry writer", "sample does not match the header"));
        }
        let mut row = vec![fmt(sample.t)];
        row.extend(sample.q.iter().map(|v| fmt(*v)));
        row.extend(sample.qdot.iter().map(|v| fmt(*v)));
        row.extend(sample.drive.values().iter().map(|v| fmt(*v)));
        for w in truth {
            row.extend(w.as_vector().iter().map(|v| fmt(*v)));
        }
        self.wtr.write_record(&row).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<W> {
        self.wtr.flush()?;
        self.wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Trace file: `t,fault,q*,qt*`, then per site `<site>_xref_*`,
/// `<site>_xdes_*`, `<site>_fext_*`, `<site>_fcmd_*`, `<site>_cond`, then any
/// extra columns. Sites not commanded in a tick leave their cells empty.
pub struct TraceWriter<W: Write> {
    wtr: csv::Writer<W>,
    dof: usize,
    sites: Vec<usize>,
    extras: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, dof: usize, sites: &[(usize, String)], extras: &[String]) -> Result<Self> {
        writeln!(out, "{}", magic("trace"))?;
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "fault".to_string()];
        header.extend((0..dof).map(|i| format!("q{i}")));
        header.extend((0..dof).map(|i| format!("qt{i}")));
        for (_, name) in sites {
            for group in ["xref", "xdes"] {
                header.extend(POSE_SUFFIXES.iter().map(|s| format!("{name}_{group}_{s}")));
            }
            for group in ["fext", "fcmd"] {
                header.extend(WRENCH_SUFFIXES.iter().map(|s| format!("{name}_{group}_{s}")));
            }
            header.push(format!("{name}_cond"));
        }
        header.extend(extras.iter().cloned());
        wtr.write_record(&header).map_err(csv_err)?;
        Ok(Self { wtr, dof, sites: sites.iter().map(|(i, _)| *i).collect(), extras: extras.len() })
    }

    pub fn write<T: Real>(&mut self, record: &TraceRecord<T>, extras: &[f64]) -> Result<()> {
        if record.q.len() != self.dof || record.q_target.len() != self.dof {
            return Err(Error::dims("trace record", self.dof, record.q.len()));
        }
        let mut row = vec![fmt(record.t), if record.fault.is_some() { "1" } else { "0" }.to_string()];
        row.extend(record.q.iter().map(|v| fmt(*v)));
        row.extend(record.q_target.iter().map(|v| fmt(*v)));
        for site in &self.sites {
            match record.sites.iter().find(|s| s.site == *site) {
                Some(s) => {
                    row.extend(s.x_ref.as_vector().iter().map(|v| fmt(*v)));
                    row.extend(s.x_des.as_vector().iter().map(|v| fmt(*v)));
                    row.extend(s.f_ext.as_vector().iter().map(|v| fmt(*v)));
                    row.extend(s.f_cmd.as_vector().iter().map(|v| fmt(*v)));
                    row.push(fmt(s.gram_condition));
                }
                None => row.extend(std::iter::repeat_n(String::new(), 25)),
            }
        }
        for i in 0..self.extras {
            row.push(extras.get(i).map(|v| format!("{v}")).unwrap_or_default());
        }
        self.wtr.write_record(&row).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<W> {
        self.wtr.flush()?;
        self.wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

impl<T: Real, W: Write> TraceSink<T> for TraceWriter<W> {
    fn record(&mut self, record: &TraceRecord<T>) -> Result<()> {
        self.write(record, &[])
    }
}

const COMMAND_COLUMNS: usize = 1 + 1 + 6 + 6 + 6 + 6 + 6 + 1;

fn command_header() -> Vec<String> {
    let mut h = vec!["t".to_string(), "site".to_string()];
    h.extend(POSE_SUFFIXES.iter().map(|s| s.to_string()));
    h.extend(["vx", "vy", "vz", "wx", "wy", "wz"].iter().map(|s| s.to_string()));
    h.extend((0..6).map(|i| format!("kp{i}")));
    h.extend((0..6).map(|i| format!("kd{i}")));
    h.extend(WRENCH_SUFFIXES.iter().map(|s| s.to_string()));
    h.push("mass".into());
    h
}

/// Reads timed commands; site names are resolved against `chain`.
pub fn read_commands<T: Real, R: Read>(mut input: R, chain: &ChainModel<T>) -> Result<Vec<TimedCommand<T>>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    check_magic(&text, "commands")?;
    let mut rdr = reader(&text);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let expected = command_header();
    if headers.iter().ne(expected.iter().map(|s| s.as_str())) {
        return Err(Error::Record { line: 2, message: format!("expected header `{}`", expected.join(",")) });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| parse_cell::<T>(&rec, i, &expected[i]);
        let six = |start: usize| -> Result<Vector6<T>> {
            let mut v = Vector6::zeros();
            for k in 0..6 {
                v[k] = num(start + k)?;
            }
            Ok(v)
        };
        let site_name = rec.get(1).unwrap_or("");
        let site = chain
            .site_index(site_name)
            .ok_or_else(|| Error::Record { line, message: format!("unknown site `{site_name}`") })?;
        let x = six(2)?;
        let kp = Matrix6::from_diagonal(&six(14)?);
        let kd = if (20..26).all(|i| rec.get(i).unwrap_or("").is_empty()) {
            critical_damping(&kp)?
        } else {
            Matrix6::from_diagonal(&six(20)?)
        };
        let command = ComplianceCommand {
            x_des: Pose::new(Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5])),
            xdot_des: six(8)?,
            kp,
            kd,
            f_cmd: Wrench::from_vector(&six(26)?),
            mass: num(32)?,
        };
        command.validate().map_err(|e| Error::Record { line, message: e.to_string() })?;
        out.push(TimedCommand { t: num(0)?, site, command });
    }
    Ok(out)
}

/// Writes timed commands. Only the diagonals of the gain matrices are kept.
pub fn write_commands<T: Real, W: Write>(mut out: W, chain: &ChainModel<T>, commands: &[TimedCommand<T>]) -> Result<W> {
    writeln!(out, "{}", magic("commands"))?;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(command_header()).map_err(csv_err)?;
    for c in commands {
        let name = chain
            .sites()
            .get(c.site)
            .map(|s| s.name.clone())
            .ok_or_else(|| Error::validation("command", format!("site {} out of range", c.site)))?;
        let mut row = Vec::with_capacity(COMMAND_COLUMNS);
        row.push(fmt(c.t));
        row.push(name);
        row.extend(c.command.x_des.as_vector().iter().map(|v| fmt(*v)));
        row.extend(c.command.xdot_des.iter().map(|v| fmt(*v)));
        row.extend(c.command.kp.diagonal().iter().map(|v| fmt(*v)));
        row.extend(c.command.kd.diagonal().iter().map(|v| fmt(*v)));
        row.extend(c.command.f_cmd.as_vector().iter().map(|v| fmt(*v)));
        row.push(fmt(c.command.mass));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush()?;
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}
