//! Per-episode step records and their tab-separated text form.
//!
//! A log file holds any number of episodes. Each episode is a header line,
//! one line per control step and an end line:
//!
//! ```text
//! H  seed  horizon  control_dt
//! S  time  cmd_vx  cmd_vy  cmd_wz  vx  vy  wz  foot0  foot1  foot2  foot3
//! E  termination  duration
//! ```
//!
//! Each foot field is `stance:attached:force_active:reason`, with flags as
//! `0`/`1` and the reason as an adhesion gate code. Lines starting with `#`
//! are comments. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::adhesion::AttachReason;
use crate::error::{Error, Result};
use crate::model::NUM_LEGS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Termination {
    None,
    Fell,
    Frozen,
    NonFinite,
}

impl Termination {
    pub fn code(self) -> &'static str {
        match self {
            Termination::None => "none",
            Termination::Fell => "fell",
            Termination::Frozen => "frozen",
            Termination::NonFinite => "non_finite",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        [Termination::None, Termination::Fell, Termination::Frozen, Termination::NonFinite]
            .into_iter()
            .find(|t| t.code() == s)
    }

    pub fn is_early(self) -> bool {
        self != Termination::None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootRecord {
    pub stance: bool,
    pub attached: bool,
    pub force_active: bool,
    pub reason: AttachReason,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub command: [f64; 3],
    /// `(v_x, v_y, omega_z)` in the base frame.
    pub measured: [f64; 3],
    pub feet: [FootRecord; NUM_LEGS],
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub seed: u64,
    pub horizon: f64,
    pub control_dt: f64,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub duration: f64,
}

impl EpisodeLog {
    pub fn new(seed: u64, horizon: f64, control_dt: f64) -> Self {
        Self {
            seed,
            horizon,
            control_dt,
            steps: Vec::new(),
            termination: Termination::None,
            duration: 0.0,
        }
    }
}

fn flag(b: bool) -> char {
    if b {
        '1'
    } else {
        '0'
    }
}

pub fn write_logs<W: Write>(mut w: W, logs: &[EpisodeLog], header: &[String]) -> Result<()> {
    let mut buf = String::new();
    for line in header {
        writeln!(buf, "# {line}").unwrap();
    }
    for log in logs {
        writeln!(buf, "H\t{}\t{}\t{}", log.seed, log.horizon, log.control_dt).unwrap();
        for s in &log.steps {
            write!(buf, "S\t{}", s.time).unwrap();
            for v in s.command.iter().chain(&s.measured) {
                write!(buf, "\t{v}").unwrap();
            }
            for f in &s.feet {
                write!(
                    buf,
                    "\t{}:{}:{}:{}",
                    flag(f.stance),
                    flag(f.attached),
                    flag(f.force_active),
                    f.reason.code()
                )
                .unwrap();
            }
            buf.push('\n');
        }
        writeln!(buf, "E\t{}\t{}", log.termination.code(), log.duration).unwrap();
        w.write_all(buf.as_bytes())?;
        buf.clear();
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

fn parse_f64(field: &str, index: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::CorruptLog {
        index,
        reason: format!("bad number `{field}`"),
    })
}

fn parse_flag(c: &str, index: usize) -> Result<bool> {
    match c {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::CorruptLog {
            index,
            reason: format!("bad flag `{c}`"),
        }),
    }
}

fn parse_foot(field: &str, index: usize) -> Result<FootRecord> {
    let parts: Vec<&str> = field.split(':').collect();
    if parts.len() != 4 {
        return Err(Error::CorruptLog {
            index,
            reason: format!("bad foot field `{field}`"),
        });
    }
    Ok(FootRecord {
        stance: parse_flag(parts[0], index)?,
        attached: parse_flag(parts[1], index)?,
        force_active: parse_flag(parts[2], index)?,
        reason: AttachReason::from_code(parts[3]).ok_or_else(|| Error::CorruptLog {
            index,
            reason: format!("unknown gate reason `{}`", parts[3]),
        })?,
    })
}

/// Parses every episode in the stream. `index` in errors is the 1-based line
/// number.
pub fn read_logs<R: BufRead>(r: R) -> Result<Vec<EpisodeLog>> {
    let mut logs = Vec::new();
    let mut current: Option<EpisodeLog> = None;
    for (n, line) in r.lines().enumerate() {
        let index = n + 1;
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let corrupt = |reason: &str| Error::CorruptLog {
            index,
            reason: reason.to_string(),
        };
        match fields[0] {
            "H" => {
                if current.is_some() {
                    return Err(corrupt("header inside an unterminated episode"));
                }
                if fields.len() != 4 {
                    return Err(corrupt("header needs 3 fields"));
                }
                let seed = fields[1].parse().map_err(|_| corrupt("bad seed"))?;
                current = Some(EpisodeLog::new(
                    seed,
                    parse_f64(fields[2], index)?,
                    parse_f64(fields[3], index)?,
                ));
            }
            "S" => {
                let log = current.as_mut().ok_or_else(|| corrupt("step outside an episode"))?;
                if fields.len() != 12 {
                    return Err(corrupt("step needs 11 fields"));
                }
                let nums: Vec<f64> = fields[1..8]
                    .iter()
                    .map(|f| parse_f64(f, index))
                    .collect::<Result<_>>()?;
                let mut feet = [FootRecord {
                    stance: false,
                    attached: false,
                    force_active: false,
                    reason: AttachReason::Ok,
                }; NUM_LEGS];
                for (i, foot) in feet.iter_mut().enumerate() {
                    *foot = parse_foot(fields[8 + i], index)?;
                }
                if log.steps.last().is_some_and(|s| s.time >= nums[0]) {
                    return Err(corrupt("timestamps must increase"));
                }
                log.steps.push(StepRecord {
                    time: nums[0],
                    command: [nums[1], nums[2], nums[3]],
                    measured: [nums[4], nums[5], nums[6]],
                    feet,
                });
            }
            "E" => {
                let mut log = current.take().ok_or_else(|| corrupt("end outside an episode"))?;
                if fields.len() != 3 {
                    return Err(corrupt("end needs 2 fields"));
                }
                log.termination = Termination::from_code(fields[1]).ok_or_else(|| corrupt("unknown termination"))?;
                log.duration = parse_f64(fields[2], index)?;
                logs.push(log);
            }
            other => return Err(corrupt(&format!("unknown record type `{other}`"))),
        }
    }
    if current.is_some() {
        return Err(Error::CorruptLog {
            index: 0,
            reason: "stream ended inside an episode".into(),
        });
    }
    Ok(logs)
}
