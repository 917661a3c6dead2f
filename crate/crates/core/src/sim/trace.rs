//! Per-control-period trace records and their CSV form.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! parsed file reproduces the in-memory trace bit for bit.

use super::SimError;
use crate::dtc::TorqueStatus;
use crate::inverter::SwitchCode;
use std::io::{BufRead, Write};

/// Drive stage at the time of the record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Align = 0,
    Ramp = 1,
    Closed = 2,
}

impl Stage {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Stage::Align),
            1 => Some(Stage::Ramp),
            2 => Some(Stage::Closed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub i_a: f64,
    pub i_b: f64,
    pub i_c: f64,
    pub omega_r: f64,
    pub theta_e: f64,
    pub te: f64,
    pub tl: f64,
    pub e_d_hat: f64,
    pub e_q_hat: f64,
    pub omega_hat: f64,
    pub theta_e_hat: f64,
    pub te_hat: f64,
    pub tl_hat: f64,
    pub b_hat: f64,
    pub j_hat: f64,
    pub t_ref: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub code: SwitchCode,
    /// Sector index 1..=6.
    pub sector: u8,
    pub t_st: TorqueStatus,
    /// Speed reference, rad/s.
    pub omega_ref: f64,
    /// True stationary-frame back-EMFs.
    pub e_d: f64,
    pub e_q: f64,
    pub stage: Stage,
}

impl Default for TraceRecord {
    fn default() -> Self {
        Self {
            t: 0.0,
            i_a: 0.0,
            i_b: 0.0,
            i_c: 0.0,
            omega_r: 0.0,
            theta_e: 0.0,
            te: 0.0,
            tl: 0.0,
            e_d_hat: 0.0,
            e_q_hat: 0.0,
            omega_hat: 0.0,
            theta_e_hat: 0.0,
            te_hat: 0.0,
            tl_hat: 0.0,
            b_hat: 0.0,
            j_hat: 0.0,
            t_ref: 0.0,
            theta1: 0.0,
            theta2: 0.0,
            code: SwitchCode::ALL_OFF,
            sector: 1,
            t_st: TorqueStatus::Ti,
            omega_ref: 0.0,
            e_d: 0.0,
            e_q: 0.0,
            stage: Stage::Closed,
        }
    }
}

pub const COLUMNS: [&str; 26] = [
    "t",
    "i_a",
    "i_b",
    "i_c",
    "omega_r",
    "theta_e",
    "te",
    "tl",
    "e_d_hat",
    "e_q_hat",
    "omega_hat",
    "theta_e_hat",
    "te_hat",
    "tl_hat",
    "b_hat",
    "j_hat",
    "t_ref",
    "theta1",
    "theta2",
    "code",
    "sector",
    "t_st",
    "omega_ref",
    "e_d",
    "e_q",
    "stage",
];

impl TraceRecord {
    fn floats(&self) -> [f64; 19] {
        [
            self.t,
            self.i_a,
            self.i_b,
            self.i_c,
            self.omega_r,
            self.theta_e,
            self.te,
            self.tl,
            self.e_d_hat,
            self.e_q_hat,
            self.omega_hat,
            self.theta_e_hat,
            self.te_hat,
            self.tl_hat,
            self.b_hat,
            self.j_hat,
            self.t_ref,
            self.theta1,
            self.theta2,
        ]
    }

    /// Name of the first non-finite field, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        let tail = [self.omega_ref, self.e_d, self.e_q];
        self.floats()
            .iter()
            .chain(tail.iter())
            .zip(COLUMNS.iter().take(19).chain(COLUMNS[22..25].iter()))
            .find(|(v, _)| !v.is_finite())
            .map(|(_, n)| *n)
    }

    pub fn to_csv_line(&self) -> String {
        let mut out = String::with_capacity(400);
        for v in self.floats() {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            self.code,
            self.sector,
            self.t_st.as_i8(),
            self.omega_ref,
            self.e_d,
            self.e_q,
            self.stage as u8
        ));
        out
    }

    pub fn parse_csv_line(line: &str, line_no: usize) -> Result<Self, SimError> {
        let err = |msg: String| SimError::Format { line: line_no, msg };
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != COLUMNS.len() {
            return Err(err(format!(
                "expected {} fields, found {}",
                COLUMNS.len(),
                fields.len()
            )));
        }
        let f = |k: usize| -> Result<f64, SimError> {
            fields[k].parse::<f64>().map_err(|_| {
                err(format!(
                    "column {}: cannot parse {:?} as a number",
                    COLUMNS[k], fields[k]
                ))
            })
        };
        let code = SwitchCode::parse(fields[19]).map_err(|e| err(format!("column code: {e}")))?;
        let sector = fields[20]
            .parse::<u8>()
            .ok()
            .filter(|s| (1..=6).contains(s))
            .ok_or_else(|| err(format!("column sector: invalid value {:?}", fields[20])))?;
        let t_st = fields[21]
            .parse::<i8>()
            .ok()
            .and_then(TorqueStatus::from_i8)
            .ok_or_else(|| err(format!("column t_st: invalid value {:?}", fields[21])))?;
        let stage = fields[25]
            .parse::<u8>()
            .ok()
            .and_then(Stage::from_u8)
            .ok_or_else(|| err(format!("column stage: invalid value {:?}", fields[25])))?;
        Ok(Self {
            t: f(0)?,
            i_a: f(1)?,
            i_b: f(2)?,
            i_c: f(3)?,
            omega_r: f(4)?,
            theta_e: f(5)?,
            te: f(6)?,
            tl: f(7)?,
            e_d_hat: f(8)?,
            e_q_hat: f(9)?,
            omega_hat: f(10)?,
            theta_e_hat: f(11)?,
            te_hat: f(12)?,
            tl_hat: f(13)?,
            b_hat: f(14)?,
            j_hat: f(15)?,
            t_ref: f(16)?,
            theta1: f(17)?,
            theta2: f(18)?,
            code,
            sector,
            t_st,
            omega_ref: f(22)?,
            e_d: f(23)?,
            e_q: f(24)?,
            stage,
        })
    }
}

pub fn header() -> String {
    COLUMNS.join(",")
}

pub fn write_csv<W: Write>(mut w: W, trace: &[TraceRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", header())?;
    for r in trace {
        writeln!(w, "{}", r.to_csv_line())?;
    }
    w.flush()
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<TraceRecord>, SimError> {
    let mut lines = r.lines();
    match lines.next() {
        Some(h) => {
            let h = h?;
            if h.trim_end() != header() {
                return Err(SimError::Format {
                    line: 1,
                    msg: "header does not match the trace column layout".into(),
                });
            }
        }
        None => {
            return Err(SimError::Format {
                line: 1,
                msg: "empty file".into(),
            });
        }
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(TraceRecord::parse_csv_line(&line, k + 2)?);
    }
    Ok(out)
}
