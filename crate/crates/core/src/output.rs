//! Trajectory CSV and number formatting.
//!
//! CSV columns, fixed: `t`, then for each bird `i = 1..=k` the six columns
//! `x{i}.1 x{i}.2 x{i}.3 v{i}.1 v{i}.2 v{i}.3`, then `sup_v`, `sup_x`.
//! Reals are written with 17 significant digits so they round-trip exactly.

use std::io::{self, Write};

use crate::state::FlockState;

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trajectory_header(k: usize) -> String {
    let mut cols = vec!["t".to_string()];
    for i in 1..=k {
        for q in ["x", "v"] {
            for c in 1..=3 {
                cols.push(format!("{q}{i}.{c}"));
            }
        }
    }
    cols.push("sup_v".into());
    cols.push("sup_x".into());
    cols.join(",")
}

pub fn trajectory_row(state: &FlockState) -> String {
    let mut row = state.t().to_string();
    for (x, v) in state.positions().iter().zip(state.velocities()) {
        for c in x.0.iter().chain(v.0.iter()) {
            row.push(',');
            row.push_str(&fmt_f64(*c));
        }
    }
    row.push(',');
    row.push_str(&fmt_f64(state.sup_velocity()));
    row.push(',');
    row.push_str(&fmt_f64(state.sup_position()));
    row
}

/// Streaming CSV writer for a trajectory.
pub struct TrajectoryCsv<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryCsv<W> {
    pub fn new(mut out: W, k: usize) -> io::Result<Self> {
        writeln!(out, "{}", trajectory_header(k))?;
        Ok(TrajectoryCsv { out })
    }

    pub fn write(&mut self, state: &FlockState) -> io::Result<()> {
        writeln!(self.out, "{}", trajectory_row(state))
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Serde adapter for reals that may be infinite: finite values are plain
/// JSON numbers, the others the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected a number or inf, got {other:?}"))),
            },
        }
    }
}
