//! Flat text persistence for impact datasets.
//!
//! ```text
//! # scenario_hash=<hex>
//! # rho=<1/m>
//! # n_exp=<count>
//! # arm_count=<1|2>
//! <key_1> [<key_2>] <vx> <vy> <omega>
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use super::rbf::{ImpactDataset, ImpactSample};
use crate::geometry::Twist2;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing header field `{0}`")]
    MissingHeader(&'static str),
    #[error("header declares {declared} samples but {found} rows follow")]
    Count { declared: usize, found: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub scenario_hash: String,
    pub rho: f64,
    pub n_exp: usize,
    pub arm_count: usize,
}

pub fn write_dataset(d: &ImpactDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# scenario_hash={}", d.scenario_hash);
    let _ = writeln!(out, "# rho={}", d.rho);
    let _ = writeln!(out, "# n_exp={}", d.len());
    let _ = writeln!(out, "# arm_count={}", d.arm_count);
    for s in &d.samples {
        let cols: Vec<String> = s
            .key
            .iter()
            .chain([s.v_o_plus.vx, s.v_o_plus.vy, s.v_o_plus.omega].iter())
            .map(|x| format!("{x}"))
            .collect();
        let _ = writeln!(out, "{}", cols.join(" "));
    }
    out
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

fn parse_float(tok: &str, line: usize) -> Result<f64, ParseError> {
    let x: f64 = tok.parse().map_err(|_| syntax(line, format!("not a number: {tok:?}")))?;
    if !x.is_finite() {
        return Err(syntax(line, "non-finite value"));
    }
    Ok(x)
}

/// Parses the text format; weights are not built.
pub fn parse_dataset(text: &str) -> Result<ImpactDataset, ParseError> {
    let mut hash = None;
    let mut rho = None;
    let mut n_exp = None;
    let mut arm_count = None;
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(h) = body.strip_prefix('#') {
            let Some((k, v)) = h.trim().split_once('=') else {
                continue;
            };
            let v = v.trim();
            match k.trim() {
                "scenario_hash" => hash = Some(v.to_string()),
                "rho" => rho = Some(parse_float(v, line)?),
                "n_exp" => n_exp = Some(v.parse::<usize>().map_err(|_| syntax(line, "bad n_exp"))?),
                "arm_count" => {
                    let a = v.parse::<usize>().map_err(|_| syntax(line, "bad arm_count"))?;
                    if !(1..=2).contains(&a) {
                        return Err(syntax(line, "arm_count must be 1 or 2"));
                    }
                    arm_count = Some(a);
                }
                _ => {}
            }
            continue;
        }
        let arms = arm_count.ok_or(ParseError::MissingHeader("arm_count"))?;
        let vals = body
            .split_whitespace()
            .map(|t| parse_float(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != arms + 3 {
            return Err(syntax(line, format!("expected {} columns, found {}", arms + 3, vals.len())));
        }
        samples.push(ImpactSample {
            key: vals[..arms].to_vec(),
            v_o_plus: Twist2::new(vals[arms], vals[arms + 1], vals[arms + 2]),
        });
    }
    let header = DatasetHeader {
        scenario_hash: hash.ok_or(ParseError::MissingHeader("scenario_hash"))?,
        rho: rho.ok_or(ParseError::MissingHeader("rho"))?,
        n_exp: n_exp.ok_or(ParseError::MissingHeader("n_exp"))?,
        arm_count: arm_count.ok_or(ParseError::MissingHeader("arm_count"))?,
    };
    if header.n_exp != samples.len() {
        return Err(ParseError::Count {
            declared: header.n_exp,
            found: samples.len(),
        });
    }
    ImpactDataset::new(samples, header.arm_count, Some(header.rho), header.scenario_hash)
        .map_err(|e| ParseError::Invalid(e.to_string()))
}
