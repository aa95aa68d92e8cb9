//! Number formatting and the TSV tables written by the commands.

use std::fmt::Write as _;

use aemr::error::Error;
use aemr::fisher::{clamp_pvalues, fisher_combine};
use serde::Serialize;

/// `%g`-style formatting with six significant digits.
pub fn g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const TEST_HEADER: [&str; 7] = ["instrument", "beta0", "stat", "p", "p_corrected", "K", "seed"];

/// One row of the `test` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRow {
    pub instrument: String,
    pub beta0: f64,
    pub stat: f64,
    pub p: f64,
    pub p_corrected: f64,
    pub draws: usize,
    /// Absent for rows combined from a file.
    pub seed: Option<u64>,
}

impl TestRow {
    pub fn is_combined(&self) -> bool {
        self.instrument == "fisher" || self.instrument == "joint"
    }
}

pub fn write_test_table(rows: &[TestRow]) -> String {
    let mut out = TEST_HEADER.join("\t");
    out.push('\n');
    for r in rows {
        let seed = r.seed.map_or("NA".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{seed}",
            r.instrument,
            g6(r.beta0),
            g6(r.stat),
            g6(r.p),
            g6(r.p_corrected),
            r.draws,
        );
    }
    out
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: "<test table>".into(),
        line,
        message: message.into(),
    }
}

/// Reads a table written by [`write_test_table`].
pub fn read_test_table(text: &str) -> Result<Vec<TestRow>, Error> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.split('\t').eq(TEST_HEADER) => {}
        Some((i, _)) => return Err(parse_error(i + 1, format!("expected header {}", TEST_HEADER.join(" ")))),
        None => return Err(parse_error(1, "empty table")),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != TEST_HEADER.len() {
                return Err(parse_error(i + 1, format!("expected 7 fields, found {}", f.len())));
            }
            let num = |k: usize| {
                f[k].parse::<f64>()
                    .map_err(|_| parse_error(i + 1, format!("{}: not a number: {:?}", TEST_HEADER[k], f[k])))
            };
            Ok(TestRow {
                instrument: f[0].to_string(),
                beta0: num(1)?,
                stat: num(2)?,
                p: num(3)?,
                p_corrected: num(4)?,
                draws: f[5]
                    .parse()
                    .map_err(|_| parse_error(i + 1, format!("K: not a count: {:?}", f[5])))?,
                seed: match f[6] {
                    "NA" => None,
                    s => Some(s.parse().map_err(|_| parse_error(i + 1, format!("seed: {s:?}")))?),
                },
            })
        })
        .collect()
}

/// Fisher rows combining the single-instrument rows of each null value, in
/// order of first appearance.
pub fn fisher_rows(rows: &[TestRow], seed: Option<u64>) -> Result<Vec<TestRow>, Error> {
    let mut nulls: Vec<f64> = Vec::new();
    for r in rows.iter().filter(|r| !r.is_combined()) {
        if !nulls.contains(&r.beta0) {
            nulls.push(r.beta0);
        }
    }
    nulls
        .into_iter()
        .map(|beta0| {
            let group: Vec<&TestRow> = rows
                .iter()
                .filter(|r| !r.is_combined() && r.beta0 == beta0)
                .collect();
            let draws = group.iter().map(|r| r.draws).min().unwrap();
            let p: Vec<f64> = group.iter().map(|r| r.p).collect();
            let pc: Vec<f64> = group.iter().map(|r| r.p_corrected).collect();
            let plain = fisher_combine(&clamp_pvalues(&p, draws))?;
            let corrected = fisher_combine(&pc)?;
            Ok(TestRow {
                instrument: "fisher".into(),
                beta0,
                stat: plain.statistic,
                p: plain.p_value,
                p_corrected: corrected.p_value,
                draws,
                seed,
            })
        })
        .collect()
}
