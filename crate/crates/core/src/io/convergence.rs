//! Per-iteration convergence histories and their CSV form.
//!
//! ```text
//! k,est_residual,true_residual,transfer_defined,elapsed_s
//! 0,1.7e0,1.7e0,false,0e0
//! ...
//! # terminal: tolerance reached
//! ```
//!
//! Missing values are empty fields.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["k", "est_residual", "true_residual", "transfer_defined", "elapsed_s"];

const TERMINAL_PREFIX: &str = "# terminal: ";

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRow {
    pub k: usize,
    pub est_residual: Option<f64>,
    pub true_residual: Option<f64>,
    /// Whether the Galerkin-type iterate exists at this step.
    pub transfer_defined: bool,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ConvergenceRecord {
    pub method: String,
    pub rows: Vec<IterationRow>,
    pub terminal: Option<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number `{s}`"),
    })
}

impl ConvergenceRecord {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            rows: Vec::new(),
            terminal: None,
        }
    }

    /// Last estimated (or else true) residual.
    pub fn final_residual(&self) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find_map(|r| r.est_residual.or(r.true_residual))
    }

    /// Checks the record invariants: strictly increasing `k`, residuals ≥ 0.
    pub fn validate(&self) -> Result<()> {
        for w in self.rows.windows(2) {
            if w[1].k <= w[0].k {
                return Err(Error::InvalidArgument(format!(
                    "iteration numbers not increasing at k = {}",
                    w[1].k
                )));
            }
        }
        for r in &self.rows {
            for v in [r.est_residual, r.true_residual].into_iter().flatten() {
                if !(v >= 0.0) {
                    return Err(Error::InvalidArgument(format!("negative residual at k = {}", r.k)));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                fmt_opt(r.est_residual),
                fmt_opt(r.true_residual),
                r.transfer_defined.to_string(),
                format!("{:e}", r.elapsed_s),
            ])?;
        }
        let mut out = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        if let Some(t) = &self.terminal {
            writeln!(out, "{TERMINAL_PREFIX}{}", t.replace('\n', " "))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, method: impl Into<String>) -> Result<Self> {
        let mut rec = Self::new(method);
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(t) = line.strip_prefix(TERMINAL_PREFIX) {
                rec.terminal = Some(t.to_string());
            } else if !line.starts_with('#') {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut rd = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {header:?}"),
            });
        }
        for (i, row) in rd.records().enumerate() {
            let row = row?;
            let line = i + 2;
            if row.len() != CSV_HEADER.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields", CSV_HEADER.len()),
                });
            }
            let bad = |what: &str| Error::Parse {
                line,
                msg: format!("invalid {what}"),
            };
            rec.rows.push(IterationRow {
                k: row[0].parse().map_err(|_| bad("k"))?,
                est_residual: parse_opt(&row[1], line)?,
                true_residual: parse_opt(&row[2], line)?,
                transfer_defined: row[3].parse().map_err(|_| bad("flag"))?,
                elapsed_s: row[4].parse().map_err(|_| bad("time"))?,
            });
        }
        Ok(rec)
    }
}

pub fn write_convergence_csv(record: &ConvergenceRecord, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    record.write_csv(f)
}

pub fn read_convergence_csv(path: impl AsRef<Path>) -> Result<ConvergenceRecord> {
    let path = path.as_ref();
    let method = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ConvergenceRecord::read_csv(BufReader::new(File::open(path)?), method)
}

/// One row per iteration, two columns per method (`<method>_est`,
/// `<method>_true`); methods that stopped earlier leave empty cells.
pub fn write_merged_csv<W: Write>(records: &[ConvergenceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    for r in records {
        header.push(format!("{}_est", r.method));
        header.push(format!("{}_true", r.method));
    }
    w.write_record(&header)?;
    let kmax = records
        .iter()
        .filter_map(|r| r.rows.last().map(|x| x.k))
        .max();
    if let Some(kmax) = kmax {
        let mut cursors = vec![0usize; records.len()];
        for k in 0..=kmax {
            let mut row = vec![k.to_string()];
            for (r, c) in records.iter().zip(cursors.iter_mut()) {
                match r.rows.get(*c) {
                    Some(it) if it.k == k => {
                        row.push(fmt_opt(it.est_residual));
                        row.push(fmt_opt(it.true_residual));
                        *c += 1;
                    }
                    _ => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_merged_csv_file(records: &[ConvergenceRecord], path: impl AsRef<Path>) -> Result<()> {
    write_merged_csv(records, File::create(path)?)
}
