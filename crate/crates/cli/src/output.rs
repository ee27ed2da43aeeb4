use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use evmt_core::{fdp_power, RejectionSet};
use serde_json::{json, Map, Value};

use crate::CliError;

/// One output row per hypothesis; `weight_bc` only for hybrid runs.
pub struct RejectionTable<'a> {
    pub rejected: &'a RejectionSet,
    pub evalues: &'a [f64],
    pub weights: &'a [f64],
    pub weights_bc: Option<&'a [f64]>,
}

fn open(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(
            File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        ),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("write failed: {e}"))
}

impl RejectionTable<'_> {
    pub fn write(&self, out: Option<&Path>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(open(out)?);
        let mut header = vec!["index", "rejected", "evalue", "weight"];
        if self.weights_bc.is_some() {
            header.push("weight_bc");
        }
        w.write_record(&header).map_err(io_err)?;
        for i in 0..self.evalues.len() {
            let mut rec = vec![
                (i + 1).to_string(),
                u8::from(self.rejected.contains(i)).to_string(),
                self.evalues[i].to_string(),
                self.weights[i].to_string(),
            ];
            if let Some(b) = self.weights_bc {
                rec.push(b[i].to_string());
            }
            w.write_record(&rec).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// Adds FDP and power when the input carried a truth column.
pub fn add_metrics(summary: &mut Map<String, Value>, rejected: &RejectionSet, truth: Option<&[bool]>) -> Result<(), CliError> {
    if let Some(t) = truth {
        let (fdp, power) = fdp_power(rejected, t).map_err(crate::core_err)?;
        summary.insert("fdp".into(), json!(fdp));
        summary.insert("power".into(), json!(power));
    }
    Ok(())
}

/// The summary goes to stdout when the table went to a file and to stderr
/// when the table occupies stdout.
pub fn emit_summary(summary: &Value, table_on_stdout: bool) {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    if table_on_stdout {
        eprintln!("{text}");
    } else {
        println!("{text}");
    }
}
