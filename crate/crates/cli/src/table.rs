//! CSV input: header row required, comma separated, '.' decimals.

use std::collections::HashMap;
use std::path::Path;

use crate::CliError;

/// Columns with a fixed meaning; everything else is a covariate.
pub const RESERVED: [&str; 10] = [
    "index", "pvalue", "group", "truth", "evalue", "weight", "weight_bc", "rejected", "lfdr_pi",
    "lfdr_kappa",
];

pub struct InputTable {
    path: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    /// 1-based file line of each data row.
    lines: Vec<u64>,
}

impl InputTable {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let shown = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::Input(format!("{shown}: {e}")))?;
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::Input(format!("{shown}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut seen = HashMap::new();
        for (k, h) in headers.iter().enumerate() {
            if h.is_empty() {
                return Err(CliError::Input(format!("{shown}: column {} has an empty header", k + 1)));
            }
            if seen.insert(h.clone(), k).is_some() {
                return Err(CliError::Input(format!("{shown}: duplicate column '{h}'")));
            }
        }
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                CliError::Input(format!("{shown}:{line}: {e}"))
            })?;
            lines.push(rec.position().map(|p| p.line()).unwrap_or(0));
            rows.push(rec.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(CliError::Input(format!("{shown}: no data rows")));
        }
        Ok(Self {
            path: shown,
            headers,
            rows,
            lines,
        })
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    fn position(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("{}: missing required column '{name}'", self.path)))
    }

    fn fail(&self, row: usize, msg: String) -> CliError {
        CliError::Input(format!("{}:{}: {msg}", self.path, self.lines[row]))
    }

    pub fn strings(&self, name: &str) -> Result<Vec<String>, CliError> {
        let k = self.position(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let v = &row[k];
                if v.is_empty() {
                    Err(self.fail(r, format!("empty value in column '{name}'")))
                } else {
                    Ok(v.clone())
                }
            })
            .collect()
    }

    /// Finite reals, optionally confined to `[lo, hi]`.
    pub fn reals(&self, name: &str, range: Option<(f64, f64)>) -> Result<Vec<f64>, CliError> {
        let k = self.position(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let v: f64 = row[k]
                    .parse()
                    .map_err(|_| self.fail(r, format!("column '{name}': cannot parse '{}' as a number", row[k])))?;
                if !v.is_finite() {
                    return Err(self.fail(r, format!("column '{name}': value must be finite")));
                }
                if let Some((lo, hi)) = range {
                    if !(lo..=hi).contains(&v) {
                        return Err(self.fail(r, format!("column '{name}': {v} is outside [{lo}, {hi}]")));
                    }
                }
                Ok(v)
            })
            .collect()
    }

    pub fn truth(&self) -> Result<Option<Vec<bool>>, CliError> {
        if !self.has("truth") {
            return Ok(None);
        }
        let k = self.position("truth")?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| match row[k].as_str() {
                "1" | "true" => Ok(true),
                "0" | "false" => Ok(false),
                other => Err(self.fail(r, format!("column 'truth': expected 0 or 1, got '{other}'"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.headers
            .iter()
            .filter(|h| !RESERVED.contains(&h.as_str()))
            .cloned()
            .collect()
    }
}
