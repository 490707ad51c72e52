//! CSV ingestion and emission. Comma-separated, header row required,
//! UTF-8, '.' decimal separator; floats are written with Rust's shortest
//! round-trip formatting.

use std::path::Path;

use arw_core::quantile::WindowedScores;

use crate::error::{CliError, Result};

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(&format!("opening '{}'", path.display()), e))
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<T> {
    let raw = record.get(idx).ok_or_else(|| {
        CliError::Data(format!("row {row}: missing column '{name}'"))
    })?;
    raw.parse::<T>()
        .map_err(|_| CliError::Data(format!("row {row}: invalid {name} '{raw}'")))
}

/// Read a `period,score` stream into per-period batches. Periods must be
/// contiguous starting at 1; every violation reports the offending row
/// number (header = row 1).
pub fn read_scores(path: &Path) -> Result<WindowedScores> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::io(&format!("reading '{}'", path.display()), e))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "period" || cols[1] != "score" {
        return Err(CliError::Data(format!(
            "'{}': expected header 'period,score', got '{}'",
            path.display(),
            cols.join(",")
        )));
    }
    let mut scores = WindowedScores::new();
    let mut current_period = 0usize;
    let mut batch: Vec<f64> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        let period: usize = field(&rec, 0, "period", row)?;
        let score: f64 = field(&rec, 1, "score", row)?;
        if !score.is_finite() {
            return Err(CliError::Data(format!("row {row}: non-finite score")));
        }
        if period == current_period {
            batch.push(score);
        } else if period == current_period + 1 {
            if current_period > 0 {
                scores
                    .push_batch(std::mem::take(&mut batch))
                    .map_err(|e| CliError::Data(format!("period {current_period}: {e}")))?;
            }
            current_period = period;
            batch.push(score);
        } else {
            return Err(CliError::Data(format!(
                "row {row}: period {period} is not contiguous (expected {} or {})",
                current_period,
                current_period + 1
            )));
        }
    }
    if batch.is_empty() {
        return Err(CliError::Data(format!(
            "'{}': no score rows",
            path.display()
        )));
    }
    scores
        .push_batch(batch)
        .map_err(|e| CliError::Data(format!("period {current_period}: {e}")))?;
    Ok(scores)
}

/// One test row of the predictions file: `id,mu_hat[,sigma_hat]`.
pub struct PredictionRow {
    pub id: String,
    pub mu_hat: f64,
    pub sigma_hat: Option<f64>,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::io(&format!("reading '{}'", path.display()), e))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let with_sigma = match cols.as_slice() {
        ["id", "mu_hat"] => false,
        ["id", "mu_hat", "sigma_hat"] => true,
        _ => {
            return Err(CliError::Data(format!(
                "'{}': expected header 'id,mu_hat' or 'id,mu_hat,sigma_hat', got '{}'",
                path.display(),
                cols.join(",")
            )))
        }
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        let id = rec
            .get(0)
            .ok_or_else(|| CliError::Data(format!("row {row}: missing id")))?
            .to_string();
        let mu_hat: f64 = field(&rec, 1, "mu_hat", row)?;
        if !mu_hat.is_finite() {
            return Err(CliError::Data(format!("row {row}: non-finite mu_hat")));
        }
        let sigma_hat = if with_sigma {
            let s: f64 = field(&rec, 2, "sigma_hat", row)?;
            if !(s.is_finite() && s > 0.0) {
                return Err(CliError::Data(format!(
                    "row {row}: sigma_hat must be a finite positive number, got {s}"
                )));
            }
            Some(s)
        } else {
            None
        };
        rows.push(PredictionRow { id, mu_hat, sigma_hat });
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "'{}': no prediction rows",
            path.display()
        )));
    }
    Ok(rows)
}
