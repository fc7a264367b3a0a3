use std::io::{Read, Write};

use super::{Panel, RawRecord};
use crate::error::{Error, Result};

const REQUIRED: [&str; 4] = ["patient_id", "quarter", "outcome", "event"];

/// Parsed long-format input.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub covariate_names: Vec<String>,
    pub has_day: bool,
    pub records: Vec<RawRecord>,
}

fn parse_f64(s: &str, row: usize, what: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse { row, message: format!("{what} '{s}' is not numeric") })
}

fn parse_event(s: &str, row: usize) -> Result<bool> {
    match s.trim() {
        "1" | "true" | "TRUE" => Ok(true),
        "0" | "false" | "FALSE" | "" => Ok(false),
        other => Err(Error::Parse { row, message: format!("event '{other}' is not binary") }),
    }
}

/// Read long-format delimited text. Columns are located by header name;
/// `patient_id, quarter, outcome, event` are required, `day` is optional,
/// and every other column is a covariate.
pub fn read_long_csv<R: Read>(reader: R, delimiter: u8) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut pos = [0usize; 4];
    for (k, name) in REQUIRED.iter().enumerate() {
        pos[k] = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(format!("input is missing required column '{name}'")))?;
    }
    let day_pos = headers.iter().position(|h| h == "day");
    let cov_pos: Vec<usize> =
        (0..headers.len()).filter(|i| !pos.contains(i) && Some(*i) != day_pos).collect();
    let covariate_names = cov_pos.iter().map(|&i| headers[i].clone()).collect();

    let mut records = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let quarter_raw = field(pos[1]).trim();
        let quarter = quarter_raw
            .parse::<u32>()
            .map_err(|_| Error::Parse { row, message: format!("quarter '{quarter_raw}' is not a non-negative integer") })?;
        let outcome = parse_f64(field(pos[2]), row, "outcome")?;
        if let Some(y) = outcome {
            if !y.is_finite() {
                return Err(Error::Parse { row, message: "outcome is not finite".into() });
            }
        }
        let day = match day_pos {
            Some(i) => parse_f64(field(i), row, "day")?,
            None => None,
        };
        let covariates = cov_pos
            .iter()
            .map(|&i| parse_f64(field(i), row, &format!("covariate '{}'", headers[i])))
            .collect::<Result<Vec<_>>>()?;
        records.push(RawRecord {
            patient_id: field(pos[0]).trim().to_string(),
            quarter,
            outcome,
            event: parse_event(field(pos[3]), row)?,
            day,
            covariates,
            source_row: row,
        });
    }
    Ok(RawTable { covariate_names, has_day: day_pos.is_some(), records })
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Write a panel in canonical long form (one row per patient-quarter).
pub fn write_panel_csv<W: Write>(panel: &Panel, writer: W, delimiter: u8) -> Result<()> {
    let table = panel.to_records();
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend(table.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for r in &table.records {
        let mut row = vec![
            r.patient_id.clone(),
            r.quarter.to_string(),
            r.outcome.map(fmt).unwrap_or_default(),
            if r.event { "1".into() } else { "0".into() },
        ];
        row.extend(r.covariates.iter().map(|c| c.map(fmt).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
