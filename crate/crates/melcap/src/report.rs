//! CSV metric reports.

use std::io::{Read, Write};

use melcap_core::metrics::MetricsReport;

use crate::{CliError, Result};

pub const HEADER: [&str; 5] = ["file", "lsd", "mel_dist", "stft_dist", "mae_mel"];
pub const MEAN_ROW: &str = "MEAN";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub file: String,
    pub lsd: f64,
    pub mel_dist: f64,
    pub stft_dist: f64,
    pub mae_mel: f64,
}

impl ReportRow {
    fn values(&self) -> [f64; 4] {
        [self.lsd, self.mel_dist, self.stft_dist, self.mae_mel]
    }
}

impl From<&MetricsReport> for ReportRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            file: r.id.clone(),
            lsd: r.lsd,
            mel_dist: r.mel_distance,
            stft_dist: r.stft_distance,
            mae_mel: r.mae_mel,
        }
    }
}

/// Column-wise mean; all zeros for an empty table.
pub fn mean_row(rows: &[ReportRow]) -> ReportRow {
    let mut sums = [0.0; 4];
    for r in rows {
        for (s, v) in sums.iter_mut().zip(r.values()) {
            *s += v;
        }
    }
    let n = rows.len().max(1) as f64;
    ReportRow {
        file: MEAN_ROW.to_string(),
        lsd: sums[0] / n,
        mel_dist: sums[1] / n,
        stft_dist: sums[2] / n,
        mae_mel: sums[3] / n,
    }
}

/// Header, `rows` in the given order, then the mean row. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_report<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows.iter().chain(std::iter::once(&mean_row(rows))) {
        let v = row.values();
        w.write_record([
            row.file.clone(),
            v[0].to_string(),
            v[1].to_string(),
            v[2].to_string(),
            v[3].to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))?;
    Ok(())
}

/// Parses a report; the mean row, if present, is returned separately.
pub fn read_report<R: Read>(input: R) -> Result<(Vec<ReportRow>, Option<ReportRow>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(CliError::Validation(format!(
            "unexpected report header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    let mut mean = None;
    for record in r.records() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record[i].parse().map_err(|_| {
                CliError::Validation(format!(
                    "bad number {:?} in column {}",
                    &record[i], HEADER[i]
                ))
            })
        };
        let row = ReportRow {
            file: record[0].to_string(),
            lsd: field(1)?,
            mel_dist: field(2)?,
            stft_dist: field(3)?,
            mae_mel: field(4)?,
        };
        if row.file == MEAN_ROW {
            mean = Some(row);
        } else {
            rows.push(row);
        }
    }
    Ok((rows, mean))
}
