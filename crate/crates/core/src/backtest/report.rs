use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::BacktestReport;
use crate::error::{AgalError, Result};
use crate::metrics::{write_metrics_csv, MetricsReport};

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_series<'a, W: Write>(
    w: W,
    dates: &[NaiveDate],
    report: &'a BacktestReport,
    pick: impl Fn(usize) -> &'a [f64],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(report.methods.iter().map(|m| m.label.clone()));
    out.write_record(&header)?;
    for (t, d) in dates.iter().enumerate() {
        let mut row = vec![d.to_string()];
        row.extend((0..report.methods.len()).map(|m| pick(m)[t].to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `metrics.csv`, `period_returns.csv`, `daily_returns.csv`,
/// `rebalances.csv` and one `weights_<method>.csv` per method into `dir`.
pub fn write_report(report: &BacktestReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<MetricsReport> = report.methods.iter().map(|m| m.metrics.clone()).collect();
    let mut f = create(dir, "metrics.csv")?;
    write_metrics_csv(&mut f, &rows)?;
    f.flush()?;

    write_series(create(dir, "period_returns.csv")?, &report.period_dates, report, |m| {
        &report.methods[m].period_returns
    })?;
    write_series(create(dir, "daily_returns.csv")?, &report.daily_dates, report, |m| {
        &report.methods[m].daily_returns
    })?;

    let mut out = csv::Writer::from_writer(create(dir, "rebalances.csv")?);
    out.write_record(["date", "pool_size", "covariance_sha256"])?;
    for (n, d) in report.rebalance_dates.iter().enumerate() {
        out.write_record([
            d.to_string(),
            report.pools[n].len().to_string(),
            report.covariance_digests[n].clone(),
        ])?;
    }
    out.flush()?;

    for m in &report.methods {
        let mut out = csv::Writer::from_writer(create(dir, &format!("weights_{}.csv", file_stem(&m.label)))?);
        out.write_record(["date", "asset_id", "weight", "target_shorts"])?;
        for (n, w) in m.trail.weights.iter().enumerate() {
            let date = m.trail.dates[n].to_string();
            for (i, x) in w.iter().enumerate() {
                if *x != 0.0 {
                    out.write_record([
                        date.clone(),
                        report.asset_ids[i].clone(),
                        x.to_string(),
                        m.target_shorts[n].to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
    }
    Ok(())
}

/// Daily method returns as written by [`write_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct DailyReturnsTable {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<String>,
    /// One series per label.
    pub series: Vec<Vec<f64>>,
}

impl DailyReturnsTable {
    pub fn series(&self, label: &str) -> Option<&[f64]> {
        self.labels.iter().position(|l| l == label).map(|k| self.series[k].as_slice())
    }
}

pub fn read_daily_returns_csv<R: Read>(reader: R) -> Result<DailyReturnsTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("date") || header.len() < 2 {
        return Err(AgalError::invalid(
            "daily returns file needs a date column and at least one method",
        ));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut series = vec![Vec::new(); labels.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let d = rec.get(0).unwrap_or_default();
        dates.push(NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|e| AgalError::invalid(format!("bad date {d:?}: {e}")))?);
        for (k, s) in series.iter_mut().enumerate() {
            let field = rec.get(k + 1).unwrap_or_default();
            s.push(
                field
                    .parse::<f64>()
                    .map_err(|e| AgalError::invalid(format!("bad value {field:?}: {e}")))?,
            );
        }
    }
    Ok(DailyReturnsTable { dates, labels, series })
}
