//! On-disk formats for covariances, targets and solved weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use agal_core::data::io::{read_long_csv, read_returns_csv};
use agal_core::data::{MarketCapPanel, PricePanel, ReturnsPanel};
use agal_core::spectrum::SpectralCovariance;
use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_prices(path: &Path) -> Result<(PricePanel, Option<MarketCapPanel>)> {
    read_long_csv(open(path)?).with_context(|| format!("reading prices from {}", path.display()))
}

pub fn read_returns(path: &Path) -> Result<ReturnsPanel> {
    read_returns_csv(open(path)?).with_context(|| format!("reading returns from {}", path.display()))
}

/// Square matrix with an `asset_id` column followed by one column per asset.
pub fn write_matrix(path: &Path, ids: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["asset_id".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.row(i).iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("asset_id") {
        bail!("{} must start with an asset_id column", path.display());
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = ids.len();
    let mut m = DMatrix::zeros(n, n);
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i >= n || rec.len() != n + 1 || rec[0] != ids[i] {
            bail!("{}: row {} does not match the header", path.display(), i + 1);
        }
        for j in 0..n {
            m[(i, j)] = rec[j + 1]
                .parse()
                .with_context(|| format!("{}: bad number {:?}", path.display(), &rec[j + 1]))?;
        }
        rows += 1;
    }
    if rows != n {
        bail!("{}: expected {n} rows, found {rows}", path.display());
    }
    Ok((ids, m))
}

pub fn read_covariance(path: &Path) -> Result<(Vec<String>, SpectralCovariance)> {
    let (ids, m) = read_matrix(path)?;
    let c = SpectralCovariance::from_matrix(m).with_context(|| format!("covariance in {}", path.display()))?;
    Ok((ids, c))
}

pub fn write_spectrum(path: &Path, c: &SpectralCovariance) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["k", "eigenvalue"])?;
    for (k, l) in c.eigenvalues().iter().enumerate() {
        w.write_record([(k + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `asset_id,<column>` vector file.
pub fn write_vector(path: &Path, column: &str, ids: &[String], v: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["asset_id", column])?;
    for (id, x) in ids.iter().zip(v) {
        w.write_record([id.clone(), x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a two-column vector file and orders it by `ids`.
pub fn read_vector(path: &Path, ids: &[String]) -> Result<DVector<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let mut values = std::collections::BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            bail!("{}: expected two columns", path.display());
        }
        let x: f64 = rec[1]
            .parse()
            .with_context(|| format!("{}: bad number {:?}", path.display(), &rec[1]))?;
        values.insert(rec[0].to_string(), x);
    }
    let mut out = DVector::zeros(ids.len());
    for (i, id) in ids.iter().enumerate() {
        out[i] = *values
            .get(id)
            .with_context(|| format!("{}: no value for {id}", path.display()))?;
    }
    if values.len() != ids.len() {
        bail!("{}: {} entries for {} assets", path.display(), values.len(), ids.len());
    }
    Ok(out)
}
