//! CSV import/export for panels.
//!
//! Long format: `date,asset_id,price,market_cap` with a header row; `market_cap` may be
//! empty. Wide format: a `date` column followed by one column per asset, empty cells
//! for missing values.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::panel::{is_present, MarketCapPanel, PricePanel, ReturnsPanel};
use crate::error::{AgalError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct LongRow {
    date: NaiveDate,
    asset_id: String,
    price: Option<f64>,
    #[serde(default)]
    market_cap: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct CapRow {
    date: NaiveDate,
    asset_id: String,
    market_cap: Option<f64>,
}

type Cells = BTreeMap<(String, NaiveDate), f64>;

fn to_matrix(cells: &Cells, ids: &[String], dates: &[NaiveDate]) -> DMatrix<f64> {
    let row: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let col: BTreeMap<NaiveDate, usize> = dates.iter().enumerate().map(|(t, d)| (*d, t)).collect();
    let mut m = DMatrix::from_element(ids.len(), dates.len(), f64::NAN);
    for ((id, d), v) in cells {
        m[(row[id.as_str()], col[d])] = *v;
    }
    m
}

/// Reads a long-format panel. Asset ids are sorted lexicographically, dates ascending.
pub fn read_long_csv<R: Read>(reader: R) -> Result<(PricePanel, Option<MarketCapPanel>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut prices = Cells::new();
    let mut caps = Cells::new();
    let mut ids = BTreeSet::new();
    let mut dates = BTreeSet::new();
    for row in rdr.deserialize::<LongRow>() {
        let row = row?;
        ids.insert(row.asset_id.clone());
        dates.insert(row.date);
        let key = (row.asset_id, row.date);
        if prices.contains_key(&key) || caps.contains_key(&key) {
            return Err(AgalError::invalid(format!("duplicate row for {} on {}", key.0, key.1)));
        }
        if let Some(p) = row.price {
            prices.insert(key.clone(), p);
        }
        if let Some(c) = row.market_cap {
            caps.insert(key, c);
        }
    }
    let ids: Vec<String> = ids.into_iter().collect();
    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    let price_panel = PricePanel::new(ids.clone(), dates.clone(), to_matrix(&prices, &ids, &dates))?;
    let cap_panel = if caps.is_empty() {
        None
    } else {
        Some(MarketCapPanel::new(
            ids.clone(),
            dates.clone(),
            to_matrix(&caps, &ids, &dates),
        )?)
    };
    Ok((price_panel, cap_panel))
}

/// Reads `date,asset_id,market_cap` rows.
pub fn read_caps_csv<R: Read>(reader: R) -> Result<MarketCapPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut caps = Cells::new();
    let mut ids = BTreeSet::new();
    let mut dates = BTreeSet::new();
    for row in rdr.deserialize::<CapRow>() {
        let row = row?;
        ids.insert(row.asset_id.clone());
        dates.insert(row.date);
        if let Some(c) = row.market_cap {
            caps.insert((row.asset_id, row.date), c);
        }
    }
    let ids: Vec<String> = ids.into_iter().collect();
    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    MarketCapPanel::new(ids.clone(), dates.clone(), to_matrix(&caps, &ids, &dates))
}

fn opt(x: f64) -> Option<f64> {
    is_present(x).then_some(x)
}

/// Writes prices (and caps on the same axes, if given) in long format.
pub fn write_long_csv<W: Write>(writer: W, prices: &PricePanel, caps: Option<&MarketCapPanel>) -> Result<()> {
    if let Some(c) = caps {
        if c.asset_ids() != prices.asset_ids() || c.dates() != prices.dates() {
            return Err(AgalError::invalid("caps must share the price panel axes"));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    for (t, date) in prices.dates().iter().enumerate() {
        for (i, id) in prices.asset_ids().iter().enumerate() {
            let price = opt(prices.prices()[(i, t)]);
            let market_cap = caps.and_then(|c| opt(c.caps()[(i, t)]));
            if price.is_none() && market_cap.is_none() {
                continue;
            }
            w.serialize(LongRow {
                date: *date,
                asset_id: id.clone(),
                price,
                market_cap,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Wide panel as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct WidePanel {
    pub asset_ids: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub values: DMatrix<f64>,
}

pub fn write_wide_csv<W: Write>(writer: W, asset_ids: &[String], dates: &[NaiveDate], values: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(asset_ids.iter().cloned());
    w.write_record(&header)?;
    for (t, d) in dates.iter().enumerate() {
        let mut rec = Vec::with_capacity(asset_ids.len() + 1);
        rec.push(d.to_string());
        for i in 0..asset_ids.len() {
            let v = values[(i, t)];
            rec.push(if is_present(v) { v.to_string() } else { String::new() });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_wide_csv<R: Read>(reader: R) -> Result<WidePanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("date") {
        return Err(AgalError::invalid("wide CSV must start with a `date` column"));
    }
    let asset_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut cols: Vec<f64> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let d: NaiveDate = rec[0]
            .parse()
            .map_err(|e| AgalError::invalid(format!("bad date {:?}: {e}", &rec[0])))?;
        dates.push(d);
        for i in 0..asset_ids.len() {
            let cell = rec.get(i + 1).unwrap_or("");
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>()
                    .map_err(|e| AgalError::invalid(format!("bad number {cell:?}: {e}")))?
            };
            cols.push(v);
        }
    }
    let values = DMatrix::from_column_slice(asset_ids.len(), dates.len(), &cols);
    Ok(WidePanel {
        asset_ids,
        dates,
        values,
    })
}

pub fn write_returns_csv<W: Write>(writer: W, returns: &ReturnsPanel) -> Result<()> {
    write_wide_csv(writer, returns.asset_ids(), returns.dates(), returns.returns())
}

pub fn read_returns_csv<R: Read>(reader: R) -> Result<ReturnsPanel> {
    let w = read_wide_csv(reader)?;
    ReturnsPanel::new(w.asset_ids, w.dates, w.values)
}

pub fn read_caps_wide_csv<R: Read>(reader: R) -> Result<MarketCapPanel> {
    let w = read_wide_csv(reader)?;
    MarketCapPanel::new(w.asset_ids, w.dates, w.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LONG: &str = "date,asset_id,price,market_cap\n\
        2020-01-02,B,10,100\n\
        2020-01-02,A,5,\n\
        2020-01-03,A,5.5,\n\
        2020-01-03,B,11,110\n";

    #[test]
    fn long_round_trip() {
        let (p, c) = read_long_csv(LONG.as_bytes()).unwrap();
        assert_eq!(p.asset_ids(), &["A".to_string(), "B".to_string()]);
        assert_eq!(p.prices()[(0, 1)], 5.5);
        let c = c.unwrap();
        assert!(c.caps()[(0, 0)].is_nan());
        assert_eq!(c.caps()[(1, 1)], 110.0);

        let mut buf = Vec::new();
        write_long_csv(&mut buf, &p, Some(&c)).unwrap();
        let (p2, c2) = read_long_csv(buf.as_slice()).unwrap();
        assert_eq!(p, p2);
        assert_eq!(c.caps().map(|x| x.to_bits()), c2.unwrap().caps().map(|x| x.to_bits()));
    }

    #[test]
    fn duplicate_rows_rejected() {
        let dup = format!("{LONG}2020-01-03,B,12,120\n");
        assert!(read_long_csv(dup.as_bytes()).is_err());
    }

    #[test]
    fn wide_round_trip_is_bit_exact() {
        let ids = vec!["X".to_string(), "Y".to_string()];
        let dates = vec![
            NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            NaiveDate::from_ymd_opt(2020, 1, 3).unwrap(),
        ];
        let m = DMatrix::from_row_slice(2, 2, &[0.1 + 0.2, f64::NAN, -1.0 / 3.0, 1e-300]);
        let mut buf = Vec::new();
        write_wide_csv(&mut buf, &ids, &dates, &m).unwrap();
        let back = read_wide_csv(buf.as_slice()).unwrap();
        assert_eq!(back.asset_ids, ids);
        for (a, b) in back.values.iter().zip(m.iter()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }
}
