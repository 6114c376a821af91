use std::path::Path;

use chrono::NaiveDate;

use super::features::MacroSeries;
use super::types::{OhlcvFrame, OhlcvRow};
use crate::error::{Error, Result};

const OHLCV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

fn csv_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Csv { path: path.to_path_buf(), msg: msg.into() }
}

fn parse_date(path: &Path, line: u64, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| csv_err(path, format!("line {line}: bad date {s:?}: {e}")))
}

fn parse_num(path: &Path, line: u64, col: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| csv_err(path, format!("line {line}: column {col}: {s:?}: {e}")))
}

pub fn read_ohlcv_csv(path: &Path, ticker: &str) -> Result<OhlcvFrame> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e.to_string()))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols != OHLCV_HEADER {
        return Err(csv_err(path, format!("expected header {}, found {}", OHLCV_HEADER.join(","), cols.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 6 {
            return Err(csv_err(path, format!("line {line}: expected 6 fields, found {}", rec.len())));
        }
        let date = parse_date(path, line, &rec[0])?;
        let num = |k: usize| parse_num(path, line, OHLCV_HEADER[k], &rec[k]);
        rows.push(OhlcvRow { date, open: num(1)?, high: num(2)?, low: num(3)?, close: num(4)?, volume: num(5)? });
    }
    if let Some(w) = rows.windows(2).find(|w| w[0].date >= w[1].date) {
        return Err(csv_err(path, format!("dates not strictly increasing at {}", w[1].date)));
    }
    Ok(OhlcvFrame { ticker: ticker.to_string(), rows })
}

pub fn write_ohlcv_csv(path: &Path, frame: &OhlcvFrame) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e.to_string()))?;
    let io = |e: csv::Error| csv_err(path, e.to_string());
    w.write_record(OHLCV_HEADER).map_err(io)?;
    for r in &frame.rows {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.open.to_string(),
            r.high.to_string(),
            r.low.to_string(),
            r.close.to_string(),
            r.volume.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_macro_csv(path: &Path) -> Result<MacroSeries> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e.to_string()))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e.to_string()))?.clone();
    if header.is_empty() || header[0].trim() != "date" {
        return Err(csv_err(path, "first column must be `date`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        dates.push(parse_date(path, line, &rec[0])?);
        let mut row = Vec::with_capacity(names.len());
        for (k, name) in names.iter().enumerate() {
            let cell = rec.get(k + 1).unwrap_or("").trim();
            row.push(if cell.is_empty() { None } else { Some(parse_num(path, line, name, cell)?) });
        }
        rows.push(row);
    }
    Ok(MacroSeries { dates, names, rows })
}

pub fn write_macro_csv(path: &Path, series: &MacroSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e.to_string()))?;
    let io = |e: csv::Error| csv_err(path, e.to_string());
    let mut header = vec!["date".to_string()];
    header.extend(series.names.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for (d, row) in series.dates.iter().zip(&series.rows) {
        let mut rec = vec![d.format("%Y-%m-%d").to_string()];
        rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
