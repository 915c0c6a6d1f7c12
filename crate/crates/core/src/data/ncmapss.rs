//! N-CMAPSS records from a CSV export, and cruise-phase filtering.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::series::SegmentedSeries;
use crate::error::{Error, Result};

pub const DEFAULT_ALT_MIN: f64 = 25_000.0;
pub const DEFAULT_ALT_MAX: f64 = 30_000.0;
pub const DEFAULT_MIN_LEN: usize = 1024;

/// Header names of the columns to read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    /// Time column; when absent the 0-based row index is used.
    #[serde(default)]
    pub time: Option<String>,
    pub altitude: String,
    pub flight: String,
    /// Engine unit column, needed only when filtering by unit.
    #[serde(default)]
    pub unit: Option<String>,
    pub sensors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcmapssRecord {
    pub time: f64,
    /// feet
    pub altitude: f64,
    pub flight: i64,
    pub unit: Option<i64>,
    pub sensors: BTreeMap<String, f64>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Config(format!("CSV has no column named {name:?}")))
}

fn number(field: Option<&str>, line: usize, name: &str) -> Result<f64> {
    let raw = field.ok_or_else(|| Error::parse(line, format!("missing field {name}")))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("column {name}: {raw:?} is not a number")))
}

fn integer(field: Option<&str>, line: usize, name: &str) -> Result<i64> {
    let v = number(field, line, name)?;
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::parse(line, format!("column {name}: {v} is not an integer")));
    }
    Ok(v as i64)
}

/// Reads a headed CSV. Line numbers in errors count the header as line 1.
pub fn parse_ncmapss_csv<R: Read>(reader: R, columns: &ColumnMap) -> Result<Vec<NcmapssRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let time_col = columns.time.as_deref().map(|c| column(&headers, c)).transpose()?;
    let alt_col = column(&headers, &columns.altitude)?;
    let flight_col = column(&headers, &columns.flight)?;
    let unit_col = columns.unit.as_deref().map(|c| column(&headers, c)).transpose()?;
    let sensor_cols: Vec<(String, usize)> = columns
        .sensors
        .iter()
        .map(|s| column(&headers, s).map(|i| (s.clone(), i)))
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let time = match time_col {
            Some(c) => number(rec.get(c), line, "time")?,
            None => row as f64,
        };
        let altitude = number(rec.get(alt_col), line, &columns.altitude)?;
        if !altitude.is_finite() {
            return Err(Error::parse(line, "altitude must be finite"));
        }
        let flight = integer(rec.get(flight_col), line, &columns.flight)?;
        let unit = unit_col.map(|c| integer(rec.get(c), line, "unit")).transpose()?;
        let mut sensors = BTreeMap::new();
        for (name, c) in &sensor_cols {
            sensors.insert(name.clone(), number(rec.get(*c), line, name)?);
        }
        out.push(NcmapssRecord {
            time,
            altitude,
            flight,
            unit,
            sensors,
        });
    }
    Ok(out)
}

/// Writes records in the layout `parse_ncmapss_csv` reads with the same
/// column map. Floats use the shortest round-trip representation.
pub fn write_ncmapss_csv<W: Write>(writer: W, records: &[NcmapssRecord], columns: &ColumnMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = Vec::new();
    if let Some(t) = &columns.time {
        header.push(t.clone());
    }
    header.push(columns.altitude.clone());
    header.push(columns.flight.clone());
    if let Some(u) = &columns.unit {
        header.push(u.clone());
    }
    header.extend(columns.sensors.iter().cloned());
    let csv_err = |e: csv::Error| Error::Data(format!("writing CSV: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = Vec::with_capacity(header.len());
        if columns.time.is_some() {
            row.push(r.time.to_string());
        }
        row.push(r.altitude.to_string());
        row.push(r.flight.to_string());
        if columns.unit.is_some() {
            row.push(r.unit.map(|u| u.to_string()).unwrap_or_default());
        }
        for s in &columns.sensors {
            row.push(r.sensors.get(s).copied().unwrap_or(f64::NAN).to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing CSV: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CruiseFilter {
    pub alt_min: f64,
    pub alt_max: f64,
    pub min_len: usize,
}

impl Default for CruiseFilter {
    fn default() -> Self {
        Self {
            alt_min: DEFAULT_ALT_MIN,
            alt_max: DEFAULT_ALT_MAX,
            min_len: DEFAULT_MIN_LEN,
        }
    }
}

impl CruiseFilter {
    pub fn in_band(&self, altitude: f64) -> bool {
        self.alt_min <= altitude && altitude <= self.alt_max
    }
}

/// Index ranges `[start, end)` of the maximal in-band runs within a single
/// flight that hold at least `min_len` records.
pub fn cruise_runs(records: &[NcmapssRecord], filter: &CruiseFilter) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        let inside = filter.in_band(r.altitude);
        if let Some(s) = start {
            let continues = inside && records[i - 1].flight == r.flight && records[i - 1].time <= r.time;
            if !continues {
                runs.push((s, i));
                start = None;
            }
        }
        if start.is_none() && inside {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        runs.push((s, records.len()));
    }
    runs.retain(|(s, e)| e - s >= filter.min_len);
    runs
}

/// Keeps only the cruise runs, one segment per run, for every sensor in
/// `sensors`.
pub fn filter_cruise(
    records: &[NcmapssRecord],
    filter: &CruiseFilter,
    sensors: &[String],
) -> Result<BTreeMap<String, SegmentedSeries>> {
    let runs = cruise_runs(records, filter);
    let mut out = BTreeMap::new();
    for name in sensors {
        let mut series = SegmentedSeries::new();
        for (k, &(s, e)) in runs.iter().enumerate() {
            let samples = records[s..e]
                .iter()
                .map(|r| {
                    r.sensors
                        .get(name)
                        .copied()
                        .ok_or_else(|| Error::Config(format!("records carry no sensor {name:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            series.push_segment(k as u64, samples)?;
        }
        out.insert(name.clone(), series);
    }
    Ok(out)
}
