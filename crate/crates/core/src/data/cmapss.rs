//! CMAPSS run-to-failure text files: whitespace-separated, 26 columns per
//! line (unit, cycle, 3 operational settings, 21 sensors).

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::series::SegmentedSeries;
use crate::error::{Error, Result};

pub const FIELDS_PER_LINE: usize = 26;

/// Canonical sensor names in column order.
pub const SENSOR_NAMES: [&str; 21] = [
    "T2",
    "T24",
    "T30",
    "T50",
    "P2",
    "P15",
    "P30",
    "Nf",
    "Nc",
    "epr",
    "Ps30",
    "phi",
    "NRf",
    "NRc",
    "BPR",
    "farB",
    "htBleed",
    "Nf_dmd",
    "PCNfR_dmd",
    "W31",
    "W32",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmapssRecord {
    pub unit: u32,
    pub cycle: u32,
    pub op_settings: [f64; 3],
    pub sensors: [f64; 21],
}

pub fn sensor_index(name: &str) -> Option<usize> {
    SENSOR_NAMES.iter().position(|s| *s == name)
}

impl CmapssRecord {
    pub fn sensor(&self, name: &str) -> Option<f64> {
        sensor_index(name).map(|i| self.sensors[i])
    }
}

fn parse_int(tok: &str, line: usize, what: &str) -> Result<u32> {
    // Unit and cycle are written as integers but tolerate "1.0".
    if let Ok(v) = tok.parse::<u32>() {
        return Ok(v);
    }
    match tok.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as u32),
        _ => Err(Error::parse(
            line,
            format!("{what} {tok:?} is not a non-negative integer"),
        )),
    }
}

/// Parses every non-blank line; line numbers in errors are 1-based.
pub fn parse_cmapss<R: BufRead>(reader: R) -> Result<Vec<CmapssRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != FIELDS_PER_LINE {
            return Err(Error::parse(
                lineno,
                format!("expected {FIELDS_PER_LINE} fields, found {}", tokens.len()),
            ));
        }
        let unit = parse_int(tokens[0], lineno, "unit")?;
        let cycle = parse_int(tokens[1], lineno, "cycle")?;
        let mut nums = [0.0; 24];
        for (slot, tok) in nums.iter_mut().zip(&tokens[2..]) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(lineno, format!("non-numeric token {tok:?}")))?;
        }
        let mut op_settings = [0.0; 3];
        op_settings.copy_from_slice(&nums[..3]);
        let mut sensors = [0.0; 21];
        sensors.copy_from_slice(&nums[3..]);
        out.push(CmapssRecord {
            unit,
            cycle,
            op_settings,
            sensors,
        });
    }
    Ok(out)
}

/// One sensor of one unit as a single cycle-ordered segment.
pub fn select_series(records: &[CmapssRecord], unit: u32, sensor_name: &str) -> Result<SegmentedSeries> {
    let idx =
        sensor_index(sensor_name).ok_or_else(|| Error::Config(format!("unknown CMAPSS sensor {sensor_name:?}")))?;
    let mut rows: Vec<&CmapssRecord> = records.iter().filter(|r| r.unit == unit).collect();
    if rows.is_empty() {
        return Err(Error::Data(format!("unit {unit} not present in dataset")));
    }
    rows.sort_by_key(|r| r.cycle);
    Ok(SegmentedSeries::single(rows.iter().map(|r| r.sensors[idx]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(unit: u32, cycle: u32, base: f64) -> String {
        let mut s = format!("{unit} {cycle}");
        for k in 0..24 {
            s.push_str(&format!(" {}", base + k as f64));
        }
        s
    }

    #[test]
    fn positional_mapping() {
        let text = line(1, 1, 100.0);
        let recs = parse_cmapss(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.op_settings, [100.0, 101.0, 102.0]);
        assert_eq!(r.sensor("T2"), Some(103.0));
        assert_eq!(r.sensor("T50"), Some(106.0));
        assert_eq!(r.sensor("W32"), Some(123.0));
    }

    #[test]
    fn short_line_names_line_number() {
        let mut text = line(1, 1, 0.0);
        text.push('\n');
        let mut short = line(1, 2, 0.0);
        short.truncate(short.rfind(' ').unwrap());
        text.push_str(&short);
        match parse_cmapss(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_token() {
        let text = line(1, 1, 0.0).replace(" 5 ", " abc ");
        assert!(matches!(
            parse_cmapss(text.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn select_orders_by_cycle() {
        let text = [line(2, 2, 20.0), line(1, 1, 0.0), line(2, 1, 10.0)].join("\n");
        let recs = parse_cmapss(text.as_bytes()).unwrap();
        let s = select_series(&recs, 2, "T2").unwrap();
        assert_eq!(s.values().collect::<Vec<_>>(), vec![13.0, 23.0]);
        assert!(matches!(select_series(&recs, 1, "T99"), Err(Error::Config(_))));
        assert!(matches!(select_series(&recs, 7, "T2"), Err(Error::Data(_))));
    }
}
