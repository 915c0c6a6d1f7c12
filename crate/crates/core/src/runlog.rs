//! RunLog persistence: the per-step CSV, the events CSV and the calibration
//! JSON, plus reading a RunLog CSV back for reporting.
//!
//! RunLog CSV columns: `t,phase`, then `<s>_hi,<s>_bound,<s>_over` per sensor,
//! then `joint_hi,joint_bound,joint_over,alarm_triggers`. Fields of steps
//! without an evaluation are empty; `*_over` is `0`/`1`; triggers are joined
//! with `;`. Floats are written in shortest round-trip form.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{CalibrationSummary, Phase, RunLog};
use crate::error::{Error, Result};
use crate::supervisor::AlarmEvent;

pub const TRIGGER_SEPARATOR: char = ';';

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("writing CSV: {e}"))
}

pub fn header(sensors: &[String]) -> Vec<String> {
    let mut h = vec!["t".to_string(), "phase".to_string()];
    for s in sensors {
        h.push(format!("{s}_hi"));
        h.push(format!("{s}_bound"));
        h.push(format!("{s}_over"));
    }
    h.extend(["joint_hi", "joint_bound", "joint_over", "alarm_triggers"].map(String::from));
    h
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

pub fn write_runlog_csv<W: Write>(writer: W, log: &RunLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(&log.sensors)).map_err(csv_err)?;
    let bounds: Vec<Option<f64>> = log
        .sensors
        .iter()
        .map(|s| {
            log.calibration
                .as_ref()
                .and_then(|c| c.components.iter().find(|k| &k.sensor_id == s))
                .map(|k| k.hi_upper_bound)
        })
        .collect();
    let joint_bound = log.calibration.as_ref().map(|c| c.joint.upper_bound);
    let width = 2 + 3 * log.sensors.len() + 4;
    for step in &log.steps {
        let mut row = Vec::with_capacity(width);
        row.push(step.t.to_string());
        row.push(step.phase.as_str().to_string());
        match &step.joint {
            Some(j) => {
                for (s, bound) in log.sensors.iter().zip(&bounds) {
                    let rec = j
                        .component_records
                        .iter()
                        .find(|r| &r.sensor_id == s)
                        .ok_or_else(|| Error::Data(format!("step {} has no record for {s}", step.t)))?;
                    row.push(rec.hi.to_string());
                    row.push(bound.map(|b| b.to_string()).unwrap_or_default());
                    row.push(flag(rec.over_bound));
                }
                row.push(j.joint_hi.to_string());
                row.push(joint_bound.map(|b| b.to_string()).unwrap_or_default());
                row.push(flag(j.over_bound));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 3 * log.sensors.len() + 3)),
        }
        row.push(
            step.alarm
                .as_ref()
                .map(|a| a.triggers.join(&TRIGGER_SEPARATOR.to_string()))
                .unwrap_or_default(),
        );
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing CSV: {e}")))?;
    Ok(())
}

pub fn write_events_csv<W: Write>(writer: W, alarms: &[&AlarmEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "triggers"]).map_err(csv_err)?;
    for a in alarms {
        w.write_record([a.t.to_string(), a.triggers.join(&TRIGGER_SEPARATOR.to_string())])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing CSV: {e}")))?;
    Ok(())
}

/// `<dir>/<stem>.events.csv` and `<dir>/<stem>.calibration.json` beside the
/// RunLog CSV at `log`.
pub fn sibling_paths(log: &Path) -> (PathBuf, PathBuf) {
    let stem = log.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let dir = log.parent().unwrap_or_else(|| Path::new(""));
    (
        dir.join(format!("{stem}.events.csv")),
        dir.join(format!("{stem}.calibration.json")),
    )
}

/// Writes the RunLog CSV, the events CSV and (after a completed burn-in) the
/// calibration JSON. Returns the paths written.
pub fn save_run(log_path: &Path, log: &RunLog) -> Result<Vec<PathBuf>> {
    if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (events_path, cal_path) = sibling_paths(log_path);
    let mut written = Vec::new();

    let mut buf = Vec::new();
    write_runlog_csv(&mut buf, log)?;
    fs::write(log_path, buf).map_err(|e| Error::io(log_path, e))?;
    written.push(log_path.to_path_buf());

    let alarms: Vec<&AlarmEvent> = log.alarms().collect();
    let mut buf = Vec::new();
    write_events_csv(&mut buf, &alarms)?;
    fs::write(&events_path, buf).map_err(|e| Error::io(&events_path, e))?;
    written.push(events_path);

    if let Some(cal) = &log.calibration {
        let json = serde_json::to_string_pretty(cal).expect("calibration is serializable");
        fs::write(&cal_path, json).map_err(|e| Error::io(&cal_path, e))?;
        written.push(cal_path);
    }
    Ok(written)
}

pub fn load_calibration(path: &Path) -> Result<CalibrationSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// One JSON line per alarm, for live monitoring on stdout.
pub fn alarm_json_line(alarm: &AlarmEvent) -> String {
    serde_json::to_string(alarm).expect("alarm is serializable")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub hi: f64,
    pub bound: Option<f64>,
    pub over: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: u64,
    pub phase: Phase,
    /// One entry per sensor, in header order; `None` on steps without an
    /// evaluation.
    pub sensors: Vec<Option<Evaluation>>,
    pub joint: Option<Evaluation>,
    pub triggers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogTable {
    pub sensors: Vec<String>,
    pub rows: Vec<LogRow>,
}

fn parse_phase(s: &str, line: usize) -> Result<Phase> {
    match s {
        "setup" => Ok(Phase::Setup),
        "burn_in" => Ok(Phase::BurnIn),
        "inference" => Ok(Phase::Inference),
        other => Err(Error::parse(line, format!("unknown phase {other:?}"))),
    }
}

fn parse_eval(fields: &[&str], line: usize) -> Result<Option<Evaluation>> {
    if fields.iter().all(|f| f.is_empty()) {
        return Ok(None);
    }
    let hi = fields[0]
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("HI {:?} is not a number", fields[0])))?;
    let bound = if fields[1].is_empty() {
        None
    } else {
        Some(
            fields[1]
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("bound {:?} is not a number", fields[1])))?,
        )
    };
    let over = match fields[2] {
        "0" => false,
        "1" => true,
        other => return Err(Error::parse(line, format!("over flag {other:?} must be 0 or 1"))),
    };
    Ok(Some(Evaluation { hi, bound, over }))
}

/// Reads a RunLog CSV. Line numbers in errors count the header as line 1.
pub fn read_runlog_csv<R: Read>(reader: R) -> Result<LogTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let head = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let cols: Vec<&str> = head.iter().collect();
    if cols.len() < 6 || !(cols.len() - 6).is_multiple_of(3) || cols[0] != "t" || cols[1] != "phase" {
        return Err(Error::parse(1, "not a RunLog header"));
    }
    let k = (cols.len() - 6) / 3;
    let mut sensors = Vec::with_capacity(k);
    for i in 0..k {
        let hi = cols[2 + 3 * i];
        let s = hi
            .strip_suffix("_hi")
            .ok_or_else(|| Error::parse(1, format!("unexpected column {hi:?}")))?;
        if cols[3 + 3 * i] != format!("{s}_bound") || cols[4 + 3 * i] != format!("{s}_over") {
            return Err(Error::parse(1, format!("columns for sensor {s} are incomplete")));
        }
        sensors.push(s.to_string());
    }
    if header(&sensors) != cols {
        return Err(Error::parse(1, "not a RunLog header"));
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let f: Vec<&str> = rec.iter().collect();
        let t = f[0]
            .parse::<u64>()
            .map_err(|_| Error::parse(line, format!("t {:?} is not an integer", f[0])))?;
        let phase = parse_phase(f[1], line)?;
        let evals = (0..k)
            .map(|j| parse_eval(&f[2 + 3 * j..5 + 3 * j], line))
            .collect::<Result<Vec<_>>>()?;
        let joint = parse_eval(&f[2 + 3 * k..5 + 3 * k], line)?;
        let last = f[5 + 3 * k];
        let triggers = if last.is_empty() {
            Vec::new()
        } else {
            last.split(TRIGGER_SEPARATOR).map(String::from).collect()
        };
        rows.push(LogRow {
            t,
            phase,
            sensors: evals,
            joint,
            triggers,
        });
    }
    Ok(LogTable { sensors, rows })
}

pub fn load_runlog(path: &Path) -> Result<LogTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_runlog_csv(file)
}

/// Consecutive evaluated steps carrying an alarm; steps without an
/// evaluation do not break a span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmSpan {
    pub start: u64,
    pub end: u64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub total_steps: usize,
    pub burn_in_steps: usize,
    pub evaluated_steps: usize,
    /// First over-bound step per sensor (header order), then the joint HI.
    pub first_crossings: Vec<(String, Option<u64>)>,
    pub alarm_spans: Vec<AlarmSpan>,
    pub alarm_count: usize,
}

impl LogTable {
    pub fn summarize(&self) -> LogSummary {
        let mut first: Vec<Option<u64>> = vec![None; self.sensors.len() + 1];
        let mut spans: Vec<AlarmSpan> = Vec::new();
        let mut open: Option<AlarmSpan> = None;
        let mut evaluated = 0;
        let mut alarms = 0;
        for row in &self.rows {
            let Some(joint) = row.joint else { continue };
            evaluated += 1;
            for (slot, e) in first
                .iter_mut()
                .zip(row.sensors.iter().chain(std::iter::once(&Some(joint))))
            {
                if slot.is_none() && e.is_some_and(|e| e.over) {
                    *slot = Some(row.t);
                }
            }
            if row.triggers.is_empty() {
                if let Some(s) = open.take() {
                    spans.push(s);
                }
            } else {
                alarms += 1;
                match &mut open {
                    Some(s) => {
                        s.end = row.t;
                        s.steps += 1;
                    }
                    None => {
                        open = Some(AlarmSpan {
                            start: row.t,
                            end: row.t,
                            steps: 1,
                        })
                    }
                }
            }
        }
        spans.extend(open);
        let names = self.sensors.iter().cloned().chain(std::iter::once("joint".to_string()));
        LogSummary {
            total_steps: self.rows.len(),
            burn_in_steps: self.rows.iter().filter(|r| r.phase == Phase::BurnIn).count(),
            evaluated_steps: evaluated,
            first_crossings: names.zip(first).collect(),
            alarm_spans: spans,
            alarm_count: alarms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::component::HiRecord;
    use crate::engine::StepOutput;
    use crate::supervisor::JointRecord;

    fn step(t: u64, his: Option<[(f64, bool); 2]>, joint: (f64, bool)) -> StepOutput {
        let Some(his) = his else {
            return StepOutput {
                t,
                phase: Phase::BurnIn,
                joint: None,
                alarm: None,
            };
        };
        let ids = ["a", "b"];
        let recs: Vec<HiRecord> = ids
            .iter()
            .zip(his)
            .map(|(id, (hi, over))| HiRecord {
                sensor_id: id.to_string(),
                t,
                hi,
                over_bound: over,
            })
            .collect();
        let mut triggers: Vec<String> = recs
            .iter()
            .filter(|r| r.over_bound)
            .map(|r| r.sensor_id.clone())
            .collect();
        if joint.1 {
            triggers.push("joint".into());
        }
        StepOutput {
            t,
            phase: Phase::Inference,
            joint: Some(JointRecord {
                t,
                joint_hi: joint.0,
                over_bound: joint.1,
                component_records: recs,
            }),
            alarm: (!triggers.is_empty()).then_some(AlarmEvent { t, triggers }),
        }
    }

    fn sample_log() -> RunLog {
        RunLog {
            sensors: vec!["a".into(), "b".into()],
            steps: vec![
                step(1, None, (0.0, false)),
                step(2, Some([(0.1, false), (0.2, false)]), (0.15, false)),
                step(3, Some([(0.9, true), (0.2, false)]), (0.55, false)),
                step(4, Some([(0.9, true), (0.3, false)]), (0.6, true)),
                step(5, Some([(0.1, false), (1.0 / 3.0, false)]), (0.2, false)),
                step(6, Some([(0.1, false), (0.7, true)]), (0.4, false)),
            ],
            calibration: None,
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            header(&["T30".into()]).join(","),
            "t,phase,T30_hi,T30_bound,T30_over,joint_hi,joint_bound,joint_over,alarm_triggers"
        );
    }

    #[test]
    fn csv_round_trip_and_summary() {
        let log = sample_log();
        let mut buf = Vec::new();
        write_runlog_csv(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(4).unwrap().ends_with(",a;joint"));
        let table = read_runlog_csv(buf.as_slice()).unwrap();
        assert_eq!(table.sensors, vec!["a", "b"]);
        assert_eq!(table.rows[4].sensors[1].unwrap().hi, 1.0 / 3.0);
        let s = table.summarize();
        assert_eq!(s.burn_in_steps, 1);
        assert_eq!(s.evaluated_steps, 5);
        assert_eq!(
            s.first_crossings,
            vec![
                ("a".to_string(), Some(3)),
                ("b".to_string(), Some(6)),
                ("joint".to_string(), Some(4))
            ]
        );
        assert_eq!(
            s.alarm_spans,
            vec![
                AlarmSpan {
                    start: 3,
                    end: 4,
                    steps: 2
                },
                AlarmSpan {
                    start: 6,
                    end: 6,
                    steps: 1
                }
            ]
        );
    }

    #[test]
    fn malformed_rows() {
        let good = "t,phase,a_hi,a_bound,a_over,joint_hi,joint_bound,joint_over,alarm_triggers\n";
        assert!(read_runlog_csv(format!("{good}1,burn_in,,,,,,,\n").as_bytes()).is_ok());
        assert!(matches!(
            read_runlog_csv(format!("{good}x,burn_in,,,,,,,\n").as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_runlog_csv(format!("{good}1,inference,0.1,1,2,0.1,1,0,\n").as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(read_runlog_csv("t,phase,foo\n".as_bytes()).is_err());
    }

    #[test]
    fn events_csv() {
        let a = AlarmEvent {
            t: 9,
            triggers: vec!["x".into(), "joint".into()],
        };
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &[&a]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,triggers\n9,x;joint\n");
        assert_eq!(alarm_json_line(&a), r#"{"t":9,"triggers":["x","joint"]}"#);
    }
}
