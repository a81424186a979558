//! Trial files. `.awt` holds the frame stream verbatim; `.jsonl` holds one
//! record per line: the header, then cycles and flags in stream order, then
//! the end marker.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::frame::{write_frame, Message, TrialHeader};
use super::stream::{receive_trial, trial_messages};
use super::TelemetryError;
use crate::model::{ExperimentLog, Flag, RangingCycle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialFormat {
    Binary,
    JsonLines,
}

impl TrialFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TrialFormat::Binary => "awt",
            TrialFormat::JsonLines => "jsonl",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "awt" => Some(TrialFormat::Binary),
            "jsonl" => Some(TrialFormat::JsonLines),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(TrialHeader),
    Cycle(RangingCycle),
    Flag(Flag),
    End { cycles: u32 },
}

pub fn write_binary<W: Write>(log: &ExperimentLog, w: W) -> Result<(), TelemetryError> {
    let mut w = BufWriter::new(w);
    for m in trial_messages(log) {
        write_frame(&mut w, &m.to_frame())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(r: R) -> Result<ExperimentLog, TelemetryError> {
    receive_trial(r)
}

pub fn write_jsonl<W: Write>(log: &ExperimentLog, w: W) -> Result<(), TelemetryError> {
    let mut w = BufWriter::new(w);
    for m in trial_messages(log) {
        let rec = match m {
            Message::Hello(h) => Record::Header(*h.expect("trial messages carry a header")),
            Message::Cycle(c) => Record::Cycle(c),
            Message::Flag(f) => Record::Flag(f),
            Message::EndOfTrial { cycles } => Record::End { cycles },
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| TelemetryError::Malformed(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: Read>(r: R) -> Result<ExperimentLog, TelemetryError> {
    let mut log: Option<ExperimentLog> = None;
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| TelemetryError::Malformed(format!("line {}: {e}", i + 1)))?;
        match (rec, log.as_mut()) {
            (Record::Header(h), None) => log = Some(h.into_log()),
            (Record::Header(_), Some(_)) => {
                return Err(TelemetryError::Malformed(format!("line {}: second header", i + 1)))
            }
            (_, None) => return Err(TelemetryError::Malformed(format!("line {}: record before header", i + 1))),
            (Record::Cycle(c), Some(l)) => l.cycles.push(c),
            (Record::Flag(f), Some(l)) => l.flags.push(f),
            (Record::End { cycles }, Some(l)) => {
                if cycles as usize != l.cycles.len() {
                    return Err(TelemetryError::Malformed(format!(
                        "line {}: end announces {cycles} cycles, found {}",
                        i + 1,
                        l.cycles.len()
                    )));
                }
                return Ok(log.expect("header seen"));
            }
        }
    }
    Err(TelemetryError::Malformed("missing end record".into()))
}

pub fn save_log(path: &Path, log: &ExperimentLog) -> Result<(), TelemetryError> {
    let format = TrialFormat::from_path(path)
        .ok_or_else(|| TelemetryError::Malformed(format!("{}: expected a .awt or .jsonl file", path.display())))?;
    let f = File::create(path)?;
    match format {
        TrialFormat::Binary => write_binary(log, f),
        TrialFormat::JsonLines => write_jsonl(log, f),
    }
}

pub fn load_log(path: &Path) -> Result<ExperimentLog, TelemetryError> {
    let format = TrialFormat::from_path(path)
        .ok_or_else(|| TelemetryError::Malformed(format!("{}: expected a .awt or .jsonl file", path.display())))?;
    let f = File::open(path)?;
    match format {
        TrialFormat::Binary => read_binary(f),
        TrialFormat::JsonLines => read_jsonl(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlagKind, SensorGeometry};
    use crate::scene::ScenePlan;

    fn log() -> ExperimentLog {
        ExperimentLog {
            geometry: SensorGeometry::prototype(),
            scene: ScenePlan::flat(0.8),
            seed: u64::MAX,
            acoustics: Some(Default::default()),
            cycles: vec![RangingCycle { t_ex_ms: 0.1 + 0.2, wheel_angle: -1e-300, samples: vec![0, 4095, 17] }],
            flags: vec![Flag { t_ex_ms: 1.0 / 3.0, kind: FlagKind::ContactEnd }],
        }
    }

    #[test]
    fn both_encodings_round_trip() {
        let l = log();
        let mut bin = Vec::new();
        write_binary(&l, &mut bin).unwrap();
        assert_eq!(read_binary(bin.as_slice()).unwrap(), l);
        let mut text = Vec::new();
        write_jsonl(&l, &mut text).unwrap();
        assert_eq!(read_jsonl(text.as_slice()).unwrap(), l);
        assert_eq!(String::from_utf8(text).unwrap().lines().count(), 4);
    }

    #[test]
    fn jsonl_errors_name_the_line() {
        let mut text = Vec::new();
        write_jsonl(&log(), &mut text).unwrap();
        let mut s = String::from_utf8(text).unwrap();
        s = s.replacen("\"cycle\"", "\"cycel\"", 1);
        let e = read_jsonl(s.as_bytes()).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(TrialFormat::from_path(Path::new("a/b.awt")), Some(TrialFormat::Binary));
        assert_eq!(TrialFormat::from_path(Path::new("b.jsonl")), Some(TrialFormat::JsonLines));
        assert_eq!(TrialFormat::from_path(Path::new("b.json")), None);
    }
}
