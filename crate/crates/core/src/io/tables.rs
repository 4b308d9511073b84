//! CSV tables and JSON-lines sidecars exchanged between pipeline stages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::FrameAnalysis;
use crate::error::{Error, Result};
use crate::metrics::SweepRow;
use crate::model::Dataset;

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn fmt_label(l: Option<u8>) -> String {
    l.map_or_else(String::new, |v| v.to_string())
}

/// Feature table: `id,label,<features...>`; an empty label means unknown.
pub fn write_features<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend(data.names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for ((id, row), label) in data.ids.iter().zip(&data.rows).zip(&data.labels) {
        let mut rec = vec![id.clone(), fmt_label(*label)];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("id") || header.get(1) != Some("label") {
        return Err(Error::Parse(
            "feature table must start with id,label".into(),
        ));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut data = Dataset {
        names,
        ids: Vec::new(),
        rows: Vec::new(),
        labels: Vec::new(),
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        data.ids.push(rec[0].to_string());
        data.labels.push(match rec[1].trim() {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(Error::Parse(format!("row {}: label {other:?}", line + 1))),
        });
        let row = rec
            .iter()
            .skip(2)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: bad value {v:?}", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        data.rows.push(row);
    }
    Ok(data)
}

/// One line per detected pulse.
pub fn write_pulses<W: Write>(out: W, analyses: &[FrameAnalysis]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "frame_id",
        "phase",
        "index",
        "amplitude",
        "quadrant",
        "noise_level",
    ])
    .map_err(csv_err)?;
    for a in analyses {
        for p in &a.phases {
            for r in &p.pulses {
                w.write_record(&[
                    a.id.clone(),
                    p.phase.name().to_string(),
                    r.pulse.index.to_string(),
                    format!("{:?}", r.pulse.amplitude),
                    r.pulse.quadrant.to_string(),
                    format!("{:?}", p.noise_level),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probability: f64,
    pub decision: u8,
    /// Known label, if any.
    pub label: Option<u8>,
}

pub fn write_predictions<W: Write>(out: W, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in preds {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions<R: Read>(input: R) -> Result<Vec<Prediction>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_importance<W: Write>(out: W, gains: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "gain"]).map_err(csv_err)?;
    for (name, g) in gains {
        w.write_record(&[name.clone(), format!("{g:?}")])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-frame record of the phase-correction stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub id: String,
    pub phase_shifts: Vec<i64>,
    pub noise_levels: Vec<f64>,
}

pub fn write_jsonl<T: Serialize, W: Write>(
    out: W,
    items: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = BufWriter::new(out);
    for it in items {
        serde_json::to_writer(&mut w, &it).map_err(|e| Error::Parse(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_table_round_trip() {
        let d = Dataset {
            names: vec!["a".into(), "b".into()],
            ids: vec!["1".into(), "2".into()],
            rows: vec![vec![0.1, -1.0], vec![1e-300, 3.0]],
            labels: vec![Some(1), None],
        };
        let mut buf = Vec::new();
        write_features(&mut buf, &d).unwrap();
        assert_eq!(read_features(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn predictions_round_trip() {
        let p = vec![
            Prediction {
                id: "9".into(),
                probability: 0.25,
                decision: 0,
                label: Some(1),
            },
            Prediction {
                id: "10".into(),
                probability: 0.75,
                decision: 1,
                label: None,
            },
        ];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &p).unwrap();
        assert_eq!(read_predictions(buf.as_slice()).unwrap(), p);
    }
}
