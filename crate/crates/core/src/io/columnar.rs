//! Adapter for the public competition layout: a metadata CSV
//! (`signal_id,id_measurement,phase,target`) and a column-per-signal int8 matrix.
//!
//! Matrix file layout (`SIGM`, little-endian): magic, `u16` version, `u32`
//! column count, `u32` row count, one `u32` signal id per column, then the
//! columns back to back. Columns are read on demand so only one frame is held
//! in memory at a time.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{SignalFrame, PHASE_COUNT, SAMPLES_PER_CYCLE};

pub const SIGM_MAGIC: [u8; 4] = *b"SIGM";
pub const SIGM_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MetadataRow {
    pub signal_id: u32,
    pub measurement: u32,
    pub phase: usize,
    pub target: Option<bool>,
}

/// Parses the metadata CSV; a missing or empty `target` means unlabelled.
pub fn read_metadata<R: Read>(reader: R) -> Result<Vec<MetadataRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(sid), Some(mid), Some(ph)) = (col("signal_id"), col("id_measurement"), col("phase"))
    else {
        return Err(Error::Parse(
            "metadata needs signal_id, id_measurement and phase columns".into(),
        ));
    };
    let tgt = col("target");
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| {
            field(i).parse::<u32>().map_err(|_| {
                Error::Parse(format!(
                    "metadata row {}: bad integer {:?}",
                    line + 1,
                    field(i)
                ))
            })
        };
        let phase = num(ph)? as usize;
        if phase >= PHASE_COUNT {
            return Err(Error::Parse(format!(
                "metadata row {}: phase {phase}",
                line + 1
            )));
        }
        let target = match tgt.map(field) {
            None | Some("") => None,
            Some("0") => Some(false),
            Some("1") => Some(true),
            Some(other) => {
                return Err(Error::Parse(format!(
                    "metadata row {}: target {other:?}",
                    line + 1
                )))
            }
        };
        rows.push(MetadataRow {
            signal_id: num(sid)?,
            measurement: num(mid)?,
            phase,
            target,
        });
    }
    Ok(rows)
}

/// A measurement's signal ids and labels, indexed by phase.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGroup {
    pub measurement: u32,
    pub signals: [u32; 3],
    pub labels: [Option<bool>; 3],
}

/// Groups metadata rows into three-phase measurements, ordered by measurement id.
pub fn group_measurements(rows: &[MetadataRow]) -> Result<Vec<MeasurementGroup>> {
    let mut by_id: BTreeMap<u32, [Option<&MetadataRow>; 3]> = BTreeMap::new();
    for r in rows {
        let slot = &mut by_id.entry(r.measurement).or_default()[r.phase];
        if let Some(prev) = slot {
            if prev.target != r.target || prev.signal_id != r.signal_id {
                return Err(Error::LabelConflict(format!(
                    "measurement {} phase {} listed twice with different signals or targets",
                    r.measurement, r.phase
                )));
            }
        }
        *slot = Some(r);
    }
    by_id
        .into_iter()
        .map(|(m, slots)| {
            let mut signals = [0u32; 3];
            let mut labels = [None; 3];
            for (p, s) in slots.iter().enumerate() {
                let s = s.ok_or_else(|| {
                    Error::MissingPhase(format!("measurement {m} has no phase {p}"))
                })?;
                signals[p] = s.signal_id;
                labels[p] = s.target;
            }
            Ok(MeasurementGroup {
                measurement: m,
                signals,
                labels,
            })
        })
        .collect()
}

/// Random-access reader over a `SIGM` matrix.
pub struct ColumnMatrix<R: Read + Seek> {
    inner: R,
    rows: usize,
    data_start: u64,
    columns: BTreeMap<u32, usize>,
}

impl ColumnMatrix<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        ColumnMatrix::new(BufReader::with_capacity(1 << 20, File::open(path)?))
    }
}

impl<R: Read + Seek> ColumnMatrix<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut head = [0u8; 14];
        inner
            .read_exact(&mut head)
            .map_err(|_| Error::Truncated { frame: 0 })?;
        let magic = [head[0], head[1], head[2], head[3]];
        if magic != SIGM_MAGIC {
            return Err(Error::BadMagic {
                found: magic,
                expected: SIGM_MAGIC,
            });
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != SIGM_VERSION {
            return Err(Error::BadVersion(version));
        }
        let cols = u32::from_le_bytes(head[6..10].try_into().expect("4 bytes")) as usize;
        let rows = u32::from_le_bytes(head[10..14].try_into().expect("4 bytes")) as usize;
        let mut ids = vec![0u8; cols * 4];
        inner
            .read_exact(&mut ids)
            .map_err(|_| Error::Truncated { frame: 0 })?;
        let columns = ids
            .chunks_exact(4)
            .enumerate()
            .map(|(j, b)| (u32::from_le_bytes(b.try_into().expect("4 bytes")), j))
            .collect();
        Ok(ColumnMatrix {
            inner,
            rows,
            data_start: 14 + 4 * cols as u64,
            columns,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn contains(&self, signal_id: u32) -> bool {
        self.columns.contains_key(&signal_id)
    }

    pub fn column(&mut self, signal_id: u32) -> Result<Vec<i8>> {
        let j = *self
            .columns
            .get(&signal_id)
            .ok_or_else(|| Error::MissingPhase(format!("signal {signal_id} not in matrix")))?;
        self.inner
            .seek(SeekFrom::Start(self.data_start + (j * self.rows) as u64))?;
        let mut buf = vec![0u8; self.rows];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Truncated { frame: j })?;
        Ok(buf.into_iter().map(|b| b as i8).collect())
    }
}

/// Writes a `SIGM` matrix from `(signal_id, samples)` columns of equal length.
pub fn write_matrix<W: Write>(out: W, columns: &[(u32, Vec<i8>)]) -> Result<()> {
    let mut w = BufWriter::new(out);
    let rows = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != rows) {
        return Err(Error::Parse("matrix columns differ in length".into()));
    }
    w.write_all(&SIGM_MAGIC)?;
    w.write_all(&SIGM_VERSION.to_le_bytes())?;
    w.write_all(&(columns.len() as u32).to_le_bytes())?;
    w.write_all(&(rows as u32).to_le_bytes())?;
    for (id, _) in columns {
        w.write_all(&id.to_le_bytes())?;
    }
    for (_, c) in columns {
        let bytes: Vec<u8> = c.iter().map(|&s| s as u8).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

/// Frames assembled from metadata groups and a matrix, one at a time.
pub struct ColumnarFrames<R: Read + Seek> {
    matrix: ColumnMatrix<R>,
    groups: std::vec::IntoIter<MeasurementGroup>,
}

impl<R: Read + Seek> ColumnarFrames<R> {
    pub fn new(matrix: ColumnMatrix<R>, groups: Vec<MeasurementGroup>) -> Result<Self> {
        if matrix.rows() != SAMPLES_PER_CYCLE {
            return Err(Error::WrongLength {
                phase: 0,
                len: matrix.rows(),
                expected: SAMPLES_PER_CYCLE,
            });
        }
        for g in &groups {
            if let Some(s) = g.signals.iter().find(|&&s| !matrix.contains(s)) {
                return Err(Error::MissingPhase(format!(
                    "measurement {}: signal {s} not in matrix",
                    g.measurement
                )));
            }
        }
        Ok(ColumnarFrames {
            matrix,
            groups: groups.into_iter(),
        })
    }
}

impl<R: Read + Seek> Iterator for ColumnarFrames<R> {
    type Item = Result<SignalFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let g = self.groups.next()?;
        let mut phases = Vec::with_capacity(PHASE_COUNT);
        for s in g.signals {
            match self.matrix.column(s) {
                Ok(c) => phases.push(c),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(SignalFrame {
            id: g.measurement.to_string(),
            phases,
            labels: g.labels,
        }))
    }
}

/// Opens a metadata CSV and matrix as a frame stream.
pub fn open_columnar(
    metadata: impl AsRef<Path>,
    matrix: impl AsRef<Path>,
) -> Result<ColumnarFrames<BufReader<File>>> {
    let rows = read_metadata(File::open(metadata)?)?;
    let groups = group_measurements(&rows)?;
    ColumnarFrames::new(ColumnMatrix::open(matrix)?, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const META: &str = "signal_id,id_measurement,phase,target\n0,0,0,0\n1,0,1,1\n2,0,2,0\n";

    fn matrix(ids: &[u32], rows: usize) -> Vec<u8> {
        let cols: Vec<(u32, Vec<i8>)> = ids.iter().map(|&id| (id, vec![id as i8; rows])).collect();
        let mut out = Vec::new();
        write_matrix(&mut out, &cols).unwrap();
        out
    }

    #[test]
    fn toy_matrix_yields_one_frame() {
        let groups = group_measurements(&read_metadata(META.as_bytes()).unwrap()).unwrap();
        let m = ColumnMatrix::new(Cursor::new(matrix(&[2, 0, 1], SAMPLES_PER_CYCLE))).unwrap();
        let frames: Vec<SignalFrame> = ColumnarFrames::new(m, groups)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].labels, [Some(false), Some(true), Some(false)]);
        assert_eq!(frames[0].phases[2][0], 2);
        assert_eq!(frames[0].is_faulty(), Some(true));
    }

    #[test]
    fn missing_phase_and_conflict() {
        let two = "signal_id,id_measurement,phase\n0,5,0\n1,5,1\n";
        let e = group_measurements(&read_metadata(two.as_bytes()).unwrap()).unwrap_err();
        assert!(matches!(e, Error::MissingPhase(_)));
        let dup = format!("{META}0,0,0,1\n");
        let e = group_measurements(&read_metadata(dup.as_bytes()).unwrap()).unwrap_err();
        assert!(matches!(e, Error::LabelConflict(_)));
    }

    #[test]
    fn unlabelled_metadata() {
        let test_meta = "signal_id,id_measurement,phase\n9,3,2\n7,3,0\n8,3,1\n";
        let g = group_measurements(&read_metadata(test_meta.as_bytes()).unwrap()).unwrap();
        assert_eq!(g[0].signals, [7, 8, 9]);
        assert_eq!(g[0].labels, [None; 3]);
    }

    #[test]
    fn column_lookup() {
        let mut m = ColumnMatrix::new(Cursor::new(matrix(&[10, 11], 4))).unwrap();
        assert_eq!(m.column(11).unwrap(), vec![11; 4]);
        assert!(matches!(m.column(3), Err(Error::MissingPhase(_))));
    }
}
