//! Versioned binary artifacts: a four-byte magic, a `u16` version and a bincode body.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::FrameAnalysis;
use crate::cluster::ClusterSet;
use crate::error::{Error, Result};
use crate::features::TemplateBank;
use crate::model::EnsembleModel;

pub const ANALYSES_MAGIC: [u8; 4] = *b"PDAN";
pub const CLUSTERS_MAGIC: [u8; 4] = *b"PDCL";
pub const MODEL_MAGIC: [u8; 4] = *b"PDGB";
pub const ARTIFACT_VERSION: u16 = 1;

fn codec(e: bincode::ErrorKind) -> Error {
    match e {
        bincode::ErrorKind::Io(io) => Error::from(io),
        other => Error::Parse(other.to_string()),
    }
}

fn write_header<W: Write>(w: &mut W, magic: [u8; 4]) -> Result<()> {
    w.write_all(&magic)?;
    w.write_all(&ARTIFACT_VERSION.to_le_bytes())?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: [u8; 4]) -> Result<()> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head)
        .map_err(|_| Error::Truncated { frame: 0 })?;
    let found = [head[0], head[1], head[2], head[3]];
    if found != magic {
        return Err(Error::BadMagic {
            found,
            expected: magic,
        });
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != ARTIFACT_VERSION {
        return Err(Error::BadVersion(version));
    }
    Ok(())
}

pub fn write_artifact<T: Serialize>(
    path: impl AsRef<Path>,
    magic: [u8; 4],
    value: &T,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, magic)?;
    bincode::serialize_into(&mut w, value).map_err(|e| codec(*e))?;
    w.flush()?;
    Ok(())
}

pub fn read_artifact<T: DeserializeOwned>(path: impl AsRef<Path>, magic: [u8; 4]) -> Result<T> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r, magic)?;
    bincode::deserialize_from(&mut r).map_err(|e| codec(*e))
}

/// Fitted cluster models and the template bank derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub clusters: ClusterSet,
    pub templates: TemplateBank,
    /// All-phase cluster ids the templates were taken from.
    pub template_clusters: Vec<usize>,
}

pub fn save_clusters(path: impl AsRef<Path>, a: &ClusterArtifact) -> Result<()> {
    write_artifact(path, CLUSTERS_MAGIC, a)
}

pub fn load_clusters(path: impl AsRef<Path>) -> Result<ClusterArtifact> {
    read_artifact(path, CLUSTERS_MAGIC)
}

pub fn save_model(path: impl AsRef<Path>, m: &EnsembleModel) -> Result<()> {
    write_artifact(path, MODEL_MAGIC, m)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EnsembleModel> {
    read_artifact(path, MODEL_MAGIC)
}

/// Streams frame analyses, each as a length-prefixed record.
pub struct AnalysisWriter<W: Write> {
    inner: W,
}

impl AnalysisWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        AnalysisWriter::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> AnalysisWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        write_header(&mut inner, ANALYSES_MAGIC)?;
        Ok(AnalysisWriter { inner })
    }

    pub fn write(&mut self, a: &FrameAnalysis) -> Result<()> {
        let body = bincode::serialize(a).map_err(|e| codec(*e))?;
        self.inner.write_all(&(body.len() as u64).to_le_bytes())?;
        self.inner.write_all(&body)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct AnalysisReader<R: Read> {
    inner: R,
    index: usize,
    done: bool,
}

impl AnalysisReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        AnalysisReader::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> AnalysisReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        read_header(&mut inner, ANALYSES_MAGIC)?;
        Ok(AnalysisReader {
            inner,
            index: 0,
            done: false,
        })
    }

    fn read_one(&mut self) -> Result<Option<FrameAnalysis>> {
        let mut len = [0u8; 8];
        let mut got = 0;
        while got < 8 {
            let n = self.inner.read(&mut len[got..])?;
            if n == 0 {
                return if got == 0 {
                    Ok(None)
                } else {
                    Err(Error::Truncated { frame: self.index })
                };
            }
            got += n;
        }
        let mut body = vec![0u8; u64::from_le_bytes(len) as usize];
        self.inner
            .read_exact(&mut body)
            .map_err(|_| Error::Truncated { frame: self.index })?;
        bincode::deserialize(&body).map(Some).map_err(|e| codec(*e))
    }
}

impl<R: Read> Iterator for AnalysisReader<R> {
    type Item = Result<FrameAnalysis>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let r = self.read_one().transpose();
        self.index += 1;
        if !matches!(r, Some(Ok(_))) {
            self.done = true;
        }
        r
    }
}

pub fn write_analyses(path: impl AsRef<Path>, analyses: &[FrameAnalysis]) -> Result<()> {
    let mut w = AnalysisWriter::create(path)?;
    for a in analyses {
        w.write(a)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_analyses(path: impl AsRef<Path>) -> Result<Vec<FrameAnalysis>> {
    AnalysisReader::open(path)?.collect()
}
