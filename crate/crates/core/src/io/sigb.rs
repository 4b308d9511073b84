//! `SIGB` container: a versioned, little-endian file of labelled three-phase int8 frames.
//!
//! Layout: `"SIGB"`, `u16` version, `u32` frame count, then per frame a `u16`
//! id length, the UTF-8 id, three label bytes (0, 1, or 255 for unknown) and
//! `3 * 800000` signed samples.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{SignalFrame, PHASE_COUNT, SAMPLES_PER_CYCLE};

pub const SIGB_MAGIC: [u8; 4] = *b"SIGB";
pub const SIGB_VERSION: u16 = 1;
const HEADER_LEN: u64 = 10;

fn label_byte(l: Option<bool>) -> u8 {
    match l {
        Some(false) => 0,
        Some(true) => 1,
        None => 255,
    }
}

fn byte_label(b: u8) -> Result<Option<bool>> {
    match b {
        0 => Ok(Some(false)),
        1 => Ok(Some(true)),
        255 => Ok(None),
        other => Err(Error::Parse(format!("invalid label byte {other}"))),
    }
}

/// Streams frames into a container; the frame count is patched on [`SigbWriter::finish`].
pub struct SigbWriter<W: Write + Seek> {
    inner: W,
    count: u32,
}

impl SigbWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        SigbWriter::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write + Seek> SigbWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        inner.write_all(&SIGB_MAGIC)?;
        inner.write_all(&SIGB_VERSION.to_le_bytes())?;
        inner.write_all(&0u32.to_le_bytes())?;
        Ok(SigbWriter { inner, count: 0 })
    }

    pub fn write_frame(&mut self, frame: &SignalFrame) -> Result<()> {
        crate::types::validate_frame(frame)?;
        let id = frame.id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::Parse(format!("frame id too long: {}", id.len())))?;
        self.inner.write_all(&id_len.to_le_bytes())?;
        self.inner.write_all(id)?;
        let labels = frame.labels.map(label_byte);
        self.inner.write_all(&labels)?;
        for phase in &frame.phases {
            let bytes: Vec<u8> = phase.iter().map(|&s| s as u8).collect();
            self.inner.write_all(&bytes)?;
        }
        self.count = self
            .count
            .checked_add(1)
            .ok_or_else(|| Error::Parse("too many frames".into()))?;
        Ok(())
    }

    /// Writes the final frame count and returns the underlying writer.
    pub fn finish(mut self) -> Result<W> {
        let end = self.inner.stream_position()?;
        self.inner.seek(SeekFrom::Start(6))?;
        self.inner.write_all(&self.count.to_le_bytes())?;
        self.inner.seek(SeekFrom::Start(end.max(HEADER_LEN)))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Reads frames one at a time.
pub struct SigbReader<R: Read> {
    inner: R,
    total: u32,
    next: u32,
}

impl SigbReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        SigbReader::new(BufReader::with_capacity(1 << 20, File::open(path)?))
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], frame: usize) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated { frame },
        _ => Error::from(e),
    })
}

impl<R: Read> SigbReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN as usize];
        inner.read_exact(&mut header).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated { frame: 0 },
            _ => Error::from(e),
        })?;
        let magic = [header[0], header[1], header[2], header[3]];
        if magic != SIGB_MAGIC {
            return Err(Error::BadMagic {
                found: magic,
                expected: SIGB_MAGIC,
            });
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != SIGB_VERSION {
            return Err(Error::BadVersion(version));
        }
        let total = u32::from_le_bytes([header[6], header[7], header[8], header[9]]);
        Ok(SigbReader {
            inner,
            total,
            next: 0,
        })
    }

    /// Frame count declared in the header.
    pub fn frame_count(&self) -> usize {
        self.total as usize
    }

    fn read_frame(&mut self) -> Result<SignalFrame> {
        let f = self.next as usize;
        let mut len = [0u8; 2];
        read_exact_or(&mut self.inner, &mut len, f)?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or(&mut self.inner, &mut id, f)?;
        let id = String::from_utf8(id)
            .map_err(|e| Error::Parse(format!("frame {f}: id is not UTF-8: {e}")))?;
        let mut labels = [0u8; 3];
        read_exact_or(&mut self.inner, &mut labels, f)?;
        let labels = [
            byte_label(labels[0])?,
            byte_label(labels[1])?,
            byte_label(labels[2])?,
        ];
        let mut phases = Vec::with_capacity(PHASE_COUNT);
        for _ in 0..PHASE_COUNT {
            let mut buf = vec![0u8; SAMPLES_PER_CYCLE];
            read_exact_or(&mut self.inner, &mut buf, f)?;
            phases.push(buf.into_iter().map(|b| b as i8).collect());
        }
        Ok(SignalFrame { id, phases, labels })
    }
}

impl<R: Read> Iterator for SigbReader<R> {
    type Item = Result<SignalFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.total {
            return None;
        }
        let r = self.read_frame();
        self.next += 1;
        if r.is_err() {
            self.next = self.total;
        }
        Some(r)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (0, Some(left))
    }
}

pub fn write_sigb(path: impl AsRef<Path>, frames: &[SignalFrame]) -> Result<()> {
    let mut w = SigbWriter::create(path)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_sigb(path: impl AsRef<Path>) -> Result<Vec<SignalFrame>> {
    SigbReader::open(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn frame(id: &str, seed: i8, labels: [Option<bool>; 3]) -> SignalFrame {
        let phases = (0..3)
            .map(|k| {
                (0..SAMPLES_PER_CYCLE)
                    .map(|i| (i as i64 * 7 + k * 13 + seed as i64) as i8)
                    .collect()
            })
            .collect();
        SignalFrame::new(id, phases, labels).unwrap()
    }

    fn encode(frames: &[SignalFrame]) -> Vec<u8> {
        let mut w = SigbWriter::new(Cursor::new(Vec::new())).unwrap();
        for f in frames {
            w.write_frame(f).unwrap();
        }
        w.finish().unwrap().into_inner()
    }

    #[test]
    fn round_trip_bytes_and_values() {
        let frames = vec![
            frame("a", 1, [Some(false); 3]),
            frame("ß-2", -5, [Some(true), None, Some(false)]),
            frame("", 0, [None; 3]),
        ];
        let bytes = encode(&frames);
        let back: Vec<SignalFrame> = SigbReader::new(Cursor::new(&bytes))
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(back, frames);
        assert_eq!(encode(&back), bytes);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode(&[]);
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            SigbReader::new(Cursor::new(&bytes)),
            Err(Error::BadMagic { .. })
        ));
        let mut bytes = encode(&[]);
        bytes[4] = 9;
        assert_eq!(
            SigbReader::new(Cursor::new(&bytes)).err(),
            Some(Error::BadVersion(9))
        );
    }

    #[test]
    fn truncation_reports_frame() {
        let bytes = encode(&[frame("a", 1, [None; 3]), frame("b", 2, [None; 3])]);
        let cut = &bytes[..bytes.len() - 1000];
        let r: Vec<Result<SignalFrame>> = SigbReader::new(Cursor::new(cut)).unwrap().collect();
        assert_eq!(r.len(), 2);
        assert!(r[0].is_ok());
        assert_eq!(r[1].clone().err(), Some(Error::Truncated { frame: 1 }));
    }
}
