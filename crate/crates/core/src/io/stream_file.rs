//! Binary timestamp files.
//!
//! Layout, little-endian: magic `PTS1`, `u16` version, `u8` channel,
//! `u32` slot period (ps), `u64` event count, `u64` seed, then `count`
//! `u64` timestamps in non-decreasing order.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::coincidence::{ClockInfo, TimestampStream};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PTS1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 27;
const COUNT_OFFSET: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFileHeader {
    pub version: u16,
    pub channel: u8,
    pub slot_period_ps: u32,
    pub count: u64,
    pub seed: u64,
}

impl StreamFileHeader {
    pub fn new(channel: u8, slot_period_ps: u32, count: u64, seed: u64) -> Self {
        Self {
            version: VERSION,
            channel,
            slot_period_ps,
            count,
            seed,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6] = self.channel;
        b[7..11].copy_from_slice(&self.slot_period_ps.to_le_bytes());
        b[11..19].copy_from_slice(&self.count.to_le_bytes());
        b[19..27].copy_from_slice(&self.seed.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        let magic: [u8; 4] = b[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        Ok(Self {
            version,
            channel: b[6],
            slot_period_ps: u32::from_le_bytes(b[7..11].try_into().expect("4 bytes")),
            count: u64::from_le_bytes(b[11..19].try_into().expect("8 bytes")),
            seed: u64::from_le_bytes(b[19..27].try_into().expect("8 bytes")),
        })
    }
}

/// Incremental writer. The event count in the header is patched on
/// [`StreamWriter::finish`].
pub struct StreamWriter<W: Write + Seek> {
    inner: W,
    header: StreamFileHeader,
    written: u64,
    last: Option<u64>,
}

impl<W: Write + Seek> StreamWriter<W> {
    pub fn new(mut inner: W, channel: u8, slot_period_ps: u32, seed: u64) -> Result<Self> {
        let header = StreamFileHeader::new(channel, slot_period_ps, 0, seed);
        inner.write_all(&header.to_bytes())?;
        Ok(Self {
            inner,
            header,
            written: 0,
            last: None,
        })
    }

    pub fn push(&mut self, t_ps: u64) -> Result<()> {
        if self.last.is_some_and(|l| t_ps < l) {
            return Err(Error::NonMonotone {
                index: self.written,
            });
        }
        self.inner.write_all(&t_ps.to_le_bytes())?;
        self.last = Some(t_ps);
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.header.count = self.written;
        self.inner.seek(SeekFrom::Start(COUNT_OFFSET))?;
        self.inner.write_all(&self.written.to_le_bytes())?;
        self.inner.seek(SeekFrom::End(0))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming reader yielding timestamps one at a time in constant memory.
///
/// Fails on a payload shorter or longer than the header count and on a
/// decreasing timestamp.
pub struct StreamReader<R: Read> {
    inner: R,
    header: StreamFileHeader,
    read: u64,
    last: Option<u64>,
    done: bool,
}

impl<R: Read> StreamReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut b = [0u8; HEADER_LEN];
        inner.read_exact(&mut b).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::Truncated {
                expected: 0,
                found: 0,
            },
            _ => Error::Io(e),
        })?;
        let header = StreamFileHeader::from_bytes(&b)?;
        Ok(Self {
            inner,
            header,
            read: 0,
            last: None,
            done: false,
        })
    }

    pub fn header(&self) -> &StreamFileHeader {
        &self.header
    }

    pub fn clock(&self) -> ClockInfo {
        ClockInfo::new(self.header.slot_period_ps as u64)
    }

    fn next_value(&mut self) -> Result<Option<u64>> {
        if self.read == self.header.count {
            let mut extra = [0u8; 8];
            let mut extra_bytes = 0u64;
            loop {
                match self.inner.read(&mut extra) {
                    Ok(0) => break,
                    Ok(n) => extra_bytes += n as u64,
                    Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                    Err(e) => return Err(e.into()),
                }
            }
            if extra_bytes > 0 {
                return Err(Error::Truncated {
                    expected: self.header.count,
                    found: self.header.count + extra_bytes.div_ceil(8),
                });
            }
            return Ok(None);
        }
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::Truncated {
                expected: self.header.count,
                found: self.read,
            },
            _ => Error::Io(e),
        })?;
        let t = u64::from_le_bytes(b);
        if self.last.is_some_and(|l| t < l) {
            return Err(Error::NonMonotone { index: self.read });
        }
        self.last = Some(t);
        self.read += 1;
        Ok(Some(t))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<u64>;

    fn next(&mut self) -> Option<Result<u64>> {
        if self.done {
            return None;
        }
        match self.next_value() {
            Ok(Some(t)) => Some(Ok(t)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn open_stream(path: &Path) -> Result<StreamReader<BufReader<File>>> {
    StreamReader::new(BufReader::with_capacity(1 << 20, File::open(path)?))
}

pub fn write_stream(path: &Path, stream: &TimestampStream, seed: u64) -> Result<()> {
    let period = u32::try_from(stream.clock().slot_period_ps).map_err(|_| {
        Error::out_of_range(
            "slot_period_ps",
            stream.clock().slot_period_ps as f64,
            "< 2^32",
        )
    })?;
    let mut w = StreamWriter::new(
        BufWriter::with_capacity(1 << 20, File::create(path)?),
        stream.channel(),
        period,
        seed,
    )?;
    for &t in stream.times() {
        w.push(t)?;
    }
    w.finish()?;
    Ok(())
}

/// Reads a whole file. Timestamps are taken relative to a zero origin.
pub fn read_stream(path: &Path) -> Result<(StreamFileHeader, TimestampStream)> {
    let reader = open_stream(path)?;
    let header = *reader.header();
    let clock = reader.clock();
    if clock.slot_period_ps == 0 {
        return Err(Error::out_of_range(
            "slot_period_ps",
            0.0,
            "slot_period_ps > 0",
        ));
    }
    let times = reader.collect::<Result<Vec<u64>>>()?;
    Ok((header, TimestampStream::new(header.channel, clock, times)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn encode(times: &[u64], count: u64) -> Vec<u8> {
        let mut v = StreamFileHeader::new(1, 200, count, 42).to_bytes().to_vec();
        for t in times {
            v.extend_from_slice(&t.to_le_bytes());
        }
        v
    }

    #[test]
    fn header_layout() {
        let b = StreamFileHeader::new(1, 200, 3, 7).to_bytes();
        assert_eq!(&b[0..4], b"PTS1");
        assert_eq!(b.len(), 27);
        assert_eq!(b[6], 1);
        assert_eq!(u64::from_le_bytes(b[11..19].try_into().unwrap()), 3);
    }

    #[test]
    fn writer_patches_count() {
        let mut w = StreamWriter::new(Cursor::new(Vec::new()), 0, 200, 9).unwrap();
        for t in [1, 2, 2, 10] {
            w.push(t).unwrap();
        }
        let bytes = w.finish().unwrap().into_inner();
        let r = StreamReader::new(Cursor::new(bytes)).unwrap();
        assert_eq!(r.header().count, 4);
        assert_eq!(r.collect::<Result<Vec<_>>>().unwrap(), vec![1, 2, 2, 10]);
    }

    #[test]
    fn truncation_and_trailing_data() {
        let short = encode(&[1, 2], 3);
        let err = StreamReader::new(Cursor::new(short))
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        assert!(matches!(
            err,
            Error::Truncated {
                expected: 3,
                found: 2
            }
        ));
        let long = encode(&[1, 2, 3], 2);
        let err = StreamReader::new(Cursor::new(long))
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        assert!(matches!(
            err,
            Error::Truncated {
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn rejects_bad_header_and_order() {
        let mut bad = encode(&[], 0);
        bad[0] = b'X';
        assert!(matches!(
            StreamReader::new(Cursor::new(bad)),
            Err(Error::BadMagic(_))
        ));
        let mut v2 = encode(&[], 0);
        v2[4] = 2;
        assert!(matches!(
            StreamReader::new(Cursor::new(v2)),
            Err(Error::UnsupportedVersion(2))
        ));
        let err = StreamReader::new(Cursor::new(encode(&[5, 7, 6], 3)))
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        assert!(matches!(err, Error::NonMonotone { index: 2 }));
        assert_eq!(err.class().exit_code(), 3);
    }

    proptest! {
        #[test]
        fn round_trip(mut times in prop::collection::vec(any::<u64>(), 0..500), seed in any::<u64>()) {
            times.sort_unstable();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.pts");
            let s = TimestampStream::new(1, ClockInfo::new(200), times).unwrap();
            write_stream(&path, &s, seed).unwrap();
            let (h, back) = read_stream(&path).unwrap();
            prop_assert_eq!(h.seed, seed);
            prop_assert_eq!(back.times(), s.times());
            prop_assert_eq!(back.channel(), 1);
        }
    }
}
