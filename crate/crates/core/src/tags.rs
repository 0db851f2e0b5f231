//! Detector time tags and the PTG1 binary container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PTG1"
//!      4     2  version (1)
//!      6     8  resolution_ps
//!     14     8  record_count
//!     22  16·n  records: time_ticks u64, channel u8, 7 reserved zero bytes
//! ```

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PTG1_MAGIC: &[u8; 4] = b"PTG1";
pub const PTG1_VERSION: u16 = 1;
pub const PTG1_HEADER_LEN: usize = 22;
pub const PTG1_RECORD_LEN: usize = 16;

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TagRecord {
    pub time_ticks: u64,
    pub channel: u8,
}

impl TagRecord {
    pub fn new(time_ticks: u64, channel: u8) -> Self {
        Self {
            time_ticks,
            channel,
        }
    }
}

/// Provenance carried alongside an in-memory stream. Not part of the file format.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub seed: Option<u64>,
    pub specs_digest: Option<String>,
}

/// Time-ordered detector clicks on channels 0 and 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeTagStream {
    pub records: Vec<TagRecord>,
    pub resolution_ps: u64,
    pub metadata: StreamMetadata,
}

impl TimeTagStream {
    /// Sorts the records and wraps them at 1 ps resolution.
    pub fn from_unsorted(mut records: Vec<TagRecord>) -> Self {
        records.sort_unstable();
        Self {
            records,
            resolution_ps: 1,
            metadata: StreamMetadata::default(),
        }
    }

    /// Wraps records that must already be sorted.
    pub fn from_sorted(records: Vec<TagRecord>) -> Result<Self> {
        let s = Self {
            records,
            resolution_ps: 1,
            metadata: StreamMetadata::default(),
        };
        s.check_invariants()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (i, w) in self.records.windows(2).enumerate() {
            if w[1].time_ticks < w[0].time_ticks {
                return Err(Error::contract(format!(
                    "tag stream not time-sorted at record {}",
                    i + 1
                )));
            }
        }
        if let Some(r) = self.records.iter().find(|r| r.channel > 1) {
            return Err(Error::contract(format!("invalid channel {}", r.channel)));
        }
        Ok(())
    }

    /// Times of one channel, in stream order.
    pub fn channel_times(&self, channel: u8) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.channel == channel)
            .map(|r| r.time_ticks)
            .collect()
    }

    pub fn count_channel(&self, channel: u8) -> usize {
        self.records.iter().filter(|r| r.channel == channel).count()
    }

    pub fn write_ptg1<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(PTG1_MAGIC)?;
        w.write_all(&PTG1_VERSION.to_le_bytes())?;
        w.write_all(&self.resolution_ps.to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        let mut rec = [0u8; PTG1_RECORD_LEN];
        for r in &self.records {
            rec[..8].copy_from_slice(&r.time_ticks.to_le_bytes());
            rec[8] = r.channel;
            w.write_all(&rec)?;
        }
        Ok(())
    }

    pub fn to_ptg1_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PTG1_HEADER_LEN + PTG1_RECORD_LEN * self.records.len());
        self.write_ptg1(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    /// Parses a PTG1 buffer, rejecting truncation, trailing bytes, bad channels,
    /// non-zero reserved bytes and unsorted records with the offending byte offset.
    pub fn from_ptg1_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: usize, message: String| Error::Format {
            offset: offset as u64,
            message,
        };
        if bytes.len() < PTG1_HEADER_LEN {
            return Err(fmt(
                bytes.len(),
                format!(
                    "truncated header: {} of {PTG1_HEADER_LEN} bytes",
                    bytes.len()
                ),
            ));
        }
        if &bytes[0..4] != PTG1_MAGIC {
            return Err(fmt(0, "bad magic, expected \"PTG1\"".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != PTG1_VERSION {
            return Err(fmt(4, format!("unsupported version {version}")));
        }
        let resolution_ps = u64_at(6);
        if resolution_ps == 0 {
            return Err(fmt(6, "resolution_ps must be non-zero".into()));
        }
        let count = u64_at(14);
        let body = bytes.len() - PTG1_HEADER_LEN;
        let expected = (count as u128) * PTG1_RECORD_LEN as u128;
        if (body as u128) < expected {
            let complete = body / PTG1_RECORD_LEN;
            return Err(fmt(
                PTG1_HEADER_LEN + complete * PTG1_RECORD_LEN,
                format!("truncated: header declares {count} records, file holds {complete}"),
            ));
        }
        if (body as u128) > expected {
            return Err(fmt(
                PTG1_HEADER_LEN + expected as usize,
                format!(
                    "{} trailing bytes after the last record",
                    body as u128 - expected
                ),
            ));
        }
        let mut records = Vec::with_capacity(count as usize);
        let mut prev = 0u64;
        for i in 0..count as usize {
            let o = PTG1_HEADER_LEN + i * PTG1_RECORD_LEN;
            let time_ticks = u64_at(o);
            let channel = bytes[o + 8];
            if channel > 1 {
                return Err(fmt(
                    o + 8,
                    format!("record {i}: channel {channel} not in {{0, 1}}"),
                ));
            }
            if let Some(p) = bytes[o + 9..o + 16].iter().position(|&b| b != 0) {
                return Err(fmt(
                    o + 9 + p,
                    format!("record {i}: reserved byte is non-zero"),
                ));
            }
            if time_ticks < prev {
                return Err(fmt(
                    o,
                    format!("record {i}: time {time_ticks} precedes previous {prev}"),
                ));
            }
            prev = time_ticks;
            records.push(TagRecord {
                time_ticks,
                channel,
            });
        }
        Ok(Self {
            records,
            resolution_ps,
            metadata: StreamMetadata::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TimeTagStream {
        TimeTagStream::from_unsorted(vec![
            TagRecord::new(30, 1),
            TagRecord::new(5, 0),
            TagRecord::new(30, 0),
            TagRecord::new(1 << 40, 1),
        ])
    }

    #[test]
    fn header_layout() {
        let b = sample().to_ptg1_bytes();
        assert_eq!(&b[0..4], b"PTG1");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(u64::from_le_bytes(b[6..14].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[14..22].try_into().unwrap()), 4);
        assert_eq!(b.len(), 22 + 4 * 16);
        assert_eq!(u64::from_le_bytes(b[22..30].try_into().unwrap()), 5);
        assert_eq!(b[30], 0);
        assert!(b[31..38].iter().all(|&x| x == 0));
    }

    #[test]
    fn empty_stream() {
        let s = TimeTagStream::from_unsorted(vec![]);
        let b = s.to_ptg1_bytes();
        assert_eq!(b.len(), PTG1_HEADER_LEN);
        assert!(TimeTagStream::from_ptg1_bytes(&b).unwrap().is_empty());
    }

    fn offset_of(e: Error) -> u64 {
        match e {
            Error::Format { offset, .. } => offset,
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncation_with_offset() {
        let b = sample().to_ptg1_bytes();
        assert_eq!(
            offset_of(TimeTagStream::from_ptg1_bytes(&b[..10]).unwrap_err()),
            10
        );
        let cut = &b[..22 + 16 * 2 + 5];
        assert_eq!(
            offset_of(TimeTagStream::from_ptg1_bytes(cut).unwrap_err()),
            54
        );
        let mut long = b.clone();
        long.push(0);
        assert_eq!(
            offset_of(TimeTagStream::from_ptg1_bytes(&long).unwrap_err()),
            86
        );
    }

    #[test]
    fn rejects_unsorted_and_garbage() {
        let mut b = sample().to_ptg1_bytes();
        // Record 2 time → 1, before record 1 (t = 30).
        b[22 + 32..22 + 40].copy_from_slice(&1u64.to_le_bytes());
        assert_eq!(
            offset_of(TimeTagStream::from_ptg1_bytes(&b).unwrap_err()),
            54
        );

        let mut b = sample().to_ptg1_bytes();
        b[22 + 8] = 2;
        assert_eq!(
            offset_of(TimeTagStream::from_ptg1_bytes(&b).unwrap_err()),
            30
        );

        let mut b = sample().to_ptg1_bytes();
        b[22 + 16 + 12] = 9;
        assert_eq!(
            offset_of(TimeTagStream::from_ptg1_bytes(&b).unwrap_err()),
            50
        );

        let mut b = sample().to_ptg1_bytes();
        b[0] = b'X';
        assert_eq!(
            offset_of(TimeTagStream::from_ptg1_bytes(&b).unwrap_err()),
            0
        );
    }

    proptest! {
        #[test]
        fn ptg1_round_trip(raw in proptest::collection::vec((any::<u64>(), 0u8..2), 0..200)) {
            let s = TimeTagStream::from_unsorted(
                raw.into_iter().map(|(t, c)| TagRecord::new(t, c)).collect(),
            );
            let back = TimeTagStream::from_ptg1_bytes(&s.to_ptg1_bytes()).unwrap();
            prop_assert_eq!(back.records, s.records);
        }
    }
}
