//! QTT1 binary time-tag files.
//!
//! Little-endian. A 16-byte header (`QTT1`, format version u32, record count
//! u64) is followed by 16-byte records: timestamp u64 (ps), channel u8,
//! flags u8 (zero), six reserved zero bytes.

use std::io::{Read, Write};

use crate::engine::TimeTag;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"QTT1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 16;
pub const RECORD_LEN: u64 = 16;

pub fn write_tags<W: Write>(tags: &[TimeTag], mut out: W) -> Result<()> {
    let mut header = [0u8; HEADER_LEN as usize];
    header[..4].copy_from_slice(&MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..].copy_from_slice(&(tags.len() as u64).to_le_bytes());
    out.write_all(&header)?;
    let mut rec = [0u8; RECORD_LEN as usize];
    for t in tags {
        rec[..8].copy_from_slice(&t.timestamp.to_le_bytes());
        rec[8] = t.channel;
        out.write_all(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn format_err(offset: u64, reason: impl Into<String>) -> Error {
    Error::Format { offset, reason: reason.into() }
}

/// Reads exactly `buf.len()` bytes or reports where the data ran out.
fn fill<R: Read>(input: &mut R, buf: &mut [u8], offset: u64, what: &str) -> Result<()> {
    let mut got = 0;
    while got < buf.len() {
        match input.read(&mut buf[got..]) {
            Ok(0) => return Err(format_err(offset + got as u64, format!("truncated {what}"))),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

pub fn read_tags<R: Read>(mut input: R) -> Result<Vec<TimeTag>> {
    let mut header = [0u8; HEADER_LEN as usize];
    fill(&mut input, &mut header, 0, "header")?;
    if header[..4] != MAGIC {
        return Err(format_err(0, "bad magic, expected QTT1"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(header[8..].try_into().unwrap());

    let mut tags = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut rec = [0u8; RECORD_LEN as usize];
    let mut prev = 0u64;
    for i in 0..count {
        let offset = HEADER_LEN + i * RECORD_LEN;
        fill(&mut input, &mut rec, offset, &format!("record {i} of {count}"))?;
        let timestamp = u64::from_le_bytes(rec[..8].try_into().unwrap());
        let channel = rec[8];
        if channel > 1 {
            return Err(format_err(offset + 8, format!("channel {channel} out of range")));
        }
        if rec[9] != 0 {
            return Err(format_err(offset + 9, "nonzero flags"));
        }
        if let Some(k) = rec[10..].iter().position(|&b| b != 0) {
            return Err(format_err(offset + 10 + k as u64, "nonzero reserved byte"));
        }
        if timestamp < prev {
            return Err(format_err(offset, "timestamps not sorted"));
        }
        prev = timestamp;
        tags.push(TimeTag::new(channel, timestamp));
    }
    let mut extra = [0u8; 1];
    if input.read(&mut extra)? != 0 {
        return Err(format_err(HEADER_LEN + count * RECORD_LEN, "trailing bytes after last record"));
    }
    Ok(tags)
}
