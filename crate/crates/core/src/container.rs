//! Versioned binary container shared by model and basis files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   e.g. b"DRNNSEP1" — last byte is the major version
//! header_len u32
//! header     UTF-8 JSON, header_len bytes
//! n_blocks   u32
//! blocks     per block: len u64, then len f64 values (LE)
//! crc32      u32 of everything between the magic and the checksum
//! ```
//!
//! Minor-version evolution happens inside the header (new optional JSON
//! fields); readers ignore header fields they do not know, so any file
//! written under major version N loads under every later minor revision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Current minor revision of the container payload, recorded in headers.
pub const FORMAT_MINOR: u32 = 1;

pub fn write_container(
    path: &Path,
    magic: &[u8; 8],
    header: &str,
    blocks: &[&[f64]],
) -> Result<()> {
    let mut payload = Vec::new();
    payload.extend_from_slice(&(header.len() as u32).to_le_bytes());
    payload.extend_from_slice(header.as_bytes());
    payload.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for block in blocks {
        payload.extend_from_slice(&(block.len() as u64).to_le_bytes());
        for v in *block {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&payload);
    let crc = hasher.finalize();

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(magic)?;
    w.write_all(&payload)?;
    w.write_all(&crc.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads a container, verifying magic and checksum. Returns the header
/// string and the parameter blocks.
pub fn read_container(path: &Path, magic: &[u8; 8]) -> Result<(String, Vec<Vec<f64>>)> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?,
    );
    let mut found = [0u8; 8];
    r.read_exact(&mut found)
        .map_err(|_| Error::Format("file truncated before magic".into()))?;
    if &found != magic {
        return Err(Error::Format(format!(
            "bad magic: expected {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&found)
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() < 4 {
        return Err(Error::Format("file truncated before checksum".into()));
    }
    let crc_offset = payload.len() - 4;
    let stored_crc = u32::from_le_bytes(payload[crc_offset..].try_into().unwrap());
    let payload = &payload[..crc_offset];
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(payload);
    if hasher.finalize() != stored_crc {
        return Err(Error::Format("checksum mismatch".into()));
    }

    let mut cursor = 0usize;
    let header_len = read_u32(payload, &mut cursor)? as usize;
    if cursor + header_len > payload.len() {
        return Err(Error::Format("header extends past end of file".into()));
    }
    let header = std::str::from_utf8(&payload[cursor..cursor + header_len])
        .map_err(|_| Error::Format("header is not valid UTF-8".into()))?
        .to_string();
    cursor += header_len;

    let n_blocks = read_u32(payload, &mut cursor)? as usize;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let len = read_u64(payload, &mut cursor)? as usize;
        let bytes = len
            .checked_mul(8)
            .ok_or_else(|| Error::Format("block length overflow".into()))?;
        if cursor + bytes > payload.len() {
            return Err(Error::Format("parameter block truncated".into()));
        }
        let mut block = Vec::with_capacity(len);
        for i in 0..len {
            let start = cursor + i * 8;
            block.push(f64::from_le_bytes(payload[start..start + 8].try_into().unwrap()));
        }
        cursor += bytes;
        blocks.push(block);
    }
    Ok((header, blocks))
}

fn read_u32(buf: &[u8], cursor: &mut usize) -> Result<u32> {
    if *cursor + 4 > buf.len() {
        return Err(Error::Format("unexpected end of file".into()));
    }
    let v = u32::from_le_bytes(buf[*cursor..*cursor + 4].try_into().unwrap());
    *cursor += 4;
    Ok(v)
}

fn read_u64(buf: &[u8], cursor: &mut usize) -> Result<u64> {
    if *cursor + 8 > buf.len() {
        return Err(Error::Format("unexpected end of file".into()));
    }
    let v = u64::from_le_bytes(buf[*cursor..*cursor + 8].try_into().unwrap());
    *cursor += 8;
    Ok(v)
}
