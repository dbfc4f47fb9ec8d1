//! Binary checkpoint of finished map cells.
//!
//! All integers and floats are little-endian.
//!
//! Header, 64 bytes:
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 8    | magic `LZSCKPT1`                        |
//! | 8      | 4    | format version (u32, currently 1)       |
//! | 12     | 1    | map kind (1 population, 2 current)      |
//! | 13     | 3    | zero                                    |
//! | 16     | 32   | SHA-256 of the canonical grid spec      |
//! | 48     | 8    | cell count (u64)                        |
//! | 56     | 8    | zero                                    |
//!
//! Followed by one 128-byte record per finished cell, in completion order:
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 8    | cell index (u64, row-major)             |
//! | 8      | 1    | status (1 done, 2 failed)               |
//! | 9      | 1    | regime code (1..=5)                     |
//! | 10     | 1    | flags                                   |
//! | 11     | 1    | zero                                    |
//! | 12     | 4    | k0 points (u32)                         |
//! | 16     | 8    | residual population (f64)               |
//! | 24     | 8    | residual current (f64, e/fs)            |
//! | 32     | 8    | k0 half-width (f64, 1/nm)               |
//! | 40     | 8    | zero                                    |
//! | 48     | 80   | failure reason, UTF-8, zero padded      |
//!
//! A trailing partial record (interrupted write) is discarded on resume.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::{hex, CellRecord, CellStatus, MapKind};
use crate::error::{Error, Result};
use crate::model::Regime;

pub const MAGIC: &[u8; 8] = b"LZSCKPT1";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;
pub const RECORD_LEN: usize = 128;
/// Longest failure reason kept, in bytes.
pub const REASON_LEN: usize = 80;

const STATUS_DONE: u8 = 1;
const STATUS_FAILED: u8 = 2;

fn header(kind: MapKind, hash: &[u8; 32], cells: usize) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..8].copy_from_slice(MAGIC);
    h[8..12].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[12] = kind.code();
    h[16..48].copy_from_slice(hash);
    h[48..56].copy_from_slice(&(cells as u64).to_le_bytes());
    h
}

fn encode(rec: &CellRecord) -> [u8; RECORD_LEN] {
    let mut r = [0u8; RECORD_LEN];
    r[0..8].copy_from_slice(&(rec.index as u64).to_le_bytes());
    let reason = match &rec.status {
        CellStatus::Done => {
            r[8] = STATUS_DONE;
            ""
        }
        CellStatus::Failed(reason) => {
            r[8] = STATUS_FAILED;
            reason.as_str()
        }
        CellStatus::Pending => unreachable!("pending cells are never checkpointed"),
    };
    r[9] = rec.regime.code();
    r[10] = rec.flags;
    r[12..16].copy_from_slice(&rec.k_points.to_le_bytes());
    r[16..24].copy_from_slice(&rec.rho_cb_res.to_le_bytes());
    r[24..32].copy_from_slice(&rec.j_res.to_le_bytes());
    r[32..40].copy_from_slice(&rec.k_half_width.to_le_bytes());
    let bytes = reason.as_bytes();
    let len = bytes.len().min(REASON_LEN);
    r[48..48 + len].copy_from_slice(&bytes[..len]);
    r
}

/// Fields of a checkpointed cell; coordinates are rebuilt from the grid.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StoredCell {
    pub index: usize,
    pub status: CellStatus,
    pub regime: Regime,
    pub flags: u8,
    pub k_points: u32,
    pub rho_cb_res: f64,
    pub j_res: f64,
    pub k_half_width: f64,
}

fn f64_at(r: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(r[at..at + 8].try_into().unwrap())
}

fn decode(r: &[u8], cells: usize) -> Result<StoredCell> {
    let index = u64::from_le_bytes(r[0..8].try_into().unwrap()) as usize;
    if index >= cells {
        return Err(Error::Checkpoint(format!("record index {index} out of range")));
    }
    let regime = Regime::from_code(r[9]).ok_or_else(|| Error::Checkpoint(format!("bad regime code {}", r[9])))?;
    let status = match r[8] {
        STATUS_DONE => CellStatus::Done,
        STATUS_FAILED => {
            let raw = &r[48..48 + REASON_LEN];
            let end = raw.iter().position(|&b| b == 0).unwrap_or(REASON_LEN);
            let reason = std::str::from_utf8(&raw[..end])
                .map_err(|_| Error::Checkpoint(format!("record {index}: reason is not UTF-8")))?;
            CellStatus::Failed(reason.to_string())
        }
        other => return Err(Error::Checkpoint(format!("record {index}: bad status {other}"))),
    };
    Ok(StoredCell {
        index,
        status,
        regime,
        flags: r[10],
        k_points: u32::from_le_bytes(r[12..16].try_into().unwrap()),
        rho_cb_res: f64_at(r, 16),
        j_res: f64_at(r, 24),
        k_half_width: f64_at(r, 32),
    })
}

/// Reads and validates a checkpoint. Returns the stored cells and the byte
/// length of the valid prefix (header plus whole records).
pub(crate) fn read_checkpoint(
    path: &Path,
    kind: MapKind,
    hash: &[u8; 32],
    cells: usize,
) -> Result<(Vec<StoredCell>, u64)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[0..8] != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a map checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    if bytes[12] != kind.code() {
        return Err(Error::Checkpoint(format!("checkpoint holds a different map kind (code {})", bytes[12])));
    }
    let stored: [u8; 32] = bytes[16..48].try_into().unwrap();
    if &stored != hash {
        return Err(Error::Checkpoint(format!(
            "config hash mismatch: checkpoint {} vs current {}",
            hex(&stored),
            hex(hash)
        )));
    }
    let count = u64::from_le_bytes(bytes[48..56].try_into().unwrap()) as usize;
    if count != cells {
        return Err(Error::Checkpoint(format!("checkpoint has {count} cells, grid has {cells}")));
    }
    let whole = (bytes.len() - HEADER_LEN) / RECORD_LEN;
    let records = bytes[HEADER_LEN..HEADER_LEN + whole * RECORD_LEN]
        .chunks_exact(RECORD_LEN)
        .map(|r| decode(r, cells))
        .collect::<Result<Vec<_>>>()?;
    Ok((records, (HEADER_LEN + whole * RECORD_LEN) as u64))
}

/// Appends finished cells to a checkpoint file.
pub struct CheckpointWriter {
    out: BufWriter<File>,
}

impl CheckpointWriter {
    /// Starts a fresh checkpoint, replacing any existing file.
    pub fn create(path: &Path, kind: MapKind, hash: &[u8; 32], cells: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&header(kind, hash, cells))?;
        out.flush()?;
        Ok(CheckpointWriter { out })
    }

    /// Reopens a validated checkpoint, dropping anything past `valid_len`.
    pub(crate) fn append(path: &Path, valid_len: u64) -> Result<Self> {
        let mut file = OpenOptions::new().write(true).open(path)?;
        file.set_len(valid_len)?;
        file.seek(SeekFrom::End(0))?;
        Ok(CheckpointWriter {
            out: BufWriter::new(file),
        })
    }

    /// Writes one record and flushes it to the OS.
    pub fn write(&mut self, rec: &CellRecord) -> Result<()> {
        self.out.write_all(&encode(rec))?;
        self.out.flush()?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
