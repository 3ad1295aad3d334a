//! Plain-text scan capture and replay.
//!
//! One scan per line, whitespace separated:
//!
//! ```text
//! t x y theta n angle_1 range_1 hit_1 ... angle_n range_n hit_n
//! ```
//!
//! `hit` is `0` or `1`. Numbers use the shortest round-trip formatting, so a
//! written file reads back bit-for-bit. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

use super::{Beam, Scan};
use crate::geometry::Pose2;

#[derive(Debug, Error)]
pub enum ScanFileError {
    #[error("scan file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

pub fn format_scan(scan: &Scan) -> String {
    let mut s = format!(
        "{} {} {} {} {}",
        scan.timestamp,
        scan.origin.x,
        scan.origin.y,
        scan.origin.theta,
        scan.beams.len()
    );
    for b in &scan.beams {
        let _ = write!(s, " {} {} {}", b.angle, b.range, u8::from(b.hit));
    }
    s
}

pub fn write_scans<W: Write>(mut out: W, scans: &[Scan]) -> Result<(), ScanFileError> {
    writeln!(out, "# t x y theta n (angle range hit)*")?;
    for scan in scans {
        writeln!(out, "{}", format_scan(scan))?;
    }
    Ok(())
}

pub fn parse_scan(text: &str, line: usize) -> Result<Scan, ScanFileError> {
    let err = |msg: String| ScanFileError::Format { line, msg };
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() < 5 {
        return Err(err(format!("expected at least 5 fields, found {}", fields.len())));
    }
    let num = |i: usize| -> Result<f64, ScanFileError> {
        fields[i]
            .parse::<f64>()
            .map_err(|e| err(format!("field {}: {e}", i + 1)))
    };
    let n: usize = fields[4]
        .parse()
        .map_err(|e| err(format!("beam count: {e}")))?;
    if fields.len() != 5 + 3 * n {
        return Err(err(format!(
            "{} beams need {} fields, found {}",
            n,
            5 + 3 * n,
            fields.len()
        )));
    }
    let mut beams = Vec::with_capacity(n);
    for k in 0..n {
        let base = 5 + 3 * k;
        let hit = match fields[base + 2] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("hit flag must be 0 or 1, found {other}"))),
        };
        beams.push(Beam {
            angle: num(base)?,
            range: num(base + 1)?,
            hit,
        });
    }
    Ok(Scan {
        timestamp: num(0)?,
        origin: Pose2::new(num(1)?, num(2)?, num(3)?),
        beams,
    })
}

pub fn read_scans<R: BufRead>(input: R) -> Result<Vec<Scan>, ScanFileError> {
    let mut scans = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        scans.push(parse_scan(trimmed, i + 1)?);
    }
    Ok(scans)
}
