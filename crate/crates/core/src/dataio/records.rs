use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Coordinates are snapped to a lattice of 2^-20 m on load. With every
/// position and offset on the same lattice, translating by an offset and
/// translating back are both exact in binary floating point.
pub const COORD_LATTICE: f64 = 1.0 / (1u64 << 20) as f64;

#[inline]
pub fn snap(v: f64) -> f64 {
    (v / COORD_LATTICE).round() * COORD_LATTICE
}

/// One annotated position: pedestrian `ped_id` at `(x, y)` metres in frame
/// `frame_id`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame_id: i64,
    pub ped_id: i64,
    pub x: f64,
    pub y: f64,
}

/// Parses whitespace-separated `frame_id ped_id x y` lines. Blank lines and
/// `#` comments are skipped. When `frame_interval` is given, only frames
/// whose id is a multiple of it are kept.
pub fn parse_trajectories(
    text: &str,
    origin: &Path,
    frame_interval: Option<i64>,
) -> Result<Vec<FrameRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let frame_id = parse_id(fields[0]).ok_or_else(|| err(format!("bad frame id `{}`", fields[0])))?;
        let ped_id = parse_id(fields[1]).ok_or_else(|| err(format!("bad pedestrian id `{}`", fields[1])))?;
        let coord = |s: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(snap(v)),
                _ => Err(err(format!("bad coordinate `{s}`"))),
            }
        };
        let x = coord(fields[2])?;
        let y = coord(fields[3])?;
        if let Some(k) = frame_interval {
            if k > 1 && frame_id.rem_euclid(k) != 0 {
                continue;
            }
        }
        if !seen.insert((frame_id, ped_id)) {
            return Err(err(format!(
                "duplicate record for frame {frame_id}, pedestrian {ped_id}"
            )));
        }
        out.push(FrameRecord {
            frame_id,
            ped_id,
            x,
            y,
        });
    }
    out.sort_by_key(|r| (r.frame_id, r.ped_id));
    Ok(out)
}

/// Frame ids are integers, but many published files write them as `10.0`.
fn parse_id(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    let f: f64 = s.parse().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

pub fn parse_trajectory_file(path: &Path, frame_interval: Option<i64>) -> Result<Vec<FrameRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectories(&text, path, frame_interval)
}

/// Serializes records in the same line format, preceded by `header` lines
/// rendered as `#` comments.
pub fn format_trajectories(records: &[FrameRecord], header: &[String]) -> String {
    let mut s = String::new();
    for h in header {
        s.push_str("# ");
        s.push_str(h);
        s.push('\n');
    }
    for r in records {
        s.push_str(&format!("{} {} {} {}\n", r.frame_id, r.ped_id, r.x, r.y));
    }
    s
}

/// Smallest positive gap between distinct frame ids (1 if undefined).
pub fn frame_step(records: &[FrameRecord]) -> i64 {
    let mut frames: Vec<i64> = records.iter().map(|r| r.frame_id).collect();
    frames.sort_unstable();
    frames.dedup();
    frames
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > 0)
        .min()
        .unwrap_or(1)
}
