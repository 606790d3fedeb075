//! Binary frame codec (`PWK1`), pose recording codec (`PWP1`) and the
//! 16-bit P5 heatmap export.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Exec};
use crate::gait::HeadSample;
use crate::obstacle::FootPose;
use crate::pose::PoseSample;
use crate::pressure::Side;
use crate::walkway::{self, PressureFrame, COLS, NODES_PER_TILE, RAW_MAX, ROWS};

pub const FRAME_MAGIC: [u8; 4] = *b"PWK1";
pub const FRAME_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;
pub const POSE_MAGIC: [u8; 4] = *b"PWP1";
pub const POSE_VERSION: u8 = 1;
pub const POSE_HEADER_LEN: usize = 8;
/// time + 3 trackers × (x, y, z, yaw)
pub const POSE_RECORD_LEN: usize = 13 * 8;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("tile geometry {rows}x{cols} does not match 33x48")]
    BadGeometry { rows: u16, cols: u16 },
    #[error("tile_count must be at least 1")]
    ZeroTiles,
    #[error("raw value {value} at node {index} exceeds 4095")]
    RawOutOfRange { index: usize, value: u16 },
    #[error("frame has {actual} values, expected {expected}")]
    BadValueCount { expected: usize, actual: usize },
    #[error("frames disagree on tile count ({0} vs {1})")]
    MixedTileCount(u8, u8),
    #[error("no frames to aggregate")]
    NoFrames,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn frame_len(tile_count: u8) -> usize {
    HEADER_LEN + tile_count as usize * NODES_PER_TILE * 2
}

pub fn encode_frame_into(frame: &PressureFrame, out: &mut Vec<u8>) -> Result<(), WireError> {
    let expected = frame.tile_count as usize * NODES_PER_TILE;
    if frame.tile_count == 0 {
        return Err(WireError::ZeroTiles);
    }
    if frame.values.len() != expected {
        return Err(WireError::BadValueCount {
            expected,
            actual: frame.values.len(),
        });
    }
    if let Some((index, &value)) = frame.values.iter().enumerate().find(|(_, v)| **v > RAW_MAX) {
        return Err(WireError::RawOutOfRange { index, value });
    }
    out.reserve(frame_len(frame.tile_count));
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(frame.tile_count);
    out.extend_from_slice(&(ROWS as u16).to_le_bytes());
    out.extend_from_slice(&(COLS as u16).to_le_bytes());
    out.extend_from_slice(&frame.seq.to_le_bytes());
    out.extend_from_slice(&frame.timestamp_us.to_le_bytes());
    for v in &frame.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode_frame(frame: &PressureFrame) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::new();
    encode_frame_into(frame, &mut out)?;
    Ok(out)
}

/// Decodes the frame at the start of `buf`, returning it and its length.
pub fn decode_frame_prefix(buf: &[u8]) -> Result<(PressureFrame, usize), WireError> {
    if buf.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            expected: HEADER_LEN,
            actual: buf.len(),
        });
    }
    let magic: [u8; 4] = buf[0..4].try_into().expect("4 bytes");
    if magic != FRAME_MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if buf[4] != FRAME_VERSION {
        return Err(WireError::UnsupportedVersion(buf[4]));
    }
    let tile_count = buf[5];
    if tile_count == 0 {
        return Err(WireError::ZeroTiles);
    }
    let rows = u16::from_le_bytes([buf[6], buf[7]]);
    let cols = u16::from_le_bytes([buf[8], buf[9]]);
    if rows as usize != ROWS || cols as usize != COLS {
        return Err(WireError::BadGeometry { rows, cols });
    }
    let seq = u32::from_le_bytes(buf[10..14].try_into().expect("4 bytes"));
    let timestamp_us = u64::from_le_bytes(buf[14..22].try_into().expect("8 bytes"));
    let total = frame_len(tile_count);
    if buf.len() < total {
        return Err(WireError::Truncated {
            expected: total,
            actual: buf.len(),
        });
    }
    let mut values = Vec::with_capacity(total - HEADER_LEN);
    for (index, pair) in buf[HEADER_LEN..total].chunks_exact(2).enumerate() {
        let value = u16::from_le_bytes([pair[0], pair[1]]);
        if value > RAW_MAX {
            return Err(WireError::RawOutOfRange { index, value });
        }
        values.push(value);
    }
    Ok((
        PressureFrame {
            seq,
            timestamp_us,
            tile_count,
            values,
        },
        total,
    ))
}

/// Decodes exactly one frame; extra bytes are an error.
pub fn decode_frame(buf: &[u8]) -> Result<PressureFrame, WireError> {
    let (frame, used) = decode_frame_prefix(buf)?;
    if used != buf.len() {
        return Err(WireError::TrailingBytes(buf.len() - used));
    }
    Ok(frame)
}

/// Iterates concatenated frames, remembering where each one starts.
#[derive(Debug, Clone)]
pub struct FrameReader<'a> {
    buf: &'a [u8],
    pos: usize,
    offsets: Vec<usize>,
}

impl<'a> FrameReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self {
            buf,
            pos: 0,
            offsets: Vec::new(),
        }
    }

    /// Byte offsets of the frames read so far.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

impl Iterator for FrameReader<'_> {
    type Item = Result<PressureFrame, WireError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.buf.len() {
            return None;
        }
        match decode_frame_prefix(&self.buf[self.pos..]) {
            Ok((frame, used)) => {
                self.offsets.push(self.pos);
                self.pos += used;
                Some(Ok(frame))
            }
            Err(e) => {
                // stop after the first error
                self.pos = self.buf.len();
                Some(Err(e))
            }
        }
    }
}

pub fn decode_frames(buf: &[u8]) -> Result<Vec<PressureFrame>, WireError> {
    FrameReader::new(buf).collect()
}

pub fn encode_frames(frames: &[PressureFrame]) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::new();
    for f in frames {
        encode_frame_into(f, &mut out)?;
    }
    Ok(out)
}

pub fn encode_poses(poses: &[PoseSample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(POSE_HEADER_LEN + poses.len() * POSE_RECORD_LEN);
    out.extend_from_slice(&POSE_MAGIC);
    out.extend_from_slice(&[POSE_VERSION, 0, 0, 0]);
    for p in poses {
        let h = &p.head;
        let (l, r) = (&p.left, &p.right);
        let fields = [
            p.time,
            h.x,
            h.y,
            h.z,
            h.yaw,
            l.position.0,
            l.position.1,
            l.position.2,
            l.yaw,
            r.position.0,
            r.position.1,
            r.position.2,
            r.yaw,
        ];
        for v in fields {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_poses(buf: &[u8]) -> Result<Vec<PoseSample>, WireError> {
    if buf.len() < POSE_HEADER_LEN {
        return Err(WireError::Truncated {
            expected: POSE_HEADER_LEN,
            actual: buf.len(),
        });
    }
    let magic: [u8; 4] = buf[0..4].try_into().expect("4 bytes");
    if magic != POSE_MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if buf[4] != POSE_VERSION {
        return Err(WireError::UnsupportedVersion(buf[4]));
    }
    let body = &buf[POSE_HEADER_LEN..];
    if !body.len().is_multiple_of(POSE_RECORD_LEN) {
        return Err(WireError::Truncated {
            expected: POSE_HEADER_LEN + body.len().div_ceil(POSE_RECORD_LEN) * POSE_RECORD_LEN,
            actual: buf.len(),
        });
    }
    Ok(body
        .chunks_exact(POSE_RECORD_LEN)
        .map(|rec| {
            let f = |i: usize| f64::from_le_bytes(rec[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
            let time = f(0);
            let foot = |side: Side, base: usize| FootPose {
                time,
                foot: side,
                position: (f(base), f(base + 1), f(base + 2)),
                yaw: f(base + 3),
            };
            PoseSample {
                time,
                head: HeadSample {
                    time,
                    x: f(1),
                    y: f(2),
                    z: f(3),
                    yaw: f(4),
                },
                left: foot(Side::Left, 5),
                right: foot(Side::Right, 9),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(format!("unknown aggregation `{other}` (expected mean or max)")),
        }
    }
}

/// Aggregated raw grid, `width = 48 · tiles` columns by 33 rows, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub tile_count: u8,
    pub frame_count: usize,
    pub aggregation: Aggregation,
    pub pixels: Vec<u16>,
    /// Unrounded per-node aggregate, same layout as `pixels`.
    pub exact: Vec<f64>,
}

pub fn aggregate(frames: &[PressureFrame], aggregation: Aggregation, exec: Exec) -> Result<Heatmap, WireError> {
    let first = frames.first().ok_or(WireError::NoFrames)?;
    let tc = first.tile_count;
    if let Some(f) = frames.iter().find(|f| f.tile_count != tc) {
        return Err(WireError::MixedTileCount(tc, f.tile_count));
    }
    let n = tc as usize * NODES_PER_TILE;
    let acc = exec::fold_slice(
        exec,
        frames,
        || vec![0u64; n],
        |mut acc, f| {
            for (a, &v) in acc.iter_mut().zip(&f.values) {
                match aggregation {
                    Aggregation::Mean => *a += v as u64,
                    Aggregation::Max => *a = (*a).max(v as u64),
                }
            }
            acc
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                match aggregation {
                    Aggregation::Mean => *x += y,
                    Aggregation::Max => *x = (*x).max(y),
                }
            }
            a
        },
    );
    let width = COLS * tc as usize;
    let mut exact = vec![0.0; n];
    for row in 0..ROWS {
        for gcol in 0..width {
            let a = acc[walkway::global_to_index(row, gcol)] as f64;
            exact[row * width + gcol] = match aggregation {
                Aggregation::Mean => a / frames.len() as f64,
                Aggregation::Max => a,
            };
        }
    }
    let pixels = exact.iter().map(|v| v.round() as u16).collect();
    Ok(Heatmap {
        width,
        height: ROWS,
        tile_count: tc,
        frame_count: frames.len(),
        aggregation,
        pixels,
        exact,
    })
}

impl Heatmap {
    /// Binary 16-bit PGM, big-endian samples, maxval 4095.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, RAW_MAX).into_bytes();
        out.reserve(self.pixels.len() * 2);
        for p in &self.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
        out
    }

    pub fn pixel_mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn sidecar(&self) -> String {
        let min = self.pixels.iter().min().copied().unwrap_or(0);
        let max = self.pixels.iter().max().copied().unwrap_or(0);
        let agg = match self.aggregation {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        };
        let w = walkway::WalkwayConfig {
            tile_count: self.tile_count as usize,
        };
        let mut s = String::new();
        let _ = writeln!(s, "aggregation: {agg}");
        let _ = writeln!(s, "frames: {}", self.frame_count);
        let _ = writeln!(s, "tiles: {}", self.tile_count);
        let _ = writeln!(s, "image: {} x {}", self.width, self.height);
        let _ = writeln!(s, "pitch_m: {}", walkway::PITCH_M);
        let _ = writeln!(s, "walkway_length_m: {:.4}", w.length());
        let _ = writeln!(s, "walkway_width_m: {:.4}", w.width());
        let _ = writeln!(s, "min: {min}");
        let _ = writeln!(s, "max: {max}");
        let _ = writeln!(s, "mean: {:.4}", self.pixel_mean());
        s
    }
}

/// Path of the stats file written next to an image.
pub fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("stats.txt")
}

/// Writes the image and its sidecar; returns the sidecar path.
pub fn export_heatmap(frames: &[PressureFrame], aggregation: Aggregation, out: &Path, exec: Exec) -> Result<PathBuf, WireError> {
    let map = aggregate(frames, aggregation, exec)?;
    std::fs::write(out, map.to_pgm())?;
    let side = sidecar_path(out);
    std::fs::write(&side, map.sidecar())?;
    Ok(side)
}

/// Parses a 16-bit P5 image back into `(width, height, pixels)`.
pub fn parse_pgm16(buf: &[u8]) -> Option<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < buf.len() && buf[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < buf.len() && !buf[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        fields.push(std::str::from_utf8(&buf[start..i]).ok()?.to_string());
    }
    i += 1;
    if fields[0] != "P5" {
        return None;
    }
    let w: usize = fields[1].parse().ok()?;
    let h: usize = fields[2].parse().ok()?;
    let body = buf.get(i..)?;
    if body.len() != w * h * 2 {
        return None;
    }
    Some((w, h, body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(tiles: u8, seq: u32, fill: impl Fn(usize) -> u16) -> PressureFrame {
        let n = tiles as usize * NODES_PER_TILE;
        PressureFrame {
            seq,
            timestamp_us: seq as u64 * 10_000,
            tile_count: tiles,
            values: (0..n).map(fill).collect(),
        }
    }

    #[test]
    fn one_tile_is_3190_bytes() {
        let b = encode_frame(&frame(1, 0, |_| 0)).unwrap();
        assert_eq!(b.len(), 3190);
        assert_eq!(frame_len(1), 22 + 3168);
        assert_eq!(&b[..4], b"PWK1");
        assert_eq!(b[4], 1);
        assert_eq!(&b[6..10], &[33, 0, 48, 0]);
    }

    #[test]
    fn header_is_little_endian() {
        let mut f = frame(2, 0x0102_0304, |i| (i % 4096) as u16);
        f.timestamp_us = 0x0A0B_0C0D;
        let b = encode_frame(&f).unwrap();
        assert_eq!(&b[10..14], &[4, 3, 2, 1]);
        assert_eq!(&b[14..22], &[0x0D, 0x0C, 0x0B, 0x0A, 0, 0, 0, 0]);
        assert_eq!(u16::from_le_bytes([b[24], b[25]]), 1);
        assert_eq!(decode_frame(&b).unwrap(), f);
    }

    #[test]
    fn decode_errors_are_typed() {
        let good = encode_frame(&frame(1, 3, |_| 7)).unwrap();
        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_frame(&bad), Err(WireError::BadMagic(m)) if &m == b"XXXX"));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_frame(&bad), Err(WireError::UnsupportedVersion(2))));
        assert!(matches!(decode_frame(&good[..100]), Err(WireError::Truncated { .. })));
        let mut bad = good.clone();
        bad[22..24].copy_from_slice(&4096u16.to_le_bytes());
        assert!(matches!(decode_frame(&bad), Err(WireError::RawOutOfRange { index: 0, value: 4096 })));
        let mut bad = good.clone();
        bad[6] = 32;
        assert!(matches!(decode_frame(&bad), Err(WireError::BadGeometry { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_frame(&long), Err(WireError::TrailingBytes(1))));
        assert!(matches!(encode_frame(&frame(1, 0, |_| 5000)), Err(WireError::RawOutOfRange { .. })));
    }

    #[test]
    fn reader_tracks_offsets() {
        let frames: Vec<PressureFrame> = (0..3).map(|s| frame(2, s, |i| (i as u16 + s as u16) % 4096)).collect();
        let bytes = encode_frames(&frames).unwrap();
        let mut r = FrameReader::new(&bytes);
        let back: Vec<PressureFrame> = r.by_ref().map(Result::unwrap).collect();
        assert_eq!(back, frames);
        assert_eq!(r.offsets(), &[0, frame_len(2), 2 * frame_len(2)]);
    }

    #[test]
    fn poses_round_trip() {
        let s = PoseSample {
            time: 0.5,
            head: HeadSample { time: 0.5, x: 1.0, y: 0.2, z: 1.7, yaw: 3.0 },
            left: FootPose { time: 0.5, foot: Side::Left, position: (0.9, 0.28, 0.06), yaw: 1.0 },
            right: FootPose { time: 0.5, foot: Side::Right, position: (0.4, 0.13, 0.11), yaw: -2.0 },
        };
        let b = encode_poses(&[s, s]);
        assert_eq!(b.len(), 8 + 2 * 104);
        assert_eq!(decode_poses(&b).unwrap(), vec![s, s]);
        assert!(matches!(decode_poses(&b[..50]), Err(WireError::Truncated { .. })));
        assert!(matches!(decode_poses(b"PWK1\x01\0\0\0"), Err(WireError::BadMagic(_))));
    }

    #[test]
    fn heatmap_examples() {
        let f = frame(1, 0, |i| (i * 7 % 4096) as u16);
        let m = aggregate(std::slice::from_ref(&f), Aggregation::Max, Exec::Sequential).unwrap();
        assert_eq!((m.width, m.height), (48, 33));
        for row in 0..33 {
            for col in 0..48 {
                assert_eq!(m.pixels[row * 48 + col], f.values[row * 48 + col]);
            }
        }
        let a = frame(2, 0, |_| 100);
        let b = frame(2, 1, |_| 300);
        let m = aggregate(&[a.clone(), b.clone()], Aggregation::Max, Exec::Parallel).unwrap();
        assert!(m.pixels.iter().all(|&p| p == 300));
        let m = aggregate(&[a, b], Aggregation::Mean, Exec::Parallel).unwrap();
        assert!(m.pixels.iter().all(|&p| p == 200));
        assert_eq!(m.width, 96);
        assert!(matches!(aggregate(&[], Aggregation::Mean, Exec::Sequential), Err(WireError::NoFrames)));
    }

    #[test]
    fn heatmap_uses_walkway_columns() {
        // a node on tile 1, row 2, col 3 lands at image column 51
        let mut f = frame(2, 0, |_| 0);
        f.values[NODES_PER_TILE + 2 * 48 + 3] = 4000;
        let m = aggregate(&[f], Aggregation::Max, Exec::Sequential).unwrap();
        assert_eq!(m.pixels[2 * 96 + 51], 4000);
        let pgm = m.to_pgm();
        let (w, h, px) = parse_pgm16(&pgm).unwrap();
        assert_eq!((w, h), (96, 33));
        assert_eq!(px, m.pixels);
        assert!(pgm.starts_with(b"P5\n96 33\n4095\n"));
    }

    #[test]
    fn export_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("map.pgm");
        let side = export_heatmap(&[frame(1, 0, |_| 9)], Aggregation::Mean, &out, Exec::Sequential).unwrap();
        assert!(out.exists());
        let text = std::fs::read_to_string(side).unwrap();
        assert!(text.contains("mean: 9.0000"));
        assert!(text.contains("image: 48 x 33"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip(tiles in 1u8..4, seq in any::<u32>(), ts in any::<u64>(), seed in any::<u64>()) {
                let mut f = frame(tiles, seq, |i| ((seed.wrapping_mul(i as u64 + 1) >> 17) % 4096) as u16);
                f.timestamp_us = ts;
                let b = encode_frame(&f).unwrap();
                prop_assert_eq!(decode_frame(&b).unwrap(), f);
            }

            #[test]
            fn fuzz_never_panics(buf in proptest::collection::vec(any::<u8>(), 0..4000)) {
                let _ = decode_frame(&buf);
                let _ = decode_frames(&buf);
                let _ = decode_poses(&buf);
            }

            #[test]
            fn mutated_headers_never_panic(idx in 0usize..3190, byte in any::<u8>()) {
                let mut b = encode_frame(&frame(1, 1, |_| 1)).unwrap();
                b[idx] = byte;
                let _ = decode_frame(&b);
            }
        }
    }
}
