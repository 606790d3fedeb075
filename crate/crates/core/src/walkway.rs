//! Physical model of the sensing walkway.
//!
//! A walkway is a chain of identical 33 x 48 node tiles laid end to end with
//! their 48-node (24 in) axis along the walking direction `+x`. Nodes sit on
//! a regular 0.5 in (0.0127 m) lattice; each reports a 12-bit raw count that
//! maps linearly onto 0..=10 kg.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROWS: usize = 33;
pub const COLS: usize = 48;
pub const NODES_PER_TILE: usize = ROWS * COLS;
pub const PITCH_M: f64 = 0.0127;
pub const RAW_MAX: u16 = 4095;
pub const FORCE_MAX_G: f64 = 10_000.0;
pub const CONTACT_THRESHOLD_G: f64 = 50.0;

/// Tile length along the walking axis (24 in).
pub const TILE_LENGTH_M: f64 = COLS as f64 * PITCH_M;
/// Tile width across the walking axis (16.5 in).
pub const TILE_WIDTH_M: f64 = ROWS as f64 * PITCH_M;

/// Walkway lengths outside this range are accepted with a warning.
pub const RECOMMENDED_LENGTH_M: (f64, f64) = (5.0, 15.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkwayError {
    #[error("raw value {0} exceeds the 12-bit maximum {RAW_MAX}")]
    RawOutOfRange(u32),
    #[error("node index (tile {tile}, row {row}, col {col}) is outside a {tile_count}-tile walkway")]
    IndexOutOfBounds {
        tile: usize,
        row: usize,
        col: usize,
        tile_count: usize,
    },
    #[error("tile_count must be between 1 and 255, got {0}")]
    BadTileCount(usize),
    #[error("frame has {got} values, expected {expected}")]
    BadFrameLength { expected: usize, got: usize },
}

/// Geometry and calibration of one sensor tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileSpec {
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub raw_max: u16,
    pub force_max_g: f64,
    pub contact_threshold_g: f64,
}

pub const TILE: TileSpec = TileSpec {
    rows: ROWS,
    cols: COLS,
    pitch: PITCH_M,
    raw_max: RAW_MAX,
    force_max_g: FORCE_MAX_G,
    contact_threshold_g: CONTACT_THRESHOLD_G,
};

impl Default for TileSpec {
    fn default() -> Self {
        TILE
    }
}

/// Tiles chained along `+x`. All coordinates are walkway-local: the walkway
/// starts at x = 0 and its right edge (walking direction `+x`) is y = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkwayConfig {
    pub tile_count: usize,
}

impl WalkwayConfig {
    pub fn new(tile_count: usize) -> Result<Self, WalkwayError> {
        let cfg = Self { tile_count };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), WalkwayError> {
        if self.tile_count == 0 || self.tile_count > u8::MAX as usize {
            return Err(WalkwayError::BadTileCount(self.tile_count));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.tile_count as f64 * TILE_LENGTH_M
    }

    pub fn width(&self) -> f64 {
        TILE_WIDTH_M
    }

    /// Returns a warning when the walkway is outside the 5-15 m range.
    pub fn length_warning(&self) -> Option<String> {
        let len = self.length();
        let (lo, hi) = RECOMMENDED_LENGTH_M;
        if len < lo || len > hi {
            Some(format!(
                "walkway length {len:.3} m is outside the recommended {lo}-{hi} m range"
            ))
        } else {
            None
        }
    }

    pub fn node_count(&self) -> usize {
        self.tile_count * NODES_PER_TILE
    }

    /// Number of node columns along the whole walkway.
    pub fn global_cols(&self) -> usize {
        self.tile_count * COLS
    }

    /// Center of a node in walkway coordinates (meters).
    pub fn node_center(&self, tile: usize, row: usize, col: usize) -> Result<(f64, f64), WalkwayError> {
        if tile >= self.tile_count || row >= ROWS || col >= COLS {
            return Err(WalkwayError::IndexOutOfBounds {
                tile,
                row,
                col,
                tile_count: self.tile_count,
            });
        }
        let x = tile as f64 * TILE_LENGTH_M + (col as f64 + 0.5) * PITCH_M;
        let y = (row as f64 + 0.5) * PITCH_M;
        Ok((x, y))
    }
}

/// Flat index into [`PressureFrame::values`].
#[inline]
pub fn value_index(tile: usize, row: usize, col: usize) -> usize {
    tile * NODES_PER_TILE + row * COLS + col
}

/// Maps a global (row, walkway column) pair onto the per-tile layout.
#[inline]
pub fn global_to_index(row: usize, gcol: usize) -> usize {
    value_index(gcol / COLS, row, gcol % COLS)
}

/// Inverse of [`global_to_index`]: returns `(row, gcol)`.
#[inline]
pub fn index_to_global(index: usize) -> (usize, usize) {
    let tile = index / NODES_PER_TILE;
    let rem = index % NODES_PER_TILE;
    (rem / COLS, tile * COLS + rem % COLS)
}

/// Node-center x for a global column, relative to the walkway origin.
#[inline]
pub fn gcol_center_x(gcol: usize) -> f64 {
    (gcol as f64 + 0.5) * PITCH_M
}

#[inline]
pub fn row_center_y(row: usize) -> f64 {
    (row as f64 + 0.5) * PITCH_M
}

/// Linear calibration: 0 -> 0 g, 4095 -> 10 000 g.
pub fn raw_to_force(raw: u16) -> Result<f64, WalkwayError> {
    if raw > RAW_MAX {
        return Err(WalkwayError::RawOutOfRange(raw as u32));
    }
    Ok(raw_to_force_unchecked(raw as f64))
}

#[inline]
pub(crate) fn raw_to_force_unchecked(raw: f64) -> f64 {
    raw * FORCE_MAX_G / RAW_MAX as f64
}

/// Nearest raw count for a force, clamped to the sensor range.
pub fn force_to_raw(grams: f64) -> u16 {
    let raw = (grams * RAW_MAX as f64 / FORCE_MAX_G).round();
    raw.clamp(0.0, RAW_MAX as f64) as u16
}

/// Smallest raw count whose calibrated force reaches `threshold_g`.
pub fn contact_raw_floor(threshold_g: f64) -> u16 {
    (0..=RAW_MAX)
        .find(|&r| raw_to_force_unchecked(r as f64) >= threshold_g)
        .unwrap_or(RAW_MAX + 1)
}

/// One timestamped snapshot of every node on the walkway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PressureFrame {
    pub seq: u32,
    pub timestamp_us: u64,
    pub tile_count: u8,
    /// Per-tile row-major raw counts.
    pub values: Vec<u16>,
}

impl PressureFrame {
    pub fn zeroed(tile_count: u8, seq: u32, timestamp_us: u64) -> Self {
        Self {
            seq,
            timestamp_us,
            tile_count,
            values: vec![0; tile_count as usize * NODES_PER_TILE],
        }
    }

    pub fn new(tile_count: u8, seq: u32, timestamp_us: u64, values: Vec<u16>) -> Result<Self, WalkwayError> {
        if tile_count == 0 {
            return Err(WalkwayError::BadTileCount(0));
        }
        let expected = tile_count as usize * NODES_PER_TILE;
        if values.len() != expected {
            return Err(WalkwayError::BadFrameLength {
                expected,
                got: values.len(),
            });
        }
        if let Some(&bad) = values.iter().find(|&&v| v > RAW_MAX) {
            return Err(WalkwayError::RawOutOfRange(bad as u32));
        }
        Ok(Self {
            seq,
            timestamp_us,
            tile_count,
            values,
        })
    }

    pub fn time_s(&self) -> f64 {
        self.timestamp_us as f64 / 1e6
    }

    pub fn global_cols(&self) -> usize {
        self.tile_count as usize * COLS
    }

    #[inline]
    pub fn get(&self, tile: usize, row: usize, col: usize) -> u16 {
        self.values[value_index(tile, row, col)]
    }

    #[inline]
    pub fn set(&mut self, tile: usize, row: usize, col: usize, raw: u16) {
        self.values[value_index(tile, row, col)] = raw.min(RAW_MAX);
    }

    /// Sum of calibrated force over every node, active or not.
    pub fn total_force(&self) -> f64 {
        let raw: u64 = self.values.iter().map(|&v| v as u64).sum();
        raw_to_force_unchecked(raw as f64)
    }
}

/// Nodes whose calibrated force reaches the 50 g contact threshold.
pub fn contact_mask(frame: &PressureFrame) -> Vec<bool> {
    contact_mask_with(frame, CONTACT_THRESHOLD_G)
}

pub fn contact_mask_with(frame: &PressureFrame, threshold_g: f64) -> Vec<bool> {
    let floor = contact_raw_floor(threshold_g);
    frame.values.iter().map(|&v| v >= floor).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_constants() {
        assert_eq!((TILE.rows, TILE.cols), (33, 48));
        assert!((ROWS as f64 * PITCH_M - 0.4191).abs() < 1e-12);
        assert!((COLS as f64 * PITCH_M - 0.6096).abs() < 1e-12);
        assert_eq!(TILE.raw_max, 4095);
        assert_eq!(TILE.force_max_g, 10_000.0);
        assert_eq!(TILE.contact_threshold_g, 50.0);
    }

    #[test]
    fn calibration_points() {
        assert_eq!(raw_to_force(0).unwrap(), 0.0);
        assert_eq!(raw_to_force(4095).unwrap(), 10_000.0);
        assert!((raw_to_force(2048).unwrap() - 5001.2).abs() < 0.1);
        assert_eq!(raw_to_force(4096), Err(WalkwayError::RawOutOfRange(4096)));
    }

    #[test]
    fn raw_floor_for_50g() {
        // 20 -> 48.84 g, 21 -> 51.28 g
        assert_eq!(contact_raw_floor(CONTACT_THRESHOLD_G), 21);
    }

    #[test]
    fn node_centers() {
        let w = WalkwayConfig::new(2).unwrap();
        let (x, y) = w.node_center(0, 0, 0).unwrap();
        assert!((x - 0.00635).abs() < 1e-12 && (y - 0.00635).abs() < 1e-12);
        let (x, _) = w.node_center(1, 0, 0).unwrap();
        assert!((x - 0.61595).abs() < 1e-12);
        let (x, y) = w.node_center(0, 32, 47).unwrap();
        assert!((x - 0.60325).abs() < 1e-12 && (y - 0.41275).abs() < 1e-12);
        assert!(w.node_center(2, 0, 0).is_err());
        assert!(w.node_center(0, 33, 0).is_err());
        assert!(w.node_center(0, 0, 48).is_err());
    }

    #[test]
    fn global_index_round_trip() {
        for idx in [0, 47, 48, 1583, 1584, 1584 + 48 * 5 + 7] {
            let (row, gcol) = index_to_global(idx);
            assert_eq!(global_to_index(row, gcol), idx);
        }
    }

    #[test]
    fn mask_threshold_edges() {
        let mut f = PressureFrame::zeroed(1, 0, 0);
        assert!(contact_mask(&f).iter().all(|&m| !m));
        f.set(0, 3, 4, 21);
        let m = contact_mask(&f);
        assert_eq!(m.iter().filter(|&&a| a).count(), 1);
        assert!(m[value_index(0, 3, 4)]);
        f.set(0, 3, 4, 20);
        assert!(contact_mask(&f).iter().all(|&m| !m));
    }

    #[test]
    fn length_warning_range() {
        assert!(WalkwayConfig::new(5).unwrap().length_warning().is_some()); // 3.05 m
        assert!(WalkwayConfig::new(10).unwrap().length_warning().is_none());
        assert!(WalkwayConfig::new(25).unwrap().length_warning().is_some()); // 15.24 m
        assert!(WalkwayConfig::new(0).is_err());
        assert!(WalkwayConfig::new(256).is_err());
    }

    #[test]
    fn saturation_clamps() {
        assert_eq!(force_to_raw(25_000.0), 4095);
        assert_eq!(force_to_raw(-3.0), 0);
    }

    #[test]
    fn frame_validation() {
        assert!(PressureFrame::new(1, 0, 0, vec![0; 10]).is_err());
        let mut v = vec![0; NODES_PER_TILE];
        v[5] = 5000;
        assert_eq!(PressureFrame::new(1, 0, 0, v), Err(WalkwayError::RawOutOfRange(5000)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn force_monotone(a in 0u16..=4095, b in 0u16..=4095) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assert!(raw_to_force(lo).unwrap() <= raw_to_force(hi).unwrap());
                if lo < hi {
                    prop_assert!(raw_to_force(lo).unwrap() < raw_to_force(hi).unwrap());
                }
            }

            #[test]
            fn mask_monotone(vals in proptest::collection::vec(0u16..=60, NODES_PER_TILE),
                             bumps in proptest::collection::vec(0u16..=30, NODES_PER_TILE)) {
                let f = PressureFrame::new(1, 0, 0, vals.clone()).unwrap();
                let g_vals: Vec<u16> = vals.iter().zip(&bumps).map(|(a, b)| a + b).collect();
                let g = PressureFrame::new(1, 0, 0, g_vals).unwrap();
                let (mf, mg) = (contact_mask(&f), contact_mask(&g));
                prop_assert!(mf.iter().zip(&mg).all(|(a, b)| !a || *b));
            }
        }

        #[test]
        fn node_centers_injective_and_spaced() {
            let w = WalkwayConfig::new(2).unwrap();
            let mut pts = Vec::new();
            for t in 0..2 {
                for r in 0..ROWS {
                    for c in 0..COLS {
                        pts.push(w.node_center(t, r, c).unwrap());
                    }
                }
            }
            // lattice: neighbors along each axis are exactly one pitch apart
            let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            assert_eq!(xs.len(), 96);
            assert!(xs.windows(2).all(|w| w[1] - w[0] >= PITCH_M - 1e-12));
            let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            ys.sort_by(f64::total_cmp);
            ys.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            assert_eq!(ys.len(), 33);
            assert!(ys.windows(2).all(|w| w[1] - w[0] >= PITCH_M - 1e-12));
        }
    }
}
