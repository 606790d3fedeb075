//! Per-frame spatial analysis of walkway pressure.
//!
//! Active nodes are grouped into 8-connected blobs, nearby blobs are merged
//! into foot clusters (heel and forefoot often register separately), and
//! clusters are followed over time into foot tracks.
//!
//! Force moments are accumulated as integer raw counts. The calibration is
//! linear, so raw-weighted and force-weighted means coincide, and integer
//! sums make the partition and union properties hold without rounding drift.

use serde::{Deserialize, Serialize};

use crate::exec::{self, Exec};
use crate::walkway::{
    contact_raw_floor, global_to_index, raw_to_force_unchecked, PressureFrame, CONTACT_THRESHOLD_G,
    PITCH_M, ROWS,
};

/// Tunables for segmentation and tracking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsConfig {
    pub contact_threshold_g: f64,
    /// Blobs whose bounding boxes are within this distance form one foot.
    pub merge_distance_m: f64,
    /// Maximum COF displacement between consecutive frames for one track.
    pub track_gate_m: f64,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            contact_threshold_g: CONTACT_THRESHOLD_G,
            merge_distance_m: 0.10,
            track_gate_m: 0.30,
        }
    }
}

/// One active node, addressed by walkway row and global column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSample {
    pub row: u16,
    pub gcol: u16,
    pub raw: u16,
}

impl NodeSample {
    pub fn x(&self) -> f64 {
        (self.gcol as f64 + 0.5) * PITCH_M
    }

    pub fn y(&self) -> f64 {
        (self.row as f64 + 0.5) * PITCH_M
    }

    pub fn force(&self) -> f64 {
        raw_to_force_unchecked(self.raw as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

impl BBox {
    fn point(x: f64, y: f64) -> Self {
        Self {
            min: (x, y),
            max: (x, y),
        }
    }

    fn include(&mut self, x: f64, y: f64) {
        self.min.0 = self.min.0.min(x);
        self.min.1 = self.min.1.min(y);
        self.max.0 = self.max.0.max(x);
        self.max.1 = self.max.1.max(y);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min: (self.min.0.min(other.min.0), self.min.1.min(other.min.1)),
            max: (self.max.0.max(other.max.0), self.max.1.max(other.max.1)),
        }
    }

    /// Euclidean gap between two rectangles; 0 when they touch or overlap.
    pub fn gap(&self, other: &BBox) -> f64 {
        let dx = (other.min.0 - self.max.0).max(self.min.0 - other.max.0).max(0.0);
        let dy = (other.min.1 - self.max.1).max(self.min.1 - other.max.1).max(0.0);
        dx.hypot(dy)
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= self.min.0 && p.0 <= self.max.0 && p.1 >= self.min.1 && p.1 <= self.max.1
    }
}

/// Integer force moments; adding two moments is exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Moments {
    pub raw: u64,
    /// Σ raw · (2·gcol + 1)
    pub sx2: u64,
    /// Σ raw · (2·row + 1)
    pub sy2: u64,
}

impl Moments {
    pub fn add_node(&mut self, n: &NodeSample) {
        let r = n.raw as u64;
        self.raw += r;
        self.sx2 += r * (2 * n.gcol as u64 + 1);
        self.sy2 += r * (2 * n.row as u64 + 1);
    }

    pub fn merge(&mut self, other: &Moments) {
        self.raw += other.raw;
        self.sx2 += other.sx2;
        self.sy2 += other.sy2;
    }

    pub fn center(&self) -> Option<(f64, f64)> {
        if self.raw == 0 {
            return None;
        }
        let denom = 2.0 * self.raw as f64;
        Some((self.sx2 as f64 / denom * PITCH_M, self.sy2 as f64 / denom * PITCH_M))
    }

    pub fn force(&self) -> f64 {
        raw_to_force_unchecked(self.raw as f64)
    }
}

/// An 8-connected component of active nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub nodes: Vec<NodeSample>,
    pub total_raw: u64,
    pub total_force: f64,
    pub cof: (f64, f64),
    pub bbox: BBox,
    pub peak_force: f64,
}

impl Blob {
    /// Returns `None` for an empty or zero-force node set.
    pub fn from_nodes(nodes: Vec<NodeSample>) -> Option<Blob> {
        let first = nodes.first()?;
        let mut m = Moments::default();
        let mut bbox = BBox::point(first.x(), first.y());
        let mut peak = 0u16;
        for n in &nodes {
            m.add_node(n);
            bbox.include(n.x(), n.y());
            peak = peak.max(n.raw);
        }
        let cof = m.center()?;
        Some(Blob {
            total_raw: m.raw,
            total_force: m.force(),
            cof,
            bbox,
            peak_force: raw_to_force_unchecked(peak as f64),
            nodes,
        })
    }

    pub fn moments(&self) -> Moments {
        let mut m = Moments::default();
        for n in &self.nodes {
            m.add_node(n);
        }
        m
    }
}

/// Connected components of `mask` under 8-connectivity, in walking order.
///
/// Tiles are stitched: a footprint straddling a tile boundary is one blob.
pub fn segment_blobs(mask: &[bool], frame: &PressureFrame) -> Vec<Blob> {
    let gcols = frame.global_cols();
    debug_assert_eq!(mask.len(), frame.values.len());
    let mut visited = vec![false; mask.len()];
    let mut blobs = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();

    for gcol in 0..gcols {
        for row in 0..ROWS {
            let idx = global_to_index(row, gcol);
            if !mask[idx] || visited[idx] {
                continue;
            }
            visited[idx] = true;
            stack.push((row, gcol));
            let mut nodes = Vec::new();
            while let Some((r, c)) = stack.pop() {
                nodes.push(NodeSample {
                    row: r as u16,
                    gcol: c as u16,
                    raw: frame.values[global_to_index(r, c)],
                });
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= ROWS as i64 || nc >= gcols as i64 {
                            continue;
                        }
                        let nidx = global_to_index(nr as usize, nc as usize);
                        if mask[nidx] && !visited[nidx] {
                            visited[nidx] = true;
                            stack.push((nr as usize, nc as usize));
                        }
                    }
                }
            }
            nodes.sort_by_key(|n| (n.gcol, n.row));
            if let Some(b) = Blob::from_nodes(nodes) {
                blobs.push(b);
            }
        }
    }
    blobs
}

/// A group of blobs believed to belong to one foot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootCluster {
    pub blobs: Vec<Blob>,
    pub total_raw: u64,
    pub total_force: f64,
    pub cof: (f64, f64),
    pub bbox: BBox,
}

impl FootCluster {
    pub fn from_blobs(blobs: Vec<Blob>) -> Option<FootCluster> {
        let mut m = Moments::default();
        let mut bbox = blobs.first()?.bbox;
        for b in &blobs {
            m.merge(&b.moments());
            bbox = bbox.union(&b.bbox);
        }
        Some(FootCluster {
            total_raw: m.raw,
            total_force: m.force(),
            cof: m.center()?,
            bbox,
            blobs,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeSample> {
        self.blobs.iter().flat_map(|b| b.nodes.iter())
    }

    pub fn node_count(&self) -> usize {
        self.blobs.iter().map(|b| b.nodes.len()).sum()
    }

    pub fn moments(&self) -> Moments {
        let mut m = Moments::default();
        for b in &self.blobs {
            m.merge(&b.moments());
        }
        m
    }
}

/// Agglomerates blobs whose bounding boxes lie within `merge_distance` of
/// each other (transitively).
pub fn cluster_feet(blobs: Vec<Blob>, merge_distance: f64) -> Vec<FootCluster> {
    let n = blobs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if blobs[i].bbox.gap(&blobs[j].bbox) <= merge_distance {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<Blob>> = Vec::new();
    let mut root_slot: Vec<Option<usize>> = vec![None; n];
    for (i, blob) in blobs.into_iter().enumerate() {
        let root = find(&mut parent, i);
        match root_slot[root] {
            Some(slot) => groups[slot].push(blob),
            None => {
                root_slot[root] = Some(groups.len());
                groups.push(vec![blob]);
            }
        }
    }
    groups.into_iter().filter_map(FootCluster::from_blobs).collect()
}

/// Global force-weighted center over every active node of every cluster.
/// `None` signals no contact.
pub fn center_of_force(clusters: &[FootCluster]) -> Option<(f64, f64)> {
    let mut m = Moments::default();
    for c in clusters {
        m.merge(&c.moments());
    }
    m.center()
}

/// Foot clusters found in a single frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameContacts {
    pub seq: u32,
    pub timestamp_us: u64,
    pub clusters: Vec<FootCluster>,
}

impl FrameContacts {
    pub fn cof(&self) -> Option<(f64, f64)> {
        center_of_force(&self.clusters)
    }

    pub fn total_force(&self) -> f64 {
        self.clusters.iter().map(|c| c.total_force).sum()
    }
}

pub fn analyze_frame(frame: &PressureFrame, cfg: &AnalyticsConfig) -> FrameContacts {
    let floor = contact_raw_floor(cfg.contact_threshold_g);
    let mask: Vec<bool> = frame.values.iter().map(|&v| v >= floor).collect();
    let blobs = segment_blobs(&mask, frame);
    FrameContacts {
        seq: frame.seq,
        timestamp_us: frame.timestamp_us,
        clusters: cluster_feet(blobs, cfg.merge_distance_m),
    }
}

/// Per-frame analysis over a whole recording; frames are independent.
pub fn analyze_frames(frames: &[PressureFrame], cfg: &AnalyticsConfig, exec: Exec) -> Vec<FrameContacts> {
    exec::map_slice(exec, frames, |f| analyze_frame(f, cfg))
}

/// Convenience: COF of a raw frame.
pub fn frame_center_of_force(frame: &PressureFrame) -> Option<(f64, f64)> {
    analyze_frame(frame, &AnalyticsConfig::default()).cof()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Unknown,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Unknown => Side::Unknown,
        }
    }

    pub fn is_known(self) -> bool {
        self != Side::Unknown
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub timestamp_us: u64,
    pub total_force: f64,
    pub cof: (f64, f64),
    pub cluster: FootCluster,
}

impl TrackSample {
    pub fn time_s(&self) -> f64 {
        self.timestamp_us as f64 * 1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootTrack {
    pub id: u32,
    pub side: Side,
    pub samples: Vec<TrackSample>,
}

impl FootTrack {
    pub fn start_us(&self) -> u64 {
        self.samples.first().map_or(0, |s| s.timestamp_us)
    }

    pub fn end_us(&self) -> u64 {
        self.samples.last().map_or(0, |s| s.timestamp_us)
    }

    pub fn force_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.time_s(), s.total_force)).collect()
    }

    /// Sample carrying the most force (first one on ties).
    pub fn peak_sample(&self) -> Option<&TrackSample> {
        self.samples
            .iter()
            .fold(None, |best: Option<&TrackSample>, s| match best {
                Some(b) if b.total_force >= s.total_force => Some(b),
                _ => Some(s),
            })
    }
}

/// Incremental nearest-neighbor foot tracker.
///
/// Side convention (walking toward `+x`): of two concurrent tracks the one
/// with the smaller y is the right foot. Later tracks take the side opposite
/// a concurrent resolved track, or alternate from the previously started
/// track when alone.
#[derive(Debug, Clone)]
pub struct FootTracker {
    gate: f64,
    tracks: Vec<FootTrack>,
    active: Vec<usize>,
    last_timestamp: Option<u64>,
}

impl FootTracker {
    pub fn new(gate_m: f64) -> Self {
        Self {
            gate: gate_m,
            tracks: Vec::new(),
            active: Vec::new(),
            last_timestamp: None,
        }
    }

    pub fn tracks(&self) -> &[FootTrack] {
        &self.tracks
    }

    pub fn active_tracks(&self) -> impl Iterator<Item = &FootTrack> {
        self.active.iter().map(|&i| &self.tracks[i])
    }

    /// Feeds one frame's clusters. Frames must arrive in strictly increasing
    /// time; out-of-order frames are ignored.
    pub fn push(&mut self, timestamp_us: u64, clusters: Vec<FootCluster>) {
        if self.last_timestamp.is_some_and(|t| timestamp_us <= t) {
            return;
        }
        self.last_timestamp = Some(timestamp_us);

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ai, &ti) in self.active.iter().enumerate() {
            let last = self.tracks[ti].samples.last().expect("active track has samples").cof;
            for (ci, c) in clusters.iter().enumerate() {
                let d = (c.cof.0 - last.0).hypot(c.cof.1 - last.1);
                if d <= self.gate {
                    pairs.push((d, ai, ci));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut track_for_cluster: Vec<Option<usize>> = vec![None; clusters.len()];
        let mut track_taken = vec![false; self.active.len()];
        for (_, ai, ci) in pairs {
            if !track_taken[ai] && track_for_cluster[ci].is_none() {
                track_taken[ai] = true;
                track_for_cluster[ci] = Some(self.active[ai]);
            }
        }

        let mut next_active = Vec::with_capacity(clusters.len());
        let mut new_tracks = Vec::new();
        for (ci, cluster) in clusters.into_iter().enumerate() {
            let sample = TrackSample {
                timestamp_us,
                total_force: cluster.total_force,
                cof: cluster.cof,
                cluster,
            };
            match track_for_cluster[ci] {
                Some(ti) => {
                    self.tracks[ti].samples.push(sample);
                    next_active.push(ti);
                }
                None => {
                    let ti = self.tracks.len();
                    self.tracks.push(FootTrack {
                        id: ti as u32,
                        side: Side::Unknown,
                        samples: vec![sample],
                    });
                    next_active.push(ti);
                    new_tracks.push(ti);
                }
            }
        }
        next_active.sort_unstable();
        self.active = next_active;
        self.resolve_sides(&new_tracks);
    }

    fn resolve_sides(&mut self, new_tracks: &[usize]) {
        let active = self.active.clone();
        if active.len() >= 2 {
            let resolved: Vec<Side> = active
                .iter()
                .map(|&i| self.tracks[i].side)
                .filter(|s| s.is_known())
                .collect();
            if resolved.is_empty() {
                let mut by_y = active.clone();
                by_y.sort_by(|&a, &b| {
                    let ya = self.tracks[a].samples.last().unwrap().cof.1;
                    let yb = self.tracks[b].samples.last().unwrap().cof.1;
                    ya.total_cmp(&yb).then(a.cmp(&b))
                });
                self.tracks[by_y[0]].side = Side::Right;
                self.tracks[*by_y.last().unwrap()].side = Side::Left;
            } else {
                let has_left = resolved.contains(&Side::Left);
                let has_right = resolved.contains(&Side::Right);
                if has_left != has_right {
                    let s = if has_left { Side::Right } else { Side::Left };
                    for &i in &active {
                        if !self.tracks[i].side.is_known() {
                            self.tracks[i].side = s;
                        }
                    }
                }
            }
        }
        for &ti in new_tracks {
            if self.tracks[ti].side.is_known() || ti == 0 {
                continue;
            }
            if let Some(prev) = self.tracks[..ti].iter().rev().find(|t| t.side.is_known()) {
                if prev.id as usize == ti - 1 {
                    self.tracks[ti].side = prev.side.opposite();
                }
            }
        }
    }

    /// Closes all tracks and back-fills unresolved sides by alternation.
    pub fn finish(mut self) -> Vec<FootTrack> {
        let n = self.tracks.len();
        for _ in 0..n {
            let mut changed = false;
            for i in 0..n {
                if self.tracks[i].side.is_known() {
                    continue;
                }
                let prev = i.checked_sub(1).map(|p| self.tracks[p].side);
                let next = self.tracks.get(i + 1).map(|t| t.side);
                let inferred = match (prev, next) {
                    (Some(p), _) if p.is_known() => p.opposite(),
                    (_, Some(nx)) if nx.is_known() => nx.opposite(),
                    _ => Side::Unknown,
                };
                if inferred.is_known() {
                    self.tracks[i].side = inferred;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.tracks
    }
}

/// Batch form of [`FootTracker`].
pub fn track_feet(frames: Vec<FrameContacts>, gate_m: f64) -> Vec<FootTrack> {
    let mut tracker = FootTracker::new(gate_m);
    for f in frames {
        tracker.push(f.timestamp_us, f.clusters);
    }
    tracker.finish()
}

/// Ground force split between the feet at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSplit {
    pub timestamp_us: u64,
    pub left_g: f64,
    pub right_g: f64,
    pub unknown_g: f64,
}

impl ForceSplit {
    /// Left foot's share of the two-foot total; `None` when neither foot
    /// touches the walkway.
    pub fn left_share(&self) -> Option<f64> {
        force_distribution(self.left_g, self.right_g)
    }

    pub fn is_double_support(&self) -> bool {
        self.left_g > 0.0 && self.right_g > 0.0
    }
}

/// `left / (left + right)`; 1.0 for left-only contact, 0.0 for right-only.
pub fn force_distribution(left_g: f64, right_g: f64) -> Option<f64> {
    let total = left_g + right_g;
    if total > 0.0 {
        Some(left_g / total)
    } else {
        None
    }
}

/// Per-frame force split reconstructed from finished tracks. `timestamps`
/// lists every analyzed frame so frames with no contact are included.
pub fn distribution_series(tracks: &[FootTrack], timestamps: &[u64]) -> Vec<ForceSplit> {
    let mut out: Vec<ForceSplit> = timestamps
        .iter()
        .map(|&t| ForceSplit {
            timestamp_us: t,
            left_g: 0.0,
            right_g: 0.0,
            unknown_g: 0.0,
        })
        .collect();
    for track in tracks {
        for s in &track.samples {
            if let Ok(i) = timestamps.binary_search(&s.timestamp_us) {
                let slot = &mut out[i];
                match track.side {
                    Side::Left => slot.left_g += s.total_force,
                    Side::Right => slot.right_g += s.total_force,
                    Side::Unknown => slot.unknown_g += s.total_force,
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walkway::{contact_mask, force_to_raw, value_index, COLS, NODES_PER_TILE};

    fn frame_with(tiles: u8, nodes: &[(usize, usize, u16)]) -> PressureFrame {
        let mut f = PressureFrame::zeroed(tiles, 0, 0);
        for &(row, gcol, raw) in nodes {
            f.values[global_to_index(row, gcol)] = raw;
        }
        f
    }

    fn blobs_of(f: &PressureFrame) -> Vec<Blob> {
        segment_blobs(&contact_mask(f), f)
    }

    #[test]
    fn empty_mask_no_blobs() {
        let f = PressureFrame::zeroed(1, 0, 0);
        assert!(blobs_of(&f).is_empty());
        assert_eq!(frame_center_of_force(&f), None);
    }

    #[test]
    fn adjacent_nodes_weighted_cof() {
        let f = frame_with(1, &[(0, 0, force_to_raw(1000.0)), (0, 1, force_to_raw(3000.0))]);
        let raws = (force_to_raw(1000.0) as f64, force_to_raw(3000.0) as f64);
        let blobs = blobs_of(&f);
        assert_eq!(blobs.len(), 1);
        let expect = (raws.0 * 0.00635 + raws.1 * 0.01905) / (raws.0 + raws.1);
        assert!((blobs[0].cof.0 - expect).abs() < 1e-12);
        // exact-weight version of the hand example: (1*0.00635 + 3*0.01905)/4
        let f = frame_with(1, &[(0, 0, 1000), (0, 1, 3000)]);
        assert!((blobs_of(&f)[0].cof.0 - 0.015875).abs() < 1e-12);
    }

    #[test]
    fn diagonal_neighbors_connect() {
        let f = frame_with(1, &[(5, 5, 100), (6, 6, 100), (7, 7, 100)]);
        assert_eq!(blobs_of(&f).len(), 1);
        let f = frame_with(1, &[(5, 5, 100), (7, 7, 100)]);
        assert_eq!(blobs_of(&f).len(), 2);
    }

    #[test]
    fn blobs_stitch_across_tiles() {
        let f = frame_with(2, &[(10, COLS - 1, 200), (10, COLS, 200)]);
        let b = blobs_of(&f);
        assert_eq!(b.len(), 1);
        assert!((b[0].cof.0 - 48.0 * PITCH_M).abs() < 1e-12);
    }

    #[test]
    fn distant_regions_two_blobs() {
        // 0.5 m apart along x is ~39 columns
        let f = frame_with(2, &[(10, 2, 500), (10, 41, 500)]);
        assert_eq!(blobs_of(&f).len(), 2);
    }

    #[test]
    fn cluster_merge_rule() {
        // heel and toe 0.08 m apart (gap between node centers along x)
        let gap_cols = (0.08 / PITCH_M).round() as usize; // 6 cols -> 0.0762 m
        let f = frame_with(1, &[(10, 2, 500), (10, 2 + gap_cols, 500)]);
        let blobs = blobs_of(&f);
        assert_eq!(blobs.len(), 2);
        assert!(blobs[0].bbox.gap(&blobs[1].bbox) < 0.10);
        assert_eq!(cluster_feet(blobs, 0.10).len(), 1);

        let f = frame_with(2, &[(10, 2, 500), (10, 41, 500)]);
        assert_eq!(cluster_feet(blobs_of(&f), 0.10).len(), 2);

        let f = frame_with(1, &[(10, 2, 500), (11, 3, 900)]);
        let blobs = blobs_of(&f);
        let cof = blobs[0].cof;
        let clusters = cluster_feet(blobs, 0.10);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].cof, cof);
    }

    #[test]
    fn bbox_gap_geometry() {
        let a = BBox { min: (0.0, 0.0), max: (1.0, 1.0) };
        let b = BBox { min: (1.08, 0.5), max: (2.0, 2.0) };
        assert!((a.gap(&b) - 0.08).abs() < 1e-12);
        let c = BBox { min: (1.3, 1.4), max: (2.0, 2.0) };
        assert!((a.gap(&c) - 0.5).abs() < 1e-12);
        assert_eq!(a.gap(&a), 0.0);
    }

    #[test]
    fn cof_weighted_examples() {
        // two equal clusters centered at x = 1.0 and x = 2.0 (in columns)
        let c1 = (1.0 / PITCH_M - 0.5).round() as usize;
        let c2 = (2.0 / PITCH_M - 0.5).round() as usize;
        let f = frame_with(4, &[(10, c1, 800), (10, c2, 800)]);
        let fc = analyze_frame(&f, &AnalyticsConfig::default());
        assert_eq!(fc.clusters.len(), 2);
        let mid = (fc.clusters[0].cof.0 + fc.clusters[1].cof.0) / 2.0;
        assert!((fc.cof().unwrap().0 - mid).abs() < 1e-12);

        // 1000 g-equivalent at one node, 3000 at another: weights 1:3
        let f = frame_with(4, &[(10, c1, 1000), (10, c2, 3000)]);
        let fc = analyze_frame(&f, &AnalyticsConfig::default());
        let x1 = (c1 as f64 + 0.5) * PITCH_M;
        let x2 = (c2 as f64 + 0.5) * PITCH_M;
        assert!((fc.cof().unwrap().0 - (0.25 * x1 + 0.75 * x2)).abs() < 1e-12);
    }

    fn square_cluster(x: f64, y: f64, raw: u16) -> FootCluster {
        let gcol = (x / PITCH_M) as u16;
        let row = (y / PITCH_M) as u16;
        let nodes = vec![NodeSample { row, gcol, raw }];
        FootCluster::from_blobs(vec![Blob::from_nodes(nodes).unwrap()]).unwrap()
    }

    #[test]
    fn track_continuity_and_gate() {
        let mut t = FootTracker::new(0.30);
        for k in 0..20u64 {
            t.push(k * 10_000, vec![square_cluster(1.0 + 0.01 * k as f64, 0.2, 500)]);
        }
        assert_eq!(t.tracks().len(), 1);
        t.push(200_000, vec![square_cluster(1.7, 0.2, 500)]);
        let tracks = t.finish();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].samples.len(), 20);
    }

    #[test]
    fn side_by_y_order() {
        let tracks = track_feet(
            vec![FrameContacts {
                seq: 0,
                timestamp_us: 0,
                clusters: vec![square_cluster(1.0, 0.30, 500), square_cluster(1.6, 0.10, 500)],
            }],
            0.30,
        );
        let side_at = |y: f64| tracks.iter().find(|t| (t.samples[0].cof.1 - y).abs() < 0.02).unwrap().side;
        assert_eq!(side_at(0.10), Side::Right);
        assert_eq!(side_at(0.30), Side::Left);
    }

    #[test]
    fn sides_alternate_and_never_flip() {
        // right foot down, left joins (double support), right lifts, right rejoins ahead
        let mut t = FootTracker::new(0.30);
        let mut ts = 0u64;
        let mut push = |t: &mut FootTracker, cl: Vec<FootCluster>| {
            t.push(ts, cl);
            ts += 10_000;
        };
        for _ in 0..5 {
            push(&mut t, vec![square_cluster(1.0, 0.13, 900)]);
        }
        for _ in 0..3 {
            push(&mut t, vec![square_cluster(1.0, 0.13, 900), square_cluster(1.65, 0.28, 900)]);
        }
        for _ in 0..5 {
            push(&mut t, vec![square_cluster(1.65, 0.28, 900)]);
        }
        for _ in 0..3 {
            push(&mut t, vec![square_cluster(1.65, 0.28, 900), square_cluster(2.3, 0.13, 900)]);
        }
        let tracks = t.finish();
        let sides: Vec<Side> = tracks.iter().map(|t| t.side).collect();
        assert_eq!(sides, vec![Side::Right, Side::Left, Side::Right]);
    }

    #[test]
    fn tracking_is_deterministic() {
        let seq: Vec<FrameContacts> = (0..30u64)
            .map(|k| FrameContacts {
                seq: k as u32,
                timestamp_us: k * 10_000,
                clusters: vec![
                    square_cluster(1.0 + 0.005 * k as f64, 0.13, 600),
                    square_cluster(1.6, 0.28, 300 + k as u16),
                ],
            })
            .collect();
        assert_eq!(track_feet(seq.clone(), 0.3), track_feet(seq, 0.3));
    }

    #[test]
    fn force_distribution_cases() {
        assert_eq!(force_distribution(500.0, 0.0), Some(1.0));
        assert_eq!(force_distribution(0.0, 500.0), Some(0.0));
        assert_eq!(force_distribution(700.0, 700.0), Some(0.5));
        assert_eq!(force_distribution(30_000.0, 10_000.0), Some(0.75));
        assert_eq!(force_distribution(0.0, 0.0), None);
    }

    #[test]
    fn distribution_series_from_tracks() {
        let frames: Vec<FrameContacts> = (0..4u64)
            .map(|k| FrameContacts {
                seq: k as u32,
                timestamp_us: k * 10_000,
                clusters: if k == 3 {
                    vec![]
                } else {
                    vec![square_cluster(1.0, 0.13, 1000), square_cluster(1.6, 0.28, 3000)]
                },
            })
            .collect();
        let stamps: Vec<u64> = frames.iter().map(|f| f.timestamp_us).collect();
        let tracks = track_feet(frames, 0.3);
        let series = distribution_series(&tracks, &stamps);
        assert_eq!(series.len(), 4);
        assert!((series[0].left_share().unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(series[3].left_share(), None);
    }

    #[test]
    fn frame_total_matches_nodes() {
        let mut f = PressureFrame::zeroed(1, 0, 0);
        f.values[value_index(0, 1, 1)] = 4095;
        assert_eq!(f.total_force(), 10_000.0);
        assert_eq!(f.values.len(), NODES_PER_TILE);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sparse_frame() -> impl Strategy<Value = PressureFrame> {
            proptest::collection::vec((0usize..ROWS, 0usize..COLS, 0u16..=4095), 0..120).prop_map(|nodes| {
                let mut f = PressureFrame::zeroed(2, 0, 0);
                for (r, c, v) in nodes {
                    f.values[global_to_index(r, c)] = v;
                }
                f
            })
        }

        proptest! {
            #[test]
            fn blobs_partition_active_force(f in sparse_frame()) {
                let mask = contact_mask(&f);
                let active_raw: u64 = f.values.iter().zip(&mask).filter(|(_, m)| **m).map(|(v, _)| *v as u64).sum();
                let blobs = segment_blobs(&mask, &f);
                let blob_raw: u64 = blobs.iter().map(|b| b.total_raw).sum();
                prop_assert_eq!(active_raw, blob_raw);
                for b in &blobs {
                    prop_assert!(b.total_force > 0.0);
                    prop_assert!(b.bbox.contains(b.cof));
                }
            }

            #[test]
            fn union_cof_is_weighted_mean(f in sparse_frame()) {
                let blobs = segment_blobs(&contact_mask(&f), &f);
                prop_assume!(blobs.len() >= 2);
                let (a, b) = (&blobs[0], &blobs[1]);
                let union = FootCluster::from_blobs(vec![a.clone(), b.clone()]).unwrap();
                let w = (a.total_force, b.total_force);
                let ex = (w.0 * a.cof.0 + w.1 * b.cof.0) / (w.0 + w.1);
                let ey = (w.0 * a.cof.1 + w.1 * b.cof.1) / (w.0 + w.1);
                prop_assert!((union.cof.0 - ex).abs() <= 1e-9 * ex.abs().max(1e-12));
                prop_assert!((union.cof.1 - ey).abs() <= 1e-9 * ey.abs().max(1e-12));
            }

            #[test]
            fn shifting_one_tile_shifts_cof(f in sparse_frame()) {
                let mut shifted = PressureFrame::zeroed(3, 0, 0);
                for idx in 0..f.values.len() {
                    let (row, gcol) = crate::walkway::index_to_global(idx);
                    shifted.values[global_to_index(row, gcol + COLS)] = f.values[idx];
                }
                let a = analyze_frame(&f, &AnalyticsConfig::default());
                let b = analyze_frame(&shifted, &AnalyticsConfig::default());
                prop_assert_eq!(a.clusters.len(), b.clusters.len());
                for (ca, cb) in a.clusters.iter().zip(&b.clusters) {
                    prop_assert!((cb.cof.0 - ca.cof.0 - 0.6096).abs() < 1e-12);
                    prop_assert!((cb.cof.1 - ca.cof.1).abs() < 1e-15);
                }
            }
        }
    }
}
