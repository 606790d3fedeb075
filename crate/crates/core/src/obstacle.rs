//! Obstacle scheduling, foot-box sweeps against obstacles, available
//! response time and success accounting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Exec};
use crate::gait::HeadSample;
use crate::pressure::Side;

/// Heights a clinician may select, in millimeters.
pub const LEGAL_HEIGHTS_MM: [u32; 7] = [25, 50, 75, 100, 125, 150, 190];
pub const OBSTACLE_DEPTH_M: f64 = 0.10;
pub const FIRST_OBSTACLE_X_M: f64 = 2.0;
pub const OBSTACLE_SPACING_M: f64 = 2.0;
/// Head-to-obstacle distance at which an unanticipated obstacle appears.
pub const SPAWN_DISTANCE_RANGE_M: (f64, f64) = (1.5, 3.0);
/// Pose gaps longer than this inside an overlap window make a trial unreliable.
pub const MAX_POSE_GAP_S: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObstacleError {
    #[error("illegal obstacle height {0} mm (allowed: 25, 50, 75, 100, 125, 150, 190)")]
    IllegalHeight(u32),
    #[error("obstacle count must be at least 1")]
    ZeroCount,
    #[error("{count} obstacles need {needed:.2} m but the walkway is {length:.2} m")]
    DoesNotFit { count: usize, needed: f64, length: f64 },
    #[error("no crossed trials")]
    NoCrossedTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ObstacleHeight(u32);

impl ObstacleHeight {
    pub fn new(mm: u32) -> Result<Self, ObstacleError> {
        if LEGAL_HEIGHTS_MM.contains(&mm) {
            Ok(Self(mm))
        } else {
            Err(ObstacleError::IllegalHeight(mm))
        }
    }

    pub fn mm(self) -> u32 {
        self.0
    }

    pub fn meters(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl TryFrom<u32> for ObstacleHeight {
    type Error = ObstacleError;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ObstacleHeight> for u32 {
    fn from(h: ObstacleHeight) -> u32 {
        h.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleMode {
    /// Present from the start of the walk.
    Anticipated,
    /// Appears once the participant's head is within `spawn_distance`.
    Unanticipated,
}

/// A full-width slab on the walkway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub id: u32,
    /// Leading edge (smaller x).
    pub x_position: f64,
    pub height: ObstacleHeight,
    pub depth: f64,
    pub mode: ObstacleMode,
    /// Head distance that triggers an unanticipated spawn.
    pub spawn_distance: Option<f64>,
}

impl ObstacleSpec {
    pub fn trailing_edge(&self) -> f64 {
        self.x_position + self.depth
    }

    /// True when a head sample should make this obstacle appear.
    pub fn triggers_spawn(&self, head_x: f64) -> bool {
        match (self.mode, self.spawn_distance) {
            (ObstacleMode::Anticipated, _) => true,
            (ObstacleMode::Unanticipated, Some(d)) => self.x_position - head_x <= d,
            (ObstacleMode::Unanticipated, None) => false,
        }
    }
}

/// Obstacles every 2 m from x = 2 m. Unanticipated obstacles draw their
/// spawn distance from U[1.5, 3.0] m with the seed.
pub fn make_schedule(
    mode: ObstacleMode,
    height_mm: u32,
    count: usize,
    walkway_length: f64,
    seed: u64,
) -> Result<Vec<ObstacleSpec>, ObstacleError> {
    let height = ObstacleHeight::new(height_mm)?;
    if count == 0 {
        return Err(ObstacleError::ZeroCount);
    }
    let needed = FIRST_OBSTACLE_X_M + (count - 1) as f64 * OBSTACLE_SPACING_M + OBSTACLE_DEPTH_M;
    if needed > walkway_length + 1e-12 {
        return Err(ObstacleError::DoesNotFit {
            count,
            needed,
            length: walkway_length,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|k| ObstacleSpec {
            id: k as u32,
            x_position: FIRST_OBSTACLE_X_M + k as f64 * OBSTACLE_SPACING_M,
            height,
            depth: OBSTACLE_DEPTH_M,
            mode,
            spawn_distance: match mode {
                ObstacleMode::Anticipated => None,
                ObstacleMode::Unanticipated => {
                    Some(rng.random_range(SPAWN_DISTANCE_RANGE_M.0..=SPAWN_DISTANCE_RANGE_M.1))
                }
            },
        })
        .collect())
}

/// Time the obstacle appears: 0 for anticipated obstacles, otherwise the
/// first head sample that satisfies the spawn distance.
pub fn spawn_time(ob: &ObstacleSpec, head: &[HeadSample]) -> Option<f64> {
    match ob.mode {
        ObstacleMode::Anticipated => Some(0.0),
        ObstacleMode::Unanticipated => head.iter().find(|h| ob.triggers_spawn(h.x)).map(|h| h.time),
    }
}

/// Ankle-tracker sample for one foot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootPose {
    pub time: f64,
    pub foot: Side,
    pub position: (f64, f64, f64),
    /// Heading about +z in degrees; 0 points the toe along +x.
    pub yaw: f64,
}

/// Collision proxy anchored at the ankle tracker and extending forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootBox {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for FootBox {
    fn default() -> Self {
        Self {
            length: 0.26,
            width: 0.10,
            height: 0.06,
        }
    }
}

impl FootBox {
    /// `[back, front]` x-extent of the box for a pose.
    pub fn x_extent(&self, pose: &FootPose) -> (f64, f64) {
        let (s, c) = pose.yaw.to_radians().sin_cos();
        let hw = self.width / 2.0;
        let xs = [0.0, self.length].into_iter().flat_map(|lx| {
            [-hw, hw].map(move |ly| lx * c - ly * s)
        });
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        (pose.position.0 + lo, pose.position.0 + hi)
    }

    pub fn bottom(&self, pose: &FootPose) -> f64 {
        pose.position.2 - self.height
    }
}

/// Sweep outcome for one foot over one obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootCrossing {
    pub side: Side,
    pub overlap_frames: usize,
    /// Minimum `box bottom - obstacle top` over overlap frames.
    pub clearance: Option<f64>,
    pub collided: bool,
    pub first_collision_time: Option<f64>,
    /// First time the whole box is past the trailing edge.
    pub pass_time: Option<f64>,
    pub first_overlap_time: Option<f64>,
    pub last_overlap_time: Option<f64>,
    pub reliable: bool,
}

/// Sweeps one foot's poses (time ordered) against an obstacle, ignoring
/// poses before `from_time`.
pub fn sweep_foot(ob: &ObstacleSpec, poses: &[FootPose], side: Side, fbox: &FootBox, from_time: f64) -> FootCrossing {
    let top = ob.height.meters();
    let mut out = FootCrossing {
        side,
        overlap_frames: 0,
        clearance: None,
        collided: false,
        first_collision_time: None,
        pass_time: None,
        first_overlap_time: None,
        last_overlap_time: None,
        reliable: true,
    };
    let mut prev: Option<(f64, bool)> = None;
    for p in poses.iter().filter(|p| p.time >= from_time) {
        let (back, front) = fbox.x_extent(p);
        let overlap = front >= ob.x_position && back <= ob.trailing_edge();
        if let Some((pt, pover)) = prev {
            if (overlap || pover) && p.time - pt > MAX_POSE_GAP_S {
                out.reliable = false;
            }
        }
        prev = Some((p.time, overlap));
        if overlap {
            let margin = fbox.bottom(p) - top;
            out.overlap_frames += 1;
            out.clearance = Some(out.clearance.map_or(margin, |c: f64| c.min(margin)));
            out.first_overlap_time.get_or_insert(p.time);
            out.last_overlap_time = Some(p.time);
            if margin < 0.0 && !out.collided {
                out.collided = true;
                out.first_collision_time = Some(p.time);
            }
        }
        if back > ob.trailing_edge() && out.pass_time.is_none() {
            out.pass_time = Some(p.time);
            if out.overlap_frames == 0 {
                // jumped over the slab between samples
                out.reliable = false;
            }
            break;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub obstacle_id: u32,
    pub height_mm: u32,
    pub spawn_time: Option<f64>,
    pub crossed: bool,
    pub success: bool,
    pub collision_foot: Option<Side>,
    pub lead_foot: Option<Side>,
    pub lead_clearance: Option<f64>,
    pub trail_clearance: Option<f64>,
    /// Lead-foot available response time (unanticipated obstacles only).
    pub art: Option<f64>,
    /// Same interval measured to the head reaching the leading edge.
    pub art_head: Option<f64>,
    pub crossing_speed: Option<f64>,
    pub reliable: bool,
    pub feet: Vec<FootCrossing>,
}

/// Pose streams for one session, each time ordered.
#[derive(Debug, Clone, Copy)]
pub struct PoseStreams<'a> {
    pub left: &'a [FootPose],
    pub right: &'a [FootPose],
    pub head: &'a [HeadSample],
}

fn interp<T>(samples: &[T], t: f64, time: impl Fn(&T) -> f64, value: impl Fn(&T) -> f64) -> Option<f64> {
    let i = samples.partition_point(|s| time(s) < t);
    if i < samples.len() && time(&samples[i]) == t {
        return Some(value(&samples[i]));
    }
    if i == 0 || i == samples.len() {
        return None;
    }
    let (a, b) = (&samples[i - 1], &samples[i]);
    let w = (t - time(a)) / (time(b) - time(a));
    Some(value(a) + w * (value(b) - value(a)))
}

/// First time at or after `from` when `value` reaches `target`, linearly
/// interpolated between samples.
fn first_reach<T>(samples: &[T], from: f64, target: f64, time: impl Fn(&T) -> f64, value: impl Fn(&T) -> f64) -> Option<f64> {
    if let Some(v0) = interp(samples, from, &time, &value) {
        if v0 >= target {
            return Some(from);
        }
    }
    let start = samples.partition_point(|s| time(s) <= from);
    let mut prev: Option<(f64, f64)> = interp(samples, from, &time, &value).map(|v| (from, v));
    for s in &samples[start..] {
        let (t, v) = (time(s), value(s));
        if v >= target {
            return Some(match prev {
                Some((pt, pv)) if v > pv => pt + (target - pv) / (v - pv) * (t - pt),
                _ => t,
            });
        }
        prev = Some((t, v));
    }
    None
}

/// `t_reach - spawn_time`, where `t_reach` is when the box front of `lead`
/// (or whichever foot gets there first when `lead` is `None`) reaches the
/// obstacle's leading edge.
pub fn available_response_time(
    ob: &ObstacleSpec,
    spawn_time: f64,
    poses: &PoseStreams<'_>,
    lead: Option<Side>,
    fbox: &FootBox,
) -> Option<f64> {
    if ob.mode != ObstacleMode::Unanticipated {
        return None;
    }
    let reach = |stream: &[FootPose]| {
        first_reach(stream, spawn_time, ob.x_position, |p| p.time, |p| fbox.x_extent(p).1)
    };
    let t = match lead {
        Some(Side::Left) => reach(poses.left),
        Some(Side::Right) => reach(poses.right),
        _ => match (reach(poses.left), reach(poses.right)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        },
    }?;
    Some((t - spawn_time).max(0.0))
}

/// Full trial evaluation of one obstacle. `spawn` is `None` for an
/// unanticipated obstacle that never appeared.
pub fn check_crossing(ob: &ObstacleSpec, spawn: Option<f64>, poses: &PoseStreams<'_>, fbox: &FootBox) -> TrialResult {
    let base = TrialResult {
        obstacle_id: ob.id,
        height_mm: ob.height.mm(),
        spawn_time: spawn,
        crossed: false,
        success: false,
        collision_foot: None,
        lead_foot: None,
        lead_clearance: None,
        trail_clearance: None,
        art: None,
        art_head: None,
        crossing_speed: None,
        reliable: true,
        feet: Vec::new(),
    };
    let Some(spawn_t) = spawn else {
        return base;
    };
    let left = sweep_foot(ob, poses.left, Side::Left, fbox, spawn_t);
    let right = sweep_foot(ob, poses.right, Side::Right, fbox, spawn_t);

    let crossed = left.pass_time.is_some() && right.pass_time.is_some();
    let (lead, trail) = match (left.pass_time, right.pass_time) {
        (Some(a), Some(b)) if b < a => (Some(right), Some(left)),
        (Some(_), _) => (Some(left), Some(right)),
        (None, Some(_)) => (Some(right), Some(left)),
        (None, None) => (None, None),
    };
    let collision_foot = [left, right]
        .iter()
        .filter_map(|f| f.first_collision_time.map(|t| (t, f.side)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, s)| s);

    let window = [left, right]
        .iter()
        .filter_map(|f| f.first_overlap_time.zip(f.last_overlap_time))
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
    let crossing_speed = window.and_then(|(t0, t1)| {
        let inside: Vec<&HeadSample> = poses.head.iter().filter(|h| h.time >= t0 && h.time <= t1).collect();
        if inside.len() >= 2 {
            let (a, b) = (inside[0], inside[inside.len() - 1]);
            if b.time > a.time {
                return Some((b.x - a.x) / (b.time - a.time));
            }
        }
        // pelvis proxy: mean ankle x
        let mean_x = |t: f64| {
            let l = interp(poses.left, t, |p| p.time, |p| p.position.0)?;
            let r = interp(poses.right, t, |p| p.time, |p| p.position.0)?;
            Some(0.5 * (l + r))
        };
        (t1 > t0).then(|| Some((mean_x(t1)? - mean_x(t0)?) / (t1 - t0))).flatten()
    });

    let lead_side = lead.filter(|f| f.pass_time.is_some()).map(|f| f.side);
    let art = available_response_time(ob, spawn_t, poses, lead_side, fbox);
    let art_head = (ob.mode == ObstacleMode::Unanticipated)
        .then(|| first_reach(poses.head, spawn_t, ob.x_position, |h| h.time, |h| h.x).map(|t| t - spawn_t))
        .flatten();

    TrialResult {
        crossed,
        success: crossed && !left.collided && !right.collided,
        collision_foot,
        lead_foot: lead_side,
        lead_clearance: lead.and_then(|f| f.clearance),
        trail_clearance: trail.and_then(|f| f.clearance),
        art,
        art_head,
        crossing_speed,
        reliable: left.reliable && right.reliable,
        feet: vec![left, right],
        ..base
    }
}

/// Evaluates every obstacle independently.
pub fn check_all(
    specs: &[ObstacleSpec],
    spawns: &[Option<f64>],
    poses: &PoseStreams<'_>,
    fbox: &FootBox,
    exec: Exec,
) -> Vec<TrialResult> {
    let pairs: Vec<(ObstacleSpec, Option<f64>)> = specs.iter().copied().zip(spawns.iter().copied()).collect();
    exec::map_slice(exec, &pairs, |(ob, spawn)| check_crossing(ob, *spawn, poses, fbox))
}

/// Successes over crossed trials.
pub fn success_rate(results: &[TrialResult]) -> Result<f64, ObstacleError> {
    let crossed = results.iter().filter(|r| r.crossed).count();
    if crossed == 0 {
        return Err(ObstacleError::NoCrossedTrials);
    }
    let ok = results.iter().filter(|r| r.success).count();
    Ok(ok as f64 / crossed as f64)
}
