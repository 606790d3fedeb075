//! Kinematic synthetic walker. Produces pressure frames at 100 Hz and head
//! and ankle poses at 90 Hz that are consistent with programmed gait
//! parameters, so every downstream measurement has a known answer.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dualtask::{LoadCondition, PlaybackSchedule, SoundLevel, VisualLoad};
use crate::exec::{self, Exec};
use crate::gait::HeadSample;
use crate::obstacle::{FootPose, ObstacleSpec};
use crate::pose::PoseSample;
use crate::pressure::Side;
use crate::seed::{derive_seed, derive_seed_n};
use crate::walkway::{self, PressureFrame, WalkwayConfig};

pub const FRAME_RATE_HZ: f64 = 100.0;
pub const POSE_RATE_HZ: f64 = 90.0;
pub const HEAD_HEIGHT_M: f64 = 1.7;
pub const HEAD_BOB_M: f64 = 0.02;
pub const HEAD_SWAY_M: f64 = 0.01;
/// Ankle tracker height above the foot sole.
pub const ANKLE_HEIGHT_M: f64 = 0.06;
/// Default sensor noise, raw counts.
pub const NOISE_SD_COUNTS: f64 = 3.0;
/// Stance feet keep this much room from any obstacle.
pub const OBSTACLE_MARGIN_M: f64 = 0.10;
/// Crossing swings hold their apex this far beyond the slab on each side.
pub const PLATEAU_PAD_M: f64 = 0.02;
/// Minimum clearance the walker aims for when stepping over an obstacle.
pub const DEFAULT_CROSSING_MARGIN_M: f64 = 0.05;
const G_PER_KG: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid walker parameter `{field}`: {message}")]
    Param { field: &'static str, message: String },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("cannot plan the walk: {0}")]
    Plan(String),
}

fn param(field: &'static str, message: impl Into<String>) -> SimError {
    SimError::Param {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkerParams {
    /// m/s
    pub speed: f64,
    /// steps/min
    pub cadence: f64,
    pub step_width: f64,
    pub foot_length: f64,
    pub body_mass: f64,
    /// Peak foot-bottom height of an ordinary swing.
    pub swing_apex: f64,
    /// Each double-support period as a fraction of the stride.
    pub double_support_fraction: f64,
    pub noise_seed: u64,
    pub noise_scale: f64,
    /// SD of footfall placement along the walkway.
    pub placement_sd: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        Self {
            speed: 1.2,
            cadence: 110.0,
            step_width: 0.15,
            foot_length: 0.26,
            body_mass: 70.0,
            swing_apex: 0.05,
            double_support_fraction: 0.1,
            noise_seed: 0,
            noise_scale: 1.0,
            placement_sd: 0.01,
        }
    }
}

impl WalkerParams {
    pub fn step_time(&self) -> f64 {
        60.0 / self.cadence
    }

    /// `speed = cadence / 60 * step_length`.
    pub fn step_length(&self) -> f64 {
        self.speed * self.step_time()
    }

    pub fn body_weight_g(&self) -> f64 {
        self.body_mass * G_PER_KG
    }

    pub fn validate(&self, walkway: &WalkwayConfig) -> Result<(), SimError> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.speed) {
            return Err(param("speed", "must be positive"));
        }
        if !(finite_pos(self.cadence) && self.cadence <= 240.0) {
            return Err(param("cadence", "must be in (0, 240] steps/min"));
        }
        if !(0.15..=0.40).contains(&self.foot_length) {
            return Err(param("foot_length", "must be in [0.15, 0.40] m"));
        }
        let max_width = walkway.width() - 0.10 - 2.0 * 0.04;
        if !(self.step_width >= 0.0 && self.step_width <= max_width) {
            return Err(param("step_width", format!("must be in [0, {max_width:.3}] m to keep both feet on the walkway")));
        }
        if !(finite_pos(self.body_mass) && self.body_mass <= 250.0) {
            return Err(param("body_mass", "must be in (0, 250] kg"));
        }
        if !(self.swing_apex >= 0.0 && self.swing_apex < 0.5) {
            return Err(param("swing_apex", "must be in [0, 0.5) m"));
        }
        if !(self.double_support_fraction > 0.0 && self.double_support_fraction < 0.5) {
            return Err(param("double_support_fraction", "must be in (0, 0.5)"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(param("noise_scale", "must be non-negative"));
        }
        if !(self.placement_sd >= 0.0 && self.placement_sd <= 0.05) {
            return Err(param("placement_sd", "must be in [0, 0.05] m"));
        }
        let l = self.step_length();
        if !(0.3..=1.2).contains(&l) {
            return Err(param("speed", format!("speed and cadence imply a step length of {l:.3} m, outside [0.3, 1.2]")));
        }
        if l + self.foot_length > walkway.length() {
            return Err(param("speed", "a single step does not fit on the walkway"));
        }
        Ok(())
    }
}

/// Speed multipliers applied under load. Cadence is held, so step length
/// shrinks with speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadFactors {
    pub busy_sound: f64,
    pub busy_visual: f64,
    pub cognitive: f64,
    /// Added to `placement_sd` per active modifier.
    pub placement_sd_inflation: f64,
}

impl Default for LoadFactors {
    fn default() -> Self {
        Self {
            busy_sound: 0.95,
            busy_visual: 0.97,
            cognitive: 0.92,
            placement_sd_inflation: 0.01,
        }
    }
}

pub fn apply_load_modifiers(params: &WalkerParams, condition: &LoadCondition, factors: &LoadFactors) -> WalkerParams {
    let active = [
        (condition.sound == SoundLevel::Busy, factors.busy_sound),
        (condition.visual == VisualLoad::Busy, factors.busy_visual),
        (condition.cognitive, factors.cognitive),
    ];
    let mut out = *params;
    for (on, f) in active {
        if on {
            out.speed *= f;
            out.placement_sd += factors.placement_sd_inflation;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Onset {
    AtTime { start_s: f64, duration_s: f64 },
    /// While the head is within this distance before an obstacle.
    NearObstacle { within_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Clean,
    /// Crossing apex for one obstacle (0-based index) forced to `apex_m`.
    Trip { obstacle_index: usize, apex_m: f64 },
    Hesitation { factor: f64, onset: Onset },
    /// Speed factor while a sentence is playing.
    DualTaskSlowdown { factor: f64 },
}

impl Scenario {
    pub fn validate(&self, obstacles: &[ObstacleSpec], sentences: Option<&PlaybackSchedule>) -> Result<(), SimError> {
        let factor_ok = |f: f64| f > 0.0 && f <= 1.0;
        match *self {
            Scenario::Clean => Ok(()),
            Scenario::Trip { obstacle_index, apex_m } => {
                if obstacle_index >= obstacles.len() {
                    return Err(SimError::Scenario(format!(
                        "trip targets obstacle {obstacle_index} but only {} are scheduled",
                        obstacles.len()
                    )));
                }
                if !(0.0..0.5).contains(&apex_m) {
                    return Err(SimError::Scenario("trip apex must be in [0, 0.5) m".into()));
                }
                Ok(())
            }
            Scenario::Hesitation { factor, onset } => {
                if !factor_ok(factor) {
                    return Err(SimError::Scenario("hesitation factor must be in (0, 1]".into()));
                }
                match onset {
                    Onset::AtTime { start_s, duration_s } if start_s < 0.0 || duration_s <= 0.0 => {
                        Err(SimError::Scenario("hesitation window must start at or after 0 and last > 0 s".into()))
                    }
                    Onset::NearObstacle { within_m } if within_m <= 0.0 => {
                        Err(SimError::Scenario("hesitation distance must be positive".into()))
                    }
                    _ => Ok(()),
                }
            }
            Scenario::DualTaskSlowdown { factor } => {
                if !factor_ok(factor) {
                    return Err(SimError::Scenario("dual-task slowdown factor must be in (0, 1]".into()));
                }
                if sentences.is_none() {
                    return Err(SimError::Scenario("dual-task slowdown needs a cognitive session".into()));
                }
                Ok(())
            }
        }
    }
}

/// Session facts the walker reacts to.
#[derive(Debug, Clone, PartialEq)]
pub struct SimContext {
    pub walkway: WalkwayConfig,
    pub duration_s: f64,
    pub obstacles: Vec<ObstacleSpec>,
    pub sentences: Option<PlaybackSchedule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footfall {
    pub side: Side,
    /// Ankle (heel) position; the footprint spans `[x, x + foot_length]`.
    pub x: f64,
    pub y: f64,
    pub contact: f64,
    /// Toe-off time; infinite for a foot still planted when the walk ends.
    pub off: f64,
    /// Loading ramp at contact.
    pub ramp_in: f64,
    /// Unloading ramp before toe-off.
    pub ramp_out: f64,
    /// Lands on the walkway before the walk ends.
    pub real: bool,
}

impl Footfall {
    pub fn load_fraction(&self, t: f64) -> f64 {
        if t < self.contact || t >= self.off {
            return 0.0;
        }
        let up = ((t - self.contact) / self.ramp_in).min(1.0);
        let down = if self.off.is_finite() {
            ((self.off - t) / self.ramp_out).min(1.0)
        } else {
            1.0
        };
        up.min(down)
    }
}

/// The footfall sequence, including two planted before `t = 0` and one
/// virtual footfall that ends the walk.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitPlan {
    pub footfalls: Vec<Footfall>,
    pub end_time: f64,
    pub params: WalkerParams,
    pub crossing_apex: Vec<f64>,
    obstacles: Vec<ObstacleSpec>,
}

fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Moves footfalls out of the zone around each obstacle.
fn avoid_obstacles(xs: &mut [f64], first: usize, obstacles: &[ObstacleSpec], fl: f64, step: f64) -> Result<(), SimError> {
    for o in obstacles {
        let lo = o.x_position - OBSTACLE_MARGIN_M - fl;
        let hi = o.trailing_edge() + OBSTACLE_MARGIN_M;
        let inside: Vec<usize> = (first..xs.len()).filter(|&i| xs[i] > lo && xs[i] < hi).collect();
        match inside.as_slice() {
            [] => {}
            [i] => {
                let i = *i;
                let prev = xs[i - 1];
                let to_lo = xs[i] - lo;
                let to_hi = hi - xs[i];
                // a pull-back may not collapse the previous step
                xs[i] = if to_lo <= to_hi && lo - prev >= 0.5 * step { lo } else { hi };
            }
            [i, j] => {
                xs[*i] = lo;
                xs[*j] = hi;
            }
            _ => {
                return Err(SimError::Plan(format!(
                    "step length {step:.3} m is too short to plan around the obstacle at {:.2} m",
                    o.x_position
                )))
            }
        }
    }
    Ok(())
}

impl GaitPlan {
    pub fn new(params: &WalkerParams, scenario: &Scenario, ctx: &SimContext) -> Result<Self, SimError> {
        params.validate(&ctx.walkway)?;
        scenario.validate(&ctx.obstacles, ctx.sentences.as_ref())?;
        if !(ctx.duration_s > 0.0) {
            return Err(SimError::Plan("duration must be positive".into()));
        }
        let t_nom = params.step_time();
        let l = params.step_length();
        let fl = params.foot_length;
        let length = ctx.walkway.length();
        let centre = ctx.walkway.width() / 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.noise_seed, "plan"));
        let jitter = Normal::new(0.0, params.placement_sd).map_err(|e| SimError::Plan(e.to_string()))?;

        // positions: two planted behind the start line, then a jittered grid
        let max_steps = (length / l).ceil() as usize + 2;
        let mut xs = vec![-l, 0.0];
        for k in 0..max_steps {
            let mut x = (k as f64 + 1.0) * l;
            if params.placement_sd > 0.0 {
                x += jitter.sample(&mut rng);
            }
            xs.push(x);
        }
        avoid_obstacles(&mut xs, 2, &ctx.obstacles, fl, l)?;

        let factor_at = |t: f64, x: f64| -> f64 {
            match *scenario {
                Scenario::Hesitation { factor, onset } => {
                    let on = match onset {
                        Onset::AtTime { start_s, duration_s } => t >= start_s && t < start_s + duration_s,
                        Onset::NearObstacle { within_m } => {
                            let head = x + fl / 2.0;
                            ctx.obstacles.iter().any(|o| {
                                let gap = o.x_position - head;
                                gap >= 0.0 && gap <= within_m
                            })
                        }
                    };
                    if on { factor } else { 1.0 }
                }
                Scenario::DualTaskSlowdown { factor } => {
                    let playing = ctx.sentences.as_ref().is_some_and(|s| s.playing_at(t));
                    if playing { factor } else { 1.0 }
                }
                _ => 1.0,
            }
        };

        // contact times; the step into footfall i lasts t_nom / factor
        let mut contacts = vec![-1.5 * t_nom, -0.5 * t_nom];
        let mut n_real = 2usize;
        for i in 2..xs.len() {
            let prev_t = contacts[i - 1];
            let c = prev_t + t_nom / factor_at(prev_t.max(0.0), xs[i - 1]);
            contacts.push(c);
            if xs[i] + fl > length || c > ctx.duration_s {
                break;
            }
            n_real += 1;
        }
        let n = contacts.len();
        if n_real < 3 {
            return Err(SimError::Plan("the walkway is too short for a single step".into()));
        }
        if n == n_real {
            return Err(SimError::Plan("walkway plan did not terminate".into()));
        }
        let end_time = contacts[n - 1].min(ctx.duration_s);

        let step = |i: usize| contacts[i] - contacts[i - 1];
        // double support after footfall i lasts 2·δ·min(T_i, T_{i+1})
        let ds = |i: usize| {
            let t_i = if i == 0 { t_nom } else { step(i) };
            let t_next = if i + 1 < n { step(i + 1) } else { t_i };
            2.0 * params.double_support_fraction * t_i.min(t_next)
        };
        // footfall -1 is right so the first step onto the walkway is left
        let mut footfalls = Vec::with_capacity(n);
        for i in 0..n {
            let side = if i % 2 == 0 { Side::Left } else { Side::Right };
            let y = match side {
                Side::Left => centre + params.step_width / 2.0,
                _ => centre - params.step_width / 2.0,
            };
            let (off, ramp_out) = if i + 1 < n_real {
                (contacts[i + 1] + ds(i + 1), ds(i + 1))
            } else {
                (f64::INFINITY, ds(i))
            };
            footfalls.push(Footfall {
                side,
                x: xs[i],
                y,
                contact: contacts[i],
                off,
                ramp_in: ds(i),
                ramp_out,
                real: i < n_real,
            });
        }

        let crossing_apex = ctx
            .obstacles
            .iter()
            .enumerate()
            .map(|(k, o)| match *scenario {
                Scenario::Trip { obstacle_index, apex_m } if obstacle_index == k => apex_m,
                _ => params.swing_apex.max(o.height.meters() + DEFAULT_CROSSING_MARGIN_M),
            })
            .collect();

        Ok(Self {
            footfalls,
            end_time,
            params: *params,
            crossing_apex,
            obstacles: ctx.obstacles.clone(),
        })
    }

    /// Footfalls that actually land, excluding the two planted before t = 0.
    pub fn walk_footfalls(&self) -> impl Iterator<Item = &Footfall> {
        self.footfalls.iter().skip(2).filter(|f| f.real)
    }

    pub fn frame_count(&self) -> usize {
        (self.end_time * FRAME_RATE_HZ - 1e-9).ceil().max(0.0) as usize
    }

    pub fn pose_count(&self) -> usize {
        (self.end_time * POSE_RATE_HZ - 1e-9).ceil().max(0.0) as usize
    }

    fn swing_height(&self, from: f64, to: f64, ax: f64, tau: f64) -> f64 {
        let fl = self.params.foot_length;
        let crossing = self
            .obstacles
            .iter()
            .zip(&self.crossing_apex)
            .find(|(o, _)| from + fl <= o.x_position && to >= o.trailing_edge());
        match crossing {
            None => self.params.swing_apex * (PI * tau).sin(),
            Some((o, &h)) => {
                let lo = o.x_position - fl - PLATEAU_PAD_M;
                let hi = o.trailing_edge() + PLATEAU_PAD_M;
                let ease = |u: f64| (0.5 * PI * u.clamp(0.0, 1.0)).sin().powi(2);
                if ax < lo {
                    if lo > from { h * ease((ax - from) / (lo - from)) } else { h }
                } else if ax > hi {
                    if to > hi { h * ease((to - ax) / (to - hi)) } else { h }
                } else {
                    h
                }
            }
        }
    }

    pub fn foot_pose(&self, side: Side, t: f64) -> FootPose {
        let mine: Vec<&Footfall> = self.footfalls.iter().filter(|f| f.side == side).collect();
        let j = mine.partition_point(|f| f.contact <= t).saturating_sub(1);
        let f = mine[j];
        let (x, bottom) = if t < f.off || j + 1 >= mine.len() {
            (f.x, 0.0)
        } else {
            let next = mine[j + 1];
            let tau = (t - f.off) / (next.contact - f.off);
            let ax = f.x + (next.x - f.x) * min_jerk(tau);
            (ax, self.swing_height(f.x, next.x, ax, tau).max(0.0))
        };
        FootPose {
            time: t,
            foot: side,
            position: (x, f.y, bottom + ANKLE_HEIGHT_M),
            yaw: 0.0,
        }
    }

    pub fn head_sample(&self, t: f64) -> HeadSample {
        let ff = &self.footfalls;
        let i = ff.partition_point(|f| f.contact <= t).saturating_sub(1).clamp(1, ff.len() - 2);
        let mid = |k: usize| 0.5 * (ff[k - 1].x + ff[k].x) + self.params.foot_length / 2.0;
        let u = ((t - ff[i].contact) / (ff[i + 1].contact - ff[i].contact)).clamp(0.0, 1.0);
        let x = mid(i) + u * (mid(i + 1) - mid(i));
        let phase = i as f64 + u;
        let centre = 0.5 * (ff[0].y + ff[1].y);
        HeadSample {
            time: t,
            x,
            y: centre + HEAD_SWAY_M * (PI * phase).sin(),
            z: HEAD_HEIGHT_M + HEAD_BOB_M * (2.0 * PI * phase).sin(),
            yaw: 0.0,
        }
    }

    pub fn pose_sample(&self, index: usize) -> PoseSample {
        let t = pose_time_us(index) as f64 / 1e6;
        PoseSample {
            time: t,
            head: self.head_sample(t),
            left: self.foot_pose(Side::Left, t),
            right: self.foot_pose(Side::Right, t),
        }
    }

    /// Noiseless force per node for frame time `t`, keyed by flat index.
    pub fn node_forces(&self, walkway: &WalkwayConfig, t: f64) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        let bw = self.params.body_weight_g();
        let fl = self.params.foot_length;
        for f in &self.footfalls {
            let load = f.load_fraction(t) * bw;
            if load <= 0.0 {
                continue;
            }
            let stance = if f.off.is_finite() {
                f.off - f.contact
            } else {
                self.params.step_time() + f.ramp_in
            };
            let phi = ((t - f.contact) / stance).clamp(0.0, 1.0);
            let blobs = [
                (f.x + 0.173 * fl, (0.135 * fl, 0.030), load * (1.0 - phi)),
                (f.x + 0.75 * fl, (0.173 * fl, 0.040), load * phi),
            ];
            for (cx, (sx, sy), force) in blobs {
                if force > 0.0 {
                    render_blob(walkway, cx, f.y, sx, sy, force, &mut out);
                }
            }
        }
        out
    }

    pub fn render_frame(&self, walkway: &WalkwayConfig, seq: u32) -> PressureFrame {
        let t = frame_time_us(seq as usize) as f64 / 1e6;
        let mut frame = PressureFrame::zeroed(walkway.tile_count as u8, seq, frame_time_us(seq as usize));
        let forces = self.node_forces(walkway, t);
        let sd = NOISE_SD_COUNTS * self.params.noise_scale;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_n(self.params.noise_seed, seq as u64));
        let noise = Normal::new(0.0, sd.max(f64::MIN_POSITIVE)).expect("finite sd");
        for (idx, force) in forces {
            let mut raw = force * walkway::RAW_MAX as f64 / walkway::FORCE_MAX_G;
            if sd > 0.0 {
                raw += noise.sample(&mut rng);
            }
            frame.values[idx] = raw.round().clamp(0.0, walkway::RAW_MAX as f64) as u16;
        }
        frame
    }
}

/// Pose clock, rounded to whole microseconds like the frame clock.
pub fn pose_time_us(index: usize) -> u64 {
    (index as u64 * 1_000_000 * 2 + POSE_RATE_HZ as u64) / (2 * POSE_RATE_HZ as u64)
}

pub fn frame_time_us(seq: usize) -> u64 {
    seq as u64 * 1_000_000 / FRAME_RATE_HZ as u64
}

/// Spreads `force` over nodes inside an ellipse with weight `1 - r²`.
/// Nodes off the walkway receive nothing.
fn render_blob(walkway: &WalkwayConfig, cx: f64, cy: f64, sx: f64, sy: f64, force: f64, out: &mut BTreeMap<usize, f64>) {
    let p = walkway::PITCH_M;
    let cols = walkway.global_cols() as i64;
    let rows = walkway::ROWS as i64;
    let c0 = (((cx - sx) / p).floor() as i64).max(0);
    let c1 = (((cx + sx) / p).ceil() as i64).min(cols - 1);
    let r0 = (((cy - sy) / p).floor() as i64).max(0);
    let r1 = (((cy + sy) / p).ceil() as i64).min(rows - 1);
    let mut nodes = Vec::new();
    let mut total = 0.0;
    // normalise over the full ellipse, so clipped nodes lose their share
    let full_c0 = ((cx - sx) / p).floor() as i64;
    let full_c1 = ((cx + sx) / p).ceil() as i64;
    let full_r0 = ((cy - sy) / p).floor() as i64;
    let full_r1 = ((cy + sy) / p).ceil() as i64;
    for gc in full_c0..=full_c1 {
        for r in full_r0..=full_r1 {
            let dx = ((gc as f64 + 0.5) * p - cx) / sx;
            let dy = ((r as f64 + 0.5) * p - cy) / sy;
            let w = 1.0 - (dx * dx + dy * dy);
            if w > 0.0 {
                total += w;
                if (c0..=c1).contains(&gc) && (r0..=r1).contains(&r) {
                    nodes.push((r as usize, gc as usize, w));
                }
            }
        }
    }
    for (r, gc, w) in nodes {
        let idx = walkway::global_to_index(r, gc);
        *out.entry(idx).or_default() += force * w / total;
    }
}

/// Everything one simulated walk produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub plan: GaitPlan,
    pub frames: Vec<PressureFrame>,
    pub poses: Vec<PoseSample>,
}

pub fn simulate(params: &WalkerParams, scenario: &Scenario, ctx: &SimContext, exec: Exec) -> Result<SimOutput, SimError> {
    let plan = GaitPlan::new(params, scenario, ctx)?;
    let frames = exec::map_range(exec, plan.frame_count(), |seq| plan.render_frame(&ctx.walkway, seq as u32));
    let poses = exec::map_range(exec, plan.pose_count(), |i| plan.pose_sample(i));
    Ok(SimOutput { plan, frames, poses })
}

/// One time-ordered item of a live stream.
#[derive(Debug, Clone, PartialEq)]
pub enum SimItem {
    Frame(PressureFrame),
    Pose(PoseSample),
}

impl SimItem {
    pub fn time(&self) -> f64 {
        match self {
            SimItem::Frame(f) => f.time_s(),
            SimItem::Pose(p) => p.time,
        }
    }
}

/// Lazily rendered, time-ordered merge of frames and poses. Poses come
/// first on equal timestamps.
#[derive(Debug, Clone)]
pub struct SimStream {
    plan: GaitPlan,
    walkway: WalkwayConfig,
    next_frame: usize,
    next_pose: usize,
}

impl SimStream {
    pub fn new(params: &WalkerParams, scenario: &Scenario, ctx: &SimContext) -> Result<Self, SimError> {
        Ok(Self {
            plan: GaitPlan::new(params, scenario, ctx)?,
            walkway: ctx.walkway,
            next_frame: 0,
            next_pose: 0,
        })
    }

    pub fn plan(&self) -> &GaitPlan {
        &self.plan
    }
}

impl Iterator for SimStream {
    type Item = SimItem;

    fn next(&mut self) -> Option<SimItem> {
        let frame_t = (self.next_frame < self.plan.frame_count()).then(|| frame_time_us(self.next_frame));
        let pose_t = (self.next_pose < self.plan.pose_count()).then(|| pose_time_us(self.next_pose));
        match (frame_t, pose_t) {
            (None, None) => None,
            (Some(ft), Some(pt)) if ft < pt => self.emit_frame(),
            (Some(_), None) => self.emit_frame(),
            _ => {
                let p = self.plan.pose_sample(self.next_pose);
                self.next_pose += 1;
                Some(SimItem::Pose(p))
            }
        }
    }
}

impl SimStream {
    fn emit_frame(&mut self) -> Option<SimItem> {
        let f = self.plan.render_frame(&self.walkway, self.next_frame as u32);
        self.next_frame += 1;
        Some(SimItem::Frame(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obstacle::{make_schedule, ObstacleMode};
    use crate::pressure::{analyze_frame, AnalyticsConfig};

    fn ctx(tiles: usize, obstacles: Vec<ObstacleSpec>) -> SimContext {
        SimContext {
            walkway: WalkwayConfig::new(tiles).unwrap(),
            duration_s: 60.0,
            obstacles,
            sentences: None,
        }
    }

    #[test]
    fn load_modifier_examples() {
        let p = WalkerParams::default();
        let f = LoadFactors::default();
        assert_eq!(apply_load_modifiers(&p, &LoadCondition::default(), &f), p);
        let cog = LoadCondition { cognitive: true, ..Default::default() };
        let q = apply_load_modifiers(&p, &cog, &f);
        assert!((q.speed - 1.104).abs() < 1e-12);
        assert_eq!(q.cadence, p.cadence);
        assert!(q.placement_sd > p.placement_sd);
        let both = LoadCondition { cognitive: true, sound: SoundLevel::Busy, ..Default::default() };
        let r = apply_load_modifiers(&p, &both, &f);
        assert!((r.speed - 1.2 * 0.92 * 0.95).abs() < 1e-12);
    }

    #[test]
    fn rejects_inconsistent_params() {
        let w = WalkwayConfig::new(20).unwrap();
        let bad = WalkerParams { double_support_fraction: 0.5, ..Default::default() };
        assert!(matches!(bad.validate(&w), Err(SimError::Param { field: "double_support_fraction", .. })));
        let bad = WalkerParams { speed: 0.1, ..Default::default() };
        assert!(bad.validate(&w).is_err());
        let bad = WalkerParams { step_width: 0.5, ..Default::default() };
        assert!(bad.validate(&w).is_err());
        assert!(WalkerParams::default().validate(&w).is_ok());
    }

    #[test]
    fn loads_sum_to_body_weight() {
        let plan = GaitPlan::new(&WalkerParams::default(), &Scenario::Clean, &ctx(20, vec![])).unwrap();
        for i in 0..800 {
            let t = i as f64 / 100.0;
            if t >= plan.end_time {
                break;
            }
            let s: f64 = plan.footfalls.iter().map(|f| f.load_fraction(t)).sum();
            assert!((s - 1.0).abs() < 1e-9, "t={t} sum={s}");
        }
    }

    #[test]
    fn walk_ends_at_walkway_end() {
        let c = ctx(20, vec![]);
        let plan = GaitPlan::new(&WalkerParams::default(), &Scenario::Clean, &c).unwrap();
        let last = plan.walk_footfalls().last().unwrap();
        assert!(last.x + 0.26 <= c.walkway.length());
        assert!(plan.end_time < 60.0);
        let virt = plan.footfalls.last().unwrap();
        assert!(!virt.real && (virt.x + 0.26 > c.walkway.length()));
    }

    #[test]
    fn single_support_force_conserved() {
        let c = ctx(10, vec![]);
        let p = WalkerParams { noise_scale: 0.0, ..Default::default() };
        let plan = GaitPlan::new(&p, &Scenario::Clean, &c).unwrap();
        let f = plan.footfalls[3];
        let t = f.contact + f.ramp_in + 0.05;
        let frame = plan.render_frame(&c.walkway, (t * 100.0).round() as u32);
        let total = frame.total_force();
        assert!((total - 70_000.0).abs() / 70_000.0 < 0.01, "{total}");
    }

    #[test]
    fn stance_cof_inside_footprint() {
        let c = ctx(10, vec![]);
        let plan = GaitPlan::new(&WalkerParams::default(), &Scenario::Clean, &c).unwrap();
        let cfg = AnalyticsConfig::default();
        for seq in 0..plan.frame_count() as u32 {
            let frame = plan.render_frame(&c.walkway, seq);
            let t = frame.time_s();
            let fc = analyze_frame(&frame, &cfg);
            for cl in &fc.clusters {
                let (x, y) = cl.cof;
                let owner = plan.footfalls.iter().find(|f| {
                    f.load_fraction(t) > 0.0 && (y - f.y).abs() < 0.05
                });
                let f = owner.expect("cluster belongs to a loaded foot");
                assert!(x >= f.x && x <= f.x + 0.26 && (y - f.y).abs() <= 0.05);
            }
        }
    }

    #[test]
    fn feet_never_below_floor() {
        let obstacles = make_schedule(ObstacleMode::Anticipated, 190, 4, 12.0, 0).unwrap();
        let plan = GaitPlan::new(&WalkerParams::default(), &Scenario::Clean, &ctx(20, obstacles)).unwrap();
        for i in 0..plan.pose_count() {
            let s = plan.pose_sample(i);
            assert!(s.left.position.2 - ANKLE_HEIGHT_M >= 0.0);
            assert!(s.right.position.2 - ANKLE_HEIGHT_M >= 0.0);
        }
    }

    #[test]
    fn footfalls_clear_obstacles() {
        let obstacles = make_schedule(ObstacleMode::Anticipated, 100, 5, 12.0, 0).unwrap();
        let plan = GaitPlan::new(&WalkerParams::default(), &Scenario::Clean, &ctx(20, obstacles.clone())).unwrap();
        for f in plan.walk_footfalls() {
            for o in &obstacles {
                assert!(f.x + 0.26 <= o.x_position - OBSTACLE_MARGIN_M + 1e-9 || f.x >= o.trailing_edge() + OBSTACLE_MARGIN_M - 1e-9);
            }
        }
    }

    #[test]
    fn stream_is_time_ordered_and_matches_batch() {
        let c = ctx(4, vec![]);
        let p = WalkerParams::default();
        let batch = simulate(&p, &Scenario::Clean, &c, Exec::Parallel).unwrap();
        let seq = simulate(&p, &Scenario::Clean, &c, Exec::Sequential).unwrap();
        assert_eq!(batch, seq);
        let items: Vec<SimItem> = SimStream::new(&p, &Scenario::Clean, &c).unwrap().collect();
        assert!(items.windows(2).all(|w| w[0].time() <= w[1].time()));
        let frames: Vec<PressureFrame> = items
            .iter()
            .filter_map(|i| match i {
                SimItem::Frame(f) => Some(f.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(frames, batch.frames);
        assert_eq!(items.len(), batch.frames.len() + batch.poses.len());
    }

    #[test]
    fn trip_scenario_validation() {
        let obstacles = make_schedule(ObstacleMode::Anticipated, 100, 2, 12.0, 0).unwrap();
        let s = Scenario::Trip { obstacle_index: 5, apex_m: 0.08 };
        assert!(matches!(GaitPlan::new(&WalkerParams::default(), &s, &ctx(20, obstacles)), Err(SimError::Scenario(_))));
        let s = Scenario::DualTaskSlowdown { factor: 0.8 };
        assert!(GaitPlan::new(&WalkerParams::default(), &s, &ctx(20, vec![])).is_err());
        let s = Scenario::Hesitation { factor: 1.5, onset: Onset::NearObstacle { within_m: 1.0 } };
        assert!(GaitPlan::new(&WalkerParams::default(), &s, &ctx(20, vec![])).is_err());
    }

    #[test]
    fn hesitation_slows_steps() {
        let c = ctx(20, vec![]);
        let s = Scenario::Hesitation { factor: 0.5, onset: Onset::AtTime { start_s: 2.0, duration_s: 2.0 } };
        let plan = GaitPlan::new(&WalkerParams::default(), &s, &c).unwrap();
        let t_nom = WalkerParams::default().step_time();
        let longest = plan.footfalls.windows(2).map(|w| w[1].contact - w[0].contact).fold(0.0, f64::max);
        assert!((longest - 2.0 * t_nom).abs() < 1e-9);
    }

    #[test]
    fn scenario_serde_shape() {
        let s: Scenario = serde_json::from_str(r#"{"kind":"trip","obstacle_index":1,"apex_m":0.08}"#).unwrap();
        assert_eq!(s, Scenario::Trip { obstacle_index: 1, apex_m: 0.08 });
        let h: Scenario = serde_json::from_str(
            r#"{"kind":"hesitation","factor":0.7,"onset":{"rule":"near_obstacle","within_m":1.0}}"#,
        )
        .unwrap();
        assert!(matches!(h, Scenario::Hesitation { .. }));
        assert!(serde_json::from_str::<Scenario>(r#"{"kind":"moonwalk"}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn deterministic_per_seed(seed in any::<u64>()) {
                let c = ctx(3, vec![]);
                let p = WalkerParams { noise_seed: seed, ..Default::default() };
                let a = simulate(&p, &Scenario::Clean, &c, Exec::Parallel).unwrap();
                let b = simulate(&p, &Scenario::Clean, &c, Exec::Parallel).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
