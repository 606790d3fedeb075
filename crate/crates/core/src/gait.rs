//! Temporal gait analysis: heel-contact / toe-off detection, step and stride
//! geometry, foot angle, head kinematics and session-level summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pressure::{FootCluster, FootTrack, ForceSplit, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaitError {
    #[error("undefined: {0}")]
    Undefined(&'static str),
}

/// Hysteresis thresholds for contact detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventThresholds {
    pub on_g: f64,
    pub off_g: f64,
    pub sustain_s: f64,
    /// Window over which stance anchors average the foot COF.
    pub anchor_window_s: f64,
}

impl Default for EventThresholds {
    fn default() -> Self {
        Self {
            on_g: 2000.0,
            off_g: 1000.0,
            sustain_s: 0.030,
            anchor_window_s: 0.050,
        }
    }
}

// Sample times come from integer microseconds; spans like 0.03 s may land a
// hair below the nominal value after conversion.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Heel contact.
    ContactOn,
    /// Toe off.
    ContactOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactTransition {
    pub kind: EventKind,
    pub time: f64,
}

/// Hysteresis detector over one foot's `(time s, force g)` series.
///
/// A transition fires when the force stays beyond its threshold for at least
/// `sustain_s`; the event is stamped at the first sample of that run. The
/// detector starts in the off state, so events alternate on/off by
/// construction.
pub fn detect_events(series: &[(f64, f64)], th: &EventThresholds) -> Vec<ContactTransition> {
    let mut out = Vec::new();
    let mut on = false;
    let mut run_start: Option<usize> = None;
    for (i, &(t, f)) in series.iter().enumerate() {
        let beyond = if on { f < th.off_g } else { f > th.on_g };
        if !beyond {
            run_start = None;
            continue;
        }
        let s = *run_start.get_or_insert(i);
        if t - series[s].0 >= th.sustain_s - TIME_EPS {
            out.push(ContactTransition {
                kind: if on { EventKind::ContactOff } else { EventKind::ContactOn },
                time: series[s].0,
            });
            on = !on;
            run_start = None;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitEvent {
    pub foot: Side,
    pub kind: EventKind,
    pub time: f64,
    pub anchor: (f64, f64),
}

/// Options for turning a finished track into gait events.
#[derive(Debug, Clone, Default)]
pub struct TrackEventOptions {
    /// The track was already in contact when recording began; its first
    /// contact-on is not a real heel contact and is dropped.
    pub left_censored: bool,
    /// Frame times after the track ended, fed as zero-force samples so a
    /// lifted foot registers its toe-off.
    pub trailing_zero_times: Vec<f64>,
}

/// Gait events of one foot track, anchored at the mean foot COF over the
/// first (contact-on) or last (contact-off) stance window.
pub fn track_events(track: &FootTrack, th: &EventThresholds, opts: &TrackEventOptions) -> Vec<GaitEvent> {
    let mut series = track.force_series();
    series.extend(opts.trailing_zero_times.iter().map(|&t| (t, 0.0)));
    let transitions = detect_events(&series, th);
    let samples: Vec<(f64, (f64, f64))> = track.samples.iter().map(|s| (s.time_s(), s.cof)).collect();

    let mean_cof = |lo: f64, hi: f64| -> Option<(f64, f64)> {
        let inside: Vec<(f64, f64)> = samples
            .iter()
            .filter(|(t, _)| *t >= lo - TIME_EPS && *t < hi - TIME_EPS)
            .map(|(_, c)| *c)
            .collect();
        if inside.is_empty() {
            return None;
        }
        let n = inside.len() as f64;
        Some((
            inside.iter().map(|c| c.0).sum::<f64>() / n,
            inside.iter().map(|c| c.1).sum::<f64>() / n,
        ))
    };

    let mut out = Vec::new();
    for (i, tr) in transitions.iter().enumerate() {
        if opts.left_censored && i < 2 {
            // drop the censored stance entirely (its on and its off)
            continue;
        }
        let anchor = match tr.kind {
            EventKind::ContactOn => mean_cof(tr.time, tr.time + th.anchor_window_s),
            EventKind::ContactOff => mean_cof(tr.time - th.anchor_window_s, tr.time)
                .or_else(|| samples.iter().rev().find(|(t, _)| *t < tr.time).map(|(_, c)| *c)),
        };
        if let Some(anchor) = anchor {
            out.push(GaitEvent {
                foot: track.side,
                kind: tr.kind,
                time: tr.time,
                anchor,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub leading_foot: Side,
    /// Time of the leading foot's heel contact.
    pub time: f64,
    pub length: f64,
    pub width: f64,
    pub duration: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrideRecord {
    pub foot: Side,
    pub time: f64,
    pub length: f64,
    pub duration: f64,
}

fn contact_ons(events: &[GaitEvent]) -> Vec<GaitEvent> {
    let mut ons: Vec<GaitEvent> = events
        .iter()
        .filter(|e| e.kind == EventKind::ContactOn && e.foot.is_known())
        .copied()
        .collect();
    ons.sort_by(|a, b| a.time.total_cmp(&b.time));
    ons
}

/// Steps between consecutive contralateral heel contacts. Consecutive
/// same-foot contacts (a missed detection) break the chain.
pub fn step_metrics(events: &[GaitEvent]) -> Vec<StepRecord> {
    let ons = contact_ons(events);
    ons.windows(2)
        .filter(|w| w[0].foot != w[1].foot && w[1].time > w[0].time)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let length = b.anchor.0 - a.anchor.0;
            let duration = b.time - a.time;
            StepRecord {
                leading_foot: b.foot,
                time: b.time,
                length,
                width: (b.anchor.1 - a.anchor.1).abs(),
                duration,
                speed: length / duration,
            }
        })
        .collect()
}

/// Strides between consecutive ipsilateral heel contacts.
pub fn stride_metrics(events: &[GaitEvent]) -> Vec<StrideRecord> {
    let ons = contact_ons(events);
    let mut out = Vec::new();
    for side in [Side::Left, Side::Right] {
        let foot: Vec<&GaitEvent> = ons.iter().filter(|e| e.foot == side).collect();
        for w in foot.windows(2) {
            out.push(StrideRecord {
                foot: side,
                time: w[1].time,
                length: w[1].anchor.0 - w[0].anchor.0,
                duration: w[1].time - w[0].time,
            });
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}

/// Stance durations (contact-on to the following contact-off) per foot.
pub fn stance_times(events: &[GaitEvent]) -> Vec<(Side, f64)> {
    let mut sorted: Vec<&GaitEvent> = events.iter().filter(|e| e.foot.is_known()).collect();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut out = Vec::new();
    for side in [Side::Left, Side::Right] {
        let mut open: Option<f64> = None;
        for e in sorted.iter().filter(|e| e.foot == side) {
            match e.kind {
                EventKind::ContactOn => open = Some(e.time),
                EventKind::ContactOff => {
                    if let Some(t0) = open.take() {
                        out.push((side, e.time - t0));
                    }
                }
            }
        }
    }
    out
}

/// Steps per minute from step durations.
pub fn cadence(steps: &[StepRecord]) -> Option<f64> {
    let total: f64 = steps.iter().map(|s| s.duration).sum();
    if steps.is_empty() || total <= 0.0 {
        None
    } else {
        Some(60.0 * steps.len() as f64 / total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootAngle {
    pub degrees: f64,
    pub low_confidence: bool,
}

/// Eigenvalue ratio below which a footprint counts as isotropic.
pub const FOOT_ANGLE_MIN_RATIO: f64 = 1.2;

/// Angle between the force-weighted principal axis of `points` (x, y, weight)
/// and the walking axis, in (-90, 90] degrees. Positive means toe-out: the
/// geometric angle is reported as-is for the left foot and negated for the
/// right foot.
pub fn foot_angle(points: &[(f64, f64, f64)], side: Side) -> Result<FootAngle, GaitError> {
    let w: f64 = points.iter().map(|p| p.2).sum();
    if points.len() < 2 || w <= 0.0 {
        return Err(GaitError::Undefined("foot angle needs at least two weighted nodes"));
    }
    let mx = points.iter().map(|p| p.0 * p.2).sum::<f64>() / w;
    let my = points.iter().map(|p| p.1 * p.2).sum::<f64>() / w;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y, wt) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += wt * dx * dx;
        syy += wt * dy * dy;
        sxy += wt * dx * dy;
    }
    sxx /= w;
    syy /= w;
    sxy /= w;
    let half_tr = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (half_tr + disc, half_tr - disc);
    if l1 <= 1e-18 {
        return Err(GaitError::Undefined("all foot nodes coincide"));
    }
    let ratio = if l2 <= 1e-18 { f64::INFINITY } else { l1 / l2 };
    if ratio < FOOT_ANGLE_MIN_RATIO {
        return Ok(FootAngle {
            degrees: 0.0,
            low_confidence: true,
        });
    }
    let mut deg = 0.5 * (2.0 * sxy).atan2(sxx - syy).to_degrees();
    if deg <= -90.0 {
        deg += 180.0;
    }
    if deg > 90.0 {
        deg -= 180.0;
    }
    let signed = match side {
        Side::Right => -deg,
        _ => deg,
    };
    // keep the (-90, 90] convention after the right-foot flip
    let signed = if signed <= -90.0 { signed + 180.0 } else { signed };
    Ok(FootAngle {
        degrees: signed,
        low_confidence: false,
    })
}

pub fn cluster_foot_angle(cluster: &FootCluster, side: Side) -> Result<FootAngle, GaitError> {
    let pts: Vec<(f64, f64, f64)> = cluster.nodes().map(|n| (n.x(), n.y(), n.force())).collect();
    foot_angle(&pts, side)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSample {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadKinematics {
    pub path_length: f64,
    pub mean_speed: f64,
    pub rms_ml: f64,
    pub rms_vertical: f64,
    pub yaw_range: f64,
}

pub fn path_length(series: &[HeadSample]) -> f64 {
    series
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            ((b.x - a.x).powi(2) + (b.y - a.y).powi(2) + (b.z - a.z).powi(2)).sqrt()
        })
        .sum()
}

/// RMS of the residual after a least-squares linear fit against time.
fn detrended_rms(t: &[f64], v: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let vm = v.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|ti| (ti - tm).powi(2)).sum();
    let stv: f64 = t.iter().zip(v).map(|(ti, vi)| (ti - tm) * (vi - vm)).sum();
    let slope = if stt > 0.0 { stv / stt } else { 0.0 };
    let ss: f64 = t
        .iter()
        .zip(v)
        .map(|(ti, vi)| (vi - vm - slope * (ti - tm)).powi(2))
        .sum();
    (ss / n).sqrt()
}

pub fn head_kinematics(series: &[HeadSample]) -> Result<HeadKinematics, GaitError> {
    if series.len() < 2 {
        return Err(GaitError::Undefined("head kinematics need at least two samples"));
    }
    let duration = series[series.len() - 1].time - series[0].time;
    if duration <= 0.0 {
        return Err(GaitError::Undefined("head series has zero duration"));
    }
    let path = path_length(series);
    let t: Vec<f64> = series.iter().map(|s| s.time).collect();
    let y: Vec<f64> = series.iter().map(|s| s.y).collect();
    let z: Vec<f64> = series.iter().map(|s| s.z).collect();
    let (ymin, ymax) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.yaw), hi.max(s.yaw)));
    Ok(HeadKinematics {
        path_length: path,
        mean_speed: path / duration,
        rms_ml: detrended_rms(&t, &y),
        rms_vertical: detrended_rms(&t, &z),
        yaw_range: ymax - ymin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; `None` with fewer than two values.
    pub sd: Option<f64>,
}

pub fn stat(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    Some(Stat { mean, sd })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitSummary {
    pub step_count: usize,
    pub mean_speed: Option<f64>,
    pub cadence: Option<f64>,
    pub step_length: Option<Stat>,
    pub step_width: Option<Stat>,
    pub stride_length_mean: Option<f64>,
    pub stance_time_mean: Option<f64>,
    pub foot_angle_left: Option<f64>,
    pub foot_angle_right: Option<f64>,
    pub symmetry_index: Option<f64>,
    /// Mean total ground force over single-support frames.
    pub single_support_force_g: Option<f64>,
    /// True when any aggregate could not be computed.
    pub incomplete: bool,
}

pub struct GaitInputs<'a> {
    pub steps: &'a [StepRecord],
    pub strides: &'a [StrideRecord],
    pub stance_times: &'a [(Side, f64)],
    pub distribution: &'a [ForceSplit],
    pub foot_angles: &'a [(Side, FootAngle)],
}

pub fn gait_summary(inputs: &GaitInputs<'_>) -> GaitSummary {
    let steps = inputs.steps;
    let total_len: f64 = steps.iter().map(|s| s.length).sum();
    let total_dur: f64 = steps.iter().map(|s| s.duration).sum();
    let mean_speed = (total_dur > 0.0).then(|| total_len / total_dur);
    let lengths: Vec<f64> = steps.iter().map(|s| s.length).collect();
    let widths: Vec<f64> = steps.iter().map(|s| s.width).collect();
    let strides: Vec<f64> = inputs.strides.iter().map(|s| s.length).collect();
    let stances: Vec<f64> = inputs.stance_times.iter().map(|s| s.1).collect();

    let angle_mean = |side: Side| {
        let v: Vec<f64> = inputs
            .foot_angles
            .iter()
            .filter(|(s, a)| *s == side && !a.low_confidence)
            .map(|(_, a)| a.degrees)
            .collect();
        stat(&v).map(|s| s.mean)
    };

    let sym: Vec<f64> = inputs
        .distribution
        .iter()
        .filter(|d| d.is_double_support())
        .map(|d| (d.left_g - d.right_g).abs() / (d.left_g + d.right_g))
        .collect();
    let single: Vec<f64> = inputs
        .distribution
        .iter()
        .filter(|d| d.unknown_g == 0.0 && ((d.left_g > 0.0) != (d.right_g > 0.0)))
        .map(|d| d.left_g + d.right_g)
        .collect();

    let mut s = GaitSummary {
        step_count: steps.len(),
        mean_speed,
        cadence: cadence(steps),
        step_length: stat(&lengths),
        step_width: stat(&widths),
        stride_length_mean: stat(&strides).map(|s| s.mean),
        stance_time_mean: stat(&stances).map(|s| s.mean),
        foot_angle_left: angle_mean(Side::Left),
        foot_angle_right: angle_mean(Side::Right),
        symmetry_index: stat(&sym).map(|s| s.mean),
        single_support_force_g: stat(&single).map(|s| s.mean),
        incomplete: false,
    };
    s.incomplete = s.mean_speed.is_none()
        || s.cadence.is_none()
        || s.step_length.and_then(|x| x.sd).is_none()
        || s.stride_length_mean.is_none()
        || s.stance_time_mean.is_none();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(dt: f64, f: impl Fn(f64) -> f64, dur: f64) -> Vec<(f64, f64)> {
        let n = (dur / dt).round() as usize;
        (0..=n).map(|i| (i as f64 * dt, f(i as f64 * dt))).collect()
    }

    fn us_series(f: impl Fn(u64) -> f64, n: u64) -> Vec<(f64, f64)> {
        (0..n).map(|k| ((k * 10_000) as f64 * 1e-6, f(k))).collect()
    }

    #[test]
    fn clean_pulse_one_pair() {
        let th = EventThresholds::default();
        // 0.2 s zero, 0.6 s at 5000 g, 0.2 s zero at 100 Hz
        let s = us_series(|k| if (20..80).contains(&k) { 5000.0 } else { 0.0 }, 100);
        let ev = detect_events(&s, &th);
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].kind, EventKind::ContactOn);
        assert!((ev[0].time - 0.20).abs() < 1e-9);
        assert_eq!(ev[1].kind, EventKind::ContactOff);
        assert!((ev[1].time - 0.80).abs() < 1e-9);
    }

    #[test]
    fn below_threshold_no_events() {
        let s = series(0.01, |_| 500.0, 5.0);
        assert!(detect_events(&s, &EventThresholds::default()).is_empty());
        assert!(detect_events(&[], &EventThresholds::default()).is_empty());
    }

    #[test]
    fn short_spike_is_debounced() {
        // 20 ms spike: samples at 0.50, 0.51 (and 0.52 boundary excluded)
        let s = us_series(|k| if (50..52).contains(&k) { 5000.0 } else { 0.0 }, 100);
        assert!(detect_events(&s, &EventThresholds::default()).is_empty());
        // three samples span 20 ms as well
        let s = us_series(|k| if (50..53).contains(&k) { 5000.0 } else { 0.0 }, 100);
        assert!(detect_events(&s, &EventThresholds::default()).is_empty());
        // four samples span 30 ms: sustained
        let s = us_series(|k| if (50..54).contains(&k) { 5000.0 } else { 0.0 }, 100);
        assert_eq!(detect_events(&s, &EventThresholds::default()).len(), 2);
    }

    #[test]
    fn hysteresis_ignores_chatter_between_thresholds() {
        // loaded, then dips to 1500 (between off and on) for a long time: no off
        let s = us_series(|k| if k < 10 { 0.0 } else if k < 30 { 4000.0 } else { 1500.0 }, 80);
        let ev = detect_events(&s, &EventThresholds::default());
        assert_eq!(ev.len(), 1);
    }

    fn on(foot: Side, t: f64, x: f64, y: f64) -> GaitEvent {
        GaitEvent {
            foot,
            kind: EventKind::ContactOn,
            time: t,
            anchor: (x, y),
        }
    }

    #[test]
    fn step_and_stride_examples() {
        let ev = [on(Side::Left, 0.0, 0.0, 0.10), on(Side::Right, 0.5, 0.6, 0.25)];
        let steps = step_metrics(&ev);
        assert_eq!(steps.len(), 1);
        assert!((steps[0].length - 0.6).abs() < 1e-12);
        assert!((steps[0].width - 0.15).abs() < 1e-12);
        assert_eq!(steps[0].leading_foot, Side::Right);

        let ev = [on(Side::Left, 0.0, 0.0, 0.10), on(Side::Left, 1.0, 1.2, 0.10)];
        let strides = stride_metrics(&ev);
        assert_eq!(strides.len(), 1);
        assert!((strides[0].length - 1.2).abs() < 1e-12);
        assert!(step_metrics(&ev).is_empty());

        assert!(step_metrics(&ev[..1]).is_empty());
    }

    #[test]
    fn cadence_from_durations() {
        let dur = 60.0 / 110.0;
        let ev: Vec<GaitEvent> = (0..=110)
            .map(|k| {
                let side = if k % 2 == 0 { Side::Left } else { Side::Right };
                on(side, k as f64 * dur, k as f64 * 0.6, if k % 2 == 0 { 0.3 } else { 0.15 })
            })
            .collect();
        let steps = step_metrics(&ev);
        assert_eq!(steps.len(), 110);
        assert!((cadence(&steps).unwrap() - 110.0).abs() < 1e-9);
        let summary = gait_summary(&GaitInputs {
            steps: &steps,
            strides: &stride_metrics(&ev),
            stance_times: &[],
            distribution: &[],
            foot_angles: &[],
        });
        assert!(summary.step_length.unwrap().sd.unwrap() < 1e-12);
        assert!(summary.step_width.unwrap().sd.unwrap() < 1e-12);
        assert!((summary.mean_speed.unwrap() - 0.6 / dur).abs() < 1e-9);
    }

    #[test]
    fn empty_summary_flagged() {
        let s = gait_summary(&GaitInputs {
            steps: &[],
            strides: &[],
            stance_times: &[],
            distribution: &[],
            foot_angles: &[],
        });
        assert_eq!(s.step_count, 0);
        assert!(s.incomplete);
        assert!(s.mean_speed.is_none() && s.cadence.is_none());
    }

    #[test]
    fn symmetry_index_zero_for_equal_split() {
        let d: Vec<ForceSplit> = (0..10)
            .map(|k| ForceSplit {
                timestamp_us: k,
                left_g: 30_000.0,
                right_g: 30_000.0,
                unknown_g: 0.0,
            })
            .collect();
        let s = gait_summary(&GaitInputs {
            steps: &[],
            strides: &[],
            stance_times: &[],
            distribution: &d,
            foot_angles: &[],
        });
        assert_eq!(s.symmetry_index, Some(0.0));
    }

    #[test]
    fn foot_angle_cases() {
        let along: Vec<_> = (0..10).map(|i| (i as f64 * 0.0127, 0.2, 1.0)).collect();
        let a = foot_angle(&along, Side::Left).unwrap();
        assert!(a.degrees.abs() < 1e-9 && !a.low_confidence);

        let diag: Vec<_> = (0..10).map(|i| (i as f64 * 0.0127, i as f64 * 0.0127, 1.0)).collect();
        let a = foot_angle(&diag, Side::Left).unwrap();
        assert!((a.degrees - 45.0).abs() < 1e-9);
        let a = foot_angle(&diag, Side::Right).unwrap();
        assert!((a.degrees + 45.0).abs() < 1e-9);

        let mut square = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                square.push((i as f64 * 0.0127, j as f64 * 0.0127, 1.0));
            }
        }
        let a = foot_angle(&square, Side::Left).unwrap();
        assert_eq!(a.degrees, 0.0);
        assert!(a.low_confidence);

        assert!(foot_angle(&[(0.1, 0.1, 5.0)], Side::Left).is_err());
        assert!(foot_angle(&[(0.1, 0.1, 5.0), (0.1, 0.1, 2.0)], Side::Left).is_err());

        let across: Vec<_> = (0..10).map(|i| (0.5, i as f64 * 0.0127, 1.0)).collect();
        assert_eq!(foot_angle(&across, Side::Left).unwrap().degrees, 90.0);
    }

    #[test]
    fn head_static_and_straight() {
        let stat_series: Vec<HeadSample> = (0..100)
            .map(|i| HeadSample { time: i as f64 / 90.0, x: 1.0, y: 0.2, z: 1.7, yaw: 3.0 })
            .collect();
        let k = head_kinematics(&stat_series).unwrap();
        assert_eq!((k.path_length, k.mean_speed, k.yaw_range), (0.0, 0.0, 0.0));
        assert!(k.rms_ml < 1e-12 && k.rms_vertical < 1e-12);

        let line: Vec<HeadSample> = (0..=540)
            .map(|i| {
                let t = i as f64 / 90.0;
                HeadSample { time: t, x: t, y: 0.2, z: 1.7, yaw: 0.0 }
            })
            .collect();
        let k = head_kinematics(&line).unwrap();
        assert!((k.path_length - 6.0).abs() < 1e-9);
        assert!((k.mean_speed - 1.0).abs() < 1e-9);
        assert!(head_kinematics(&line[..1]).is_err());
    }

    #[test]
    fn head_vertical_sine_rms() {
        let a = 0.02;
        let f = 1.83; // ~step frequency
        let s: Vec<HeadSample> = (0..=(12.0 * 90.0) as usize)
            .map(|i| {
                let t = i as f64 / 90.0;
                HeadSample {
                    time: t,
                    x: 1.2 * t,
                    y: 0.2,
                    z: 1.7 + a * (2.0 * std::f64::consts::PI * f * t).sin(),
                    yaw: 0.0,
                }
            })
            .collect();
        let k = head_kinematics(&s).unwrap();
        let expect = a / 2f64.sqrt();
        assert!((k.rms_vertical - expect).abs() / expect < 0.01, "{}", k.rms_vertical);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn events_alternate(forces in proptest::collection::vec(0.0f64..6000.0, 0..400)) {
                let s: Vec<(f64, f64)> = forces.iter().enumerate().map(|(i, f)| (i as f64 * 0.01, *f)).collect();
                let ev = detect_events(&s, &EventThresholds::default());
                for (i, e) in ev.iter().enumerate() {
                    let expect = if i % 2 == 0 { EventKind::ContactOn } else { EventKind::ContactOff };
                    prop_assert_eq!(e.kind, expect);
                }
                prop_assert!(ev.windows(2).all(|w| w[1].time > w[0].time));
            }

            #[test]
            fn angle_invariant_under_force_scaling(
                pts in proptest::collection::vec((0.0f64..0.3, 0.0f64..0.1, 0.1f64..5.0), 3..40),
                scale in 0.01f64..100.0,
            ) {
                let scaled: Vec<_> = pts.iter().map(|p| (p.0, p.1, p.2 * scale)).collect();
                match (foot_angle(&pts, Side::Left), foot_angle(&scaled, Side::Left)) {
                    (Ok(a), Ok(b)) => {
                        prop_assert_eq!(a.low_confidence, b.low_confidence);
                        let d = (a.degrees - b.degrees).abs();
                        prop_assert!(d < 1e-6 || (d - 180.0).abs() < 1e-6);
                    }
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false),
                }
            }

            #[test]
            fn path_length_additive(
                pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 3..60),
                cut in 1usize..58,
            ) {
                let s: Vec<HeadSample> = pts.iter().enumerate()
                    .map(|(i, p)| HeadSample { time: i as f64, x: p.0, y: p.1, z: p.2, yaw: 0.0 })
                    .collect();
                let cut = cut.min(s.len() - 2);
                let whole = path_length(&s);
                let parts = path_length(&s[..=cut]) + path_length(&s[cut..]);
                prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1.0));
            }
        }
    }
}
