use serde::{Deserialize, Serialize};

use super::{EventKind, Recording, SessionConfig};
use crate::dualtask::{dual_task_cost, score_recall, RecallScore};
use crate::exec::Exec;
use crate::gait::{
    self, cluster_foot_angle, gait_summary, head_kinematics, stance_times, step_metrics, stride_metrics,
    EventThresholds, GaitInputs, GaitSummary, HeadKinematics, StepRecord, TrackEventOptions,
};
use crate::obstacle::{check_all, spawn_time, success_rate, FootBox, TrialResult};
use crate::pose::PoseStreamsOwned;
use crate::pressure::{analyze_frames, distribution_series, track_feet, AnalyticsConfig, ForceSplit};
use crate::walkway::PressureFrame;

/// Frames fed as zero force after a lifted foot's last sample.
const TRAILING_ZERO_FRAMES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtStats {
    pub mean: f64,
    pub min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightShift {
    /// Mean left-foot share of ground force over frames with contact.
    pub mean_left_share: f64,
    pub left_share_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QualityFlags {
    pub aborted: bool,
    pub gait_incomplete: bool,
    pub stream_gaps: usize,
    pub rejected_frames: u64,
    pub unreliable_trials: Vec<u32>,
    /// No crossed obstacle trial, so no success rate.
    pub no_crossed_trials: bool,
    pub recall_missing: bool,
    /// The walk stopped at the end of the walkway before the session time.
    pub ended_at_walkway_end: bool,
    pub walkway_warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub metric: String,
    pub baseline: Option<f64>,
    pub value: Option<f64>,
    /// Positive means worse than baseline.
    pub cost_pct: Option<f64>,
    pub higher_is_better: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub baseline_label: String,
    pub rows: Vec<CostRow>,
    pub warnings: Vec<String>,
}

impl CostTable {
    pub fn row(&self, metric: &str) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub engine_version: String,
    pub config: SessionConfig,
    pub walk_duration_s: f64,
    pub gait: GaitSummary,
    pub steps: Vec<StepRecord>,
    pub head: Option<HeadKinematics>,
    pub weight_shift: Option<WeightShift>,
    pub trials: Vec<TrialResult>,
    pub success_rate: Option<f64>,
    pub art: Option<ArtStats>,
    pub art_per_trial: Vec<Option<f64>>,
    pub mean_clearance: Option<f64>,
    pub recall: Option<RecallScore>,
    pub dual_task_costs: Option<CostTable>,
    pub quality: QualityFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitAnalysis {
    pub summary: GaitSummary,
    pub steps: Vec<StepRecord>,
    pub events: Vec<gait::GaitEvent>,
    pub distribution: Vec<ForceSplit>,
}

/// Pressure frames to gait summary: contacts, tracks, events, metrics.
pub fn analyze_gait(frames: &[PressureFrame], exec: Exec) -> GaitAnalysis {
    let cfg = AnalyticsConfig::default();
    let th = EventThresholds::default();
    let contacts = analyze_frames(frames, &cfg, exec);
    let timestamps: Vec<u64> = frames.iter().map(|f| f.timestamp_us).collect();
    let tracks = track_feet(contacts, cfg.track_gate_m);
    let first = timestamps.first().copied();
    let last = timestamps.last().copied();

    let mut events = Vec::new();
    let mut angles = Vec::new();
    for track in &tracks {
        let trailing = if Some(track.end_us()) == last {
            // still loaded when the stream stopped
            Vec::new()
        } else {
            let i = timestamps.partition_point(|&t| t <= track.end_us());
            timestamps[i..(i + TRAILING_ZERO_FRAMES).min(timestamps.len())]
                .iter()
                .map(|&t| t as f64 / 1e6)
                .collect()
        };
        let opts = TrackEventOptions {
            left_censored: Some(track.start_us()) == first,
            trailing_zero_times: trailing,
        };
        events.extend(gait::track_events(track, &th, &opts));
        if let Some(peak) = track.peak_sample() {
            if let Ok(a) = cluster_foot_angle(&peak.cluster, track.side) {
                angles.push((track.side, a));
            }
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let steps = step_metrics(&events);
    let strides = stride_metrics(&events);
    let stances = stance_times(&events);
    let distribution = distribution_series(&tracks, &timestamps);
    let summary = gait_summary(&GaitInputs {
        steps: &steps,
        strides: &strides,
        stance_times: &stances,
        distribution: &distribution,
        foot_angles: &angles,
    });
    GaitAnalysis {
        summary,
        steps,
        events,
        distribution,
    }
}

/// Pure function of the recording; any stored report is ignored.
pub fn compute_report(rec: &Recording, exec: Exec) -> SessionReport {
    let gait = analyze_gait(&rec.frames, exec);
    let streams = PoseStreamsOwned::from_samples(&rec.poses);
    let head = head_kinematics(&streams.head).ok();

    let shares: Vec<f64> = gait.distribution.iter().filter_map(|d| d.left_share()).collect();
    let weight_shift = gait::stat(&shares).map(|s| WeightShift {
        mean_left_share: s.mean,
        left_share_sd: s.sd,
    });

    let spawns: Vec<Option<f64>> = rec.obstacles.iter().map(|o| spawn_time(o, &streams.head)).collect();
    let trials = check_all(&rec.obstacles, &spawns, &streams.view(), &FootBox::default(), exec);
    let success = success_rate(&trials).ok();
    let art_per_trial: Vec<Option<f64>> = trials.iter().map(|t| t.art).collect();
    let arts: Vec<f64> = art_per_trial.iter().flatten().copied().collect();
    let art = gait::stat(&arts).map(|s| ArtStats {
        mean: s.mean,
        min: arts.iter().copied().fold(f64::INFINITY, f64::min),
    });
    let clearances: Vec<f64> = trials.iter().filter(|t| t.crossed).filter_map(|t| t.lead_clearance).collect();
    let mean_clearance = gait::stat(&clearances).map(|s| s.mean);

    let presented: Vec<u32> = rec
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::SentenceStart { numbers, .. } => Some(numbers.clone()),
            _ => None,
        })
        .flatten()
        .collect();
    let reported = rec.events.iter().rev().find_map(|e| match &e.kind {
        EventKind::RecallSubmitted { numbers } => Some(numbers.clone()),
        _ => None,
    });
    let recall = match (&reported, rec.config.condition.cognitive) {
        (Some(r), true) => score_recall(&presented, r).ok(),
        _ => None,
    };

    let quality = QualityFlags {
        aborted: rec.aborted,
        gait_incomplete: gait.summary.incomplete,
        stream_gaps: rec.events.iter().filter(|e| matches!(e.kind, EventKind::StreamGap { .. })).count(),
        rejected_frames: rec.rejected_frames,
        unreliable_trials: trials.iter().filter(|t| !t.reliable).map(|t| t.obstacle_id).collect(),
        no_crossed_trials: success.is_none(),
        recall_missing: rec.config.condition.cognitive && recall.is_none(),
        ended_at_walkway_end: !rec.aborted && rec.walk_end_time < rec.config.duration_s - 1e-9,
        walkway_warning: rec.config.walkway.length_warning(),
    };

    SessionReport {
        engine_version: rec.engine_version.clone(),
        config: rec.config.clone(),
        walk_duration_s: rec.walk_end_time,
        gait: gait.summary,
        steps: gait.steps,
        head,
        weight_shift,
        trials,
        success_rate: success,
        art,
        art_per_trial,
        mean_clearance,
        recall,
        dual_task_costs: None,
        quality,
    }
}

/// Dual-task (or load) cost of `loaded` relative to an explicitly chosen
/// baseline.
pub fn compare_sessions(baseline: &SessionReport, baseline_label: &str, loaded: &SessionReport) -> CostTable {
    let metrics: [(&str, bool, fn(&SessionReport) -> Option<f64>); 7] = [
        ("speed", true, |r| r.gait.mean_speed),
        ("step_length", true, |r| r.gait.step_length.map(|s| s.mean)),
        ("step_length_sd", false, |r| r.gait.step_length.and_then(|s| s.sd)),
        ("cadence", true, |r| r.gait.cadence),
        ("success_rate", true, |r| r.success_rate),
        ("clearance", true, |r| r.mean_clearance),
        ("art", true, |r| r.art.map(|a| a.mean)),
    ];
    let rows = metrics
        .iter()
        .map(|(name, higher, get)| {
            let b = get(baseline);
            let v = get(loaded);
            let cost = match (b, v) {
                (Some(b), Some(v)) => dual_task_cost(b, v).ok().map(|c| if *higher { c } else { -c } + 0.0),
                _ => None,
            };
            CostRow {
                metric: name.to_string(),
                baseline: b,
                value: v,
                cost_pct: cost,
                higher_is_better: *higher,
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if baseline.config.walkway != loaded.config.walkway {
        warnings.push("sessions used different walkways".to_string());
    }
    if baseline.config.obstacle != loaded.config.obstacle {
        warnings.push("sessions used different obstacle settings".to_string());
    }
    if !baseline.config.condition.is_baseline() {
        warnings.push("baseline session was itself run under load".to_string());
    }
    for (r, which) in [(baseline, "baseline"), (loaded, "compared")] {
        if r.quality.aborted {
            warnings.push(format!("{which} session was aborted"));
        }
    }
    CostTable {
        baseline_label: baseline_label.to_string(),
        rows,
        warnings,
    }
}
