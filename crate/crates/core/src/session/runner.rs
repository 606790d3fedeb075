use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    compute_report, ConfigError, Cue, EventKind, Input, Recording, SessionConfig, SessionEvent, SessionReport,
    SessionState, SourceInfo, StateError, StateMachine, StreamKind, ENGINE_VERSION, STREAM_GAP_S,
};
use crate::dualtask::{LoadCondition, PlaybackSchedule, SentenceBank};
use crate::exec::Exec;
use crate::obstacle::{check_crossing, FootBox, ObstacleMode, ObstacleSpec, TrialResult};
use crate::pose::{PoseSample, PoseStreamsOwned};
use crate::pressure::{analyze_frame, AnalyticsConfig, FootTracker};
use crate::seed::derive_seed;
use crate::sim::{self, apply_load_modifiers, LoadFactors, Scenario, SimContext, SimError, SimItem, WalkerParams};
use crate::walkway::PressureFrame;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("stream data arrived while not walking")]
    NotWalking,
    #[error("frame {seq} is out of order and was rejected")]
    OutOfOrder { seq: u32 },
    #[error("sample at {time:.3} s is past the session duration")]
    PastEnd { time: f64 },
}

/// How a batch run answers the recall prompt.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallScript {
    /// Reports exactly the presented numbers.
    #[default]
    Perfect,
    Numbers(Vec<u32>),
    /// Reports nothing.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub time: f64,
    pub state: SessionState,
    pub head_speed: Option<f64>,
    pub distance: f64,
    pub step_count: usize,
    pub successes: usize,
    pub failures: usize,
    pub last_clearance: Option<f64>,
    pub frames: usize,
    pub stream_gaps: usize,
}

/// One live session. Stream items must be fed in time order while Walking.
#[derive(Debug)]
pub struct Session {
    config: SessionConfig,
    source: SourceInfo,
    obstacles: Vec<ObstacleSpec>,
    sentences: Option<PlaybackSchedule>,
    pending: Vec<SessionEvent>,
    next_pending: usize,
    machine: StateMachine,
    events: Vec<SessionEvent>,
    frames: Vec<PressureFrame>,
    poses: Vec<PoseSample>,
    streams: PoseStreamsOwned,
    spawned: Vec<Option<f64>>,
    trials: Vec<Option<TrialResult>>,
    last_frame: Option<(u32, f64)>,
    clock: f64,
    walk_end: Option<f64>,
    rejected_frames: u64,
    tracker: FootTracker,
    first_frame_us: Option<u64>,
    analytics: AnalyticsConfig,
    report: Option<SessionReport>,
    exec: Exec,
}

impl Session {
    pub fn new(config: SessionConfig, source: SourceInfo, bank: &SentenceBank, exec: Exec) -> Result<Self, SessionError> {
        config.validate()?;
        let obstacles = config.obstacles();
        let sentences = config.sentences(bank);
        let mut pending = Vec::new();
        if let Some(s) = &sentences {
            for e in &s.entries {
                let sentence = bank.get(e.sentence_id).expect("scheduled from this bank");
                pending.push(SessionEvent {
                    time: e.start_time,
                    kind: EventKind::SentenceStart {
                        sentence_id: e.sentence_id,
                        text: sentence.text.clone(),
                        numbers: sentence.numbers.clone(),
                    },
                });
                pending.push(SessionEvent {
                    time: e.end_time(),
                    kind: EventKind::SentenceEnd {
                        sentence_id: e.sentence_id,
                    },
                });
            }
        }
        pending.sort_by(|a, b| a.time.total_cmp(&b.time));
        let analytics = AnalyticsConfig::default();
        Ok(Self {
            machine: StateMachine::new(config.condition.cognitive),
            spawned: vec![None; obstacles.len()],
            trials: vec![None; obstacles.len()],
            config,
            source,
            obstacles,
            sentences,
            pending,
            next_pending: 0,
            events: Vec::new(),
            frames: Vec::new(),
            poses: Vec::new(),
            streams: PoseStreamsOwned::default(),
            last_frame: None,
            clock: 0.0,
            walk_end: None,
            rejected_frames: 0,
            tracker: FootTracker::new(analytics.track_gate_m),
            first_frame_us: None,
            analytics,
            report: None,
            exec,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> SessionState {
        self.machine.state()
    }

    pub fn obstacles(&self) -> &[ObstacleSpec] {
        &self.obstacles
    }

    pub fn sentences(&self) -> Option<&PlaybackSchedule> {
        self.sentences.as_ref()
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn report(&self) -> Option<&SessionReport> {
        self.report.as_ref()
    }

    /// Numbers played so far, in order.
    pub fn presented_numbers(&self) -> Vec<u32> {
        self.events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::SentenceStart { numbers, .. } => Some(numbers.clone()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    fn emit(&mut self, time: f64, kind: EventKind, out: &mut Vec<SessionEvent>) {
        let e = SessionEvent { time, kind };
        self.events.push(e.clone());
        out.push(e);
    }

    fn transition(&mut self, input: Input, out: &mut Vec<SessionEvent>) -> Result<(), SessionError> {
        let (from, to) = self.machine.apply(input)?;
        let t = self.clock;
        self.emit(t, EventKind::StateChange { from, to }, out);
        if to == SessionState::Complete {
            self.finalize();
        }
        Ok(())
    }

    pub fn start(&mut self) -> Result<Vec<SessionEvent>, SessionError> {
        let mut out = Vec::new();
        self.transition(Input::Start, &mut out)?;
        Ok(out)
    }

    /// Countdown over; the session clock starts at 0.
    pub fn begin_walking(&mut self) -> Result<Vec<SessionEvent>, SessionError> {
        let mut out = Vec::new();
        self.transition(Input::CountdownElapsed, &mut out)?;
        for i in 0..self.obstacles.len() {
            if self.obstacles[i].mode == ObstacleMode::Anticipated {
                self.spawn(i, 0.0, &mut out);
            }
        }
        Ok(out)
    }

    fn spawn(&mut self, i: usize, t: f64, out: &mut Vec<SessionEvent>) {
        self.spawned[i] = Some(t);
        let o = self.obstacles[i];
        self.emit(
            t,
            EventKind::ObstacleSpawn {
                obstacle_id: o.id,
                x_position: o.x_position,
                height_mm: o.height.mm(),
                mode: o.mode,
            },
            out,
        );
    }

    fn flush_scheduled(&mut self, t: f64, out: &mut Vec<SessionEvent>) {
        while self.next_pending < self.pending.len() && self.pending[self.next_pending].time <= t {
            let e = self.pending[self.next_pending].clone();
            self.next_pending += 1;
            self.emit(e.time, e.kind, out);
        }
    }

    fn check_time(&mut self, t: f64) -> Result<(), SessionError> {
        if self.state() != SessionState::Walking {
            return Err(SessionError::NotWalking);
        }
        if t > self.config.duration_s + 1e-9 {
            return Err(SessionError::PastEnd { time: t });
        }
        Ok(())
    }

    pub fn ingest_frame(&mut self, frame: PressureFrame) -> Result<Vec<SessionEvent>, SessionError> {
        let t = frame.time_s();
        self.check_time(t)?;
        if let Some((seq, last_t)) = self.last_frame {
            if frame.seq <= seq || t <= last_t {
                self.rejected_frames += 1;
                return Err(SessionError::OutOfOrder { seq: frame.seq });
            }
        }
        let mut out = Vec::new();
        self.flush_scheduled(t, &mut out);
        if let Some((seq, last_t)) = self.last_frame {
            let missing = frame.seq - seq - 1;
            if missing > 0 || t - last_t > STREAM_GAP_S {
                self.emit(
                    t,
                    EventKind::StreamGap {
                        stream: StreamKind::Frames,
                        from_time: last_t,
                        to_time: t,
                        missing_frames: missing,
                    },
                    &mut out,
                );
            }
        }
        self.last_frame = Some((frame.seq, t));
        self.clock = self.clock.max(t);
        self.first_frame_us.get_or_insert(frame.timestamp_us);
        let contacts = analyze_frame(&frame, &self.analytics);
        self.tracker.push(frame.timestamp_us, contacts.clusters);
        self.frames.push(frame);
        Ok(out)
    }

    pub fn ingest_pose(&mut self, pose: PoseSample) -> Result<Vec<SessionEvent>, SessionError> {
        let t = pose.time;
        self.check_time(t)?;
        if self.poses.last().is_some_and(|p| t <= p.time) {
            // duplicate or late pose: nothing new to learn
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        self.flush_scheduled(t, &mut out);
        if let Some(last) = self.poses.last() {
            let last_t = last.time;
            if t - last_t > STREAM_GAP_S {
                self.emit(
                    t,
                    EventKind::StreamGap {
                        stream: StreamKind::Poses,
                        from_time: last_t,
                        to_time: t,
                        missing_frames: 0,
                    },
                    &mut out,
                );
            }
        }
        self.clock = self.clock.max(t);
        self.streams.push(&pose);
        self.poses.push(pose);

        for i in 0..self.obstacles.len() {
            if self.spawned[i].is_none() && self.obstacles[i].triggers_spawn(pose.head.x) {
                self.spawn(i, t, &mut out);
            }
        }
        let fbox = FootBox::default();
        for i in 0..self.obstacles.len() {
            let o = self.obstacles[i];
            if self.spawned[i].is_some() && self.trials[i].is_none() {
                let past = |p: &crate::obstacle::FootPose| fbox.x_extent(p).0 > o.trailing_edge();
                if past(&pose.left) && past(&pose.right) {
                    self.evaluate(i, t, &mut out);
                }
            }
        }
        Ok(out)
    }

    fn evaluate(&mut self, i: usize, t: f64, out: &mut Vec<SessionEvent>) {
        let trial = check_crossing(&self.obstacles[i], self.spawned[i], &self.streams.view(), &FootBox::default());
        self.trials[i] = Some(trial.clone());
        let id = trial.obstacle_id;
        let crossed = trial.crossed;
        let success = trial.success;
        self.emit(t, EventKind::CrossingResult { trial }, out);
        if crossed {
            let cue = if success { Cue::Success } else { Cue::Failure };
            self.emit(t, EventKind::Cue { cue, obstacle_id: id }, out);
        }
    }

    /// Stops the walk at `t` (seconds since Walking began).
    pub fn end_walk(&mut self, t: f64) -> Result<Vec<SessionEvent>, SessionError> {
        if self.state() != SessionState::Walking {
            return Err(StateError {
                state: self.state(),
                input: Input::WalkElapsed,
            }
            .into());
        }
        let t = t.clamp(self.clock, self.config.duration_s.max(self.clock));
        let mut out = Vec::new();
        self.flush_scheduled(t, &mut out);
        self.truncate_playing(t, &mut out);
        self.clock = t;
        self.walk_end = Some(t);
        for i in 0..self.obstacles.len() {
            if self.spawned[i].is_some() && self.trials[i].is_none() {
                self.evaluate(i, t, &mut out);
            }
        }
        self.transition(Input::WalkElapsed, &mut out)?;
        Ok(out)
    }

    /// Sentences cut off by the end of the walk end when it does.
    fn truncate_playing(&mut self, t: f64, out: &mut Vec<SessionEvent>) {
        let cut: Vec<u32> = self.pending[self.next_pending..]
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::SentenceEnd { sentence_id } => Some(sentence_id),
                _ => None,
            })
            .filter(|id| {
                self.events
                    .iter()
                    .any(|e| matches!(e.kind, EventKind::SentenceStart { sentence_id, .. } if sentence_id == *id))
            })
            .collect();
        for sentence_id in cut {
            self.emit(t, EventKind::SentenceEnd { sentence_id }, out);
        }
        self.next_pending = self.pending.len();
    }

    pub fn submit_recall(&mut self, numbers: Vec<u32>) -> Result<Vec<SessionEvent>, SessionError> {
        if self.state() != SessionState::Recall {
            return Err(StateError {
                state: self.state(),
                input: Input::RecallSubmitted,
            }
            .into());
        }
        let mut out = Vec::new();
        let t = self.clock;
        self.emit(t, EventKind::RecallSubmitted { numbers }, &mut out);
        self.transition(Input::RecallSubmitted, &mut out)?;
        Ok(out)
    }

    pub fn abort(&mut self) -> Result<Vec<SessionEvent>, SessionError> {
        let mut out = Vec::new();
        if self.state() == SessionState::Walking {
            let t = self.clock;
            self.walk_end = Some(t);
            self.truncate_playing(t, &mut out);
        }
        self.transition(Input::Abort, &mut out)?;
        Ok(out)
    }

    pub fn live_metrics(&self) -> LiveMetrics {
        let head = &self.streams.head;
        let head_speed = head.last().and_then(|last| {
            let i = head.partition_point(|h| h.time < last.time - 1.0);
            let first = &head[i];
            (last.time > first.time).then(|| (last.x - first.x) / (last.time - first.time))
        });
        let distance = match (head.first(), head.last()) {
            (Some(a), Some(b)) => b.x - a.x,
            _ => 0.0,
        };
        let step_count = self
            .tracker
            .tracks()
            .iter()
            .filter(|t| Some(t.start_us()) != self.first_frame_us)
            .count();
        let done: Vec<&TrialResult> = self.trials.iter().flatten().filter(|t| t.crossed).collect();
        LiveMetrics {
            time: self.clock,
            state: self.state(),
            head_speed,
            distance,
            step_count,
            successes: done.iter().filter(|t| t.success).count(),
            failures: done.iter().filter(|t| !t.success).count(),
            last_clearance: self.trials.iter().flatten().rev().find_map(|t| t.lead_clearance),
            frames: self.frames.len(),
            stream_gaps: self.events.iter().filter(|e| matches!(e.kind, EventKind::StreamGap { .. })).count(),
        }
    }

    fn recording_without_report(&self) -> Recording {
        Recording {
            engine_version: ENGINE_VERSION.to_string(),
            config: self.config.clone(),
            source: self.source.clone(),
            obstacles: self.obstacles.clone(),
            sentences: self.sentences.clone(),
            events: self.events.clone(),
            frame_rate_hz: sim::FRAME_RATE_HZ,
            pose_rate_hz: sim::POSE_RATE_HZ,
            aborted: self.machine.aborted(),
            walk_end_time: self.walk_end.unwrap_or(0.0),
            rejected_frames: self.rejected_frames,
            report: None,
            frames: self.frames.clone(),
            poses: self.poses.clone(),
        }
    }

    fn finalize(&mut self) {
        let rec = self.recording_without_report();
        self.report = Some(compute_report(&rec, self.exec));
    }

    /// The recording so far, with the report once Complete.
    pub fn recording(&self) -> Recording {
        Recording {
            report: self.report.clone(),
            ..self.recording_without_report()
        }
    }

    pub fn into_recording(self) -> Recording {
        Recording {
            engine_version: ENGINE_VERSION.to_string(),
            aborted: self.machine.aborted(),
            walk_end_time: self.walk_end.unwrap_or(0.0),
            config: self.config,
            source: self.source,
            obstacles: self.obstacles,
            sentences: self.sentences,
            events: self.events,
            frame_rate_hz: sim::FRAME_RATE_HZ,
            pose_rate_hz: sim::POSE_RATE_HZ,
            rejected_frames: self.rejected_frames,
            report: self.report,
            frames: self.frames,
            poses: self.poses,
        }
    }
}

/// Time-ordered merge; poses precede frames at equal timestamps.
pub fn merge_streams(frames: Vec<PressureFrame>, poses: Vec<PoseSample>) -> Vec<SimItem> {
    let mut out = Vec::with_capacity(frames.len() + poses.len());
    let mut f = frames.into_iter().peekable();
    let mut p = poses.into_iter().peekable();
    loop {
        let take_frame = match (f.peek(), p.peek()) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => a.time_s() < b.time,
        };
        if take_frame {
            out.push(SimItem::Frame(f.next().expect("peeked")));
        } else {
            out.push(SimItem::Pose(p.next().expect("peeked")));
        }
    }
    out
}

/// Drives a session through all states over time-ordered stream items.
/// The walk ends at `end_time` or at the session duration.
pub fn run_session(
    config: SessionConfig,
    source: SourceInfo,
    items: impl IntoIterator<Item = SimItem>,
    end_time: Option<f64>,
    recall: &RecallScript,
    bank: &SentenceBank,
    exec: Exec,
) -> Result<Recording, SessionError> {
    let duration = config.duration_s;
    let mut s = Session::new(config, source, bank, exec)?;
    s.start()?;
    s.begin_walking()?;
    for item in items {
        let t = item.time();
        if t > duration + 1e-9 || end_time.is_some_and(|e| t >= e) {
            break;
        }
        let r = match item {
            SimItem::Frame(f) => s.ingest_frame(f),
            SimItem::Pose(p) => s.ingest_pose(p),
        };
        match r {
            Ok(_) | Err(SessionError::OutOfOrder { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    s.end_walk(end_time.unwrap_or(duration).min(duration))?;
    if s.state() == SessionState::Recall {
        let numbers = match recall {
            RecallScript::Perfect => s.presented_numbers(),
            RecallScript::Numbers(n) => n.clone(),
            RecallScript::None => Vec::new(),
        };
        s.submit_recall(numbers)?;
    }
    Ok(s.into_recording())
}

/// Simulated walk under the session's load condition.
pub fn run_simulated(
    config: &SessionConfig,
    params: &WalkerParams,
    scenario: &Scenario,
    factors: &LoadFactors,
    recall: &RecallScript,
    exec: Exec,
) -> Result<Recording, SessionError> {
    config.validate()?;
    let bank = SentenceBank::builtin();
    let walker = sim_params(params, &config.condition, factors, config.seed);
    let ctx = SimContext {
        walkway: config.walkway,
        duration_s: config.duration_s,
        obstacles: config.obstacles(),
        sentences: config.sentences(&bank),
    };
    let out = sim::simulate(&walker, scenario, &ctx, exec)?;
    let end = out.plan.end_time;
    let items = merge_streams(out.frames, out.poses);
    let source = SourceInfo::Simulator {
        params: *params,
        scenario: *scenario,
    };
    run_session(config.clone(), source, items, Some(end), recall, &bank, exec)
}

/// Walker parameters actually simulated: load modifiers applied and the
/// noise seed derived from the session seed.
pub fn sim_params(params: &WalkerParams, condition: &LoadCondition, factors: &LoadFactors, seed: u64) -> WalkerParams {
    WalkerParams {
        noise_seed: derive_seed(seed, "walker"),
        ..apply_load_modifiers(params, condition, factors)
    }
}
