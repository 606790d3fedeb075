//! Shared session engine behind every connection.

// Errors are ready-to-send protocol messages.
#![allow(clippy::result_large_err)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use gaitway_core::dualtask::SentenceBank;
use gaitway_core::exec::Exec;
use gaitway_core::session::{
    merge_streams, sim_params, EventKind, Recording, Session, SessionConfig, SessionError, SessionEvent, SessionState,
    SourceInfo, COUNTDOWN_S,
};
use gaitway_core::sim::{LoadFactors, Scenario, SimContext, SimError, SimItem, SimStream, WalkerParams, FRAME_RATE_HZ};
use gaitway_core::wire;

use crate::protocol::{parse_client, ClientMessage, ErrorCode, ServerMessage};
use crate::ServerError;

/// Frames allowed to wait in one client's queue; beyond this the client is
/// skipped for that frame rather than slowing ingestion.
const MAX_QUEUED_FRAMES: usize = 8;
/// Metrics go out once per this many ingested frames.
const METRICS_EVERY_FRAMES: u64 = 10;

/// Time-ordered frames and poses feeding one session.
type ItemStream = Box<dyn Iterator<Item = SimItem> + Send>;
const SLEEP_SLICE: Duration = Duration::from_millis(20);

/// Where live stream items come from.
#[derive(Debug, Clone)]
pub enum Source {
    Sim {
        params: WalkerParams,
        scenario: Scenario,
        factors: LoadFactors,
    },
    Replay {
        dir: PathBuf,
        recording: Arc<Recording>,
    },
}

impl Source {
    /// Loads the recording up front so a bad directory fails at startup.
    pub fn replay(dir: impl Into<PathBuf>) -> Result<Self, ServerError> {
        let dir = dir.into();
        let recording = Recording::read(&dir)?;
        Ok(Source::Replay {
            dir,
            recording: Arc::new(recording),
        })
    }

    fn default_config(&self) -> SessionConfig {
        match self {
            Source::Sim { .. } => SessionConfig::default(),
            Source::Replay { recording, .. } => recording.config.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Wall-clock seconds per stream second; 0 runs unpaced.
    pub time_scale: f64,
    /// Completed sessions are written under this directory when set.
    pub out_dir: Option<PathBuf>,
    /// Session config in force before any configure_session; defaults to
    /// the replayed recording's config or the engine default.
    pub config: Option<SessionConfig>,
    pub exec: Exec,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            time_scale: 1.0,
            out_dir: None,
            config: None,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug)]
pub enum Outgoing {
    Text(String),
    Binary(Vec<u8>),
}

#[derive(Debug)]
struct Client {
    id: u64,
    tx: Sender<Outgoing>,
    decimation: Option<u32>,
    frames_seen: u64,
    queued_frames: Arc<AtomicUsize>,
}

#[derive(Debug)]
struct Inner {
    config: SessionConfig,
    session: Option<Session>,
    run: u64,
    report_sent: bool,
    controller: Option<u64>,
    clients: Vec<Client>,
    frames_ingested: u64,
}

impl Inner {
    fn state(&self) -> SessionState {
        self.session.as_ref().map_or(SessionState::Idle, Session::state)
    }

    fn send_to(&self, id: u64, msg: &ServerMessage) {
        if let Some(c) = self.clients.iter().find(|c| c.id == id) {
            let _ = c.tx.send(Outgoing::Text(msg.to_json()));
        }
    }

    fn broadcast(&self, msg: &ServerMessage) {
        let text = msg.to_json();
        for c in &self.clients {
            let _ = c.tx.send(Outgoing::Text(text.clone()));
        }
    }

    fn ack(&self, id: u64, request: &str) {
        let time = self.session.as_ref().map_or(0.0, |s| s.live_metrics().time);
        self.send_to(
            id,
            &ServerMessage::StateUpdate {
                state: self.state(),
                previous: None,
                time,
                ack: Some(request.to_string()),
                config: self.config.clone(),
            },
        );
    }
}

/// Shared engine behind every connection. One session at a time.
#[derive(Debug)]
pub struct Engine {
    inner: Mutex<Inner>,
    source: Source,
    options: ServerOptions,
    bank: SentenceBank,
    next_client: AtomicU64,
}

/// A registered connection's outgoing queue.
#[derive(Debug)]
pub struct ClientLink {
    pub id: u64,
    pub rx: Receiver<Outgoing>,
    pub queued_frames: Arc<AtomicUsize>,
}

impl Engine {
    pub fn new(source: Source, options: ServerOptions) -> Arc<Self> {
        Arc::new(Self {
            inner: Mutex::new(Inner {
                config: options.config.clone().unwrap_or_else(|| source.default_config()),
                session: None,
                run: 0,
                report_sent: false,
                controller: None,
                clients: Vec::new(),
                frames_ingested: 0,
            }),
            source,
            options,
            bank: SentenceBank::builtin(),
            next_client: AtomicU64::new(1),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn state(&self) -> SessionState {
        self.lock().state()
    }

    pub fn register(&self) -> ClientLink {
        let id = self.next_client.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        let queued_frames = Arc::new(AtomicUsize::new(0));
        let mut inner = self.lock();
        inner.clients.push(Client {
            id,
            tx,
            decimation: None,
            frames_seen: 0,
            queued_frames: queued_frames.clone(),
        });
        // greet with the current state so observers can render at once
        inner.ack(id, "connect");
        ClientLink { id, rx, queued_frames }
    }

    /// Drops the client; a departing controller frees the role.
    pub fn unregister(&self, id: u64) {
        let mut inner = self.lock();
        inner.clients.retain(|c| c.id != id);
        if inner.controller == Some(id) {
            inner.controller = None;
        }
    }

    pub fn reject(&self, id: u64, message: &str) {
        self.lock()
            .send_to(id, &ServerMessage::error(ErrorCode::Malformed, message, None, None));
    }

    /// Handles one text message from client `id`. Every message is answered
    /// with an ack or an error.
    pub fn handle_text(self: &Arc<Self>, id: u64, text: &str) {
        let msg = match parse_client(text) {
            Ok(m) => m,
            Err(e) => {
                self.lock().send_to(id, &e);
                return;
            }
        };
        let name = msg.name();
        let mut inner = self.lock();
        if msg.is_control() {
            match inner.controller {
                Some(other) if other != id => {
                    inner.send_to(
                        id,
                        &ServerMessage::error(ErrorCode::Busy, "another controller is connected", None, Some(name)),
                    );
                    return;
                }
                _ => inner.controller = Some(id),
            }
        }
        match self.dispatch(&mut inner, id, msg) {
            Ok(()) => inner.ack(id, name),
            Err(e) => {
                let e = match e {
                    ServerMessage::Error { code, message, field, .. } => ServerMessage::Error {
                        code,
                        message,
                        field,
                        request: Some(name.to_string()),
                    },
                    other => other,
                };
                inner.send_to(id, &e);
            }
        }
    }

    fn dispatch(self: &Arc<Self>, inner: &mut Inner, id: u64, msg: ClientMessage) -> Result<(), ServerMessage> {
        let state_err = |what: &str, state: SessionState| {
            ServerMessage::error(ErrorCode::InvalidState, format!("{what} not allowed in state {state:?}"), None, None)
        };
        match msg {
            ClientMessage::ConfigureSession { config } => {
                let state = inner.state();
                if !matches!(state, SessionState::Idle | SessionState::Complete) {
                    return Err(state_err("configure_session", state));
                }
                config
                    .validate()
                    .map_err(|e| ServerMessage::error(ErrorCode::InvalidField, e.message, Some(e.field), None))?;
                inner.config = config;
                inner.session = None;
                Ok(())
            }
            ClientMessage::StartSession => {
                let state = inner.state();
                if !matches!(state, SessionState::Idle | SessionState::Complete) {
                    return Err(state_err("start_session", state));
                }
                self.start(inner)
            }
            ClientMessage::Abort => {
                let state = inner.state();
                let session = inner.session.as_mut().ok_or_else(|| state_err("abort", state))?;
                let events = session.abort().map_err(|_| state_err("abort", state))?;
                self.publish(inner, events);
                Ok(())
            }
            ClientMessage::SubmitRecall { numbers } => {
                let state = inner.state();
                let session = inner.session.as_mut().ok_or_else(|| state_err("submit_recall", state))?;
                let events = session
                    .submit_recall(numbers)
                    .map_err(|_| state_err("submit_recall", state))?;
                self.publish(inner, events);
                Ok(())
            }
            ClientMessage::SubscribeFrames { decimation, fps } => {
                let d = match (decimation, fps) {
                    (Some(0), _) => {
                        return Err(ServerMessage::error(
                            ErrorCode::InvalidField,
                            "must be at least 1",
                            Some("decimation".into()),
                            None,
                        ))
                    }
                    (Some(d), _) => d,
                    (None, Some(f)) if f > 0.0 && f.is_finite() => (FRAME_RATE_HZ / f).round().max(1.0) as u32,
                    (None, Some(_)) => {
                        return Err(ServerMessage::error(
                            ErrorCode::InvalidField,
                            "must be positive",
                            Some("fps".into()),
                            None,
                        ))
                    }
                    (None, None) => 1,
                };
                if let Some(c) = inner.clients.iter_mut().find(|c| c.id == id) {
                    c.decimation = Some(d);
                    c.frames_seen = 0;
                }
                Ok(())
            }
        }
    }

    fn stream_items(&self, config: &SessionConfig) -> Result<(SourceInfo, ItemStream, f64), ServerMessage> {
        match &self.source {
            Source::Sim {
                params,
                scenario,
                factors,
            } => {
                let walker = sim_params(params, &config.condition, factors, config.seed);
                let ctx = SimContext {
                    walkway: config.walkway,
                    duration_s: config.duration_s,
                    obstacles: config.obstacles(),
                    sentences: config.sentences(&self.bank),
                };
                let stream = SimStream::new(&walker, scenario, &ctx).map_err(|e| match e {
                    SimError::Param { field, message } => {
                        ServerMessage::error(ErrorCode::InvalidField, message, Some(format!("walker.{field}")), None)
                    }
                    other => ServerMessage::error(ErrorCode::InvalidField, other.to_string(), Some("scenario".into()), None),
                })?;
                let end = stream.plan().end_time;
                let info = SourceInfo::Simulator {
                    params: *params,
                    scenario: *scenario,
                };
                Ok((info, Box::new(stream), end))
            }
            Source::Replay { dir, recording } => {
                let items = merge_streams(recording.frames.clone(), recording.poses.clone());
                let end = if recording.walk_end_time > 0.0 {
                    recording.walk_end_time
                } else {
                    config.duration_s
                };
                let info = SourceInfo::Replay {
                    from: dir.display().to_string(),
                };
                Ok((info, Box::new(items.into_iter()), end))
            }
        }
    }

    fn start(self: &Arc<Self>, inner: &mut Inner) -> Result<(), ServerMessage> {
        let config = inner.config.clone();
        let (info, items, end) = self.stream_items(&config)?;
        let mut session = Session::new(config, info, &self.bank, self.options.exec).map_err(|e| match e {
            SessionError::Config(c) => ServerMessage::error(ErrorCode::InvalidField, c.message, Some(c.field), None),
            other => internal(&other),
        })?;
        let events = session.start().map_err(|e| internal(&e))?;
        inner.session = Some(session);
        inner.report_sent = false;
        inner.frames_ingested = 0;
        for c in inner.clients.iter_mut() {
            c.frames_seen = 0;
        }
        inner.run += 1;
        let run = inner.run;
        self.publish(inner, events);
        let engine = Arc::clone(self);
        thread::spawn(move || engine.drive(run, items, end));
        Ok(())
    }

    /// Sends session events to every client and the report once Complete.
    fn publish(&self, inner: &mut Inner, events: Vec<SessionEvent>) {
        for e in events {
            let msg = match &e.kind {
                EventKind::StateChange { from, to } => ServerMessage::StateUpdate {
                    state: *to,
                    previous: Some(*from),
                    time: e.time,
                    ack: None,
                    config: inner.config.clone(),
                },
                EventKind::ObstacleSpawn { .. } | EventKind::CrossingResult { .. } | EventKind::Cue { .. } => {
                    ServerMessage::ObstacleEvent { event: e.clone() }
                }
                EventKind::SentenceStart { .. } | EventKind::SentenceEnd { .. } => {
                    ServerMessage::SentenceEvent { event: e.clone() }
                }
                EventKind::StreamGap { .. } => match &inner.session {
                    Some(s) => ServerMessage::MetricsUpdate {
                        metrics: s.live_metrics(),
                    },
                    None => continue,
                },
                EventKind::RecallSubmitted { .. } => continue,
            };
            inner.broadcast(&msg);
        }
        if inner.report_sent || inner.state() != SessionState::Complete {
            return;
        }
        inner.report_sent = true;
        let Some(session) = inner.session.as_ref() else { return };
        let rec = session.recording();
        if let Some(dir) = &self.options.out_dir {
            let path = dir.join(format!("session-{}-{}", rec.config.seed, inner.run));
            if let Err(e) = rec.write(&path) {
                inner.broadcast(&ServerMessage::error(ErrorCode::Internal, e.to_string(), None, None));
            }
        }
        if let Some(report) = rec.report {
            inner.broadcast(&ServerMessage::SessionReport { report });
        }
    }

    fn active(&self, run: u64, state: SessionState) -> bool {
        let inner = self.lock();
        inner.run == run && inner.state() == state
    }

    /// Sleeps until `target`, waking to check that the run is still live.
    fn pace(&self, run: u64, state: SessionState, target: Instant) -> bool {
        loop {
            if !self.active(run, state) {
                return false;
            }
            let now = Instant::now();
            if now >= target {
                return true;
            }
            thread::sleep((target - now).min(SLEEP_SLICE));
        }
    }

    fn drive(self: Arc<Self>, run: u64, items: Box<dyn Iterator<Item = SimItem> + Send>, end: f64) {
        let scale = self.options.time_scale;
        let countdown_end = Instant::now() + Duration::from_secs_f64(COUNTDOWN_S * scale);
        if !self.pace(run, SessionState::Countdown, countdown_end) {
            return;
        }
        {
            let mut inner = self.lock();
            if inner.run != run || inner.state() != SessionState::Countdown {
                return;
            }
            let Some(session) = inner.session.as_mut() else { return };
            match session.begin_walking() {
                Ok(events) => self.publish(&mut inner, events),
                Err(_) => return,
            }
        }
        let walk_start = Instant::now();
        let mut end_t = end;
        for item in items {
            let t = item.time();
            if t >= end {
                break;
            }
            if scale > 0.0 && !self.pace(run, SessionState::Walking, walk_start + Duration::from_secs_f64(t * scale)) {
                return;
            }
            let mut inner = self.lock();
            if inner.run != run || inner.state() != SessionState::Walking {
                return;
            }
            let session = inner.session.as_mut().expect("walking session");
            let duration = session.config().duration_s;
            if t > duration {
                end_t = duration;
                break;
            }
            match item {
                SimItem::Pose(p) => {
                    if let Ok(events) = session.ingest_pose(p) {
                        self.publish(&mut inner, events);
                    }
                }
                SimItem::Frame(f) => {
                    let encoded = inner.clients.iter().any(|c| c.decimation.is_some()).then(|| wire::encode_frame(&f));
                    let session = inner.session.as_mut().expect("walking session");
                    if let Ok(events) = session.ingest_frame(f) {
                        self.publish(&mut inner, events);
                        if let Some(Ok(bytes)) = encoded {
                            forward_frame(&mut inner, &bytes);
                        }
                        inner.frames_ingested += 1;
                        if inner.frames_ingested.is_multiple_of(METRICS_EVERY_FRAMES) {
                            let metrics = inner.session.as_ref().expect("walking session").live_metrics();
                            inner.broadcast(&ServerMessage::MetricsUpdate { metrics });
                        }
                    }
                }
            }
        }
        let mut inner = self.lock();
        if inner.run != run || inner.state() != SessionState::Walking {
            return;
        }
        let session = inner.session.as_mut().expect("walking session");
        if let Ok(events) = session.end_walk(end_t) {
            let metrics = session.live_metrics();
            self.publish(&mut inner, events);
            inner.broadcast(&ServerMessage::MetricsUpdate { metrics });
        }
    }
}

fn forward_frame(inner: &mut Inner, bytes: &[u8]) {
    for c in inner.clients.iter_mut() {
        let Some(d) = c.decimation else { continue };
        let due = c.frames_seen % d as u64 == 0;
        c.frames_seen += 1;
        if !due || c.queued_frames.load(Ordering::Relaxed) >= MAX_QUEUED_FRAMES {
            continue;
        }
        c.queued_frames.fetch_add(1, Ordering::Relaxed);
        let _ = c.tx.send(Outgoing::Binary(bytes.to_vec()));
    }
}

fn internal(e: &dyn std::error::Error) -> ServerMessage {
    ServerMessage::error(ErrorCode::Internal, e.to_string(), None, None)
}
