//! Sentence bank, playback scheduling, number recall and dual-task cost,
//! plus the sound/visual load condition tags.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BANK_SIZE: usize = 45;
pub const SENTENCES_PER_WALK: usize = 7;
pub const WALK_SECONDS: f64 = 60.0;
pub const START_JITTER_S: f64 = 1.0;
pub const DEFAULT_SENTENCE_S: f64 = 3.0;

/// Bank shipped with the engine, one JSON object per line.
pub const BUILTIN_BANK: &str = include_str!("../data/sentences.jsonl");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualTaskError {
    #[error("sentence bank must hold exactly {BANK_SIZE} entries, found {0}")]
    BankSize(usize),
    #[error("sentence bank line {line}: {message}")]
    BankParse { line: usize, message: String },
    #[error("sentence {id}: {message}")]
    BadSentence { id: u32, message: String },
    #[error("{0} is undefined")]
    Undefined(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: u32,
    pub text: String,
    pub numbers: Vec<u32>,
    #[serde(default = "default_duration")]
    pub duration: f64,
}

fn default_duration() -> f64 {
    DEFAULT_SENTENCE_S
}

impl Sentence {
    fn validate(&self) -> Result<(), DualTaskError> {
        let bad = |message: &str| DualTaskError::BadSentence {
            id: self.id,
            message: message.to_string(),
        };
        if !(1..=BANK_SIZE as u32).contains(&self.id) {
            return Err(bad("id outside 1..=45"));
        }
        if self.numbers.is_empty() {
            return Err(bad("no numbers"));
        }
        // seven back-to-back sentences must fit in the walk
        if !(self.duration > 0.0 && self.duration <= WALK_SECONDS / SENTENCES_PER_WALK as f64) {
            return Err(bad("duration must be in (0, 60/7] s"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceBank {
    sentences: Vec<Sentence>,
}

impl SentenceBank {
    pub fn new(sentences: Vec<Sentence>) -> Result<Self, DualTaskError> {
        if sentences.len() != BANK_SIZE {
            return Err(DualTaskError::BankSize(sentences.len()));
        }
        let mut seen = [false; BANK_SIZE + 1];
        for s in &sentences {
            s.validate()?;
            if std::mem::replace(&mut seen[s.id as usize], true) {
                return Err(DualTaskError::BadSentence {
                    id: s.id,
                    message: "duplicate id".into(),
                });
            }
        }
        Ok(Self { sentences })
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, DualTaskError> {
        let sentences = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<Sentence>(l).map_err(|e| DualTaskError::BankParse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(sentences)
    }

    pub fn builtin() -> Self {
        Self::parse_jsonl(BUILTIN_BANK).expect("built-in sentence bank is valid")
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn get(&self, id: u32) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledSentence {
    pub sentence_id: u32,
    pub start_time: f64,
    pub duration: f64,
}

impl ScheduledSentence {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackSchedule {
    pub entries: Vec<ScheduledSentence>,
}

impl PlaybackSchedule {
    /// Numbers in playback order.
    pub fn presented_numbers(&self, bank: &SentenceBank) -> Vec<u32> {
        self.entries
            .iter()
            .filter_map(|e| bank.get(e.sentence_id))
            .flat_map(|s| s.numbers.iter().copied())
            .collect()
    }

    /// True when a sentence is playing at `t`.
    pub fn playing_at(&self, t: f64) -> bool {
        self.entries.iter().any(|e| t >= e.start_time && t < e.end_time())
    }
}

/// Seven distinct sentences, one per equal slot of the walk, each jittered
/// by up to a second and then clamped so that intervals stay disjoint and
/// inside `[0, 60)`.
pub fn schedule_sentences(bank: &SentenceBank, seed: u64) -> PlaybackSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, BANK_SIZE, SENTENCES_PER_WALK);
    let slot = WALK_SECONDS / SENTENCES_PER_WALK as f64;
    let mut entries: Vec<ScheduledSentence> = picks
        .iter()
        .enumerate()
        .map(|(k, i)| {
            let s = &bank.sentences[i];
            let centre = k as f64 * slot + slot / 2.0;
            let jitter = rng.random_range(-START_JITTER_S..=START_JITTER_S);
            ScheduledSentence {
                sentence_id: s.id,
                start_time: centre - s.duration / 2.0 + jitter,
                duration: s.duration,
            }
        })
        .collect();

    let mut floor = 0.0f64;
    for e in entries.iter_mut() {
        e.start_time = e.start_time.max(floor);
        floor = e.end_time();
    }
    let mut ceil = WALK_SECONDS;
    for e in entries.iter_mut().rev() {
        e.start_time = e.start_time.min(ceil - e.duration);
        ceil = e.start_time;
    }
    PlaybackSchedule { entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// Longest common subsequence of presented and reported order.
    pub ordered_correct: usize,
    pub ordered_accuracy: f64,
}

/// Order-insensitive multiset matching, with the in-order match count as a
/// secondary statistic.
pub fn score_recall(presented: &[u32], reported: &[u32]) -> Result<RecallScore, DualTaskError> {
    if presented.is_empty() {
        return Err(DualTaskError::Undefined("recall accuracy with nothing presented"));
    }
    let mut pool: HashMap<u32, usize> = HashMap::new();
    for &n in presented {
        *pool.entry(n).or_default() += 1;
    }
    let correct = reported
        .iter()
        .filter(|n| match pool.get_mut(n) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        })
        .count();
    let ordered_correct = lcs_len(presented, reported);
    let total = presented.len();
    Ok(RecallScore {
        correct,
        total,
        accuracy: correct as f64 / total as f64,
        ordered_correct,
        ordered_accuracy: ordered_correct as f64 / total as f64,
    })
}

fn lcs_len(a: &[u32], b: &[u32]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for &x in a {
        let mut diag = 0;
        for (j, &y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Percentage degradation `(single - dual) / single * 100`. Positive means
/// the dual-task value is lower.
pub fn dual_task_cost(single: f64, dual: f64) -> Result<f64, DualTaskError> {
    if !(single > 0.0) {
        return Err(DualTaskError::Undefined("dual-task cost with a non-positive baseline"));
    }
    Ok((single - dual) / single * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoundLevel {
    #[default]
    Quiet,
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundMeta {
    pub source_count: u32,
    pub loudness_tier: u8,
    pub spectral_tier: u8,
}

impl SoundLevel {
    pub fn meta(self) -> SoundMeta {
        match self {
            SoundLevel::Quiet => SoundMeta {
                source_count: 2,
                loudness_tier: 1,
                spectral_tier: 1,
            },
            SoundLevel::Busy => SoundMeta {
                source_count: 12,
                loudness_tier: 2,
                spectral_tier: 2,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualLoad {
    #[default]
    Empty,
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualMeta {
    pub avatar_count: u32,
    /// m/s
    pub avatar_speed: f64,
}

impl VisualLoad {
    pub fn meta(self) -> VisualMeta {
        match self {
            VisualLoad::Empty => VisualMeta {
                avatar_count: 0,
                avatar_speed: 0.0,
            },
            VisualLoad::Busy => VisualMeta {
                avatar_count: 24,
                avatar_speed: 1.4,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadCondition {
    #[serde(default)]
    pub sound: SoundLevel,
    #[serde(default)]
    pub visual: VisualLoad,
    #[serde(default)]
    pub cognitive: bool,
}

impl LoadCondition {
    pub fn is_baseline(&self) -> bool {
        *self == Self::default()
    }
}
