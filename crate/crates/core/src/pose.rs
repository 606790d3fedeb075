//! Synchronised head and ankle tracker samples.

use serde::{Deserialize, Serialize};

use crate::gait::HeadSample;
use crate::obstacle::FootPose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub time: f64,
    pub head: HeadSample,
    pub left: FootPose,
    pub right: FootPose,
}

/// Per-tracker streams split out of interleaved samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseStreamsOwned {
    pub head: Vec<HeadSample>,
    pub left: Vec<FootPose>,
    pub right: Vec<FootPose>,
}

impl PoseStreamsOwned {
    pub fn from_samples(samples: &[PoseSample]) -> Self {
        Self {
            head: samples.iter().map(|s| s.head).collect(),
            left: samples.iter().map(|s| s.left).collect(),
            right: samples.iter().map(|s| s.right).collect(),
        }
    }

    pub fn push(&mut self, s: &PoseSample) {
        self.head.push(s.head);
        self.left.push(s.left);
        self.right.push(s.right);
    }

    pub fn view(&self) -> crate::obstacle::PoseStreams<'_> {
        crate::obstacle::PoseStreams {
            left: &self.left,
            right: &self.right,
            head: &self.head,
        }
    }
}
