use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ordered lifecycle; a session only ever moves forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    Countdown,
    Walking,
    Recall,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Input {
    Start,
    CountdownElapsed,
    WalkElapsed,
    RecallSubmitted,
    Abort,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{input:?} is not valid in state {state:?}")]
pub struct StateError {
    pub state: SessionState,
    pub input: Input,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMachine {
    state: SessionState,
    cognitive: bool,
    aborted: bool,
}

impl StateMachine {
    pub fn new(cognitive: bool) -> Self {
        Self {
            state: SessionState::Idle,
            cognitive,
            aborted: false,
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    /// Applies an input and returns the `(from, to)` transition.
    pub fn apply(&mut self, input: Input) -> Result<(SessionState, SessionState), StateError> {
        use SessionState::*;
        let from = self.state;
        let to = match (from, input) {
            (Idle, Input::Start) => Countdown,
            (Countdown, Input::CountdownElapsed) => Walking,
            (Walking, Input::WalkElapsed) if self.cognitive => Recall,
            (Walking, Input::WalkElapsed) => Complete,
            (Recall, Input::RecallSubmitted) => Complete,
            (s, Input::Abort) if s != Complete => {
                self.aborted = true;
                Complete
            }
            _ => return Err(StateError { state: from, input }),
        };
        self.state = to;
        Ok((from, to))
    }
}
