//! Walking-balance assessment engine: walkway model, pressure analytics,
//! gait metrics, obstacle trials, dual-task scoring, sessions, the synthetic
//! walker and wire formats.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dualtask;
pub mod exec;
pub mod gait;
pub mod obstacle;
pub mod pose;
pub mod pressure;
pub mod seed;
pub mod session;
pub mod sim;
pub mod walkway;
pub mod wire;
