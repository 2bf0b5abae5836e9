//! Two-stage trajectory prediction for vehicles broadcasting their state
//! over a V2V link.
//!
//! The pipeline forecasts a maneuvering vehicle's position one second ahead
//! from its recent parameter stream (speed, heading, steering angle,
//! longitudinal acceleration, yaw rate):
//!
//! 1. [`neural`] nonlinear autoregressive (NAR) nets forecast each parameter
//!    channel a few steps ahead;
//! 2. a NARX net rolls the longitudinal position forward using those
//!    forecasts as exogenous inputs, and a small recurrent net does the same
//!    for the lateral position;
//! 3. a constant-input kinematic bicycle rollout serves as the baseline.
//!
//! Supporting modules cover the data model and coordinate frames ([`data`]),
//! a synthetic cut-in scenario generator ([`synth`]), signal conditioning
//! ([`preprocess`]), a lossy-channel simulator with zero-order-hold
//! reconstruction ([`channel`]), and a percentile-based evaluation harness
//! ([`eval`]). The [`cli`] module ties everything into a batch front end.

pub mod channel;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod neural;
pub mod predict;
pub mod preprocess;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
