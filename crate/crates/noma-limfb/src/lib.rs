//! Link-level simulator for a two-user downlink where the base station
//! superposes both users' signals on beamformed transmissions and learns the
//! channels only through limited feedback.
//!
//! Each user quantizes its channel direction against a shared random vector
//! codebook and its effective gain with a uniform scalar quantizer, and
//! feeds back both indices. The base station reconstructs effective gains,
//! orders the users, checks whether the superposed transmission can meet a
//! per-user rate floor, and picks the power split that maximizes the sum
//! rate under that floor. The crate provides:
//!
//! - the channel model and feedback quantizers ([`channel`], [`codebook`],
//!   [`quantizer`]),
//! - the power-allocation solver and feasibility tests ([`noma`]),
//! - closed-form upper bounds on the rate lost to quantized feedback and
//!   the machinery to check them sample by sample ([`bounds`]),
//! - a deterministic Monte Carlo harness that sweeps feedback budgets and
//!   writes CSV summaries ([`harness`]).
//!
//! Every random quantity is drawn from a named counter-based stream, so all
//! results are reproducible from a single seed regardless of thread count.

pub mod bounds;
pub mod channel;
pub mod codebook;
pub mod error;
pub mod harness;
pub mod noma;
pub mod quantizer;
pub mod rng;
pub mod textfmt;

pub use error::{Error, Result};
