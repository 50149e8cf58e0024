//! Simulation, dispatch policies, and reinforcement-learning training for
//! multi-period technician routing with heterogeneous skills, technician
//! absences, and rework risk.
//!
//! The crate is organized around the sequential decision process:
//!
//! - [`domain`] — customers, technicians, decision states, and the
//!   inconvenience cost model.
//! - [`routing`] — travel-time geometry, route feasibility, and the
//!   cheapest-insertion heuristic shared by every policy.
//! - [`scoring`] — the urgency/efficiency score that ranks candidate
//!   assignments.
//! - [`instances`] — seeded generation and persistence of full problem
//!   realizations (arrivals, absences, rework coin streams) so that every
//!   policy faces identical randomness.
//! - [`policies`] — the score-based assignment engine and the benchmark
//!   dispatch rules.
//! - [`rl`] — state featurization, a small feedforward network with manual
//!   backpropagation, and the PPO trainer for the state-dependent balance
//!   parameter.
//! - [`simulation`] — the decision → cost → transition episode driver.
//! - [`experiments`] — batch evaluation, metrics, the exact tiny-scale
//!   dynamic-programming oracle, and report emission.

pub mod domain;
pub mod error;
pub mod experiments;
pub mod instances;
pub mod policies;
pub mod rl;
pub mod routing;
pub mod scoring;
pub mod simulation;

pub use error::{Error, Result};
