//! Feedback-linearising cavity-pressure control for a servo-electric
//! injection moulding machine.
//!
//! - [`model`]: five-state plant `ẋ = f(x) + g·U`
//! - [`lie`]: Lie-derivative chain of the cavity pressure and its finite-difference oracle
//! - [`controller`]: linearising control law and Routh–Hurwitz analysis of the error dynamics
//! - [`reference`]: pressure profiles with derivatives through order 4
//! - [`sim`]: fixed-step RK4 closed-loop simulation and tracking metrics
//! - [`tune`]: Nelder–Mead and grid search over the feedback gains
//! - [`verify`]: batch oracle checks used by the `verify` command

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod lie;
pub mod model;
pub mod reference;
pub mod sim;
pub mod tune;
pub mod verify;

pub use controller::{
    control_law, error_derivatives, routh_hurwitz, synthetic_input, ControlDecision, ControlLaw,
    GainMapping, Gains, RouthReport, Stability,
};
pub use error::{MoldError, Result};
pub use lie::{
    fd_lglf3, fd_lie, lglf3, lie_chain, lie_f, relative_degree_check, FdConfig, LieChain,
};
pub use model::{derive_q, f_of, g_of, rhs, PlantConstants, PlantParams, State, Vec5};
pub use reference::{eval_profile, validate_profile, Profile, ReferenceSample};
pub use sim::{
    metrics, rk4_step, simulate, ControlMode, Metrics, Row, SimConfig, SimResult, SimStatus,
};
pub use tune::{objective, tune, CostWeights, TuneConfig, TuneMethod, TuneOutcome};
