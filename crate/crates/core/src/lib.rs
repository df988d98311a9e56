//! Experiment engine for the Camera Dropbox reward-hacking gridworld.
//!
//! Ordinary RL optimises the hackable environment reward over the whole
//! episode; MONA optimises an overseer's approval over a short horizon. The
//! crate provides the environment ([`env`]), exact and sample-based tabular
//! planners ([`planner`]), a spectrum of approval builders ([`approval`]),
//! episode metrics ([`metrics`]), the sweep runner ([`suite`]) and report /
//! plot-data emission ([`report`]).

pub mod approval;
pub mod env;
pub mod error;
pub mod metrics;
pub mod planner;
pub mod report;
pub mod suite;

pub use approval::{ApprovalMethod, ApprovalTensor, CalibrationKind, DatasetConfig};
pub use env::{Action, BallPos, Cell, EnvConfig, Events, GridState, StateSpace, StepOutcome};
pub use error::{Error, Result};
pub use metrics::{BehaviorClass, EpisodeTrace, RunMetrics};
pub use planner::{LearnerConfig, PlannerConfig, Policy, RewardSource, ValueTable};
pub use report::{PlotData, PlotKind};
pub use suite::{Learner, ReferenceFixture, RunCell, RunRecord, SweepConfig, SweepMethod};
