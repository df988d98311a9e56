//! Approval builders, from exact oracle foresight to learned and calibrated
//! outcome classifiers. Every builder yields an [`ApprovalTensor`] over the
//! same state space the planner consumes.

pub mod calibration;
pub mod dataset;
pub mod features;
pub mod model;
mod tensor;

pub use dataset::{
    build_trajectory_dataset, build_trajectory_dataset_with, BehaviorPolicies, DatasetConfig, Split, TrajectoryDataset,
};
pub use features::{feature_dim, featurize, featurize_sparse, SparseFeatures};
pub use model::{
    predict_probability, train_probability_model, CalibrationKind, Calibrator, ProbabilityModel, Scorer, TrainSettings,
};
pub use tensor::{ApprovalMethod, ApprovalTensor};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::env::{Action, StateSpace};
use crate::error::{Error, Result};
use crate::planner::{value_iteration, PlannerConfig, RewardSource};

pub const DEFAULT_SCORE_SCALE: f64 = 1.0;

/// Full-horizon optimal action values under the intended reward.
pub fn build_oracle_approval(space: &StateSpace) -> Result<ApprovalTensor> {
    oracle_for(space, ApprovalMethod::OracleMona)
}

fn oracle_for(space: &StateSpace, provenance: ApprovalMethod) -> Result<ApprovalTensor> {
    let pc = PlannerConfig::new(RewardSource::IntendedReward);
    let vt = value_iteration(space, &pc)?;
    let mut scores = Vec::with_capacity(space.len() * Action::COUNT);
    for t in 0..space.timesteps() {
        for local in 0..space.per_timestep() {
            scores.extend_from_slice(vt.q(t, local));
        }
    }
    ApprovalTensor::new(space, scores, provenance)
}

pub fn build_noisy_approval(space: &StateSpace, sigma: f64, seed: u64) -> Result<ApprovalTensor> {
    let oracle = build_oracle_approval(space)?;
    perturb_oracle(space, &oracle, sigma, seed)
}

/// Oracle plus i.i.d. `N(0, sigma^2)` noise on every entry.
pub fn perturb_oracle(space: &StateSpace, oracle: &ApprovalTensor, sigma: f64, seed: u64) -> Result<ApprovalTensor> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma {sigma} must be finite and >= 0")));
    }
    let provenance = ApprovalMethod::NoisyOracle { sigma, seed };
    if sigma == 0.0 {
        return ApprovalTensor::new(space, oracle.scores().to_vec(), provenance);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = oracle.scores().iter().map(|&x| x + normal.sample(&mut rng)).collect();
    ApprovalTensor::new(space, scores, provenance)
}

/// The oracle construction aimed at the wrong box: the designated box is
/// moved to the next box in `box_cells` order.
pub fn build_misspecified_approval(space: &StateSpace) -> Result<ApprovalTensor> {
    let config = space.config();
    let boxes = config.box_cells.len();
    if boxes < 2 {
        return Err(Error::Config("misspecified oracle needs at least two boxes".into()));
    }
    let wrong = space.with_designated((config.designated_box + 1) % boxes);
    oracle_for(&wrong, ApprovalMethod::MisspecifiedOracle { swap_designated_box: true })
}

/// `score_scale * (p_intended - p_hack) - per_step_penalty` for every
/// enumerated `(t, s, a)`.
pub fn learned_tensor_from_scorers(
    space: &StateSpace,
    intended: &dyn Scorer,
    hack: &dyn Scorer,
    score_scale: f64,
    provenance: ApprovalMethod,
) -> Result<ApprovalTensor> {
    let config = space.config();
    let mut scores = Vec::with_capacity(space.len() * Action::COUNT);
    for t in 0..space.timesteps() {
        for local in 0..space.per_timestep() {
            let s = space.state(t, local);
            for a in Action::ALL {
                let x = featurize_sparse(config, t, &s, a);
                let intended_prob = intended.probability(&x);
                let hack_prob = hack.probability(&x);
                let mut score = score_scale * (intended_prob - hack_prob);
                score -= config.per_step_penalty;
                scores.push(score);
            }
        }
    }
    ApprovalTensor::new(space, scores, provenance)
}

/// The intended-behaviour and hacked-behaviour classifiers behind a learned
/// overseer.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModels {
    pub intended: ProbabilityModel,
    pub hack: ProbabilityModel,
}

/// Train both classifiers on an episode-level split of `dataset`; the hack
/// model uses `seed + 1`.
pub fn train_outcome_models(
    dataset: &TrajectoryDataset,
    dc: &DatasetConfig,
    calibration: CalibrationKind,
    seed: u64,
) -> Result<OutcomeModels> {
    let split = dataset.split(dc.train_fraction, seed)?;
    let train_x = dataset.rows(&split.train);
    let holdout_x = dataset.rows(&split.holdout);
    let settings = TrainSettings::default();
    let intended = train_probability_model(
        &train_x,
        &TrajectoryDataset::labels(&dataset.intended_labels, &split.train),
        &holdout_x,
        &TrajectoryDataset::labels(&dataset.intended_labels, &split.holdout),
        calibration,
        seed,
        &settings,
    )?;
    let hack = train_probability_model(
        &train_x,
        &TrajectoryDataset::labels(&dataset.hack_labels, &split.train),
        &holdout_x,
        &TrajectoryDataset::labels(&dataset.hack_labels, &split.holdout),
        calibration,
        seed.wrapping_add(1),
        &settings,
    )?;
    Ok(OutcomeModels { intended, hack })
}

pub fn build_learned_approval(
    space: &StateSpace,
    dc: &DatasetConfig,
    calibration: CalibrationKind,
    score_scale: f64,
    seed: u64,
) -> Result<ApprovalTensor> {
    let policies = BehaviorPolicies::solve(space, seed)?;
    build_learned_approval_with(space, &policies, dc, calibration, score_scale, seed)
}

/// As [`build_learned_approval`], reusing already-solved behaviour policies.
pub fn build_learned_approval_with(
    space: &StateSpace,
    policies: &BehaviorPolicies,
    dc: &DatasetConfig,
    calibration: CalibrationKind,
    score_scale: f64,
    seed: u64,
) -> Result<ApprovalTensor> {
    let dataset = build_trajectory_dataset_with(space, policies, dc, seed)?;
    let models = train_outcome_models(&dataset, dc, calibration, seed)?;
    let provenance = ApprovalMethod::Learned { dataset: *dc, calibration, seed };
    learned_tensor_from_scorers(space, &models.intended, &models.hack, score_scale, provenance)
}
