//! Trajectory-sampled `(t, s, a)` tuples labelled by the outcome of the
//! episode they came from.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::featurize;
use crate::env::{Action, StateSpace};
use crate::error::{Error, Result};
use crate::metrics::{classify_episode, BehaviorClass, EpisodeTrace, TraceStep};
use crate::planner::{greedy_policy, value_iteration, PlannerConfig, Policy, RewardSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub size: usize,
    pub train_fraction: f64,
    /// Probability that an episode follows the hack-optimal policy rather
    /// than the intended-optimal one.
    pub behavior_mix: f64,
    pub random_action_rate: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { size: 512, train_fraction: 0.8, behavior_mix: 0.5, random_action_rate: 0.2 }
    }
}

impl DatasetConfig {
    pub const STANDARD_SIZES: [usize; 2] = [512, 2048];

    pub fn with_size(size: usize) -> Self {
        DatasetConfig { size, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 8 {
            return Err(Error::Config(format!("dataset size {} must be >= 8", self.size)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        for (name, v) in [("behavior_mix", self.behavior_mix), ("random_action_rate", self.random_action_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Greedy policies the dataset mixes between.
#[derive(Debug, Clone)]
pub struct BehaviorPolicies {
    /// Optimal under the bad reward at full horizon.
    pub hack: Policy,
    /// Optimal under the intended reward at full horizon.
    pub intended: Policy,
}

impl BehaviorPolicies {
    pub fn solve(space: &StateSpace, tie_seed: u64) -> Result<Self> {
        let hack = value_iteration(space, &PlannerConfig::new(RewardSource::BadReward))?;
        let intended = value_iteration(space, &PlannerConfig::new(RewardSource::IntendedReward))?;
        Ok(BehaviorPolicies { hack: greedy_policy(&hack, tie_seed), intended: greedy_policy(&intended, tie_seed) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub features: Vec<Vec<f64>>,
    pub intended_labels: Vec<bool>,
    pub hack_labels: Vec<bool>,
    /// `(t, local state index, action)` of each tuple.
    pub origin: Vec<(usize, usize, Action)>,
    /// Episode each tuple was drawn from, numbered from 0.
    pub episode: Vec<usize>,
}

/// Row indices of a train / held-out partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn episode_count(&self) -> usize {
        self.episode.last().map_or(0, |e| e + 1)
    }

    /// Partition by episode so no trajectory straddles both sides, then
    /// require both label classes of both labels in the training rows.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<Split> {
        let episodes = self.episode_count();
        if episodes < 2 {
            return Err(Error::Dataset(format!("need at least 2 episodes to split, got {episodes}")));
        }
        let mut order: Vec<usize> = (0..episodes).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((train_fraction * episodes as f64).round() as usize).clamp(1, episodes - 1);
        let mut in_train = vec![false; episodes];
        for &e in &order[..n_train] {
            in_train[e] = true;
        }
        let (mut train, mut holdout) = (Vec::new(), Vec::new());
        for (row, &e) in self.episode.iter().enumerate() {
            if in_train[e] {
                train.push(row);
            } else {
                holdout.push(row);
            }
        }
        for (name, labels) in [("intended", &self.intended_labels), ("hack", &self.hack_labels)] {
            let pos = train.iter().filter(|&&r| labels[r]).count();
            if pos == 0 || pos == train.len() {
                return Err(Error::Dataset(format!(
                    "training split has a single {name} label class ({pos} positive of {} rows); adjust behavior_mix",
                    train.len()
                )));
            }
        }
        Ok(Split { train, holdout })
    }

    pub fn rows(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter().map(|&i| self.features[i].clone()).collect()
    }

    pub fn labels(labels: &[bool], idx: &[usize]) -> Vec<bool> {
        idx.iter().map(|&i| labels[i]).collect()
    }
}

pub fn build_trajectory_dataset(space: &StateSpace, dc: &DatasetConfig, seed: u64) -> Result<TrajectoryDataset> {
    let policies = BehaviorPolicies::solve(space, seed)?;
    build_trajectory_dataset_with(space, &policies, dc, seed)
}

/// Sample whole episodes from the behaviour mixture until `dc.size` tuples
/// are collected; the final episode is truncated to fit.
pub fn build_trajectory_dataset_with(
    space: &StateSpace,
    policies: &BehaviorPolicies,
    dc: &DatasetConfig,
    seed: u64,
) -> Result<TrajectoryDataset> {
    dc.validate()?;
    let config = space.config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = space.start();
    let mut ds = TrajectoryDataset {
        features: Vec::with_capacity(dc.size),
        intended_labels: Vec::with_capacity(dc.size),
        hack_labels: Vec::with_capacity(dc.size),
        origin: Vec::with_capacity(dc.size),
        episode: Vec::with_capacity(dc.size),
    };

    let mut episode = 0;
    while ds.len() < dc.size {
        let policy = if rng.gen::<f64>() < dc.behavior_mix { &policies.hack } else { &policies.intended };
        let mut steps = Vec::new();
        let (mut t, mut local) = (0, start);
        while !space.is_terminal(t, local) {
            let a = if rng.gen::<f64>() < dc.random_action_rate {
                Action::from_index(rng.gen_range(0..Action::COUNT))
            } else {
                policy.sample(t, local, &mut rng)
            };
            let ai = a.index();
            steps.push(TraceStep {
                t,
                state: local,
                action: a,
                events: space.events(local, ai),
                bad_reward: space.bad_reward(local, ai),
                intended_reward: space.intended_reward(local, ai),
            });
            local = space.successor(local, ai);
            t += 1;
        }
        let trace = EpisodeTrace { designated_box: config.designated_box, steps };
        let class = classify_episode(&trace)?;
        for step in &trace.steps {
            if ds.len() == dc.size {
                break;
            }
            let s = space.state(step.t, step.state);
            ds.features.push(featurize(config, step.t, &s, step.action));
            ds.intended_labels.push(class == BehaviorClass::Intended);
            ds.hack_labels.push(class == BehaviorClass::Hacking);
            ds.origin.push((step.t, step.state, step.action));
            ds.episode.push(episode);
        }
        episode += 1;
    }
    Ok(ds)
}
