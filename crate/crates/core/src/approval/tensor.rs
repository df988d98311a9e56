use std::io::Write;

use serde::{Deserialize, Serialize};

use super::dataset::DatasetConfig;
use super::model::CalibrationKind;
use crate::env::{Action, StateSpace};
use crate::error::{Error, Result};

/// Which overseer produced an approval signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ApprovalMethod {
    /// No approval; the planner optimises the environment's bad reward.
    #[serde(rename = "OrdinaryRL")]
    OrdinaryRl,
    OracleMona,
    NoisyOracle {
        sigma: f64,
        seed: u64,
    },
    MisspecifiedOracle {
        swap_designated_box: bool,
    },
    Learned {
        dataset: DatasetConfig,
        calibration: CalibrationKind,
        seed: u64,
    },
}

impl ApprovalMethod {
    /// Short identifier used in CSV rows and plot labels.
    pub fn label(&self) -> String {
        match self {
            ApprovalMethod::OrdinaryRl => "ordinary_rl".into(),
            ApprovalMethod::OracleMona => "oracle_mona".into(),
            ApprovalMethod::NoisyOracle { sigma, .. } => format!("noisy_oracle:{sigma}"),
            ApprovalMethod::MisspecifiedOracle { .. } => "misspecified_oracle".into(),
            ApprovalMethod::Learned { .. } => "learned".into(),
        }
    }
}

impl std::fmt::Display for ApprovalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApprovalMethod::OrdinaryRl => write!(f, "OrdinaryRL"),
            ApprovalMethod::OracleMona => write!(f, "OracleMona"),
            ApprovalMethod::NoisyOracle { sigma, seed } => write!(f, "NoisyOracle(sigma={sigma}, seed={seed})"),
            ApprovalMethod::MisspecifiedOracle { swap_designated_box } => {
                write!(f, "MisspecifiedOracle(swap_designated_box={swap_designated_box})")
            }
            ApprovalMethod::Learned { dataset, calibration, seed } => write!(
                f,
                "Learned(size={}, train_fraction={}, behavior_mix={}, random_action_rate={}, calibration={calibration}, seed={seed})",
                dataset.size, dataset.train_fraction, dataset.behavior_mix, dataset.random_action_rate
            ),
        }
    }
}

/// Dense approval score for every `(t, state, action)` of one state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ApprovalTensor {
    per_timestep: usize,
    timesteps: usize,
    scores: Vec<f64>,
    provenance: ApprovalMethod,
}

impl ApprovalTensor {
    pub fn new(space: &StateSpace, scores: Vec<f64>, provenance: ApprovalMethod) -> Result<Self> {
        let expected = space.len() * Action::COUNT;
        if scores.len() != expected {
            return Err(Error::Usage(format!(
                "approval scores have {} entries, state space needs {expected}",
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|x| !x.is_finite()) {
            return Err(Error::Usage(format!("approval entry {i} is not finite")));
        }
        Ok(ApprovalTensor { per_timestep: space.per_timestep(), timesteps: space.timesteps(), scores, provenance })
    }

    #[inline]
    pub fn get(&self, t: usize, local: usize, a: usize) -> f64 {
        self.scores[(t * self.per_timestep + local) * Action::COUNT + a]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn provenance(&self) -> &ApprovalMethod {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn check_shape(&self, space: &StateSpace) -> Result<()> {
        if self.per_timestep != space.per_timestep() || self.timesteps != space.timesteps() {
            return Err(Error::Usage(format!(
                "approval tensor shape {}x{} does not match state space {}x{}",
                self.timesteps,
                self.per_timestep,
                space.timesteps(),
                space.per_timestep()
            )));
        }
        Ok(())
    }

    /// Same columnar layout as [`crate::planner::ValueTable::write_columnar`],
    /// preceded by a `# provenance: ...` line.
    pub fn write_columnar<W: Write>(&self, out: W) -> std::io::Result<()> {
        let header = format!("provenance: {}", self.provenance);
        crate::planner::write_columnar(out, Some(&header), self.timesteps, self.per_timestep, &self.scores)
    }
}
