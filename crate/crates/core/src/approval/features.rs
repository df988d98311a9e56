//! Flat encoding of `(t, state, action)` tuples for the linear overseer.
//!
//! Layout, in order: agent cell one-hot (W*H), ball position one-hot over
//! cells then box slots (W*H + boxes), blocking-box cell one-hot (W*H),
//! camera-blocked bit, `scores_so_far / max_scores`, `t / step_limit`,
//! action one-hot (4).

use crate::env::{Action, BallPos, EnvConfig, GridState};

pub fn feature_dim(config: &EnvConfig) -> usize {
    3 * config.cell_count() + config.box_cells.len() + 3 + Action::COUNT
}

/// Non-zero entries of a feature vector, ascending by index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseFeatures {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            dense[i] = x;
        }
        dense
    }
}

pub fn featurize_sparse(config: &EnvConfig, t: usize, s: &GridState, a: Action) -> SparseFeatures {
    let cells = config.cell_count();
    let boxes = config.box_cells.len();
    let ball_base = cells;
    let blocking_base = ball_base + cells + boxes;
    let camera_slot = blocking_base + cells;
    let scores_slot = camera_slot + 1;
    let time_slot = scores_slot + 1;
    let action_base = time_slot + 1;

    let mut entries = Vec::with_capacity(7);
    entries.push((config.cell_index(s.agent), 1.0));
    let ball_slot = match s.ball {
        BallPos::Free(c) => ball_base + config.cell_index(c),
        BallPos::InBox(i) => ball_base + cells + i,
    };
    entries.push((ball_slot, 1.0));
    entries.push((blocking_base + config.cell_index(s.blocking_box), 1.0));
    if s.camera_blocked(config) {
        entries.push((camera_slot, 1.0));
    }
    let score_frac = s.scores_so_far as f64 / config.max_scores as f64;
    if score_frac != 0.0 {
        entries.push((scores_slot, score_frac));
    }
    let time_frac = t as f64 / config.step_limit as f64;
    if time_frac != 0.0 {
        entries.push((time_slot, time_frac));
    }
    entries.push((action_base + a.index(), 1.0));
    SparseFeatures { dim: feature_dim(config), entries }
}

pub fn featurize(config: &EnvConfig, t: usize, s: &GridState, a: Action) -> Vec<f64> {
    featurize_sparse(config, t, s, a).to_dense()
}
