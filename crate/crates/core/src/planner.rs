//! Exact finite-horizon dynamic programming and a sample-based tabular
//! learner over the indexed state space.
//!
//! Both optimise either the environment's bad reward (ordinary RL) or an
//! [`ApprovalTensor`] summed over a receding window of `h` steps: the agent at
//! `(t, s)` maximises `sum_{k<h} gamma^k r(s_{t+k}, a_{t+k})`, re-planned at
//! every `t`. Terminal states end the window early.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approval::ApprovalTensor;
use crate::env::{Action, StateSpace};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeTrace, TraceStep};

/// Per-step reward the planner optimises.
#[derive(Debug, Clone, Copy)]
pub enum RewardSource<'a> {
    BadReward,
    /// The designer's intended reward; used to build oracle approval.
    IntendedReward,
    Approval(&'a ApprovalTensor),
}

impl RewardSource<'_> {
    #[inline]
    fn reward(&self, space: &StateSpace, t: usize, local: usize, a: usize) -> f64 {
        match self {
            RewardSource::BadReward => space.bad_reward(local, a),
            RewardSource::IntendedReward => space.intended_reward(local, a),
            RewardSource::Approval(tensor) => tensor.get(t, local, a),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerConfig<'a> {
    /// `None` plans over the full remaining episode.
    pub horizon: Option<usize>,
    pub gamma: f64,
    pub reward_source: RewardSource<'a>,
}

impl<'a> PlannerConfig<'a> {
    pub fn new(reward_source: RewardSource<'a>) -> Self {
        PlannerConfig { horizon: None, gamma: 1.0, reward_source }
    }

    pub fn with_horizon(mut self, horizon: Option<usize>) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    fn validate(&self, space: &StateSpace) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if let Some(h) = self.horizon {
            let limit = space.config().step_limit;
            if h == 0 || h > limit {
                return Err(Error::Config(format!("horizon {h} outside [1, {limit}]")));
            }
        }
        if let RewardSource::Approval(tensor) = self.reward_source {
            tensor.check_shape(space)?;
        }
        Ok(())
    }
}

/// Action values and state values for every `(t, state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    per_timestep: usize,
    timesteps: usize,
    q: Vec<f64>,
    v: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(space: &StateSpace) -> Self {
        let n = space.len();
        ValueTable {
            per_timestep: space.per_timestep(),
            timesteps: space.timesteps(),
            q: vec![0.0; n * Action::COUNT],
            v: vec![0.0; n],
        }
    }

    fn from_q(space: &StateSpace, q: Vec<f64>) -> Self {
        let v = q.chunks_exact(Action::COUNT).map(row_max).collect();
        ValueTable { per_timestep: space.per_timestep(), timesteps: space.timesteps(), q, v }
    }

    pub fn per_timestep(&self) -> usize {
        self.per_timestep
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    #[inline]
    pub fn q(&self, t: usize, local: usize) -> &[f64] {
        let i = (t * self.per_timestep + local) * Action::COUNT;
        &self.q[i..i + Action::COUNT]
    }

    #[inline]
    pub fn v(&self, t: usize, local: usize) -> f64 {
        self.v[t * self.per_timestep + local]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Columnar text dump: `t,state,q_up,q_down,q_left,q_right`, one row per
    /// indexed state.
    pub fn write_columnar<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_columnar(out, None, self.timesteps, self.per_timestep, &self.q)
    }
}

pub(crate) fn write_columnar<W: Write>(
    mut out: W,
    header: Option<&str>,
    timesteps: usize,
    per_timestep: usize,
    values: &[f64],
) -> std::io::Result<()> {
    if let Some(h) = header {
        writeln!(out, "# {h}")?;
    }
    writeln!(out, "t,state,q_up,q_down,q_left,q_right")?;
    for t in 0..timesteps {
        for s in 0..per_timestep {
            let i = (t * per_timestep + s) * Action::COUNT;
            let r = &values[i..i + Action::COUNT];
            writeln!(out, "{t},{s},{},{},{},{}", r[0], r[1], r[2], r[3])?;
        }
    }
    Ok(())
}

#[inline]
fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Backward induction from `t = step_limit`.
pub fn value_iteration(space: &StateSpace, pc: &PlannerConfig<'_>) -> Result<ValueTable> {
    pc.validate(space)?;
    let n = space.per_timestep();
    let big_t = space.config().step_limit;
    let mut q = vec![0.0; space.len() * Action::COUNT];

    match pc.horizon {
        None => {
            let mut v_next = vec![0.0; n];
            let mut v_cur = vec![0.0; n];
            for t in (0..big_t).rev() {
                for local in 0..n {
                    if space.is_terminal(t, local) {
                        v_cur[local] = 0.0;
                        continue;
                    }
                    let base = (t * n + local) * Action::COUNT;
                    for a in 0..Action::COUNT {
                        let r = pc.reward_source.reward(space, t, local, a);
                        q[base + a] = r + pc.gamma * v_next[space.successor(local, a)];
                    }
                    v_cur[local] = row_max(&q[base..base + Action::COUNT]);
                }
                std::mem::swap(&mut v_next, &mut v_cur);
            }
        }
        Some(h) => {
            // window[t*n + s] holds the optimal k-step truncated return.
            let mut window = vec![0.0; space.len()];
            let mut scratch = vec![0.0; space.len()];
            for k in 1..=h {
                let last = k == h;
                for t in 0..big_t {
                    for local in 0..n {
                        let idx = t * n + local;
                        if space.is_terminal(t, local) {
                            scratch[idx] = 0.0;
                            continue;
                        }
                        let mut best = f64::NEG_INFINITY;
                        for a in 0..Action::COUNT {
                            let r = pc.reward_source.reward(space, t, local, a);
                            let val = r + pc.gamma * window[(t + 1) * n + space.successor(local, a)];
                            if last {
                                q[idx * Action::COUNT + a] = val;
                            }
                            best = best.max(val);
                        }
                        scratch[idx] = best;
                    }
                }
                std::mem::swap(&mut window, &mut scratch);
            }
        }
    }
    Ok(ValueTable::from_q(space, q))
}

/// Stochastic policy stored as the set of allowed actions at each state;
/// the action is drawn uniformly from that set.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    per_timestep: usize,
    masks: Vec<u8>,
    tie_seed: u64,
}

impl Policy {
    /// The same action everywhere.
    pub fn constant(space: &StateSpace, action: Action) -> Self {
        Policy { per_timestep: space.per_timestep(), masks: vec![1 << action.index(); space.len()], tie_seed: 0 }
    }

    pub fn tie_seed(&self) -> u64 {
        self.tie_seed
    }

    pub fn action_mask(&self, t: usize, local: usize) -> u8 {
        self.masks[t * self.per_timestep + local]
    }

    pub fn distribution(&self, t: usize, local: usize) -> [f64; Action::COUNT] {
        let mask = self.action_mask(t, local);
        let k = mask.count_ones() as f64;
        let mut d = [0.0; Action::COUNT];
        for (a, p) in d.iter_mut().enumerate() {
            if mask & (1 << a) != 0 {
                *p = 1.0 / k;
            }
        }
        d
    }

    pub fn sample<R: Rng>(&self, t: usize, local: usize, rng: &mut R) -> Action {
        Action::from_index(sample_mask(self.action_mask(t, local), rng))
    }

    pub fn is_deterministic(&self) -> bool {
        self.masks.iter().all(|m| m.count_ones() == 1)
    }
}

fn sample_mask<R: Rng>(mask: u8, rng: &mut R) -> usize {
    let k = mask.count_ones();
    if k == 1 {
        return mask.trailing_zeros() as usize;
    }
    let mut pick = rng.gen_range(0..k);
    for a in 0..Action::COUNT {
        if mask & (1 << a) != 0 {
            if pick == 0 {
                return a;
            }
            pick -= 1;
        }
    }
    unreachable!("empty action mask")
}

fn argmax_mask(row: &[f64]) -> u8 {
    let best = row_max(row);
    row.iter().enumerate().filter(|(_, &x)| x == best).fold(0u8, |m, (a, _)| m | (1 << a))
}

/// Uniform over the exact argmax set at every `(t, state)`.
pub fn greedy_policy(vt: &ValueTable, tie_seed: u64) -> Policy {
    let masks = vt.q.chunks_exact(Action::COUNT).map(argmax_mask).collect();
    Policy { per_timestep: vt.per_timestep, masks, tie_seed }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub budget: usize,
    pub learning_rate: f64,
    /// Exploration rate at the first step.
    pub epsilon: f64,
    /// Exploration rate reached linearly by the last step.
    pub epsilon_final: f64,
    pub seed: u64,
}

impl LearnerConfig {
    pub const STANDARD_BUDGETS: [usize; 3] = [768, 1536, 3072];

    pub fn new(budget: usize, seed: u64) -> Self {
        LearnerConfig { budget, learning_rate: 0.1, epsilon: 0.1, epsilon_final: 0.01, seed }
    }

    fn epsilon_at(&self, step: usize) -> f64 {
        if self.budget <= 1 {
            return self.epsilon;
        }
        let frac = step as f64 / (self.budget - 1) as f64;
        self.epsilon + (self.epsilon_final - self.epsilon) * frac
    }
}

/// Tabular one-step Q-learning with epsilon-greedy behaviour for exactly
/// `budget` environment steps.
///
/// With a horizon `h` the learner keeps one table per remaining window length
/// `k = 1..=h`: level 1 regresses on the immediate reward and level `k`
/// bootstraps from level `k - 1` at the successor. Behaviour and the returned
/// table use level `h`.
pub fn q_learning(space: &StateSpace, pc: &PlannerConfig<'_>, lc: &LearnerConfig) -> Result<ValueTable> {
    pc.validate(space)?;
    if lc.learning_rate.is_nan() || lc.learning_rate <= 0.0 {
        return Err(Error::Config(format!("learning_rate {} must be > 0", lc.learning_rate)));
    }
    for eps in [lc.epsilon, lc.epsilon_final] {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::Config(format!("epsilon {eps} outside [0, 1]")));
        }
    }
    let n = space.per_timestep();
    let size = space.len() * Action::COUNT;
    let levels = pc.horizon.unwrap_or(1);
    let mut tables: Vec<Vec<f64>> = (0..levels).map(|_| vec![0.0; size]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(lc.seed);
    let alpha = lc.learning_rate;
    let start = space.start();

    let (mut t, mut local) = (0usize, start);
    for step in 0..lc.budget {
        if space.is_terminal(t, local) {
            t = 0;
            local = start;
        }
        let base = (t * n + local) * Action::COUNT;
        let behaviour = &tables[levels - 1][base..base + Action::COUNT];
        let a = if rng.gen::<f64>() < lc.epsilon_at(step) {
            rng.gen_range(0..Action::COUNT)
        } else {
            sample_mask(argmax_mask(behaviour), &mut rng)
        };
        let r = pc.reward_source.reward(space, t, local, a);
        let next = space.successor(local, a);
        let next_terminal = space.is_terminal(t + 1, next);
        let next_base = ((t + 1) * n + next) * Action::COUNT;

        match pc.horizon {
            None => {
                let cont = if next_terminal { 0.0 } else { row_max(&tables[0][next_base..next_base + Action::COUNT]) };
                let target = r + pc.gamma * cont;
                let q = &mut tables[0][base + a];
                *q += alpha * (target - *q);
            }
            Some(_) => {
                // Update higher levels first so each reads the pre-step value below it.
                for k in (0..levels).rev() {
                    let cont = if k == 0 || next_terminal {
                        0.0
                    } else {
                        row_max(&tables[k - 1][next_base..next_base + Action::COUNT])
                    };
                    let target = r + pc.gamma * cont;
                    let q = &mut tables[k][base + a];
                    *q += alpha * (target - *q);
                }
            }
        }
        t += 1;
        local = next;
    }
    let q = tables.pop().expect("at least one level");
    Ok(ValueTable::from_q(space, q))
}

/// Run `n` episodes from reset to a terminal state.
pub fn rollout(space: &StateSpace, policy: &Policy, n: usize, seed: u64) -> Result<Vec<EpisodeTrace>> {
    if n == 0 {
        return Err(Error::Usage("rollout needs at least one episode".into()));
    }
    if policy.per_timestep != space.per_timestep() || policy.masks.len() != space.len() {
        return Err(Error::Usage("policy does not match the state space".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ policy.tie_seed.rotate_left(32));
    let designated = space.config().designated_box;
    let start = space.start();
    let mut traces = Vec::with_capacity(n);
    for _ in 0..n {
        let mut steps = Vec::new();
        let (mut t, mut local) = (0, start);
        while !space.is_terminal(t, local) {
            let a = policy.sample(t, local, &mut rng);
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
        traces.push(EpisodeTrace { designated_box: designated, steps });
    }
    Ok(traces)
}
