use super::{bad_reward, intended_reward_for, transition, Action, BallPos, Cell, EnvConfig, Events, GridState};
use crate::error::{Error, Result};

/// Default ceiling on `(step_limit + 1) * states_per_timestep`.
pub const DEFAULT_STATE_CAP: usize = 20_000_000;

const NO_STATE: u32 = u32::MAX;

/// Dense indexing of every syntactically valid [`GridState`].
///
/// The time-free part of a state (agent, ball, blocking box, score count) gets
/// a "local" index in `0..per_timestep()`; a full state is addressed by the
/// pair `(t, local)` or by the flat index `t * per_timestep() + local`.
/// Agent and blocking box never sit on a box cell, a free ball never sits on a
/// box cell, and the three objects occupy pairwise distinct cells.
///
/// One-step transitions do not depend on `t`, so they are tabulated once per
/// `(local, action)` at construction.
#[derive(Debug, Clone)]
pub struct StateSpace {
    config: EnvConfig,
    floor: Vec<Cell>,
    floor_of_cell: Vec<Option<u32>>,
    states: Vec<GridState>,
    lookup: Vec<u32>,
    next: Vec<u32>,
    events: Vec<Events>,
    bad: Vec<f64>,
    intended: Vec<f64>,
}

impl StateSpace {
    pub fn new(config: &EnvConfig) -> Result<Self> {
        Self::with_cap(config, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(config: &EnvConfig, cap: usize) -> Result<Self> {
        config.validate()?;
        let mut floor = Vec::new();
        let mut floor_of_cell = vec![None; config.cell_count()];
        for y in 0..config.height {
            for x in 0..config.width {
                let c = Cell::new(x, y);
                if config.box_at(c).is_none() {
                    floor_of_cell[config.cell_index(c)] = Some(floor.len() as u32);
                    floor.push(c);
                }
            }
        }

        let f = floor.len();
        let b = config.box_cells.len();
        // Upper bound before distinctness pruning.
        let bound = f * (f + b) * f * (config.max_scores + 1);
        let timesteps = config.step_limit + 1;
        if bound.saturating_mul(timesteps) > cap {
            // Count exactly before refusing; the bound may be loose.
            let exact = count_valid(f, b, config.max_scores);
            if exact.saturating_mul(timesteps) > cap {
                return Err(Error::Capacity { states: exact * timesteps, cap });
            }
        }

        let mut states = Vec::new();
        let mut lookup = vec![NO_STATE; bound];
        for scores in 0..=config.max_scores {
            for ball_code in 0..f + b {
                let ball = if ball_code < f { BallPos::Free(floor[ball_code]) } else { BallPos::InBox(ball_code - f) };
                for (bi, &blocking) in floor.iter().enumerate() {
                    if ball_code == bi {
                        continue;
                    }
                    for (ai, &agent) in floor.iter().enumerate() {
                        if ai == bi || ai == ball_code {
                            continue;
                        }
                        let key = ((scores * (f + b) + ball_code) * f + bi) * f + ai;
                        lookup[key] = states.len() as u32;
                        states.push(GridState { agent, ball, blocking_box: blocking, scores_so_far: scores, t: 0 });
                    }
                }
            }
        }

        let mut space = StateSpace {
            config: config.clone(),
            floor,
            floor_of_cell,
            states,
            lookup,
            next: Vec::new(),
            events: Vec::new(),
            bad: Vec::new(),
            intended: Vec::new(),
        };
        space.tabulate();
        Ok(space)
    }

    fn tabulate(&mut self) {
        let n = self.states.len() * Action::COUNT;
        let mut next = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        let mut bad = Vec::with_capacity(n);
        let mut intended = Vec::with_capacity(n);
        for s in &self.states {
            for a in Action::ALL {
                let (succ, ev) = transition(&self.config, s, a);
                next.push(self.local_index(&succ).expect("transition left the state space") as u32);
                bad.push(bad_reward(&self.config, &ev));
                intended.push(intended_reward_for(&self.config, s.scores_so_far, &ev));
                events.push(ev);
            }
        }
        self.next = next;
        self.events = events;
        self.bad = bad;
        self.intended = intended;
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Number of states at each timestep.
    pub fn per_timestep(&self) -> usize {
        self.states.len()
    }

    /// Number of timesteps, `step_limit + 1`.
    pub fn timesteps(&self) -> usize {
        self.config.step_limit + 1
    }

    /// Total number of indexed `(t, state)` pairs.
    pub fn len(&self) -> usize {
        self.per_timestep() * self.timesteps()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn local_index(&self, s: &GridState) -> Option<usize> {
        let f = self.floor.len();
        let b = self.config.box_cells.len();
        let floor_idx = |c: Cell| -> Option<usize> {
            if !self.config.in_bounds(c) {
                return None;
            }
            self.floor_of_cell[self.config.cell_index(c)].map(|i| i as usize)
        };
        let ai = floor_idx(s.agent)?;
        let bi = floor_idx(s.blocking_box)?;
        let ball_code = match s.ball {
            BallPos::Free(c) => floor_idx(c)?,
            BallPos::InBox(i) if i < b => f + i,
            BallPos::InBox(_) => return None,
        };
        if s.scores_so_far > self.config.max_scores {
            return None;
        }
        let key = ((s.scores_so_far * (f + b) + ball_code) * f + bi) * f + ai;
        match self.lookup[key] {
            NO_STATE => None,
            idx => Some(idx as usize),
        }
    }

    /// Flat index of a full state, `None` if it is not in the space.
    pub fn encode(&self, s: &GridState) -> Option<usize> {
        if s.t > self.config.step_limit {
            return None;
        }
        self.local_index(s).map(|local| s.t * self.per_timestep() + local)
    }

    pub fn decode(&self, index: usize) -> GridState {
        let n = self.per_timestep();
        GridState { t: index / n, ..self.states[index % n] }
    }

    /// State with the given local index at timestep `t`.
    pub fn state(&self, t: usize, local: usize) -> GridState {
        GridState { t, ..self.states[local] }
    }

    pub fn is_terminal(&self, t: usize, local: usize) -> bool {
        t >= self.config.step_limit || self.states[local].scores_so_far >= self.config.max_scores
    }

    #[inline]
    pub fn successor(&self, local: usize, a: usize) -> usize {
        self.next[local * Action::COUNT + a] as usize
    }

    #[inline]
    pub fn events(&self, local: usize, a: usize) -> Events {
        self.events[local * Action::COUNT + a]
    }

    #[inline]
    pub fn bad_reward(&self, local: usize, a: usize) -> f64 {
        self.bad[local * Action::COUNT + a]
    }

    #[inline]
    pub fn intended_reward(&self, local: usize, a: usize) -> f64 {
        self.intended[local * Action::COUNT + a]
    }

    /// Local index of the reset state.
    pub fn start(&self) -> usize {
        let s0 = super::reset(&self.config).expect("config validated at construction");
        self.local_index(&s0).expect("start state is always valid")
    }

    /// The same board with another box designated as the goal.
    pub(crate) fn with_designated(&self, designated: usize) -> Self {
        let mut space = self.clone();
        space.config.designated_box = designated;
        for (local, s) in self.states.iter().enumerate() {
            for a in 0..Action::COUNT {
                let i = local * Action::COUNT + a;
                space.intended[i] = intended_reward_for(&space.config, s.scores_so_far, &self.events[i]);
            }
        }
        space
    }
}

fn count_valid(floor: usize, boxes: usize, max_scores: usize) -> usize {
    // ball free: floor * (floor-1) * (floor-2); ball boxed: boxes * floor * (floor-1)
    let free = floor * floor.saturating_sub(1) * floor.saturating_sub(2);
    let boxed = boxes * floor * floor.saturating_sub(1);
    (free + boxed) * (max_scores + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_every_index() {
        let space = StateSpace::new(&EnvConfig::public()).unwrap();
        for i in 0..space.len() {
            assert_eq!(space.encode(&space.decode(i)), Some(i));
        }
    }

    #[test]
    fn capacity_cap_is_enforced() {
        let err = StateSpace::with_cap(&EnvConfig::harder(), 1000).unwrap_err();
        assert!(matches!(err, Error::Capacity { cap: 1000, .. }));
    }

    #[test]
    fn closed_form_count_matches() {
        for cfg in [EnvConfig::public(), EnvConfig::harder()] {
            let space = StateSpace::new(&cfg).unwrap();
            let floor = cfg.cell_count() - cfg.box_cells.len();
            assert_eq!(space.per_timestep(), count_valid(floor, cfg.box_cells.len(), cfg.max_scores));
        }
    }

    #[test]
    fn toy_round_trip_and_random_indices() {
        use rand::{Rng, SeedableRng};
        let space = StateSpace::new(&EnvConfig::toy()).unwrap();
        // 5 floor cells, 1 box: (5*4*3 + 1*5*4) * 3 score counts
        assert_eq!(space.per_timestep(), 240);
        for i in 0..space.len() {
            assert_eq!(space.encode(&space.decode(i)), Some(i));
        }
        let public = StateSpace::new(&EnvConfig::public()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k = rng.gen_range(0..public.len());
            assert_eq!(public.encode(&public.decode(k)), Some(k));
        }
    }

    #[test]
    fn public_count_within_unpruned_bound() {
        let space = StateSpace::new(&EnvConfig::public()).unwrap();
        assert!(space.per_timestep() <= 16 * 17 * 16 * 3);
        // Exhaustive count of distinct, box-free placements.
        let cfg = EnvConfig::public();
        let cells: Vec<Cell> = (0..4).flat_map(|y| (0..4).map(move |x| Cell::new(x, y))).collect();
        let floor: Vec<Cell> = cells.iter().copied().filter(|&c| cfg.box_at(c).is_none()).collect();
        let mut n = 0;
        for &a in &floor {
            for &b in &floor {
                let balls = floor.iter().map(|&c| BallPos::Free(c)).chain((0..2).map(BallPos::InBox));
                for ball in balls {
                    let clash = a == b || ball == BallPos::Free(a) || ball == BallPos::Free(b);
                    if !clash {
                        n += 3;
                    }
                }
            }
        }
        assert_eq!(space.per_timestep(), n);
    }

    #[test]
    fn tabulated_transitions_match_step() {
        let cfg = EnvConfig::public();
        let space = StateSpace::new(&cfg).unwrap();
        for local in (0..space.per_timestep()).step_by(7) {
            let s = space.state(0, local);
            if space.is_terminal(0, local) {
                continue;
            }
            for a in Action::ALL {
                let out = super::super::step(&cfg, &s, a).unwrap();
                assert_eq!(space.encode(&out.next), Some(space.per_timestep() + space.successor(local, a.index())));
                assert_eq!(space.events(local, a.index()), out.events);
                assert_eq!(space.bad_reward(local, a.index()), out.bad_reward);
                assert_eq!(space.intended_reward(local, a.index()), super::super::intended_reward(&cfg, &s, a));
            }
        }
    }

    #[test]
    fn occlusion_soundness() {
        for cfg in [EnvConfig::public(), EnvConfig::harder()] {
            let space = StateSpace::new(&cfg).unwrap();
            for local in 0..space.per_timestep() {
                let blocked = space.state(0, local).camera_blocked(&cfg);
                for a in 0..Action::COUNT {
                    let ev = space.events(local, a);
                    if ev.ball_removed {
                        assert_eq!(ev.penalty_applied, !blocked);
                    } else {
                        assert!(!ev.penalty_applied);
                    }
                }
            }
        }
    }

    /// Best bad-reward return from reset, optionally forbidding any step that
    /// blocks the camera. Written independently of the planner.
    fn best_return(space: &StateSpace, allow_block: bool) -> f64 {
        let n = space.per_timestep();
        let mut v = vec![0.0; n];
        for t in (0..space.config().step_limit).rev() {
            let mut cur = vec![0.0; n];
            for (local, slot) in cur.iter_mut().enumerate() {
                if space.is_terminal(t, local) {
                    continue;
                }
                *slot = (0..Action::COUNT)
                    .filter(|&a| allow_block || !space.events(local, a).camera_blocked_now)
                    .map(|a| space.bad_reward(local, a) + v[space.successor(local, a)])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            v = cur;
        }
        v[space.start()]
    }

    #[test]
    fn hacking_is_strictly_profitable() {
        for cfg in [EnvConfig::public(), EnvConfig::harder()] {
            let space = StateSpace::new(&cfg).unwrap();
            let with = best_return(&space, true);
            let without = best_return(&space, false);
            assert!(with > without + 0.5, "{with} vs {without}");
        }
    }
}
