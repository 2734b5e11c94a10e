use std::cell::OnceCell;
use std::sync::Arc;

use super::spec::{Action, Cell, GridSpec, Heading, Tile};
use super::tasks::Task;
use crate::error::{Error, Result};

/// Dynamic part of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub agent: Cell,
    pub heading: Heading,
    pub has_key: bool,
    /// Bit `i` is set when the `i`-th door (row-major order) is open.
    pub doors_open: u32,
    pub steps_elapsed: u32,
    pub done: bool,
}

/// Full-state observation: a dense feature vector for networks and a
/// unique state index for tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub index: usize,
    pub features: Arc<[f64]>,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub state: EnvState,
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
}

/// A realized grid plus its state indexing.
///
/// State indices enumerate `(cell, heading, has_key, doors_open)` over the
/// non-wall cells, so the index range is exactly the reachable set on maps
/// without keys or doors.
#[derive(Debug)]
pub struct GridWorld {
    task: Task,
    layout_seed: u64,
    spec: GridSpec,
    open_cells: Vec<usize>,
    open_id: Vec<Option<usize>>,
    doors: Vec<usize>,
    key: Option<usize>,
    features: Vec<OnceCell<Arc<[f64]>>>,
}

impl Clone for GridWorld {
    fn clone(&self) -> Self {
        GridWorld::with_spec(self.task.clone(), self.layout_seed, self.spec.clone())
    }
}

impl GridWorld {
    /// Realizes `task` with `seed` and prepares it for stepping.
    pub fn new(task: Task, seed: u64) -> Result<Self> {
        let spec = task.realize(seed)?;
        Ok(Self::with_spec(task, seed, spec))
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self::with_spec(Task::Custom { spec: spec.clone() }, 0, spec))
    }

    fn with_spec(task: Task, layout_seed: u64, spec: GridSpec) -> Self {
        let n = spec.width * spec.height;
        let mut open_cells = Vec::new();
        let mut open_id = vec![None; n];
        for (i, t) in spec.tiles().iter().enumerate() {
            if *t != Tile::Wall {
                open_id[i] = Some(open_cells.len());
                open_cells.push(i);
            }
        }
        let doors = (0..n).filter(|&i| spec.tiles()[i] == Tile::Door).collect();
        let key = (0..n).find(|&i| spec.tiles()[i] == Tile::Key);
        let mut world = GridWorld {
            task,
            layout_seed,
            spec,
            open_cells,
            open_id,
            doors,
            key,
            features: Vec::new(),
        };
        world.features = (0..world.state_count()).map(|_| OnceCell::new()).collect();
        world
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn action_count(&self) -> usize {
        Action::COUNT
    }

    fn key_states(&self) -> usize {
        if self.key.is_some() {
            2
        } else {
            1
        }
    }

    /// Size of the tabular state space.
    pub fn state_count(&self) -> usize {
        self.open_cells.len() * 4 * self.key_states() * (1usize << self.doors.len())
    }

    /// Length of the observation feature vector.
    pub fn feature_len(&self) -> usize {
        self.open_cells.len() * 4 + usize::from(self.key.is_some()) + self.doors.len()
    }

    /// Starts an episode. Seeded tasks re-realize their layout when `seed`
    /// differs from the current one; identical seeds give identical episodes.
    pub fn reset(&mut self, seed: u64) -> Result<(EnvState, Observation)> {
        if self.task.is_seeded() && seed != self.layout_seed {
            let spec = self.task.realize(seed)?;
            *self = Self::with_spec(self.task.clone(), seed, spec);
        }
        let state = self.initial_state();
        Ok((state, self.observe(&state)))
    }

    pub fn initial_state(&self) -> EnvState {
        EnvState {
            agent: self.spec.agent_start.cell,
            heading: self.spec.agent_start.heading,
            has_key: false,
            doors_open: 0,
            steps_elapsed: 0,
            done: false,
        }
    }

    pub fn encode(&self, state: &EnvState) -> usize {
        let cell = self.open_id[self.spec.linear(state.agent)]
            .expect("agent stands on a non-wall cell");
        let outer = state.doors_open as usize * self.key_states() + usize::from(state.has_key);
        (outer * self.open_cells.len() + cell) * 4 + state.heading.index()
    }

    /// Inverse of [`GridWorld::encode`], with `steps_elapsed = 0`.
    pub fn decode(&self, index: usize) -> Option<EnvState> {
        if index >= self.state_count() {
            return None;
        }
        let heading = Heading::from_index(index % 4);
        let rest = index / 4;
        let cell = self.spec.cell_of(self.open_cells[rest % self.open_cells.len()]);
        let outer = rest / self.open_cells.len();
        Some(EnvState {
            agent: cell,
            heading,
            has_key: outer % self.key_states() == 1,
            doors_open: (outer / self.key_states()) as u32,
            steps_elapsed: 0,
            done: false,
        })
    }

    pub fn observe(&self, state: &EnvState) -> Observation {
        let index = self.encode(state);
        let features = self.features[index]
            .get_or_init(|| self.build_features(state))
            .clone();
        Observation { index, features }
    }

    /// Observation for a state index, as stored in replay dumps.
    pub fn observation_of(&self, index: usize) -> Option<Observation> {
        self.decode(index).map(|s| self.observe(&s))
    }

    fn build_features(&self, state: &EnvState) -> Arc<[f64]> {
        let mut f = vec![0.0; self.feature_len()];
        let cell = self.open_id[self.spec.linear(state.agent)].expect("non-wall cell");
        f[cell * 4 + state.heading.index()] = 1.0;
        let mut k = self.open_cells.len() * 4;
        if self.key.is_some() {
            f[k] = if state.has_key { 1.0 } else { 0.0 };
            k += 1;
        }
        for d in 0..self.doors.len() {
            f[k + d] = if state.doors_open & (1 << d) != 0 { 1.0 } else { 0.0 };
        }
        f.into()
    }

    /// Tile at `cell` as currently seen by the agent (picked-up keys vanish,
    /// open doors read as floor).
    fn effective_tile(&self, state: &EnvState, cell: Cell) -> Tile {
        let i = self.spec.linear(cell);
        match self.spec.tiles()[i] {
            Tile::Key if state.has_key => Tile::Floor,
            Tile::Door if self.door_open(state, i) => Tile::Floor,
            t => t,
        }
    }

    fn door_open(&self, state: &EnvState, linear: usize) -> bool {
        self.doors
            .iter()
            .position(|&d| d == linear)
            .is_some_and(|d| state.doors_open & (1 << d) != 0)
    }

    /// Terminal reward for reaching a goal after `steps` actions.
    pub fn goal_reward(&self, steps: u32) -> f64 {
        self.spec.reward_scale
            * (1.0 - self.spec.step_decrement * f64::from(steps) / f64::from(self.spec.max_steps))
    }

    pub fn step(&self, state: &EnvState, action: Action) -> Result<Step> {
        if state.done {
            return Err(Error::EpisodeDone);
        }
        let mut next = *state;
        next.steps_elapsed += 1;
        let mut reward = 0.0;
        let front = self.spec.neighbour(state.agent, state.heading);
        match action {
            Action::TurnLeft => next.heading = state.heading.turn_left(),
            Action::TurnRight => next.heading = state.heading.turn_right(),
            Action::Forward => {
                if let Some(cell) = front {
                    match self.effective_tile(state, cell) {
                        Tile::Wall | Tile::Door | Tile::Key => {}
                        Tile::Floor => next.agent = cell,
                        Tile::Lava => {
                            next.agent = cell;
                            next.done = true;
                        }
                        Tile::Goal => {
                            next.agent = cell;
                            next.done = true;
                            reward = self.goal_reward(next.steps_elapsed);
                        }
                    }
                }
            }
            Action::Pickup => {
                if let Some(cell) = front {
                    if self.effective_tile(state, cell) == Tile::Key {
                        next.has_key = true;
                    }
                }
            }
            Action::Toggle => {
                if let Some(cell) = front {
                    let i = self.spec.linear(cell);
                    if let Some(d) = self.doors.iter().position(|&x| x == i) {
                        if state.doors_open & (1 << d) != 0 {
                            next.doors_open &= !(1 << d);
                        } else if state.has_key {
                            next.doors_open |= 1 << d;
                        }
                    }
                }
            }
        }
        if next.steps_elapsed >= self.spec.max_steps {
            next.done = true;
        }
        Ok(Step {
            obs: self.observe(&next),
            state: next,
            reward,
            done: next.done,
        })
    }

    pub fn render(&self, state: &EnvState) -> String {
        self.spec.render(Some((state.agent, state.heading)))
    }
}
