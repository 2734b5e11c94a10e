//! Fixed-capacity FIFO buffer of option-annotated transitions.

use std::io::Write;

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::util::Rng;

/// One environment step as seen by the learners.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    /// Option active when `action` was taken.
    pub option: usize,
    pub extrinsic: f64,
    /// Normalized prediction-error reward, frozen at insertion.
    pub intrinsic: f64,
    /// Tabular count bonus of `next_obs`; zero unless counting is enabled.
    pub count_bonus: f64,
    pub next_obs: Observation,
    pub done: bool,
    /// Whether the option terminated in `next_obs`.
    pub option_terminated_next: bool,
}

#[derive(Serialize)]
struct DumpRecord {
    obs: usize,
    action: usize,
    option: usize,
    extrinsic: f64,
    intrinsic: f64,
    count_bonus: f64,
    next_obs: usize,
    done: bool,
    option_terminated_next: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once the buffer is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch)
            .map(|_| self.items[rng.gen_range(0..self.items.len())].clone())
            .collect())
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// One JSON record per line, oldest first. Observations are written as
    /// state indices.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        for t in self.iter() {
            let rec = DumpRecord {
                obs: t.obs.index,
                action: t.action,
                option: t.option,
                extrinsic: t.extrinsic,
                intrinsic: t.intrinsic,
                count_bonus: t.count_bonus,
                next_obs: t.next_obs.index,
                done: t.done,
                option_terminated_next: t.option_terminated_next,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(|e| Error::io("replay dump", e))?;
        }
        Ok(())
    }
}
