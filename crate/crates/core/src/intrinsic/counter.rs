use std::collections::HashMap;

use crate::gridworld::Observation;

/// Visit counts per state index; the tabular stand-in for a density model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateCounter {
    counts: HashMap<usize, u64>,
}

impl StateCounter {
    pub fn visits(&self, state: usize) -> u64 {
        self.counts.get(&state).copied().unwrap_or(0)
    }

    /// Records a visit, then returns `1/sqrt(N(s))`.
    pub fn count_bonus(&mut self, obs: &Observation) -> f64 {
        let n = self.counts.entry(obs.index).or_insert(0);
        *n += 1;
        1.0 / (*n as f64).sqrt()
    }
}
