//! Fixtures shared by the benchmarks.

use lesson_core::util::{seeded_rng, Rng};
use lesson_core::{Action, GridWorld, Task, Transition};
use rand::Rng as _;

pub fn world(id: &str) -> GridWorld {
    let task: Task = id.parse().expect("known task id");
    GridWorld::new(task, 0).expect("valid task")
}

/// `n` transitions from a uniformly random walk, with made-up intrinsic
/// rewards and options so every learner has something to fit.
pub fn random_walk(world: &mut GridWorld, n: usize, options: usize, rng: &mut Rng) -> Vec<Transition> {
    let (mut state, mut obs) = world.reset(0).expect("reset");
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.gen_range(0..world.action_count());
        let step = world.step(&state, Action::from_index(a)).expect("step");
        out.push(Transition {
            obs: obs.clone(),
            action: a,
            option: rng.gen_range(0..options),
            extrinsic: step.reward,
            intrinsic: rng.gen_range(-1.0..1.0),
            count_bonus: 0.0,
            next_obs: step.obs.clone(),
            done: step.done,
            option_terminated_next: false,
        });
        if step.done {
            (state, obs) = world.reset(0).expect("reset");
        } else {
            (state, obs) = (step.state, step.obs);
        }
    }
    out
}

pub fn rng() -> Rng {
    seeded_rng(0)
}
