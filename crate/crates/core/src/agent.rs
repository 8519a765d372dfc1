//! The behavioural contract every learner implements, plus tie-breaking
//! helpers shared by the agents.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{argmax_lowest, ActionId, StateId};

/// Uniform interface the harness drives.
///
/// Per environment step the harness calls [`Agent::select_action`] once and
/// then [`Agent::observe`] once with the realized transition.
pub trait Agent: Send {
    fn select_action(&mut self, x: StateId) -> ActionId;

    fn observe(&mut self, x: StateId, a: ActionId, r: f64, y: StateId) -> Result<()>;

    /// The value estimate the agent acts on.
    fn q_estimate(&self, x: StateId, a: ActionId) -> f64;

    /// Forget everything learned and reseed.
    fn reset(&mut self, seed: u64);

    /// Action of the frozen exploitation policy. Agents that keep a separate
    /// exploration value ignore it unless `include_exploration` is set.
    fn greedy_action(&self, x: StateId, include_exploration: bool) -> ActionId;

    fn n_states(&self) -> usize;

    fn n_actions(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    SeededRandom,
}

/// Argmax of `values` with ties resolved per `tie_break`.
pub(crate) fn pick_max(values: &[f64], tie_break: TieBreak, rng: &mut ChaCha8Rng) -> ActionId {
    match tie_break {
        TieBreak::LowestIndex => argmax_lowest(values),
        TieBreak::SeededRandom => argmax_random(values, rng),
    }
}

pub(crate) fn argmax_random(values: &[f64], rng: &mut ChaCha8Rng) -> ActionId {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = values.iter().filter(|&&v| v == best).count();
    if ties <= 1 {
        return argmax_lowest(values);
    }
    let mut k = rng.gen_range(0..ties);
    for (i, &v) in values.iter().enumerate() {
        if v == best {
            if k == 0 {
                return i;
            }
            k -= 1;
        }
    }
    unreachable!()
}
