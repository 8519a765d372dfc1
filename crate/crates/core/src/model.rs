//! Visit and reward counters over the state space extended with the
//! Garden-of-Eden state `x_E`, and the empirical model they induce.
//!
//! Every pair starts with one fictitious visit that led to `x_E`, so
//! `N(x,a) >= 1` always and the ratios `N(x,a,y)/N(x,a)` are defined
//! everywhere. Successor counts are kept sparsely per pair.

use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::mdp::{ActionId, MdpBuilder, StateId, TabularMdp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessorCount {
    pub next: StateId,
    pub count: u64,
    pub reward_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedCountsModel {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    r_max: f64,
    /// Proof-mode freeze: at most this many real updates per pair.
    update_cap: Option<u64>,
    /// Smallest reward accepted by `record_transition`.
    reward_floor: f64,
    visits: Vec<u64>,
    eden: Vec<u64>,
    successors: Vec<Vec<SuccessorCount>>,
    predecessors: Vec<Vec<(StateId, ActionId)>>,
}

impl ExtendedCountsModel {
    /// Optimistic initial model: each pair has been tried once and led to `x_E`.
    pub fn init_optimistic(n_states: usize, n_actions: usize, gamma: f64, r_max: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Usage("model needs at least one state and one action".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Usage(format!("discount {gamma} outside [0, 1)")));
        }
        if !(r_max >= 0.0 && r_max.is_finite()) {
            return Err(Error::Usage(format!("R_max must be finite and nonnegative, got {r_max}")));
        }
        let pairs = n_states * n_actions;
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            r_max,
            update_cap: None,
            reward_floor: 0.0,
            visits: vec![1; pairs],
            eden: vec![1; pairs],
            successors: vec![Vec::new(); pairs],
            predecessors: vec![Vec::new(); n_states],
        })
    }

    /// Stop updating a pair once it has `m` real visits (the "modified" learner).
    pub fn with_update_cap(mut self, m: u64) -> Self {
        self.update_cap = Some(m);
        self
    }

    /// Accept rewards down to `floor` (environments with step costs).
    pub fn with_reward_floor(mut self, floor: f64) -> Self {
        self.reward_floor = floor;
        self
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn update_cap(&self) -> Option<u64> {
        self.update_cap
    }

    /// Index of `x_E` in the extended state space.
    pub fn eden_index(&self) -> StateId {
        self.n_states
    }

    /// `R_max / (1 - gamma)`, the value of staying in `x_E` forever.
    pub fn v_max(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    /// Exploration reward: `R_max` for transitions into `x_E`, zero otherwise.
    pub fn exploration_reward(&self, y: StateId) -> f64 {
        if y == self.eden_index() {
            self.r_max
        } else {
            0.0
        }
    }

    #[inline]
    fn pair(&self, x: StateId, a: ActionId) -> usize {
        x * self.n_actions + a
    }

    /// Records one real transition. Returns `false` when the update cap
    /// froze the pair and the counters were left unchanged.
    pub fn record_transition(&mut self, x: StateId, a: ActionId, y: StateId, r: f64) -> Result<bool> {
        check_index("state", x, self.n_states)?;
        check_index("action", a, self.n_actions)?;
        check_index("successor state", y, self.n_states)?;
        if !r.is_finite() || r < self.reward_floor {
            return Err(Error::Usage(format!("reward {r} below the accepted floor {}", self.reward_floor)));
        }
        let i = self.pair(x, a);
        if let Some(m) = self.update_cap {
            if self.visits[i] > m {
                return Ok(false);
            }
        }
        self.visits[i] += 1;
        let row = &mut self.successors[i];
        match row.binary_search_by_key(&y, |s| s.next) {
            Ok(j) => {
                row[j].count += 1;
                row[j].reward_sum += r;
            }
            Err(j) => {
                row.insert(j, SuccessorCount { next: y, count: 1, reward_sum: r });
                self.predecessors[y].push((x, a));
            }
        }
        Ok(true)
    }

    /// `N(x,a)`, including the initial Eden visit.
    #[inline]
    pub fn visits(&self, x: StateId, a: ActionId) -> u64 {
        self.visits[self.pair(x, a)]
    }

    /// Real experience `N(x,a) - 1`.
    #[inline]
    pub fn experience(&self, x: StateId, a: ActionId) -> u64 {
        self.visits(x, a) - 1
    }

    /// `N(x,a,y)`; `y` may be the Eden index.
    pub fn count(&self, x: StateId, a: ActionId, y: StateId) -> u64 {
        let i = self.pair(x, a);
        if y == self.eden_index() {
            return self.eden[i];
        }
        self.successors[i].binary_search_by_key(&y, |s| s.next).map_or(0, |j| self.successors[i][j].count)
    }

    /// `C(x,a,y)`, the summed external reward.
    pub fn reward_sum(&self, x: StateId, a: ActionId, y: StateId) -> f64 {
        let i = self.pair(x, a);
        self.successors[i].binary_search_by_key(&y, |s| s.next).map_or(0.0, |j| self.successors[i][j].reward_sum)
    }

    #[inline]
    pub fn eden_count(&self, x: StateId, a: ActionId) -> u64 {
        self.eden[self.pair(x, a)]
    }

    /// Observed real successors of `(x, a)`, sorted by state.
    #[inline]
    pub fn successors(&self, x: StateId, a: ActionId) -> &[SuccessorCount] {
        &self.successors[self.pair(x, a)]
    }

    /// Pairs `(x, a)` with `N(x,a,y) > 0`.
    #[inline]
    pub fn predecessors(&self, y: StateId) -> &[(StateId, ActionId)] {
        &self.predecessors[y]
    }

    /// `P_hat(x,a,y) = N(x,a,y) / N(x,a)`.
    pub fn p_hat(&self, x: StateId, a: ActionId, y: StateId) -> f64 {
        self.count(x, a, y) as f64 / self.visits(x, a) as f64
    }

    /// `R_hat(x,a,y) = C(x,a,y) / N(x,a,y)`, and 0 for unseen successors.
    pub fn r_hat(&self, x: StateId, a: ActionId, y: StateId) -> f64 {
        if y == self.eden_index() {
            return 0.0;
        }
        let n = self.count(x, a, y);
        if n == 0 {
            0.0
        } else {
            self.reward_sum(x, a, y) / n as f64
        }
    }

    /// Pairs with at least `m` real visits.
    pub fn known_pairs(&self, m: u64) -> Vec<(StateId, ActionId)> {
        (0..self.n_states)
            .flat_map(|x| (0..self.n_actions).map(move |a| (x, a)))
            .filter(|&(x, a)| self.experience(x, a) >= m)
            .collect()
    }

    /// The exact `(|X|+1)`-state MDP induced by the counters, with the
    /// exploration reward folded into transitions to `x_E`.
    pub fn to_extended_mdp(&self) -> TabularMdp {
        let eden = self.eden_index();
        let mut b = MdpBuilder::new(self.n_states + 1, self.n_actions, self.gamma);
        let mut top = self.r_max;
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                let n = self.visits(x, a) as f64;
                for s in self.successors(x, a) {
                    let r = s.reward_sum / s.count as f64;
                    top = top.max(r);
                    b.add(x, a, s.next, s.count as f64 / n, r);
                }
                b.add(x, a, eden, self.eden_count(x, a) as f64 / n, self.r_max);
            }
        }
        for a in 0..self.n_actions {
            b.add(eden, a, eden, 1.0, self.r_max);
        }
        b.reward_bound(if top > 0.0 { top } else { 1.0 });
        b.build().expect("count model always induces a valid MDP")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
