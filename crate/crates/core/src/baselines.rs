//! Comparison learners: model-free Q-learning with ε-greedy, Boltzmann or
//! optimistic-initial-value exploration, R-max, MBIE-EB, and model-based
//! exploration-bonus agents that keep a separate exploration value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{argmax_random, Agent};
use crate::error::{check_index, Error, Result};
use crate::mdp::{argmax_lowest, solve_in_place, ActionId, QTable, StateId};
use crate::model::ExtendedCountsModel;
use crate::sweep::PriorityQueue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ExplorationRule {
    EpsilonGreedy {
        epsilon: f64,
    },
    Boltzmann {
        temperature: f64,
    },
    /// Pure greedy acting; exploration comes from the initial values.
    Greedy,
}

/// Tabular Q-learning with a constant learning rate.
#[derive(Debug, Clone)]
pub struct QLearningAgent {
    rule: ExplorationRule,
    alpha: f64,
    gamma: f64,
    q0: f64,
    q: QTable,
    rng: ChaCha8Rng,
}

impl QLearningAgent {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        alpha: f64,
        q0: f64,
        rule: ExplorationRule,
        seed: u64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Usage(format!("learning rate must be in (0, 1], got {alpha}")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Usage(format!("discount {gamma} outside [0, 1)")));
        }
        match rule {
            ExplorationRule::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                return Err(Error::Usage(format!("epsilon must be in [0, 1], got {epsilon}")));
            }
            ExplorationRule::Boltzmann { temperature } if !(temperature > 0.0) => {
                return Err(Error::Usage(format!("temperature must be positive, got {temperature}")));
            }
            _ => {}
        }
        Ok(Self {
            rule,
            alpha,
            gamma,
            q0,
            q: QTable::filled(n_states, n_actions, q0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn table(&self) -> &QTable {
        &self.q
    }

    /// Softmax action probabilities `exp(Q/T) / sum exp(Q/T)` in state `x`.
    pub fn boltzmann_probs(values: &[f64], temperature: f64) -> Vec<f64> {
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = values.iter().map(|v| ((v - top) / temperature).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }
}

impl Agent for QLearningAgent {
    fn select_action(&mut self, x: StateId) -> ActionId {
        let row = self.q.row(x);
        match self.rule {
            ExplorationRule::EpsilonGreedy { epsilon } => {
                if self.rng.gen::<f64>() < epsilon {
                    self.rng.gen_range(0..row.len())
                } else {
                    argmax_random(row, &mut self.rng)
                }
            }
            ExplorationRule::Boltzmann { temperature } => {
                let probs = Self::boltzmann_probs(row, temperature);
                let u: f64 = self.rng.gen();
                let mut acc = 0.0;
                for (a, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return a;
                    }
                }
                probs.len() - 1
            }
            ExplorationRule::Greedy => argmax_random(row, &mut self.rng),
        }
    }

    fn observe(&mut self, x: StateId, a: ActionId, r: f64, y: StateId) -> Result<()> {
        check_index("state", x, self.q.n_states())?;
        check_index("action", a, self.q.n_actions())?;
        check_index("state", y, self.q.n_states())?;
        let target = r + self.gamma * self.q.max(y);
        let old = self.q.get(x, a);
        self.q.set(x, a, old + self.alpha * (target - old));
        Ok(())
    }

    fn q_estimate(&self, x: StateId, a: ActionId) -> f64 {
        self.q.get(x, a)
    }

    fn reset(&mut self, seed: u64) {
        self.q = QTable::filled(self.q.n_states(), self.q.n_actions(), self.q0);
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn greedy_action(&self, x: StateId, _include_exploration: bool) -> ActionId {
        argmax_lowest(self.q.row(x))
    }

    fn n_states(&self) -> usize {
        self.q.n_states()
    }

    fn n_actions(&self) -> usize {
        self.q.n_actions()
    }
}

pub fn epsilon_greedy_agent(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    alpha: f64,
    epsilon: f64,
    q0: f64,
    seed: u64,
) -> Result<QLearningAgent> {
    QLearningAgent::new(n_states, n_actions, gamma, alpha, q0, ExplorationRule::EpsilonGreedy { epsilon }, seed)
}

pub fn boltzmann_agent(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    alpha: f64,
    temperature: f64,
    q0: f64,
    seed: u64,
) -> Result<QLearningAgent> {
    QLearningAgent::new(n_states, n_actions, gamma, alpha, q0, ExplorationRule::Boltzmann { temperature }, seed)
}

/// Greedy Q-learning from a uniformly optimistic table.
pub fn oiv_agent(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    alpha: f64,
    q0: f64,
    seed: u64,
) -> Result<QLearningAgent> {
    QLearningAgent::new(n_states, n_actions, gamma, alpha, q0, ExplorationRule::Greedy, seed)
}

const MODEL_TOL: f64 = 1e-6;
const MODEL_MAX_SWEEPS: usize = 1_000_000;

/// R-max: a pair's model jumps from "leads to the max-reward absorbing
/// state" to its empirical estimate once it has `m_known` visits, and the
/// model is re-solved whenever that happens.
#[derive(Debug, Clone)]
pub struct RmaxAgent {
    m_known: u64,
    r_max: f64,
    gamma: f64,
    counts: ExtendedCountsModel,
    q: QTable,
    rng: ChaCha8Rng,
    solves: usize,
}

impl RmaxAgent {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64, m_known: u64, r_max: f64, seed: u64) -> Result<Self> {
        if m_known == 0 {
            return Err(Error::Usage("m_known must be at least 1".into()));
        }
        let counts = ExtendedCountsModel::init_optimistic(n_states, n_actions, gamma, r_max)?
            .with_update_cap(m_known)
            .with_reward_floor(f64::NEG_INFINITY);
        let q = QTable::filled(n_states, n_actions, r_max / (1.0 - gamma));
        Ok(Self { m_known, r_max, gamma, counts, q, rng: ChaCha8Rng::seed_from_u64(seed), solves: 0 })
    }

    pub fn is_known(&self, x: StateId, a: ActionId) -> bool {
        self.counts.experience(x, a) >= self.m_known
    }

    /// Number of model re-solves so far.
    pub fn solves(&self) -> usize {
        self.solves
    }

    /// Transition estimate of a known pair: real successors renormalized
    /// without the fictitious Eden visit.
    pub fn known_prob(&self, x: StateId, a: ActionId, y: StateId) -> f64 {
        let k = self.counts.experience(x, a);
        if k == 0 {
            0.0
        } else {
            self.counts.count(x, a, y) as f64 / k as f64
        }
    }

    pub fn counts(&self) -> &ExtendedCountsModel {
        &self.counts
    }

    fn solve(&mut self) -> Result<()> {
        let v_max = self.r_max / (1.0 - self.gamma);
        let counts = &self.counts;
        let (m, gamma) = (self.m_known, self.gamma);
        solve_in_place(&mut self.q, MODEL_TOL, MODEL_MAX_SWEEPS, |q, x, a| {
            let k = counts.experience(x, a);
            if k < m {
                return v_max;
            }
            let k = k as f64;
            counts.successors(x, a).iter().map(|s| (s.reward_sum + s.count as f64 * gamma * q.max(s.next)) / k).sum()
        })?;
        self.solves += 1;
        Ok(())
    }
}

impl Agent for RmaxAgent {
    fn select_action(&mut self, x: StateId) -> ActionId {
        argmax_random(self.q.row(x), &mut self.rng)
    }

    fn observe(&mut self, x: StateId, a: ActionId, r: f64, y: StateId) -> Result<()> {
        check_index("state", x, self.counts.n_states())?;
        check_index("action", a, self.counts.n_actions())?;
        let was_known = self.is_known(x, a);
        self.counts.record_transition(x, a, y, r)?;
        if !was_known && self.is_known(x, a) {
            self.solve()?;
        }
        Ok(())
    }

    fn q_estimate(&self, x: StateId, a: ActionId) -> f64 {
        self.q.get(x, a)
    }

    fn reset(&mut self, seed: u64) {
        *self = Self::new(self.q.n_states(), self.q.n_actions(), self.gamma, self.m_known, self.r_max, seed)
            .expect("parameters were validated at construction");
    }

    fn greedy_action(&self, x: StateId, _include_exploration: bool) -> ActionId {
        argmax_lowest(self.q.row(x))
    }

    fn n_states(&self) -> usize {
        self.q.n_states()
    }

    fn n_actions(&self) -> usize {
        self.q.n_actions()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusShape {
    /// `beta / N(x,a)`
    #[default]
    InverseCount,
    /// `beta / sqrt(N(x,a))`
    InverseSqrtCount,
}

impl BonusShape {
    pub fn bonus(self, beta: f64, visits: u64) -> f64 {
        let n = visits as f64;
        match self {
            BonusShape::InverseCount => beta / n,
            BonusShape::InverseSqrtCount => beta / n.sqrt(),
        }
    }
}

/// MBIE-EB: value iteration on the empirical model with a count-based
/// bonus added to every visited pair's reward. Unvisited pairs hold
/// `optimistic_value`.
#[derive(Debug, Clone)]
pub struct MbieEbAgent {
    beta: f64,
    shape: BonusShape,
    gamma: f64,
    optimistic_value: f64,
    counts: ExtendedCountsModel,
    q: QTable,
    rng: ChaCha8Rng,
}

impl MbieEbAgent {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        beta: f64,
        shape: BonusShape,
        optimistic_value: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::Usage(format!("bonus scale must be nonnegative, got {beta}")));
        }
        let counts =
            ExtendedCountsModel::init_optimistic(n_states, n_actions, gamma, 0.0)?.with_reward_floor(f64::NEG_INFINITY);
        Ok(Self {
            beta,
            shape,
            gamma,
            optimistic_value,
            counts,
            q: QTable::filled(n_states, n_actions, optimistic_value),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Bonus for a pair with `visits` real visits.
    pub fn bonus(&self, visits: u64) -> f64 {
        self.shape.bonus(self.beta, visits)
    }

    fn solve(&mut self) -> Result<()> {
        let (counts, gamma, beta, shape, opt) =
            (&self.counts, self.gamma, self.beta, self.shape, self.optimistic_value);
        solve_in_place(&mut self.q, MODEL_TOL, MODEL_MAX_SWEEPS, |q, x, a| {
            let k = counts.experience(x, a);
            if k == 0 {
                return opt;
            }
            let kf = k as f64;
            let v: f64 = counts
                .successors(x, a)
                .iter()
                .map(|s| (s.reward_sum + s.count as f64 * gamma * q.max(s.next)) / kf)
                .sum();
            v + shape.bonus(beta, k)
        })?;
        Ok(())
    }
}

impl Agent for MbieEbAgent {
    fn select_action(&mut self, x: StateId) -> ActionId {
        argmax_random(self.q.row(x), &mut self.rng)
    }

    fn observe(&mut self, x: StateId, a: ActionId, r: f64, y: StateId) -> Result<()> {
        self.counts.record_transition(x, a, y, r)?;
        self.solve()
    }

    fn q_estimate(&self, x: StateId, a: ActionId) -> f64 {
        self.q.get(x, a)
    }

    fn reset(&mut self, seed: u64) {
        *self = Self::new(
            self.q.n_states(),
            self.q.n_actions(),
            self.gamma,
            self.beta,
            self.shape,
            self.optimistic_value,
            seed,
        )
        .expect("parameters were validated at construction");
    }

    fn greedy_action(&self, x: StateId, _include_exploration: bool) -> ActionId {
        argmax_lowest(self.q.row(x))
    }

    fn n_states(&self) -> usize {
        self.q.n_states()
    }

    fn n_actions(&self) -> usize {
        self.q.n_actions()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusKind {
    /// `-alpha * N(x,a)`
    Frequency,
    /// `alpha * sqrt(t - last_visit(x,a))`
    Recency,
    /// `alpha * |Q_{t+1}(x,a) - Q_t(x,a)|` of the external-reward value.
    Error,
}

impl std::str::FromStr for BonusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" => Ok(Self::Frequency),
            "recency" => Ok(Self::Recency),
            "error" => Ok(Self::Error),
            other => Err(Error::Usage(format!("unknown bonus kind '{other}'"))),
        }
    }
}

/// Model-based agent with separate external-reward and exploration values,
/// greedy on `q_r + kappa * q_e`, propagated by prioritized sweeping.
#[derive(Debug, Clone)]
pub struct BonusAgent {
    kind: BonusKind,
    kappa: f64,
    alpha: f64,
    gamma: f64,
    theta: f64,
    budget: usize,
    counts: ExtendedCountsModel,
    q_r: QTable,
    q_e: QTable,
    last_visit: Vec<u64>,
    last_change: Vec<f64>,
    t: u64,
    queue: PriorityQueue,
    rng: ChaCha8Rng,
}

impl BonusAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        kind: BonusKind,
        kappa: f64,
        alpha: f64,
        theta: f64,
        budget: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(kappa >= 0.0 && alpha >= 0.0) {
            return Err(Error::Usage("kappa and alpha must be nonnegative".into()));
        }
        if !(theta > 0.0) || budget == 0 {
            return Err(Error::Usage("sweep threshold must be positive and budget at least 1".into()));
        }
        let counts =
            ExtendedCountsModel::init_optimistic(n_states, n_actions, gamma, 0.0)?.with_reward_floor(f64::NEG_INFINITY);
        Ok(Self {
            kind,
            kappa,
            alpha,
            gamma,
            theta,
            budget,
            counts,
            q_r: QTable::zeros(n_states, n_actions),
            q_e: QTable::zeros(n_states, n_actions),
            last_visit: vec![0; n_states * n_actions],
            last_change: vec![0.0; n_states * n_actions],
            t: 0,
            queue: PriorityQueue::new(n_states, theta),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Takes effect on the next action choice; learned tables are untouched.
    pub fn set_kappa(&mut self, kappa: f64) {
        self.kappa = kappa;
    }

    pub fn q_r(&self) -> &QTable {
        &self.q_r
    }

    pub fn q_e(&self) -> &QTable {
        &self.q_e
    }

    /// Immediate exploration reward of `(x, a)` at the current time.
    pub fn bonus(&self, x: StateId, a: ActionId) -> f64 {
        let i = x * self.q_r.n_actions() + a;
        match self.kind {
            BonusKind::Frequency => -self.alpha * self.counts.experience(x, a) as f64,
            BonusKind::Recency => self.alpha * ((self.t - self.last_visit[i]) as f64).sqrt(),
            BonusKind::Error => self.alpha * self.last_change[i],
        }
    }

    fn combined(&self, x: StateId, a: ActionId) -> f64 {
        self.q_r.get(x, a) + self.kappa * self.q_e.get(x, a)
    }

    fn greedy_combined(&self, x: StateId) -> ActionId {
        let mut best = 0;
        for a in 1..self.q_r.n_actions() {
            if self.combined(x, a) > self.combined(x, best) {
                best = a;
            }
        }
        best
    }

    fn backup_state(&mut self, x: StateId) -> f64 {
        let before = self.combined(x, self.greedy_combined(x));
        let na = self.q_r.n_actions();
        for a in 0..na {
            let k = self.counts.experience(x, a);
            let b = self.bonus(x, a);
            if k == 0 {
                self.q_e.set(x, a, b);
                continue;
            }
            let kf = k as f64;
            let mut r_part = 0.0;
            let mut e_part = 0.0;
            for s in self.counts.successors(x, a) {
                let ay = self.greedy_combined(s.next);
                let c = s.count as f64;
                r_part += s.reward_sum + c * self.gamma * self.q_r.get(s.next, ay);
                e_part += c * self.q_e.get(s.next, ay);
            }
            let new_r = r_part / kf;
            self.last_change[x * na + a] = (new_r - self.q_r.get(x, a)).abs();
            self.q_r.set(x, a, new_r);
            self.q_e.set(x, a, b + self.gamma * e_part / kf);
        }
        (self.combined(x, self.greedy_combined(x)) - before).abs()
    }

    fn push_predecessors(&mut self, y: StateId, delta: f64) {
        if delta == 0.0 {
            return;
        }
        for i in 0..self.counts.predecessors(y).len() {
            let (p, a) = self.counts.predecessors(y)[i];
            let k = self.counts.experience(p, a) as f64;
            let prob = self.counts.count(p, a, y) as f64 / k;
            self.queue.push(p, prob * delta);
        }
    }
}

impl Agent for BonusAgent {
    fn select_action(&mut self, x: StateId) -> ActionId {
        let row: Vec<f64> = (0..self.q_r.n_actions()).map(|a| self.combined(x, a)).collect();
        argmax_random(&row, &mut self.rng)
    }

    fn observe(&mut self, x: StateId, a: ActionId, r: f64, y: StateId) -> Result<()> {
        self.counts.record_transition(x, a, y, r)?;
        self.t += 1;
        self.last_visit[x * self.q_r.n_actions() + a] = self.t;
        let delta = self.backup_state(x);
        self.push_predecessors(x, delta);
        let mut backups = 1;
        while backups < self.budget {
            let Some((s, _)) = self.queue.pop() else { break };
            let delta = self.backup_state(s);
            self.push_predecessors(s, delta);
            backups += 1;
        }
        Ok(())
    }

    fn q_estimate(&self, x: StateId, a: ActionId) -> f64 {
        self.combined(x, a)
    }

    fn reset(&mut self, seed: u64) {
        *self = Self::new(
            self.q_r.n_states(),
            self.q_r.n_actions(),
            self.gamma,
            self.kind,
            self.kappa,
            self.alpha,
            self.theta,
            self.budget,
            seed,
        )
        .expect("parameters were validated at construction");
    }

    fn greedy_action(&self, x: StateId, include_exploration: bool) -> ActionId {
        if include_exploration {
            self.greedy_combined(x)
        } else {
            argmax_lowest(self.q_r.row(x))
        }
    }

    fn n_states(&self) -> usize {
        self.q_r.n_states()
    }

    fn n_actions(&self) -> usize {
        self.q_r.n_actions()
    }
}
