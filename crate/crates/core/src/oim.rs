//! The optimistic initial model learner.
//!
//! The agent keeps two value tables over the real states: `q_r` for
//! external rewards and `q_e` for the exploration reward earned by reaching
//! the Garden-of-Eden state. It acts greedily on their sum, so exploration
//! is driven entirely by the optimism stored in the model. After each
//! transition the counters are updated and the two tables are backed up
//! through the empirical model, either by sweeping every state to
//! convergence or by prioritized sweeping from the current state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{pick_max, Agent, TieBreak};
use crate::error::{check_index, Error, Result};
use crate::mdp::{argmax_lowest, ActionId, QTable, StateId};
use crate::model::ExtendedCountsModel;
use crate::sweep::PriorityQueue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Gauss-Seidel sweeps over all states until the largest change is at
    /// most `dp_tol`.
    #[default]
    Full,
    Prioritized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OimConfig {
    pub r_max: f64,
    pub gamma: f64,
    #[serde(default)]
    pub sweep: SweepMode,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_budget")]
    pub max_backups_per_step: usize,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default = "default_dp_tol")]
    pub dp_tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps_per_step: usize,
    #[serde(default)]
    pub update_cap: Option<u64>,
    #[serde(default)]
    pub reward_floor: f64,
}

fn default_theta() -> f64 {
    1e-5
}
fn default_budget() -> usize {
    1000
}
fn default_dp_tol() -> f64 {
    1e-6
}
fn default_max_sweeps() -> usize {
    100_000
}

impl OimConfig {
    pub fn new(r_max: f64, gamma: f64) -> Self {
        Self {
            r_max,
            gamma,
            sweep: SweepMode::Full,
            theta: default_theta(),
            max_backups_per_step: default_budget(),
            tie_break: TieBreak::LowestIndex,
            dp_tol: default_dp_tol(),
            max_sweeps_per_step: default_max_sweeps(),
            update_cap: None,
            reward_floor: 0.0,
        }
    }

    pub fn prioritized(mut self, theta: f64, budget: usize) -> Self {
        self.sweep = SweepMode::Prioritized;
        self.theta = theta;
        self.max_backups_per_step = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::Usage(format!("priority threshold must be positive, got {}", self.theta)));
        }
        if self.max_backups_per_step == 0 {
            return Err(Error::Usage("max_backups_per_step must be at least 1".into()));
        }
        if !(self.dp_tol > 0.0) {
            return Err(Error::Usage("dp_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Paired external-reward and exploration value tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualQ {
    pub q_r: QTable,
    pub q_e: QTable,
}

impl DualQ {
    pub fn optimistic(n_states: usize, n_actions: usize, v_max: f64) -> Self {
        Self { q_r: QTable::zeros(n_states, n_actions), q_e: QTable::filled(n_states, n_actions, v_max) }
    }

    #[inline]
    pub fn combined(&self, x: StateId, a: ActionId) -> f64 {
        self.q_r.get(x, a) + self.q_e.get(x, a)
    }

    pub fn combined_row(&self, x: StateId) -> Vec<f64> {
        self.q_r.row(x).iter().zip(self.q_e.row(x)).map(|(r, e)| r + e).collect()
    }

    /// `a_x`: greedy action of the combined table, lowest index on ties.
    #[inline]
    pub fn greedy(&self, x: StateId) -> ActionId {
        let n = self.q_r.n_actions();
        let mut best = 0;
        let mut best_v = self.combined(x, 0);
        for a in 1..n {
            let v = self.combined(x, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    #[inline]
    pub fn state_value(&self, x: StateId) -> f64 {
        self.combined(x, self.greedy(x))
    }

    pub fn combined_table(&self) -> QTable {
        let mut q = QTable::zeros(self.q_r.n_states(), self.q_r.n_actions());
        for x in 0..q.n_states() {
            for a in 0..q.n_actions() {
                q.set(x, a, self.combined(x, a));
            }
        }
        q
    }
}

/// Diagnostic record for one agent step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub t: u64,
    pub x: StateId,
    pub a: ActionId,
    pub r: f64,
    /// Number of state backups performed (`|L_t|` counted with repeats).
    pub updated: usize,
    /// Largest priority left in the queue when the step's sweep stopped.
    pub max_priority: f64,
}

#[derive(Debug, Clone)]
pub struct OimAgent {
    cfg: OimConfig,
    model: ExtendedCountsModel,
    dual: DualQ,
    queue: PriorityQueue,
    rng: ChaCha8Rng,
    t: u64,
    trace: Option<Vec<StepTrace>>,
    last: Option<StepTrace>,
}

impl OimAgent {
    pub fn new(n_states: usize, n_actions: usize, cfg: OimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut model = ExtendedCountsModel::init_optimistic(n_states, n_actions, cfg.gamma, cfg.r_max)?
            .with_reward_floor(cfg.reward_floor);
        if let Some(m) = cfg.update_cap {
            model = model.with_update_cap(m);
        }
        let dual = DualQ::optimistic(n_states, n_actions, model.v_max());
        Ok(Self {
            queue: PriorityQueue::new(n_states, cfg.theta),
            cfg,
            model,
            dual,
            rng: ChaCha8Rng::seed_from_u64(seed),
            t: 0,
            trace: None,
            last: None,
        })
    }

    pub fn config(&self) -> &OimConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ExtendedCountsModel {
        &self.model
    }

    pub fn dual(&self) -> &DualQ {
        &self.dual
    }

    pub fn v_max(&self) -> f64 {
        self.model.v_max()
    }

    /// Keep every step's [`StepTrace`] in memory.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[StepTrace] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn last_step(&self) -> Option<StepTrace> {
        self.last
    }

    /// Greedy action on `q_r + q_e`, never a random exploratory move.
    pub fn select(&mut self, x: StateId) -> ActionId {
        match self.cfg.tie_break {
            TieBreak::LowestIndex => self.dual.greedy(x),
            TieBreak::SeededRandom => pick_max(&self.dual.combined_row(x), TieBreak::SeededRandom, &mut self.rng),
        }
    }

    /// The two dynamic-programming equations for one pair, evaluated against
    /// the current tables. Successor actions `a_y` are greedy on the combined
    /// table; `x_E` enters only through the `P_hat(x,a,x_E) V_max` term.
    pub fn dp_backup_pair(&self, x: StateId, a: ActionId) -> (f64, f64) {
        let gamma = self.cfg.gamma;
        let n = self.model.visits(x, a) as f64;
        let mut q_r = 0.0;
        let mut q_e = 0.0;
        for s in self.model.successors(x, a) {
            let ay = self.dual.greedy(s.next);
            let c = s.count as f64;
            q_r += s.reward_sum + c * gamma * self.dual.q_r.get(s.next, ay);
            q_e += c * self.dual.q_e.get(s.next, ay);
        }
        let eden = self.model.eden_count(x, a) as f64;
        (q_r / n, (gamma * q_e + eden * self.v_max()) / n)
    }

    /// Backs up every action of `x` in place; returns `|ΔV(x)|`.
    fn backup_state(&mut self, x: StateId) -> f64 {
        let before = self.dual.state_value(x);
        for a in 0..self.model.n_actions() {
            let (r, e) = self.dp_backup_pair(x, a);
            self.dual.q_r.set(x, a, r);
            self.dual.q_e.set(x, a, e);
        }
        (self.dual.state_value(x) - before).abs()
    }

    /// One synchronous (Jacobi) sweep of [`Self::dp_backup_pair`] over all pairs.
    pub fn synchronous_sweep(&mut self) {
        let (ns, na) = (self.model.n_states(), self.model.n_actions());
        let mut next = DualQ { q_r: QTable::zeros(ns, na), q_e: QTable::zeros(ns, na) };
        for x in 0..ns {
            for a in 0..na {
                let (r, e) = self.dp_backup_pair(x, a);
                next.q_r.set(x, a, r);
                next.q_e.set(x, a, e);
            }
        }
        self.dual = next;
    }

    /// Gauss-Seidel sweeps over all states until convergence.
    pub fn full_sweep(&mut self) -> usize {
        let ns = self.model.n_states();
        let mut backups = 0;
        for _ in 0..self.cfg.max_sweeps_per_step {
            let mut delta = 0.0_f64;
            for x in 0..ns {
                for a in 0..self.model.n_actions() {
                    let old = self.dual.combined(x, a);
                    let (r, e) = self.dp_backup_pair(x, a);
                    self.dual.q_r.set(x, a, r);
                    self.dual.q_e.set(x, a, e);
                    delta = delta.max((r + e - old).abs());
                }
                backups += 1;
            }
            if delta <= self.cfg.dp_tol {
                break;
            }
        }
        backups
    }

    /// Prioritized sweeping seeded at `x`, which is always backed up first.
    fn prioritized_sweep(&mut self, x: StateId) -> (usize, f64) {
        let mut backups = 1;
        let delta = self.backup_state(x);
        self.push_predecessors(x, delta);
        while backups < self.cfg.max_backups_per_step {
            let Some((s, _)) = self.queue.pop() else { break };
            let delta = self.backup_state(s);
            backups += 1;
            self.push_predecessors(s, delta);
        }
        (backups, self.queue.peek_priority().unwrap_or(0.0))
    }

    fn push_predecessors(&mut self, y: StateId, delta: f64) {
        if delta == 0.0 {
            return;
        }
        for i in 0..self.model.predecessors(y).len() {
            let (p, a) = self.model.predecessors(y)[i];
            let priority = self.model.p_hat(p, a, y) * delta;
            self.queue.push(p, priority);
        }
    }

    /// Algorithm step: record the transition, then run dynamic programming
    /// over the update set.
    pub fn update(&mut self, x: StateId, a: ActionId, r: f64, y: StateId) -> Result<()> {
        self.model.record_transition(x, a, y, r)?;
        self.t += 1;
        let (updated, max_priority) = match self.cfg.sweep {
            SweepMode::Full => (self.full_sweep(), 0.0),
            SweepMode::Prioritized => self.prioritized_sweep(x),
        };
        let rec = StepTrace { t: self.t, x, a, r, updated, max_priority };
        self.last = Some(rec);
        if let Some(tr) = self.trace.as_mut() {
            tr.push(rec);
        }
        Ok(())
    }

    /// Observes `(r, y)` for the action taken in `x` and returns the next
    /// greedy action in `y`.
    pub fn step(&mut self, x: StateId, a: ActionId, r: f64, y: StateId) -> Result<ActionId> {
        self.update(x, a, r, y)?;
        Ok(self.select(y))
    }

    /// The exploration bonus implied by the Eden state:
    /// `(V_max - Q(x,a)) / N(x,a)`.
    pub fn implicit_bonus(&self, x: StateId, a: ActionId) -> f64 {
        (self.v_max() - self.dual.combined(x, a)) / self.model.visits(x, a) as f64
    }

    fn check_state(&self, x: StateId) -> Result<()> {
        check_index("state", x, self.model.n_states())
    }
}

impl Agent for OimAgent {
    fn select_action(&mut self, x: StateId) -> ActionId {
        self.select(x)
    }

    fn observe(&mut self, x: StateId, a: ActionId, r: f64, y: StateId) -> Result<()> {
        self.check_state(x)?;
        self.update(x, a, r, y)
    }

    fn q_estimate(&self, x: StateId, a: ActionId) -> f64 {
        self.dual.combined(x, a)
    }

    fn reset(&mut self, seed: u64) {
        let traced = self.trace.is_some();
        *self = Self::new(self.model.n_states(), self.model.n_actions(), self.cfg.clone(), seed)
            .expect("config was validated at construction");
        if traced {
            self.enable_trace();
        }
    }

    fn greedy_action(&self, x: StateId, include_exploration: bool) -> ActionId {
        if include_exploration {
            self.dual.greedy(x)
        } else {
            argmax_lowest(self.dual.q_r.row(x))
        }
    }

    fn n_states(&self) -> usize {
        self.model.n_states()
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions()
    }
}
