//! Exact finite MDPs and the dynamic-programming kernels that serve as
//! ground truth for every learner in the crate.
//!
//! Transition rows are stored sparsely: for each `(x, a)` pair only the
//! successors with nonzero probability are kept, sorted by successor index.
//! The reward attached to a successor is the *mean* reward of that
//! transition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};

pub type StateId = usize;
pub type ActionId = usize;

const STOCHASTIC_TOL: f64 = 1e-12;
/// Above this many state-action pairs, exact evaluation switches from a
/// dense LU solve to iterative sweeps.
const DIRECT_SOLVE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub next: StateId,
    pub prob: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<Transition>>,
    gamma: f64,
    r0_max: f64,
    terminal: Vec<StateId>,
}

/// Incremental constructor for [`TabularMdp`]. Repeated `(x, a, y)` entries
/// are merged: probabilities add and the reward becomes the
/// probability-weighted mean.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rows: Vec<Vec<Transition>>,
    r0_max: Option<f64>,
    terminal: Vec<StateId>,
}

impl MdpBuilder {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64) -> Self {
        Self {
            n_states,
            n_actions,
            gamma,
            rows: vec![Vec::new(); n_states * n_actions],
            r0_max: None,
            terminal: Vec::new(),
        }
    }

    pub fn add(&mut self, x: StateId, a: ActionId, y: StateId, prob: f64, reward: f64) -> &mut Self {
        if prob == 0.0 {
            return self;
        }
        let row = &mut self.rows[x * self.n_actions + a];
        match row.iter_mut().find(|t| t.next == y) {
            Some(t) => {
                let total = t.prob + prob;
                if t.reward != reward {
                    t.reward = (t.reward * t.prob + reward * prob) / total;
                }
                t.prob = total;
            }
            None => row.push(Transition { next: y, prob, reward }),
        }
        self
    }

    /// Upper bound on rewards. Defaults to the largest reward present.
    pub fn reward_bound(&mut self, r0_max: f64) -> &mut Self {
        self.r0_max = Some(r0_max);
        self
    }

    /// Marks `x` absorbing with zero reward under every action, replacing any
    /// transitions already added for it.
    pub fn terminal(&mut self, x: StateId) -> &mut Self {
        for a in 0..self.n_actions {
            self.rows[x * self.n_actions + a] = vec![Transition { next: x, prob: 1.0, reward: 0.0 }];
        }
        self.terminal.push(x);
        self
    }

    pub fn build(&self) -> Result<TabularMdp> {
        let mut rows = self.rows.clone();
        for row in &mut rows {
            row.sort_by_key(|t| t.next);
        }
        let max_reward = rows.iter().flatten().map(|t| t.reward).fold(f64::NEG_INFINITY, f64::max);
        let r0_max = match self.r0_max {
            Some(r) => r,
            None if max_reward > 0.0 => max_reward,
            None => 1.0,
        };
        let mut terminal = self.terminal.clone();
        terminal.sort_unstable();
        terminal.dedup();
        TabularMdp::from_parts(self.n_states, self.n_actions, rows, self.gamma, r0_max, terminal)
    }
}

impl TabularMdp {
    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        rows: Vec<Vec<Transition>>,
        gamma: f64,
        r0_max: f64,
        terminal: Vec<StateId>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("need at least one state and one action".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("discount {gamma} outside [0, 1)")));
        }
        if !(r0_max > 0.0 && r0_max.is_finite()) {
            return Err(Error::InvalidMdp(format!("reward bound {r0_max} must be positive")));
        }
        if rows.len() != n_states * n_actions {
            return Err(Error::InvalidMdp("row count does not match |X||A|".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            let (x, a) = (i / n_actions, i % n_actions);
            let mut total = 0.0;
            for t in row {
                if t.next >= n_states {
                    return Err(Error::InvalidMdp(format!("({x},{a}) leads to unknown state {}", t.next)));
                }
                if !(0.0..=1.0 + STOCHASTIC_TOL).contains(&t.prob) {
                    return Err(Error::InvalidMdp(format!("P({x},{a},{}) = {}", t.next, t.prob)));
                }
                if !t.reward.is_finite() || t.reward > r0_max {
                    return Err(Error::InvalidMdp(format!(
                        "R({x},{a},{}) = {} exceeds bound {r0_max}",
                        t.next, t.reward
                    )));
                }
                total += t.prob;
            }
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidMdp(format!("row ({x},{a}) sums to {total}")));
            }
        }
        for &x in &terminal {
            check_index("state", x, n_states)?;
            for a in 0..n_actions {
                let row = &rows[x * n_actions + a];
                if row.len() != 1 || row[0].next != x || row[0].reward != 0.0 {
                    return Err(Error::InvalidMdp(format!("terminal state {x} is not a zero-reward self-loop")));
                }
            }
        }
        Ok(Self { n_states, n_actions, rows, gamma, r0_max, terminal })
    }

    /// Builds from dense `P[x][a][y]` and `R[x][a][y]` tensors in row-major order.
    pub fn from_dense(n_states: usize, n_actions: usize, p: &[f64], r: &[f64], gamma: f64) -> Result<Self> {
        let len = n_states * n_actions * n_states;
        if p.len() != len || r.len() != len {
            return Err(Error::InvalidMdp(format!("dense tensors must have {len} entries")));
        }
        let mut b = MdpBuilder::new(n_states, n_actions, gamma);
        for x in 0..n_states {
            for a in 0..n_actions {
                for y in 0..n_states {
                    let i = (x * n_actions + a) * n_states + y;
                    b.add(x, a, y, p[i], r[i]);
                }
            }
        }
        b.build()
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

    pub fn r0_max(&self) -> f64 {
        self.r0_max
    }

    pub fn terminal_states(&self) -> &[StateId] {
        &self.terminal
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::from_parts(self.n_states, self.n_actions, self.rows.clone(), gamma, self.r0_max, self.terminal.clone())
    }

    #[inline]
    pub fn row(&self, x: StateId, a: ActionId) -> &[Transition] {
        &self.rows[x * self.n_actions + a]
    }

    pub fn prob(&self, x: StateId, a: ActionId, y: StateId) -> f64 {
        self.row(x, a).iter().find(|t| t.next == y).map_or(0.0, |t| t.prob)
    }

    pub fn reward(&self, x: StateId, a: ActionId, y: StateId) -> f64 {
        self.row(x, a).iter().find(|t| t.next == y).map_or(0.0, |t| t.reward)
    }

    pub fn expected_reward(&self, x: StateId, a: ActionId) -> f64 {
        self.row(x, a).iter().map(|t| t.prob * t.reward).sum()
    }

    pub fn min_reward(&self) -> f64 {
        self.rows.iter().flatten().map(|t| t.reward).fold(f64::INFINITY, f64::min)
    }

    pub fn rewards_nonnegative(&self) -> bool {
        self.min_reward() >= 0.0
    }

    pub fn check_state(&self, x: StateId) -> Result<()> {
        check_index("state", x, self.n_states)
    }

    pub fn check_action(&self, a: ActionId) -> Result<()> {
        check_index("action", a, self.n_actions)
    }

    pub fn to_dump(&self) -> MdpDump {
        MdpDump {
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.gamma,
            r0_max: self.r0_max,
            terminal_states: self.terminal.clone(),
            transitions: (0..self.n_states)
                .flat_map(|x| (0..self.n_actions).map(move |a| (x, a)))
                .flat_map(|(x, a)| {
                    self.row(x, a).iter().map(move |t| DumpedTransition {
                        state: x,
                        action: a,
                        next: t.next,
                        prob: t.prob,
                        reward: t.reward,
                    })
                })
                .collect(),
        }
    }

    pub fn from_dump(dump: &MdpDump) -> Result<Self> {
        let mut b = MdpBuilder::new(dump.n_states, dump.n_actions, dump.gamma);
        for t in &dump.transitions {
            check_index("state", t.state, dump.n_states)?;
            check_index("action", t.action, dump.n_actions)?;
            b.add(t.state, t.action, t.next, t.prob, t.reward);
        }
        b.reward_bound(dump.r0_max);
        let mut mdp = b.build()?;
        mdp.terminal = dump.terminal_states.clone();
        Ok(mdp)
    }
}

/// JSON debug representation of a [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDump {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub r0_max: f64,
    pub terminal_states: Vec<StateId>,
    pub transitions: Vec<DumpedTransition>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpedTransition {
    pub state: StateId,
    pub action: ActionId,
    pub next: StateId,
    pub prob: f64,
    pub reward: f64,
}

/// Dense `Q[x][a]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self { n_states, n_actions, values: vec![value; n_states * n_actions] }
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, x: StateId, a: ActionId) -> f64 {
        self.values[x * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, x: StateId, a: ActionId, v: f64) {
        self.values[x * self.n_actions + a] = v;
    }

    #[inline]
    pub fn row(&self, x: StateId) -> &[f64] {
        &self.values[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Greedy action, lowest index on ties.
    #[inline]
    pub fn argmax(&self, x: StateId) -> ActionId {
        argmax_lowest(self.row(x))
    }

    #[inline]
    pub fn max(&self, x: StateId) -> f64 {
        self.row(x).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn state_values(&self) -> Vec<f64> {
        (0..self.n_states).map(|x| self.max(x)).collect()
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn greedy_policy(&self) -> Policy {
        Policy::deterministic(self.n_actions, &(0..self.n_states).map(|x| self.argmax(x)).collect::<Vec<_>>())
    }

    fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::Usage(format!(
                "Q table is {}x{} but MDP is {}x{}",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}

/// Index of the maximum, lowest index on ties.
#[inline]
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Stationary stochastic policy `pi[x][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Usage("policy table has the wrong shape".into()));
        }
        for x in 0..n_states {
            let row = &probs[x * n_actions..(x + 1) * n_actions];
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Usage(format!("policy row {x} has a probability outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Usage(format!("policy row {x} sums to {s}")));
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    pub fn deterministic(n_actions: usize, actions: &[ActionId]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (x, &a) in actions.iter().enumerate() {
            probs[x * n_actions + a] = 1.0;
        }
        Self { n_states: actions.len(), n_actions, probs }
    }

    #[inline]
    pub fn prob(&self, x: StateId, a: ActionId) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn row(&self, x: StateId) -> &[f64] {
        &self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    fn check_shape(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::Usage("policy shape does not match MDP".into()));
        }
        Ok(())
    }
}

#[inline]
fn backup_unchecked(mdp: &TabularMdp, q: &QTable, x: StateId, a: ActionId) -> f64 {
    mdp.row(x, a).iter().map(|t| t.prob * (t.reward + mdp.gamma * q.max(t.next))).sum()
}

/// One Bellman optimality backup: `sum_y P(x,a,y) (R(x,a,y) + gamma max_b q(y,b))`.
pub fn bellman_backup(mdp: &TabularMdp, q: &QTable, x: StateId, a: ActionId) -> Result<f64> {
    q.check_shape(mdp)?;
    mdp.check_state(x)?;
    mdp.check_action(a)?;
    Ok(backup_unchecked(mdp, q, x, a))
}

/// One synchronous (Jacobi) sweep of Bellman optimality backups.
pub fn bellman_sweep(mdp: &TabularMdp, q: &QTable) -> QTable {
    let mut next = QTable::zeros(mdp.n_states, mdp.n_actions);
    for x in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            next.set(x, a, backup_unchecked(mdp, q, x, a));
        }
    }
    next
}

/// Synchronous value iteration from `Q = 0`. Stops once successive iterates
/// differ by at most `tol` in sup norm, which bounds the Bellman residual of
/// the returned table by `gamma * tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Result<QTable> {
    value_iteration_from(mdp, QTable::zeros(mdp.n_states, mdp.n_actions), tol, max_iters)
}

pub fn value_iteration_from(mdp: &TabularMdp, init: QTable, tol: f64, max_iters: usize) -> Result<QTable> {
    if !(tol > 0.0) {
        return Err(Error::Usage(format!("tolerance must be positive, got {tol}")));
    }
    init.check_shape(mdp)?;
    let mut q = init;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = bellman_sweep(mdp, &q);
        residual = next.sup_distance(&q);
        q = next;
        if residual <= tol {
            return Ok(q);
        }
    }
    Err(Error::NotConverged { iterations: max_iters, residual })
}

/// Applies `T^pi` once: `sum_y P (R + gamma sum_b pi(y,b) q(y,b))`.
fn policy_backup(mdp: &TabularMdp, pi: &Policy, q: &QTable) -> QTable {
    let v: Vec<f64> =
        (0..mdp.n_states).map(|y| (0..mdp.n_actions).map(|b| pi.prob(y, b) * q.get(y, b)).sum()).collect();
    q_from_state_values(mdp, &v)
}

fn q_from_state_values(mdp: &TabularMdp, v: &[f64]) -> QTable {
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    for x in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let val = mdp.row(x, a).iter().map(|t| t.prob * (t.reward + mdp.gamma * v[t.next])).sum();
            q.set(x, a, val);
        }
    }
    q
}

/// Exact `Q^pi` by solving `(I - gamma P_pi) V = r_pi`.
///
/// Up to 10^4 state-action pairs the system is solved by dense LU with one
/// round of iterative refinement; larger problems fall back to Gauss-Seidel
/// sweeps. The residual `|Q - T^pi Q|` must end up below
/// `1e-10 * max(1, |Q|)`.
pub fn policy_evaluation_exact(mdp: &TabularMdp, pi: &Policy) -> Result<QTable> {
    pi.check_shape(mdp)?;
    let n = mdp.n_states;
    let r_pi: Vec<f64> =
        (0..n).map(|x| (0..mdp.n_actions).map(|a| pi.prob(x, a) * mdp.expected_reward(x, a)).sum()).collect();

    let v = if n * mdp.n_actions <= DIRECT_SOLVE_LIMIT {
        let mut m = DMatrix::<f64>::identity(n, n);
        for x in 0..n {
            for a in 0..mdp.n_actions {
                let p = pi.prob(x, a);
                if p == 0.0 {
                    continue;
                }
                for t in mdp.row(x, a) {
                    m[(x, t.next)] -= mdp.gamma * p * t.prob;
                }
            }
        }
        let rhs = DVector::from_vec(r_pi.clone());
        let lu = m.clone().lu();
        let mut v = lu.solve(&rhs).ok_or(Error::NotConverged { iterations: 0, residual: f64::INFINITY })?;
        let correction = lu.solve(&(&rhs - &m * &v));
        if let Some(c) = correction {
            v += c;
        }
        v.iter().copied().collect::<Vec<_>>()
    } else {
        gauss_seidel_policy_values(mdp, pi, &r_pi)?
    };

    let q = q_from_state_values(mdp, &v);
    let residual = policy_backup(mdp, pi, &q).sup_distance(&q);
    let scale = q.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if residual > 1e-10 * scale {
        return Err(Error::NotConverged { iterations: 1, residual });
    }
    Ok(q)
}

fn gauss_seidel_policy_values(mdp: &TabularMdp, pi: &Policy, r_pi: &[f64]) -> Result<Vec<f64>> {
    let n = mdp.n_states;
    let mut v = vec![0.0; n];
    let scale = r_pi.iter().fold(1.0_f64, |m, r| m.max(r.abs())) / (1.0 - mdp.gamma);
    let max_sweeps = 1_000_000;
    let mut delta = f64::INFINITY;
    for _ in 0..max_sweeps {
        delta = 0.0;
        for x in 0..n {
            let mut acc = r_pi[x];
            for a in 0..mdp.n_actions {
                let p = pi.prob(x, a);
                if p == 0.0 {
                    continue;
                }
                for t in mdp.row(x, a) {
                    acc += mdp.gamma * p * t.prob * v[t.next];
                }
            }
            delta = f64::max(delta, (acc - v[x]).abs());
            v[x] = acc;
        }
        if delta <= 1e-13 * scale {
            return Ok(v);
        }
    }
    Err(Error::NotConverged { iterations: max_sweeps, residual: delta })
}

/// `H`-step truncated value `E[sum_{t=0}^{h} gamma^t r_t]` of `pi`, computed
/// by `h` backward sweeps from the immediate expected reward.
pub fn truncated_value(mdp: &TabularMdp, pi: &Policy, h: usize) -> Result<QTable> {
    pi.check_shape(mdp)?;
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    for x in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            q.set(x, a, mdp.expected_reward(x, a));
        }
    }
    for _ in 0..h {
        q = policy_backup(mdp, pi, &q);
    }
    Ok(q)
}

/// Expected undiscounted return of a stationary policy over `steps` steps
/// from `start`, by exact forward propagation of the state distribution.
pub fn finite_horizon_return(mdp: &TabularMdp, pi: &Policy, start: StateId, steps: usize) -> Result<f64> {
    pi.check_shape(mdp)?;
    mdp.check_state(start)?;
    let n = mdp.n_states;
    let mut dist = vec![0.0; n];
    dist[start] = 1.0;
    let mut total = 0.0;
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for (x, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for a in 0..mdp.n_actions {
                let p = pi.prob(x, a);
                if p == 0.0 {
                    continue;
                }
                for t in mdp.row(x, a) {
                    let m = w * p * t.prob;
                    total += m * t.reward;
                    next[t.next] += m;
                }
            }
        }
        dist = next;
    }
    Ok(total)
}

/// Best achievable expected undiscounted return over `steps` steps from
/// `start`, by backward finite-horizon dynamic programming.
pub fn finite_horizon_optimum(mdp: &TabularMdp, start: StateId, steps: usize) -> Result<f64> {
    mdp.check_state(start)?;
    let mut v = vec![0.0; mdp.n_states];
    for _ in 0..steps {
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|x| {
                (0..mdp.n_actions)
                    .map(|a| mdp.row(x, a).iter().map(|t| t.prob * (t.reward + v[t.next])).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        v = next;
    }
    Ok(v[start])
}

/// In-place Gauss-Seidel sweeps of an arbitrary state-action backup until
/// the largest change in a sweep is at most `tol`. Returns the number of
/// sweeps performed.
pub fn solve_in_place<F>(q: &mut QTable, tol: f64, max_sweeps: usize, mut backup: F) -> Result<usize>
where
    F: FnMut(&QTable, StateId, ActionId) -> f64,
{
    let mut delta = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        delta = 0.0;
        for x in 0..q.n_states {
            for a in 0..q.n_actions {
                let v = backup(q, x, a);
                delta = f64::max(delta, (v - q.get(x, a)).abs());
                q.set(x, a, v);
            }
        }
        if delta <= tol {
            return Ok(sweep);
        }
    }
    Err(Error::NotConverged { iterations: max_sweeps, residual: delta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(reward: f64, gamma: f64) -> TabularMdp {
        let mut b = MdpBuilder::new(1, 1, gamma);
        b.add(0, 0, 0, 1.0, reward);
        b.build().unwrap()
    }

    #[test]
    fn absorbing_zero_reward_backup_is_zero() {
        let mut b = MdpBuilder::new(1, 1, 0.9);
        b.terminal(0);
        let mdp = b.build().unwrap();
        let q = QTable::zeros(1, 1);
        assert_eq!(bellman_backup(&mdp, &q, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn scalar_fixed_point_backup() {
        let mdp = single_state(1.0, 0.5);
        let q = QTable::filled(1, 1, 2.0);
        assert_eq!(bellman_backup(&mdp, &q, 0, 0).unwrap(), 2.0);
    }

    #[test]
    fn backup_rejects_bad_indices() {
        let mdp = single_state(1.0, 0.5);
        let q = QTable::zeros(1, 1);
        assert!(matches!(bellman_backup(&mdp, &q, 1, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(bellman_backup(&mdp, &q, 0, 3), Err(Error::IndexOutOfRange { .. })));
        assert!(bellman_backup(&mdp, &QTable::zeros(2, 1), 0, 0).is_err());
    }

    #[test]
    fn geometric_series_value() {
        let mdp = single_state(1.0, 0.9);
        let q = value_iteration(&mdp, 1e-10, 10_000).unwrap();
        assert!((q.get(0, 0) - 10.0).abs() < 1e-8);
    }

    #[test]
    fn value_iteration_reports_nonconvergence() {
        let mdp = single_state(1.0, 0.99);
        match value_iteration(&mdp, 1e-12, 5) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 5);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(value_iteration(&mdp, 0.0, 5).is_err());
    }

    #[test]
    fn symmetric_uniform_policy_value() {
        let r = 3.0;
        let gamma = 0.8;
        let mut b = MdpBuilder::new(2, 2, gamma);
        for x in 0..2 {
            for a in 0..2 {
                b.add(x, a, 0, 0.5, r).add(x, a, 1, 0.5, r);
            }
        }
        let mdp = b.build().unwrap();
        let q = policy_evaluation_exact(&mdp, &Policy::uniform(2, 2)).unwrap();
        for &v in q.values() {
            assert!((v - r / (1.0 - gamma)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_horizon_is_immediate_reward() {
        let mut b = MdpBuilder::new(2, 1, 0.9);
        b.add(0, 0, 0, 0.25, 4.0).add(0, 0, 1, 0.75, 2.0).add(1, 0, 1, 1.0, 1.0);
        let mdp = b.build().unwrap();
        let q = truncated_value(&mdp, &Policy::uniform(2, 1), 0).unwrap();
        assert!((q.get(0, 0) - 2.5).abs() < 1e-15);
        assert_eq!(q.get(1, 0), 1.0);
    }

    #[test]
    fn builder_rejects_substochastic_rows() {
        let mut b = MdpBuilder::new(2, 1, 0.9);
        b.add(0, 0, 1, 0.5, 0.0).add(1, 0, 1, 1.0, 0.0);
        assert!(matches!(b.build(), Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn builder_rejects_rewards_above_bound() {
        let mut b = MdpBuilder::new(1, 1, 0.9);
        b.add(0, 0, 0, 1.0, 5.0).reward_bound(1.0);
        assert!(b.build().is_err());
    }

    #[test]
    fn merged_entries_average_rewards() {
        let mut b = MdpBuilder::new(1, 1, 0.5);
        b.add(0, 0, 0, 0.25, 4.0).add(0, 0, 0, 0.75, 0.0);
        let mdp = b.build().unwrap();
        assert_eq!(mdp.row(0, 0).len(), 1);
        assert!((mdp.reward(0, 0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dump_round_trip() {
        let mut b = MdpBuilder::new(2, 2, 0.9);
        b.add(0, 0, 1, 1.0, 1.0).add(0, 1, 0, 1.0, 0.0).terminal(1);
        let mdp = b.build().unwrap();
        let json = serde_json::to_string(&mdp.to_dump()).unwrap();
        let back = TabularMdp::from_dump(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, mdp);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest(&[2.0, 2.0]), 0);
    }
}
