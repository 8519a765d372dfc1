//! Priority queue for prioritized sweeping over states.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::mdp::StateId;

#[derive(Debug, Clone, Copy)]
struct Entry {
    priority: f64,
    state: StateId,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Ties go to the lower state index so pops are reproducible.
        self.priority.total_cmp(&other.priority).then_with(|| other.state.cmp(&self.state))
    }
}

/// Max-priority queue of states with lazy deletion. Each state is queued at
/// most once at its current (largest) priority; priorities below the
/// threshold are never admitted.
#[derive(Debug, Clone)]
pub struct PriorityQueue {
    theta: f64,
    current: Vec<f64>,
    heap: BinaryHeap<Entry>,
}

impl PriorityQueue {
    pub fn new(n_states: usize, theta: f64) -> Self {
        Self { theta, current: vec![0.0; n_states], heap: BinaryHeap::new() }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Raises the priority of `state` to `priority` if that is larger than
    /// what it already has. Returns whether the state is now queued at it.
    pub fn push(&mut self, state: StateId, priority: f64) -> bool {
        if !(priority >= self.theta) || priority <= self.current[state] {
            return false;
        }
        self.current[state] = priority;
        self.heap.push(Entry { priority, state });
        true
    }

    pub fn pop(&mut self) -> Option<(StateId, f64)> {
        while let Some(e) = self.heap.pop() {
            if self.current[e.state] == e.priority && e.priority > 0.0 {
                self.current[e.state] = 0.0;
                return Some((e.state, e.priority));
            }
        }
        None
    }

    pub fn peek_priority(&self) -> Option<f64> {
        self.heap
            .iter()
            .filter(|e| self.current[e.state] == e.priority)
            .map(|e| e.priority)
            .fold(None, |m, p| Some(m.map_or(p, |m: f64| m.max(p))))
    }

    pub fn len(&self) -> usize {
        self.current.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.heap.clear();
        self.current.iter_mut().for_each(|p| *p = 0.0);
    }

    /// Every queued priority is at least `theta`.
    pub fn check_invariant(&self) -> bool {
        self.current.iter().all(|&p| p == 0.0 || p >= self.theta)
    }
}
