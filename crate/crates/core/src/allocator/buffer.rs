use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Where a stored action came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Expert,
    Specific,
    Uniform,
    Current,
    Real,
}

impl Source {
    pub const SIMULATED: [Source; 4] = [Source::Expert, Source::Specific, Source::Uniform, Source::Current];
}

/// One `(s, w~, w, r, s', log pi_old)` tuple. Fields are fixed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    state: Vec<f64>,
    probs: Vec<f64>,
    action: Vec<f64>,
    reward: f64,
    next_state: Vec<f64>,
    log_pi_old: f64,
    source: Source,
}

impl Transition {
    /// `probs` is the behavior policy's distribution at `state`; the stored
    /// log-probability of `action` is `sum_a action_a * ln(probs_a)`.
    pub fn new(state: Vec<f64>, probs: Vec<f64>, action: Vec<f64>, reward: f64, next_state: Vec<f64>, source: Source) -> Self {
        let log_pi_old = soft_log_prob(&action, &probs);
        Transition { state, probs, action, reward, next_state, log_pi_old, source }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn action(&self) -> &[f64] {
        &self.action
    }

    pub fn reward(&self) -> f64 {
        self.reward
    }

    pub fn next_state(&self) -> &[f64] {
        &self.next_state
    }

    pub fn log_pi_old(&self) -> f64 {
        self.log_pi_old
    }

    pub fn source(&self) -> Source {
        self.source
    }
}

/// Log-probability of a weight vector read as a soft assignment under `probs`.
pub fn soft_log_prob(action: &[f64], probs: &[f64]) -> f64 {
    action
        .iter()
        .zip(probs)
        .filter(|(w, _)| **w != 0.0)
        .map(|(w, p)| w * p.ln())
        .sum()
}

/// Bounded FIFO store of transitions.
#[derive(Clone, Debug, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// A random permutation of the stored positions.
    pub fn shuffled_indices<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.items.len()).collect();
        idx.shuffle(rng);
        idx
    }
}
