//! Learned daily weights over the scoring agents.
//!
//! A softmax policy proposes a distribution over agents, which is blended
//! with Sharpe-optimal reference weights and restricted to its `k` largest
//! entries. The policy is trained online from the deployed action plus a
//! batch of simulated actions per day, with a clipped-ratio surrogate, a
//! learned action-value critic and a decaying imitation term toward
//! hindsight-best weights.

mod buffer;
mod kmeans;
mod learner;
mod loss;
mod nn;
mod reference;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use buffer::{soft_log_prob, ReplayBuffer, Source, Transition};
pub use kmeans::{kmeans, nearest, Clusters};
pub use learner::{Allocator, Checkpoint, Decision, DayOutcome, TelemetryRow};
pub use loss::{actor_loss, critic_loss, next_action, td_targets, ActorLosses, LossInputs};
pub use nn::{clip_grad_norm, Adam, Mlp, Trace};
pub use reference::{best_sharpe_weights, reference_weights, Reference, ReferenceParams};

/// Sampling probabilities of the four simulated-action sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mixture {
    pub expert: f64,
    pub specific: f64,
    pub uniform: f64,
    pub current: f64,
}

impl Default for Mixture {
    fn default() -> Self {
        Mixture { expert: 0.4, specific: 0.2, uniform: 0.2, current: 0.2 }
    }
}

impl Mixture {
    pub fn as_array(&self) -> [f64; 4] {
        [self.expert, self.specific, self.uniform, self.current]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub gamma: f64,
    /// Softmax temperature of the policy.
    pub temperature: f64,
    /// Target-network update rate.
    pub tau_soft: f64,
    pub clip_eps: f64,
    pub top_k: usize,
    pub beta_ref: f64,
    pub beta_ppo: f64,
    pub beta_mse: f64,
    pub beta_entropy: f64,
    pub beta_bc: f64,
    /// Multiplicative decay of `beta_bc` per training step.
    pub beta_decay: f64,
    /// Reward multiplier.
    pub reward_scale: f64,
    pub mixture: Mixture,
    pub noise: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub ppo_epochs: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub max_minibatches: usize,
    /// Simulated actions per day.
    pub simulations: usize,
    /// Trailing days of agent returns in the state.
    pub history_days: usize,
    /// Days over which top-k membership frequency is measured.
    pub topk_window: usize,
    /// Multiplier on returns placed in the state.
    pub state_return_scale: f64,
    /// Trailing days searched for the best constant weights.
    pub specific_window: usize,
    pub hidden: usize,
    pub grad_clip: f64,
    pub reference: ReferenceParams,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            gamma: 0.05,
            temperature: 1.0,
            tau_soft: 0.01,
            clip_eps: 0.2,
            top_k: 2,
            beta_ref: 0.3,
            beta_ppo: 1.0,
            beta_mse: 0.5,
            beta_entropy: 0.01,
            beta_bc: 1.0,
            beta_decay: 0.999,
            reward_scale: 1.0,
            mixture: Mixture::default(),
            noise: 0.05,
            lr_actor: 3e-4,
            lr_critic: 1e-3,
            ppo_epochs: 4,
            buffer_capacity: 2048,
            batch_size: 64,
            max_minibatches: 8,
            simulations: 16,
            history_days: 10,
            topk_window: 20,
            state_return_scale: 100.0,
            specific_window: 60,
            hidden: 64,
            grad_clip: 1.0,
            reference: ReferenceParams::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self, n_agents: usize) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("allocator.gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.clip_eps <= 0.0 {
            return bad(format!("allocator.clip_eps must be positive, got {}", self.clip_eps));
        }
        if self.top_k == 0 || self.top_k > n_agents {
            return bad(format!("allocator.top_k must lie in [1, {n_agents}], got {}", self.top_k));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("allocator.temperature must be positive, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.tau_soft) {
            return bad(format!("allocator.tau_soft must lie in [0, 1], got {}", self.tau_soft));
        }
        let m = self.mixture.as_array();
        if m.iter().any(|x| *x < 0.0) || (m.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("allocator.mixture must be non-negative and sum to 1".into());
        }
        if self.noise < 0.0 || self.beta_ref < 0.0 || !(0.0..=1.0).contains(&self.beta_decay) {
            return bad("allocator.noise and beta_ref must be non-negative, beta_decay in [0, 1]".into());
        }
        if self.batch_size == 0 || self.hidden == 0 || self.history_days == 0 || self.topk_window == 0 {
            return bad("allocator batch_size, hidden, history_days and topk_window must be positive".into());
        }
        if self.buffer_capacity < self.batch_size {
            return bad("allocator.buffer_capacity must be at least batch_size".into());
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0 && self.grad_clip > 0.0) {
            return bad("allocator learning rates and grad_clip must be positive".into());
        }
        self.reference.validate()
    }

    pub fn state_dim(&self, n_agents: usize) -> usize {
        n_agents * self.history_days + 3 * n_agents
    }
}

/// Flat state: per-agent trailing returns (most recent first, zero-padded),
/// per-agent top-k frequency, last deployed action, reference weights.
/// The flag is true when history was padded.
pub fn build_state(
    history: &[Vec<f64>],
    last_action: Option<&[f64]>,
    reference: &[f64],
    hyper: &HyperParams,
) -> (Vec<f64>, bool) {
    let n = reference.len();
    let days = hyper.history_days;
    let mut s = Vec::with_capacity(hyper.state_dim(n));
    for a in 0..n {
        for lag in 1..=days {
            let v = history.len().checked_sub(lag).map_or(0.0, |d| history[d][a]);
            s.push(v * hyper.state_return_scale);
        }
    }
    let window = &history[history.len().saturating_sub(hyper.topk_window)..];
    let mut counts = vec![0.0; n];
    for day in window {
        for a in top_k_indices(day, hyper.top_k.min(n)) {
            counts[a] += 1.0;
        }
    }
    s.extend(counts.iter().map(|c| if window.is_empty() { 0.0 } else { c / window.len() as f64 }));
    match last_action {
        Some(w) => s.extend_from_slice(w),
        None => s.extend(std::iter::repeat(0.0).take(n)),
    }
    s.extend_from_slice(reference);
    (s, history.len() < days)
}

/// Reference-weight block of a state built by [`build_state`].
pub fn state_reference(state: &[f64], n_agents: usize) -> &[f64] {
    &state[state.len() - n_agents..]
}

/// `softmax(logits / temperature)`; non-finite logits are an error.
pub fn policy_forward(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("policy logits".into()));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Indices of the `k` largest entries, ties to the lower index, in index order.
pub fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut keep = order[..k.min(v.len())].to_vec();
    keep.sort_unstable();
    keep
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedAction {
    pub weights: Vec<f64>,
    pub selected: Vec<usize>,
    /// True when the kept entries summed to zero and were replaced by uniform.
    pub fallback: bool,
}

/// Keeps the `k` largest entries of `probs + beta_ref * reference` and renormalizes.
pub fn select_action(probs: &[f64], reference: &[f64], beta_ref: f64, k: usize) -> MaskedAction {
    let v: Vec<f64> = probs.iter().zip(reference).map(|(p, r)| p + beta_ref * r).collect();
    let selected = top_k_indices(&v, k);
    if beta_ref == 0.0 && selected.len() == v.len() {
        return MaskedAction { weights: probs.to_vec(), selected, fallback: false };
    }
    let total: f64 = selected.iter().map(|&a| v[a]).sum();
    let mut weights = vec![0.0; v.len()];
    let fallback = !(total > 0.0 && total.is_finite());
    for &a in &selected {
        weights[a] = if fallback { 1.0 / selected.len() as f64 } else { v[a] / total };
    }
    if fallback {
        log::warn!("masked action summed to zero; uniform over the selected agents");
    }
    MaskedAction { weights, selected, fallback }
}

/// Hindsight weights: top-`k` agents by realized return, proportional to
/// their positive parts, or equal when none is positive.
pub fn expert_action(returns: &[f64], k: usize) -> Vec<f64> {
    let selected = top_k_indices(returns, k);
    let positive: f64 = selected.iter().map(|&a| returns[a].max(0.0)).sum();
    let mut w = vec![0.0; returns.len()];
    for &a in &selected {
        w[a] = if positive > 0.0 { returns[a].max(0.0) / positive } else { 1.0 / selected.len() as f64 };
    }
    w
}

/// Excess of the allocation's return over the default allocation's, scaled.
pub fn compute_reward(portfolio_return: f64, default_return: f64, scale: f64) -> f64 {
    scale * (portfolio_return - default_return)
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}
