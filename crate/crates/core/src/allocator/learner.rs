use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, Source, Transition};
use super::loss::{actor_loss, critic_loss, td_targets, LossInputs};
use super::nn::{clip_grad_norm, Adam, Mlp};
use super::reference::reference_weights;
use super::{build_state, expert_action, policy_forward, project_to_simplex, select_action, HyperParams};
use crate::agents::simplex_grid;
use crate::error::{Error, Result};

const CHECKPOINT_VERSION: u32 = 1;

/// The action chosen for one day.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub weights: Vec<f64>,
    pub probs: Vec<f64>,
    pub reference: Vec<f64>,
    /// First decision without any history: uniform weights, no training.
    pub cold_start: bool,
}

/// What the allocator saw after a day's close.
#[derive(Clone, Debug, PartialEq)]
pub struct DayOutcome {
    pub agent_returns: Vec<f64>,
    pub reward: f64,
    pub telemetry: Option<TelemetryRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub step: u64,
    #[serde(rename = "L_critic")]
    pub l_critic: f64,
    #[serde(rename = "L_PPO")]
    pub l_ppo: f64,
    #[serde(rename = "L_BC")]
    pub l_bc: f64,
    pub entropy: f64,
    pub reward: f64,
}

struct Pending {
    state: Vec<f64>,
    decision: Decision,
}

/// Online allocator over `n_agents` agents.
pub struct Allocator {
    hyper: HyperParams,
    n_agents: usize,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    beta_bc: f64,
    train_steps: u64,
    days: u64,
    history: Vec<Vec<f64>>,
    last_action: Option<Vec<f64>>,
    pending: Option<Pending>,
}

/// Serialized allocator parameters, optimizer moments and RNG position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub n_agents: usize,
    pub hyper: HyperParams,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub beta_bc: f64,
    pub train_steps: u64,
    pub rng_seed: String,
    pub rng_stream: u64,
    pub rng_word_pos: String,
}

impl Allocator {
    pub fn new(n_agents: usize, hyper: HyperParams, seed: u64) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::config("the allocator needs at least one agent"));
        }
        hyper.validate(n_agents)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = hyper.state_dim(n_agents);
        let actor = Mlp::new(dim, hyper.hidden, n_agents, &mut rng);
        let critic = Mlp::new(dim + n_agents, hyper.hidden, 1, &mut rng);
        Ok(Allocator {
            actor_opt: Adam::new(actor.params().len(), hyper.lr_actor),
            critic_opt: Adam::new(critic.params().len(), hyper.lr_critic),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            buffer: ReplayBuffer::new(hyper.buffer_capacity),
            beta_bc: hyper.beta_bc,
            hyper,
            n_agents,
            rng,
            train_steps: 0,
            days: 0,
            history: Vec::new(),
            last_action: None,
            pending: None,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Realized per-agent returns observed so far, oldest first.
    pub fn history(&self) -> &[Vec<f64>] {
        &self.history
    }

    fn current_state(&self, last_action: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
        let reference = reference_weights(&self.history, self.n_agents, &self.hyper.reference)?.weights;
        let (state, _) = build_state(&self.history, last_action, &reference, &self.hyper);
        Ok((state, reference))
    }

    /// Chooses today's agent weights from information up to the previous close.
    pub fn decide(&mut self) -> Result<Decision> {
        let (state, reference) = self.current_state(self.last_action.as_deref())?;
        let probs = policy_forward(&self.actor.forward(&state).output, self.hyper.temperature)?;
        let cold_start = self.history.is_empty() && self.last_action.is_none();
        let weights = if cold_start {
            log::debug!("allocator cold start: uniform agent weights");
            vec![1.0 / self.n_agents as f64; self.n_agents]
        } else {
            select_action(&probs, &reference, self.hyper.beta_ref, self.hyper.top_k).weights
        };
        let decision = Decision { weights, probs, reference, cold_start };
        self.pending = Some(Pending { state, decision: decision.clone() });
        Ok(decision)
    }

    /// Records the day's outcome, simulates alternative actions and trains.
    /// `evaluate` prices any agent-weight vector on the day just closed.
    pub fn observe(&mut self, evaluate: &dyn Fn(&[f64]) -> f64) -> Result<DayOutcome> {
        let Pending { state, decision } = self
            .pending
            .take()
            .ok_or_else(|| Error::Shape("observe called without a pending decision".into()))?;
        let n = self.n_agents;
        let unit = |a: usize| {
            let mut e = vec![0.0; n];
            e[a] = 1.0;
            e
        };
        let agent_returns: Vec<f64> = (0..n).map(|a| evaluate(&unit(a))).collect();
        let default_return = evaluate(&vec![1.0 / n as f64; n]);
        let scale = self.hyper.reward_scale;
        let price = |w: &[f64]| scale * (evaluate(w) - default_return);
        let reward = price(&decision.weights);
        self.history.push(agent_returns.clone());
        self.days += 1;

        let (next_state, _) = self.current_state(Some(&decision.weights))?;
        let with_action = |w: &[f64]| {
            let mut s = next_state.clone();
            let off = s.len() - 2 * n;
            s[off..off + n].copy_from_slice(w);
            s
        };
        self.buffer.push(Transition::new(
            state.clone(),
            decision.probs.clone(),
            decision.weights.clone(),
            reward,
            next_state.clone(),
            Source::Real,
        ));

        for (source, w) in self.simulate(&agent_returns, &decision.weights) {
            let r = price(&w);
            let s_next = with_action(&w);
            self.buffer.push(Transition::new(state.clone(), decision.probs.clone(), w, r, s_next, source));
        }

        let telemetry = if !decision.cold_start && self.buffer.len() >= self.hyper.batch_size {
            self.train_step(reward)
        } else {
            None
        };
        self.last_action = Some(decision.weights);
        Ok(DayOutcome { agent_returns, reward, telemetry })
    }

    fn specific_weights(&self) -> Vec<f64> {
        let window = &self.history[self.history.len().saturating_sub(self.hyper.specific_window)..];
        let grid = simplex_grid(self.n_agents, self.hyper.reference.grid_step).expect("validated step");
        let mut best = (f64::NEG_INFINITY, 0);
        for (g, w) in grid.iter().enumerate() {
            let total: f64 = window.iter().map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).sum();
            if total > best.0 {
                best = (total, g);
            }
        }
        grid[best.1].clone()
    }

    /// Draws the day's simulated actions, in draw order.
    fn simulate(&mut self, agent_returns: &[f64], current: &[f64]) -> Vec<(Source, Vec<f64>)> {
        let n = self.n_agents;
        let mixture = self.hyper.mixture.as_array();
        let sigma = self.hyper.noise;
        let expert = expert_action(agent_returns, self.hyper.top_k);
        let specific = self.specific_weights();
        let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        let mut out = Vec::with_capacity(self.hyper.simulations);
        for _ in 0..self.hyper.simulations {
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut pick = 3;
            for (k, m) in mixture.iter().enumerate() {
                acc += m;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            let source = Source::SIMULATED[pick];
            let base = match source {
                Source::Expert => expert.clone(),
                Source::Specific => specific.clone(),
                Source::Uniform => {
                    let g: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut self.rng)).collect();
                    let total: f64 = g.iter().sum();
                    g.into_iter().map(|x: f64| x / total).collect()
                }
                _ => current.to_vec(),
            };
            let w = if sigma > 0.0 {
                let perturbed: Vec<f64> = base
                    .iter()
                    .map(|x| {
                        let e: f64 = noise.sample(&mut self.rng);
                        x + e.clamp(-2.0 * sigma, 2.0 * sigma)
                    })
                    .collect();
                project_to_simplex(&perturbed)
            } else {
                base
            };
            out.push((source, w));
        }
        out
    }

    /// One round of minibatch updates; on a non-finite loss every parameter
    /// is restored and `None` is returned.
    fn train_step(&mut self, reward: f64) -> Option<TelemetryRow> {
        let saved = (
            self.actor.clone(),
            self.critic.clone(),
            self.actor_opt.clone(),
            self.critic_opt.clone(),
        );
        let mut sums = [0.0; 4];
        let mut count = 0.0f64;
        let mut failed = None;
        'epochs: for _ in 0..self.hyper.ppo_epochs {
            let idx = self.buffer.shuffled_indices(&mut self.rng);
            for chunk in idx.chunks(self.hyper.batch_size).take(self.hyper.max_minibatches) {
                let batch: Vec<&Transition> = chunk.iter().map(|&i| self.buffer.get(i)).collect();
                let inp = LossInputs {
                    actor: &self.actor,
                    critic: &self.critic,
                    actor_target: &self.actor_target,
                    critic_target: &self.critic_target,
                    hyper: &self.hyper,
                    beta_bc: self.beta_bc,
                };
                let targets = match td_targets(&inp, &batch) {
                    Ok(y) => y,
                    Err(e) => {
                        failed = Some(e.to_string());
                        break 'epochs;
                    }
                };
                let critic_step = critic_loss(&inp, &batch, &targets);
                let (lc, mut gc) = match critic_step {
                    Ok((l, g)) if l.is_finite() && g.iter().all(|v| v.is_finite()) => (l, g),
                    Ok((l, _)) => {
                        failed = Some(format!("critic loss {l}"));
                        break 'epochs;
                    }
                    Err(e) => {
                        failed = Some(e.to_string());
                        break 'epochs;
                    }
                };
                let actor_step = actor_loss(&inp, &batch, &targets);
                let (la, mut ga) = match actor_step {
                    Ok((l, g)) if l.total.is_finite() && g.iter().all(|v| v.is_finite()) => (l, g),
                    Ok((l, _)) => {
                        failed = Some(format!("actor loss {}", l.total));
                        break 'epochs;
                    }
                    Err(e) => {
                        failed = Some(e.to_string());
                        break 'epochs;
                    }
                };
                clip_grad_norm(&mut gc, self.hyper.grad_clip);
                clip_grad_norm(&mut ga, self.hyper.grad_clip);
                self.critic_opt.step(self.critic.params_mut(), &gc);
                self.actor_opt.step(self.actor.params_mut(), &ga);
                sums[0] += lc;
                sums[1] += la.ppo;
                sums[2] += la.bc;
                sums[3] += la.entropy;
                count += 1.0;
            }
        }
        if let Some(reason) = failed {
            log::warn!("training step skipped, parameters kept: {reason}");
            (self.actor, self.critic, self.actor_opt, self.critic_opt) = saved;
            return None;
        }
        self.actor_target.soft_update(&self.actor, self.hyper.tau_soft);
        self.critic_target.soft_update(&self.critic, self.hyper.tau_soft);
        self.beta_bc *= self.hyper.beta_decay;
        self.train_steps += 1;
        let c = count.max(1.0);
        Some(TelemetryRow {
            step: self.days,
            l_critic: sums[0] / c,
            l_ppo: sums[1] / c,
            l_bc: sums[2] / c,
            entropy: sums[3] / c,
            reward,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            n_agents: self.n_agents,
            hyper: self.hyper.clone(),
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            actor_target: self.actor_target.clone(),
            critic_target: self.critic_target.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            beta_bc: self.beta_bc,
            train_steps: self.train_steps,
            rng_seed: hex::encode(self.rng.get_seed()),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
        }
    }

    /// An allocator with the checkpoint's networks, optimizers and RNG
    /// position, and an empty buffer and history.
    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", c.version)));
        }
        c.hyper.validate(c.n_agents)?;
        let dim = c.hyper.state_dim(c.n_agents);
        if c.actor.n_in() != dim || c.actor.n_out() != c.n_agents || c.critic.n_in() != dim + c.n_agents {
            return Err(Error::Checkpoint("network shapes do not match the hyperparameters".into()));
        }
        let seed: [u8; 32] = hex::decode(&c.rng_seed)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Checkpoint("malformed RNG seed".into()))?;
        let word_pos: u128 = c
            .rng_word_pos
            .parse()
            .map_err(|_| Error::Checkpoint("malformed RNG position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(c.rng_stream);
        rng.set_word_pos(word_pos);
        Ok(Allocator {
            buffer: ReplayBuffer::new(c.hyper.buffer_capacity),
            hyper: c.hyper,
            n_agents: c.n_agents,
            actor: c.actor,
            critic: c.critic,
            actor_target: c.actor_target,
            critic_target: c.critic_target,
            actor_opt: c.actor_opt,
            critic_opt: c.critic_opt,
            rng,
            beta_bc: c.beta_bc,
            train_steps: c.train_steps,
            days: 0,
            history: Vec::new(),
            last_action: None,
            pending: None,
        })
    }
}
