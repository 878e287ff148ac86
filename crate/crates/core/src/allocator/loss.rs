use super::buffer::{soft_log_prob, Source, Transition};
use super::nn::Mlp;
use super::{entropy, policy_forward, select_action, state_reference, HyperParams};
use crate::error::{Error, Result};

/// Below this a masked prediction counts as zero inside the log of the
/// imitation cross-entropy.
const LOG_FLOOR: f64 = 1e-12;

/// Online and target networks plus the coefficients a loss evaluation needs.
#[derive(Clone, Copy)]
pub struct LossInputs<'a> {
    pub actor: &'a Mlp,
    pub critic: &'a Mlp,
    pub actor_target: &'a Mlp,
    pub critic_target: &'a Mlp,
    pub hyper: &'a HyperParams,
    pub beta_bc: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActorLosses {
    pub ppo: f64,
    pub mse: f64,
    pub entropy: f64,
    pub bc: f64,
    pub total: f64,
}

fn critic_input(state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + action.len());
    x.extend_from_slice(state);
    x.extend_from_slice(action);
    x
}

/// Deployed action the target policy would take in `state`.
pub fn next_action(actor_target: &Mlp, state: &[f64], hyper: &HyperParams) -> Result<Vec<f64>> {
    let n = actor_target.n_out();
    let probs = policy_forward(&actor_target.forward(state).output, hyper.temperature)?;
    Ok(select_action(&probs, state_reference(state, n), hyper.beta_ref, hyper.top_k).weights)
}

/// `r + gamma * Q'(s', a')` with `a'` from the target policy.
pub fn td_targets(inp: &LossInputs<'_>, batch: &[&Transition]) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            if inp.hyper.gamma == 0.0 {
                return Ok(t.reward());
            }
            let a_next = next_action(inp.actor_target, t.next_state(), inp.hyper)?;
            let q_next = inp.critic_target.forward(&critic_input(t.next_state(), &a_next)).output[0];
            Ok(t.reward() + inp.hyper.gamma * q_next)
        })
        .collect()
}

fn check_batch(batch: &[&Transition], targets: &[f64]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Shape("empty training batch".into()));
    }
    if batch.len() != targets.len() {
        return Err(Error::Shape(format!("{} targets for {} transitions", targets.len(), batch.len())));
    }
    Ok(())
}

/// Mean squared TD error against `targets` (see [`td_targets`]) and its
/// gradient with respect to the critic parameters.
pub fn critic_loss(inp: &LossInputs<'_>, batch: &[&Transition], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_batch(batch, targets)?;
    let y = targets;
    let b = batch.len() as f64;
    let mut grad = vec![0.0; inp.critic.params().len()];
    let mut loss = 0.0;
    for (t, target) in batch.iter().zip(y) {
        let x = critic_input(t.state(), t.action());
        let trace = inp.critic.forward(&x);
        let err = target - trace.output[0];
        loss += err * err / b;
        inp.critic.backward(&x, &trace, &[-2.0 * err / b], &mut grad);
    }
    Ok((loss, grad))
}

/// Actor objective `beta_ppo * L_ppo + beta_mse * MSE - beta_entropy * H + beta_bc * L_bc`
/// and its gradient with respect to the actor parameters.
///
/// The advantage `r + gamma * Q'(s', a') - Q(s, a)` is held fixed. The masked
/// prediction is differentiated with its top-k support held fixed.
pub fn actor_loss(inp: &LossInputs<'_>, batch: &[&Transition], targets: &[f64]) -> Result<(ActorLosses, Vec<f64>)> {
    check_batch(batch, targets)?;
    let h = inp.hyper;
    let n = inp.actor.n_out();
    let y = targets;
    let b = batch.len() as f64;
    let n_expert = batch.iter().filter(|t| t.source() == Source::Expert).count();
    let mut out = ActorLosses::default();
    let mut grad = vec![0.0; inp.actor.params().len()];

    for (t, target) in batch.iter().zip(y) {
        let advantage = target - inp.critic.forward(&critic_input(t.state(), t.action())).output[0];
        let trace = inp.actor.forward(t.state());
        let p = policy_forward(&trace.output, h.temperature)?;
        let w = t.action();

        // Clipped surrogate on the soft log-probability of the stored action.
        let ratio = (soft_log_prob(w, &p) - t.log_pi_old()).exp();
        let clipped = ratio.clamp(1.0 - h.clip_eps, 1.0 + h.clip_eps);
        let unclipped_branch = ratio * advantage <= clipped * advantage;
        out.ppo -= (ratio * advantage).min(clipped * advantage) / b;
        let mut d_logits = vec![0.0; n];
        if unclipped_branch {
            let coef = -h.beta_ppo * advantage * ratio / b;
            for j in 0..n {
                d_logits[j] += coef * (w[j] - p[j]) / h.temperature;
            }
        }

        // Entropy bonus.
        let ent = entropy(&p);
        out.entropy += ent / b;
        for j in 0..n {
            if p[j] > 0.0 {
                d_logits[j] += h.beta_entropy * p[j] * (p[j].ln() + ent) / h.temperature / b;
            }
        }

        // Masked prediction terms.
        let reference = state_reference(t.state(), n);
        let masked = select_action(&p, reference, h.beta_ref, h.top_k);
        let q = &masked.weights;
        let mut d_q = vec![0.0; n];
        let mse: f64 = q.iter().zip(w).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / n as f64;
        out.mse += mse / b;
        for j in 0..n {
            d_q[j] += h.beta_mse * 2.0 * (q[j] - w[j]) / n as f64 / b;
        }
        if t.source() == Source::Expert {
            let e = n_expert as f64;
            let ce: f64 = -w.iter().zip(q).map(|(c, a)| if *c == 0.0 { 0.0 } else { c * a.max(LOG_FLOOR).ln() }).sum::<f64>();
            out.bc += (mse + 0.5 * ce) / e;
            for j in 0..n {
                d_q[j] += inp.beta_bc * 2.0 * (q[j] - w[j]) / n as f64 / e;
                if q[j] > LOG_FLOOR && w[j] != 0.0 {
                    d_q[j] -= inp.beta_bc * 0.5 * w[j] / q[j] / e;
                }
            }
        }
        if !masked.fallback {
            let v: Vec<f64> = p.iter().zip(reference).map(|(a, r)| a + h.beta_ref * r).collect();
            let total: f64 = masked.selected.iter().map(|&l| v[l]).sum();
            let mut d_p = vec![0.0; n];
            for &l in &masked.selected {
                d_p[l] = masked.selected.iter().map(|&j| d_q[j] * (f64::from(j == l) - q[j])).sum::<f64>() / total;
            }
            let dot: f64 = d_p.iter().zip(&p).map(|(a, c)| a * c).sum();
            for m in 0..n {
                d_logits[m] += p[m] * (d_p[m] - dot) / h.temperature;
            }
        }

        inp.actor.backward(t.state(), &trace, &d_logits, &mut grad);
    }
    out.total = h.beta_ppo * out.ppo + h.beta_mse * out.mse - h.beta_entropy * out.entropy + inp.beta_bc * out.bc;
    Ok((out, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{build_state, expert_action};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clip_arithmetic() {
        let surrogate = |ratio: f64, adv: f64, eps: f64| (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv);
        assert!((surrogate(1.3, 1.0, 0.2) - 1.2).abs() < 1e-15);
        // With a negative advantage the lower bound binds: min(-0.7, -0.8) = -0.8.
        assert!((surrogate(0.7, -1.0, 0.2) + 0.8).abs() < 1e-15);
        assert!((surrogate(0.9, -1.0, 0.2) + 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_discount_advantage_is_reward_minus_q() {
        let h = HyperParams { gamma: 0.0, history_days: 2, hidden: 8, ..HyperParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = h.state_dim(4);
        let actor = Mlp::new(dim, 8, 4, &mut rng);
        let critic = Mlp::new(dim + 4, 8, 1, &mut rng);
        let s: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = Transition::new(s.clone(), vec![0.25; 4], vec![0.5, 0.5, 0.0, 0.0], 0.3, s.clone(), Source::Real);
        let inp = LossInputs { actor: &actor, critic: &critic, actor_target: &actor, critic_target: &critic, hyper: &h, beta_bc: 1.0 };
        let (loss, _) = critic_loss(&inp, &[&t], &td_targets(&inp, &[&t]).unwrap()).unwrap();
        let q = critic.forward(&critic_input(&s, t.action())).output[0];
        assert!((loss - (0.3 - q).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn matching_expert_leaves_self_entropy() {
        // With the prediction equal to the expert, L_bc = 0 + H(expert) / 2.
        let h = HyperParams { history_days: 1, hidden: 4, top_k: 4, beta_ref: 0.0, ..HyperParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = h.state_dim(4);
        let mut actor = Mlp::new(dim, 4, 4, &mut rng);
        actor.params_mut().iter_mut().for_each(|v| *v = 0.0);
        let critic = Mlp::new(dim + 4, 4, 1, &mut rng);
        let (s, _) = build_state(&[], None, &[0.0; 4], &h);
        let expert = vec![0.25; 4];
        let t = Transition::new(s.clone(), vec![0.25; 4], expert.clone(), 0.0, s, Source::Expert);
        let inp = LossInputs { actor: &actor, critic: &critic, actor_target: &actor, critic_target: &critic, hyper: &h, beta_bc: 1.0 };
        let (l, _) = actor_loss(&inp, &[&t], &td_targets(&inp, &[&t]).unwrap()).unwrap();
        assert!((l.bc - 0.5 * entropy(&expert)).abs() < 1e-12);
        assert_eq!(expert_action(&[0.1, 0.1, 0.1, 0.1], 4), expert);
    }
}
