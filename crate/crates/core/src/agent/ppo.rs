use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::Policy;
use crate::error::{invalid, Error, Result};
use crate::optim::Adam;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub n_steps: usize,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub total_steps: u64,
    pub adam_epsilon: f64,
    pub hidden: Vec<usize>,
    pub normalize_advantage: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            n_steps: 128,
            batch_size: 128,
            n_epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            ent_coef: 0.03,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            total_steps: 100_000,
            adam_epsilon: 1e-5,
            hidden: vec![64, 64],
            normalize_advantage: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.n_steps == 0 || self.batch_size == 0 || self.n_epochs == 0 {
            return Err(invalid("ppo learning rate, n_steps, batch_size and n_epochs must be positive"));
        }
        if self.batch_size > self.n_steps {
            return Err(invalid("ppo batch_size cannot exceed n_steps"));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(invalid("gamma and gae_lambda must lie in [0, 1]"));
        }
        if !(self.clip_range > 0.0) || !(self.max_grad_norm > 0.0) || self.ent_coef < 0.0 || self.vf_coef < 0.0 {
            return Err(invalid("ppo clip range, grad norm and loss coefficients are out of range"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid("ppo hidden layer sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub gates: Vec<usize>,
    pub qubits: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Whether the episode ended with this transition.
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, obs: Vec<f64>, gate: usize, qubit: usize, log_prob: f64, reward: f64, done: bool, value: f64) {
        self.observations.push(obs);
        self.gates.push(gate);
        self.qubits.push(qubit);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.dones.push(done);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    /// Fills `advantages` and `returns`; `last_value` bootstraps a trailing
    /// unfinished episode.
    pub fn finish(&mut self, last_value: f64, gamma: f64, lambda: f64) -> Result<()> {
        let (adv, ret) = compute_gae(&self.rewards, &self.values, &self.dones, last_value, gamma, lambda)?;
        self.advantages = adv;
        self.returns = ret;
        Ok(())
    }
}

/// Generalized advantage estimates and value targets.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(invalid("cannot compute advantages of an empty rollout"));
    }
    if values.len() != n || dones.len() != n {
        return Err(invalid("rollout columns differ in length"));
    }
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        gae = delta + gamma * lambda * not_done * gae;
        adv[t] = gae;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    /// Mean of `min(rho * A, clip(rho) * A)`.
    pub surrogate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean summed entropy of both heads.
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub total_loss: f64,
}

/// One optimization batch; indices refer into a [`RolloutBuffer`].
pub struct Minibatch<'a> {
    pub buffer: &'a RolloutBuffer,
    pub indices: &'a [usize],
}

/// Loss and its gradient w.r.t. all policy parameters for one minibatch.
pub fn ppo_loss_and_grad(policy: &Policy, mb: &Minibatch<'_>, cfg: &PpoConfig) -> Result<(LossStats, Vec<f64>)> {
    let n = mb.indices.len();
    if n == 0 {
        return Err(invalid("empty minibatch"));
    }
    let b = mb.buffer;
    let mut adv: Vec<f64> = mb.indices.iter().map(|&i| b.advantages[i]).collect();
    if cfg.normalize_advantage && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
    }

    let (gate_dim, _) = policy.dims();
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; policy.num_params()];
    let mut stats = LossStats::default();
    for (k, &i) in mb.indices.iter().enumerate() {
        let trace = policy.trace(&b.observations[i]);
        let out = &trace.out;
        let (g, q) = (b.gates[i], b.qubits[i]);
        let log_ratio = out.log_prob(g, q) - b.log_probs[i];
        let ratio = log_ratio.exp();
        let a = adv[k];
        let clipped = ratio.clamp(1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
        let unclipped_branch = ratio * a <= clipped * a;
        stats.surrogate += inv_n * (ratio * a).min(clipped * a);
        if (ratio - 1.0).abs() > cfg.clip_range {
            stats.clip_fraction += inv_n;
        }
        stats.approx_kl += inv_n * ((ratio - 1.0) - log_ratio);
        let h = out.entropy();
        stats.entropy += inv_n * h;
        let v_err = out.value - b.returns[i];
        stats.value_loss += inv_n * v_err * v_err;

        // d loss / d log pi(a|s); the clipped branch carries no gradient
        let d_logp = if unclipped_branch { -inv_n * a * ratio } else { 0.0 };
        let d_h = -cfg.ent_coef * inv_n;
        let mut d_logits = Vec::with_capacity(gate_dim + out.qubit_log_probs.len());
        for (head, chosen) in [(&out.gate_log_probs, g), (&out.qubit_log_probs, q)] {
            let h_head = super::policy::entropy(head);
            for (j, &lp) in head.iter().enumerate() {
                let p = lp.exp();
                let onehot = if j == chosen { 1.0 } else { 0.0 };
                d_logits.push(d_logp * (onehot - p) + d_h * (-p * (lp + h_head)));
            }
        }
        let d_value = cfg.vf_coef * 2.0 * inv_n * v_err;
        policy.backward(&trace, &d_logits, d_value, &mut grad);
    }
    stats.policy_loss = -stats.surrogate;
    stats.total_loss = stats.policy_loss - cfg.ent_coef * stats.entropy + cfg.vf_coef * stats.value_loss;
    if !stats.total_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "ppo loss (policy {}, value {}, entropy {})",
            stats.policy_loss, stats.value_loss, stats.entropy
        )));
    }
    Ok((stats, grad))
}

/// Scales `grad` so its L2 norm is at most `max_norm`; returns the norm before scaling.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let coef = max_norm / (norm + 1e-6);
    if coef < 1.0 {
        grad.iter_mut().for_each(|g| *g *= coef);
    }
    norm
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Averages over the last epoch's minibatches.
    pub last_epoch: LossStats,
    /// Stats of the very first minibatch, taken before any parameter change.
    pub first_minibatch: LossStats,
    pub explained_variance: f64,
    pub minibatches: usize,
    pub mean_grad_norm: f64,
}

/// Runs `n_epochs` of shuffled minibatch updates over a finished buffer.
/// A trailing partial minibatch is dropped.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut Policy,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if buffer.advantages.len() != buffer.len() || buffer.is_empty() {
        return Err(invalid("rollout advantages have not been computed"));
    }
    let per_epoch = buffer.len() / cfg.batch_size;
    if per_epoch == 0 {
        return Err(invalid("rollout is shorter than one minibatch"));
    }
    let mut stats = UpdateStats { explained_variance: explained_variance(&buffer.values, &buffer.returns), ..Default::default() };
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut grad_norms = 0.0;
    for epoch in 0..cfg.n_epochs {
        order.shuffle(rng);
        let mut epoch_stats = LossStats::default();
        for (m, chunk) in order.chunks_exact(cfg.batch_size).enumerate() {
            let (s, mut grad) = ppo_loss_and_grad(policy, &Minibatch { buffer, indices: chunk }, cfg)?;
            if epoch == 0 && m == 0 {
                stats.first_minibatch = s;
            }
            grad_norms += clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(policy.params_mut(), &grad);
            stats.minibatches += 1;
            let w = 1.0 / per_epoch as f64;
            epoch_stats.surrogate += w * s.surrogate;
            epoch_stats.policy_loss += w * s.policy_loss;
            epoch_stats.value_loss += w * s.value_loss;
            epoch_stats.entropy += w * s.entropy;
            epoch_stats.approx_kl += w * s.approx_kl;
            epoch_stats.clip_fraction += w * s.clip_fraction;
            epoch_stats.total_loss += w * s.total_loss;
        }
        stats.last_epoch = epoch_stats;
    }
    stats.mean_grad_norm = grad_norms / stats.minibatches as f64;
    if policy.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("policy parameters after update".into()));
    }
    Ok(stats)
}

fn explained_variance(values: &[f64], returns: &[f64]) -> f64 {
    let n = returns.len() as f64;
    let var = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
    };
    let var_ret = var(&mut returns.iter().copied());
    if var_ret == 0.0 {
        return f64::NAN;
    }
    1.0 - var(&mut returns.iter().zip(values).map(|(r, v)| r - v)) / var_ret
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gae_terminal_step() {
        let (a, r) = compute_gae(&[2.0], &[0.5], &[true], 9.0, 0.99, 0.95).unwrap();
        assert_eq!(a, vec![1.5]);
        assert_eq!(r, vec![2.0]);
    }

    #[test]
    fn gae_with_zero_gamma() {
        let rewards = [1.0, -2.0, 0.5];
        let values = [0.3, 0.1, -0.4];
        let (a, _) = compute_gae(&rewards, &values, &[false, false, false], 7.0, 0.0, 0.95).unwrap();
        for t in 0..3 {
            assert!((a[t] - (rewards[t] - values[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_lambda_one_is_monte_carlo() {
        // three-step episode ending in a terminal state
        let (g, rewards, values) = (0.9, [1.0, 0.0, 2.0], [0.5, 0.2, 1.0]);
        let (a, ret) = compute_gae(&rewards, &values, &[false, false, true], 5.0, g, 1.0).unwrap();
        let mc = [1.0 + g * 0.0 + g * g * 2.0, 0.0 + g * 2.0, 2.0];
        for t in 0..3 {
            assert!((a[t] - (mc[t] - values[t])).abs() < 1e-12);
            assert!((ret[t] - mc[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_bootstraps_and_resets() {
        let (a, _) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[true, false], 10.0, 0.5, 1.0).unwrap();
        assert_eq!(a, vec![1.0, 6.0]);
        assert!(compute_gae(&[], &[], &[], 0.0, 0.9, 0.9).is_err());
    }

    #[test]
    fn clip_grad_norm_scales() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        assert!((g[0] - 0.3).abs() < 1e-6 && (g[1] - 0.4).abs() < 1e-6);
        let mut small = vec![0.1, 0.0];
        clip_grad_norm(&mut small, 0.5);
        assert_eq!(small, vec![0.1, 0.0]);
    }

    fn toy_buffer(policy: &Policy, rng: &mut ChaCha8Rng, n: usize) -> RolloutBuffer {
        let mut b = RolloutBuffer::default();
        for _ in 0..n {
            let obs = vec![rng.gen_range(-1.0..1.0)];
            let s = policy.sample(&obs, rng).unwrap();
            b.push(obs, s.gate, s.qubit, s.log_prob, rng.gen_range(-1.0..1.0), true, s.value);
        }
        b.advantages = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        b.returns = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        b
    }

    #[test]
    fn unit_ratio_surrogate_is_mean_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let policy = Policy::new(1, 3, 2, &[4], &mut rng).unwrap();
        let b = toy_buffer(&policy, &mut rng, 16);
        let idx: Vec<usize> = (0..16).collect();
        let cfg = PpoConfig { normalize_advantage: false, ..PpoConfig::default() };
        let (s, _) = ppo_loss_and_grad(&policy, &Minibatch { buffer: &b, indices: &idx }, &cfg).unwrap();
        let mean = b.advantages.iter().sum::<f64>() / 16.0;
        assert!((s.surrogate - mean).abs() < 1e-12);
        assert!(s.approx_kl.abs() < 1e-12);
        assert_eq!(s.clip_fraction, 0.0);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut policy = Policy::new(1, 2, 1, &[1], &mut rng).unwrap();
        assert_eq!(policy.num_params(), 12);
        for p in policy.params_mut() {
            *p += rng.gen_range(-0.5..0.5);
        }
        let mut b = toy_buffer(&policy, &mut rng, 8);
        // move old log-probs so some ratios differ from one without clipping
        for lp in b.log_probs.iter_mut() {
            *lp += rng.gen_range(-0.1..0.1);
        }
        let idx: Vec<usize> = (0..8).collect();
        let cfg = PpoConfig { clip_range: 10.0, ..PpoConfig::default() };
        let loss = |p: &Policy| ppo_loss_and_grad(p, &Minibatch { buffer: &b, indices: &idx }, &cfg).unwrap().0.total_loss;
        let (_, grad) = ppo_loss_and_grad(&policy, &Minibatch { buffer: &b, indices: &idx }, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..policy.num_params() {
            let mut up = policy.clone();
            up.params_mut()[i] += h;
            let mut down = policy.clone();
            down.params_mut()[i] -= h;
            let fd = (loss(&up) - loss(&down)) / (2.0 * h);
            let tol = 1e-4 * fd.abs().max(grad[i].abs()).max(1e-3);
            assert!((fd - grad[i]).abs() < tol, "param {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn update_rejects_unfinished_buffer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut policy = Policy::new(1, 2, 1, &[2], &mut rng).unwrap();
        let mut adam = Adam::new(policy.num_params(), 0.003);
        let b = RolloutBuffer::default();
        assert!(ppo_update(&mut policy, &mut adam, &b, &PpoConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { batch_size: 256, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { gamma: 1.5, ..PpoConfig::default() }.validate().is_err());
    }
}
