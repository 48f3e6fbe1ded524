use rand::Rng;

use super::nn::{Mlp, MlpTrace};
use crate::error::{invalid, Result};

/// Separate actor and critic tanh MLPs over one flat parameter vector.
///
/// The actor's output holds the gate logits followed by the qubit logits;
/// the two heads are independent categoricals.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    actor: Mlp,
    critic: Mlp,
    gate_dim: usize,
    qubit_dim: usize,
    params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub gate_log_probs: Vec<f64>,
    pub qubit_log_probs: Vec<f64>,
    pub value: f64,
}

impl PolicyOutput {
    pub fn log_prob(&self, gate: usize, qubit: usize) -> f64 {
        self.gate_log_probs[gate] + self.qubit_log_probs[qubit]
    }

    /// Sum of both heads' entropies.
    pub fn entropy(&self) -> f64 {
        entropy(&self.gate_log_probs) + entropy(&self.qubit_log_probs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledAction {
    pub gate: usize,
    pub qubit: usize,
    pub log_prob: f64,
    pub value: f64,
}

pub(crate) struct PolicyTrace {
    pub actor: MlpTrace,
    pub critic: MlpTrace,
    pub out: PolicyOutput,
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(
        obs_len: usize,
        gate_dim: usize,
        qubit_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if obs_len == 0 || gate_dim == 0 || qubit_dim == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(invalid("policy dimensions must be positive"));
        }
        let mut actor_sizes = vec![obs_len];
        actor_sizes.extend_from_slice(hidden);
        let mut critic_sizes = actor_sizes.clone();
        actor_sizes.push(gate_dim + qubit_dim);
        critic_sizes.push(1);
        let actor = Mlp::new(actor_sizes, 0);
        let critic = Mlp::new(critic_sizes, actor.num_params());
        let mut params = vec![0.0; actor.num_params() + critic.num_params()];

        let hidden_gain = std::f64::consts::SQRT_2;
        let mut gains = vec![hidden_gain; hidden.len()];
        gains.push(0.01);
        actor.init(&mut params, &gains, rng);
        *gains.last_mut().unwrap() = 1.0;
        critic.init(&mut params, &gains, rng);
        Ok(Self { actor, critic, gate_dim, qubit_dim, params })
    }

    pub fn obs_len(&self) -> usize {
        self.actor.input_len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.gate_dim, self.qubit_dim)
    }

    pub fn hidden(&self) -> &[usize] {
        let s = self.actor.sizes();
        &s[1..s.len() - 1]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(crate::Error::ParamCountMismatch { expected: self.params.len(), actual: params.len() });
        }
        self.params = params;
        Ok(())
    }

    fn check(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_len() {
            return Err(invalid(format!("observation has {} entries, policy expects {}", obs.len(), self.obs_len())));
        }
        Ok(())
    }

    pub(crate) fn trace(&self, obs: &[f64]) -> PolicyTrace {
        let actor = self.actor.forward(&self.params, obs);
        let critic = self.critic.forward(&self.params, obs);
        let logits = actor.output();
        let out = PolicyOutput {
            gate_log_probs: log_softmax(&logits[..self.gate_dim]),
            qubit_log_probs: log_softmax(&logits[self.gate_dim..]),
            value: critic.output()[0],
        };
        PolicyTrace { actor, critic, out }
    }

    /// Adds parameter gradients given loss derivatives w.r.t. the logits of
    /// both heads (concatenated) and the value.
    pub(crate) fn backward(&self, trace: &PolicyTrace, d_logits: &[f64], d_value: f64, grad: &mut [f64]) {
        self.actor.backward(&self.params, &trace.actor, d_logits, grad);
        self.critic.backward(&self.params, &trace.critic, &[d_value], grad);
    }

    pub fn evaluate(&self, obs: &[f64]) -> Result<PolicyOutput> {
        self.check(obs)?;
        Ok(self.trace(obs).out)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        self.check(obs)?;
        Ok(self.critic.forward(&self.params, obs).output()[0])
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<SampledAction> {
        let out = self.evaluate(obs)?;
        let gate = sample_categorical(&out.gate_log_probs, rng);
        let qubit = sample_categorical(&out.qubit_log_probs, rng);
        Ok(SampledAction { gate, qubit, log_prob: out.log_prob(gate, qubit), value: out.value })
    }

    /// Most likely index of each head.
    pub fn greedy(&self, obs: &[f64]) -> Result<SampledAction> {
        let out = self.evaluate(obs)?;
        let gate = crate::quantum::argmax(&out.gate_log_probs);
        let qubit = crate::quantum::argmax(&out.qubit_log_probs);
        Ok(SampledAction { gate, qubit, log_prob: out.log_prob(gate, qubit), value: out.value })
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn entropy(log_probs: &[f64]) -> f64 {
    -log_probs.iter().map(|lp| lp.exp() * lp).sum::<f64>()
}

fn sample_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}
