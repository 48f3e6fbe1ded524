//! Outer-loop learners: PPO with a two-head categorical policy, and a
//! uniform-random baseline.

mod checkpoint;
mod nn;
mod policy;
mod ppo;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use nn::{orthogonal, Mlp};
pub use policy::{entropy, log_softmax, Policy, PolicyOutput, SampledAction};
pub use ppo::{
    clip_grad_norm, compute_gae, ppo_loss_and_grad, ppo_update, LossStats, Minibatch, PpoConfig, RolloutBuffer,
    UpdateStats,
};

use crate::environment::{Action, QasEnv, StepInfo};
use crate::error::{invalid, Result};
use crate::inner_loop::CircuitEvaluator;
use crate::optim::Adam;

/// An episodic environment with a two-component discrete action.
pub trait MultiDiscreteEnv {
    type Info;

    fn observation_len(&self) -> usize;
    /// Sizes of the two action components.
    fn action_dims(&self) -> (usize, usize);
    fn reset(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, a: usize, b: usize) -> Result<EnvStep<Self::Info>>;
}

pub struct EnvStep<I> {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: I,
}

impl<E: CircuitEvaluator> MultiDiscreteEnv for QasEnv<E> {
    type Info = StepInfo;

    fn observation_len(&self) -> usize {
        let c = self.config();
        c.num_qubits * (crate::circuits::GATE_SET_SIZE + c.num_qubits - 1) * c.max_depth
    }

    fn action_dims(&self) -> (usize, usize) {
        (self.action_space().num_gate_choices(), self.action_space().num_qubit_choices())
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        Ok(QasEnv::reset(self).to_observation())
    }

    fn step(&mut self, a: usize, b: usize) -> Result<EnvStep<StepInfo>> {
        let s = QasEnv::step(self, Action::new(a, b))?;
        Ok(EnvStep { observation: s.observation.to_observation(), reward: s.reward, done: s.done, info: s.info })
    }
}

/// What a learner reports after each environment step.
pub struct StepRecord<'a, I> {
    /// 1-based count of steps taken in this run.
    pub step: u64,
    /// 0-based index of the episode this step belongs to.
    pub episode: u64,
    pub action: (usize, usize),
    pub reward: f64,
    pub done: bool,
    pub episode_return: f64,
    pub info: &'a I,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    /// Completed episodes.
    pub episodes: u64,
    pub updates: u64,
    pub stopped_early: bool,
    pub last_update: Option<UpdateStats>,
}

#[derive(Default)]
struct Counters {
    steps: u64,
    episodes: u64,
    episode_return: f64,
}

impl Counters {
    fn record<'a, I>(&mut self, action: (usize, usize), step: &'a EnvStep<I>) -> StepRecord<'a, I> {
        self.steps += 1;
        self.episode_return += step.reward;
        StepRecord {
            step: self.steps,
            episode: self.episodes,
            action,
            reward: step.reward,
            done: step.done,
            episode_return: self.episode_return,
            info: &step.info,
        }
    }

    fn end_step(&mut self, done: bool) {
        if done {
            self.episodes += 1;
            self.episode_return = 0.0;
        }
    }
}

fn check_dims<E: MultiDiscreteEnv>(env: &E, policy: &Policy) -> Result<()> {
    if env.observation_len() != policy.obs_len() || env.action_dims() != policy.dims() {
        return Err(invalid(format!(
            "environment (obs {}, actions {:?}) does not match policy (obs {}, actions {:?})",
            env.observation_len(),
            env.action_dims(),
            policy.obs_len(),
            policy.dims()
        )));
    }
    Ok(())
}

/// PPO learner state: network, optimizer, sampling RNG and progress.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoAgent {
    cfg: PpoConfig,
    policy: Policy,
    adam: Adam,
    rng: ChaCha8Rng,
    steps_done: u64,
    episodes_done: u64,
    updates_done: u64,
}

impl PpoAgent {
    pub fn new(obs_len: usize, dims: (usize, usize), cfg: PpoConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = Policy::new(obs_len, dims.0, dims.1, &cfg.hidden, &mut rng)?;
        let adam = Adam::with_epsilon(policy.num_params(), cfg.learning_rate, cfg.adam_epsilon);
        Ok(Self { cfg, policy, adam, rng, steps_done: 0, episodes_done: 0, updates_done: 0 })
    }

    pub fn for_env<E: MultiDiscreteEnv>(env: &E, cfg: PpoConfig, seed: u64) -> Result<Self> {
        Self::new(env.observation_len(), env.action_dims(), cfg, seed)
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// (steps, completed episodes, updates) so far.
    pub fn progress(&self) -> (u64, u64, u64) {
        (self.steps_done, self.episodes_done, self.updates_done)
    }

    /// Collects rollouts and updates the policy until `total_steps` steps
    /// have been taken or `on_step` asks to stop. Rollouts shorter than one
    /// minibatch (only possible at the very end) are not trained on.
    pub fn train<E, F, G>(&mut self, env: &mut E, mut on_step: F, mut on_update: G) -> Result<TrainSummary>
    where
        E: MultiDiscreteEnv,
        F: FnMut(&StepRecord<'_, E::Info>) -> Result<Control>,
        G: FnMut(&PpoAgent, &UpdateStats) -> Result<()>,
    {
        check_dims(env, &self.policy)?;
        let mut counters = Counters { steps: self.steps_done, episodes: self.episodes_done, episode_return: 0.0 };
        let mut summary = TrainSummary::default();
        let mut buffer = RolloutBuffer::default();
        let mut obs = env.reset()?;

        while counters.steps < self.cfg.total_steps {
            let rollout = (self.cfg.total_steps - counters.steps).min(self.cfg.n_steps as u64);
            buffer.clear();
            for _ in 0..rollout {
                let a = self.policy.sample(&obs, &mut self.rng)?;
                let step = env.step(a.gate, a.qubit)?;
                let control = on_step(&counters.record((a.gate, a.qubit), &step))?;
                counters.end_step(step.done);
                let next = if step.done { env.reset()? } else { step.observation };
                buffer.push(std::mem::replace(&mut obs, next), a.gate, a.qubit, a.log_prob, step.reward, step.done, a.value);
                self.steps_done = counters.steps;
                self.episodes_done = counters.episodes;
                if control == Control::Stop {
                    summary.stopped_early = true;
                    return Ok(self.summarize(summary));
                }
            }
            if buffer.len() >= self.cfg.batch_size {
                let last_value = self.policy.value(&obs)?;
                buffer.finish(last_value, self.cfg.gamma, self.cfg.gae_lambda)?;
                let stats = ppo_update(&mut self.policy, &mut self.adam, &buffer, &self.cfg, &mut self.rng)?;
                self.updates_done += 1;
                summary.last_update = Some(stats);
                on_update(self, &stats)?;
            }
        }
        Ok(self.summarize(summary))
    }

    fn summarize(&self, mut s: TrainSummary) -> TrainSummary {
        s.steps = self.steps_done;
        s.episodes = self.episodes_done;
        s.updates = self.updates_done;
        s
    }
}

/// Baseline that samples both action components uniformly.
pub fn random_agent<E, F>(env: &mut E, total_steps: u64, seed: u64, mut on_step: F) -> Result<TrainSummary>
where
    E: MultiDiscreteEnv,
    F: FnMut(&StepRecord<'_, E::Info>) -> Result<Control>,
{
    let (na, nb) = env.action_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counters = Counters::default();
    let mut summary = TrainSummary::default();
    env.reset()?;
    while counters.steps < total_steps {
        let action = (rng.gen_range(0..na), rng.gen_range(0..nb));
        let step = env.step(action.0, action.1)?;
        let control = on_step(&counters.record(action, &step))?;
        counters.end_step(step.done);
        if step.done {
            env.reset()?;
        }
        if control == Control::Stop {
            summary.stopped_early = true;
            break;
        }
    }
    summary.steps = counters.steps;
    summary.episodes = counters.episodes;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One-step episodes; arm 1 of the first component pays 1, arm 0 pays 0.
    struct Bandit;

    impl MultiDiscreteEnv for Bandit {
        type Info = ();

        fn observation_len(&self) -> usize {
            1
        }

        fn action_dims(&self) -> (usize, usize) {
            (2, 2)
        }

        fn reset(&mut self) -> Result<Vec<f64>> {
            Ok(vec![1.0])
        }

        fn step(&mut self, a: usize, _b: usize) -> Result<EnvStep<()>> {
            Ok(EnvStep { observation: vec![1.0], reward: a as f64, done: true, info: () })
        }
    }

    fn bandit_cfg() -> PpoConfig {
        PpoConfig { total_steps: 2000, n_steps: 128, batch_size: 64, ..PpoConfig::default() }
    }

    #[test]
    fn ppo_solves_two_armed_bandit() {
        for seed in 0..3 {
            let mut agent = PpoAgent::for_env(&Bandit, bandit_cfg(), seed).unwrap();
            let summary = agent.train(&mut Bandit, |_| Ok(Control::Continue), |_, _| Ok(())).unwrap();
            assert_eq!(summary.steps, 2000);
            assert_eq!(summary.episodes, 2000);
            assert_eq!(agent.policy().greedy(&[1.0]).unwrap().gate, 1, "seed {seed}");
            let p = agent.policy().evaluate(&[1.0]).unwrap().gate_log_probs[1].exp();
            assert!(p > 0.9, "seed {seed}: p(arm 1) = {p}");
        }
    }

    #[test]
    fn heads_stay_normalized_after_updates() {
        let mut agent = PpoAgent::for_env(&Bandit, PpoConfig { total_steps: 512, ..bandit_cfg() }, 1).unwrap();
        let mut checked = 0;
        agent
            .train(
                &mut Bandit,
                |_| Ok(Control::Continue),
                |a, _| {
                    let out = a.policy().evaluate(&[1.0]).unwrap();
                    for head in [&out.gate_log_probs, &out.qubit_log_probs] {
                        assert!((head.iter().map(|l| l.exp()).sum::<f64>() - 1.0).abs() < 1e-6);
                    }
                    checked += 1;
                    Ok(())
                },
            )
            .unwrap();
        assert_eq!(checked, 4);
    }

    #[test]
    fn stop_request_ends_training() {
        let mut agent = PpoAgent::for_env(&Bandit, bandit_cfg(), 2).unwrap();
        let s = agent
            .train(&mut Bandit, |r| Ok(if r.step == 50 { Control::Stop } else { Control::Continue }), |_, _| Ok(()))
            .unwrap();
        assert!(s.stopped_early);
        assert_eq!(s.steps, 50);
        assert_eq!(s.updates, 0);
    }

    #[test]
    fn training_is_reproducible() {
        let run = || {
            let mut agent = PpoAgent::for_env(&Bandit, PpoConfig { total_steps: 300, ..bandit_cfg() }, 7).unwrap();
            let mut actions = Vec::new();
            agent
                .train(
                    &mut Bandit,
                    |r| {
                        actions.push(r.action);
                        Ok(Control::Continue)
                    },
                    |_, _| Ok(()),
                )
                .unwrap();
            (actions, agent)
        };
        let (a1, g1) = run();
        let (a2, g2) = run();
        assert_eq!(a1, a2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn random_agent_is_uniform() {
        let mut counts = [[0usize; 2]; 2];
        let s = random_agent(&mut Bandit, 8000, 3, |r| {
            counts[0][r.action.0] += 1;
            counts[1][r.action.1] += 1;
            Ok(Control::Continue)
        })
        .unwrap();
        assert_eq!(s.steps, 8000);
        for head in counts {
            assert!((head[0] as f64 / 8000.0 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn mismatched_env_is_rejected() {
        let mut agent = PpoAgent::new(3, (2, 2), bandit_cfg(), 0).unwrap();
        assert!(agent.train(&mut Bandit, |_| Ok(Control::Continue), |_, _| Ok(())).is_err());
    }
}
