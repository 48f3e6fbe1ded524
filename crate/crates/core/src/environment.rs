//! The circuit-construction MDP.
//!
//! An action `(gate index, qubit index)` picks a gate from {RX, RY, RZ, CNOT}
//! and either a qubit (rotations, index taken modulo Q) or an ordered
//! (control, target) pair (CNOT). Each legal action places one gate, the
//! inner loop scores the new circuit, and the reward combines the change in
//! test accuracy with how much of the depth and gate budget is left.

use serde::{Deserialize, Serialize};

use crate::circuits::{empty_tensor, metrics, place_gate, CircuitMetrics, CircuitTensor, GateSequence};
use crate::error::{invalid, Error, Result};
use crate::inner_loop::{CircuitEvaluator, EvalResult};
use crate::quantum::{Gate, GateKind};

/// `n! / (n - k)!`, the number of ordered selections of `k` of `n` items.
pub fn permutation_count(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    ((n - k + 1)..=n).product()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub gate: usize,
    pub qubit: usize,
}

impl Action {
    pub fn new(gate: usize, qubit: usize) -> Self {
        Self { gate, qubit }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSpace {
    num_qubits: usize,
    pairs: Vec<(usize, usize)>,
}

impl ActionSpace {
    pub fn new(num_qubits: usize) -> Result<Self> {
        if num_qubits < 2 {
            return Err(invalid("the action space needs at least two qubits"));
        }
        let pairs = (0..num_qubits)
            .flat_map(|c| (0..num_qubits).filter(move |&t| t != c).map(move |t| (c, t)))
            .collect();
        Ok(Self { num_qubits, pairs })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_gate_choices(&self) -> usize {
        GateKind::ALL.len()
    }

    /// C: ordered qubit pairs, `Q! / (Q - 2)!`.
    pub fn num_qubit_choices(&self) -> usize {
        self.pairs.len()
    }

    pub fn size(&self) -> usize {
        self.num_gate_choices() * self.num_qubit_choices()
    }

    /// Ordered (control, target) pairs in lexicographic order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn decode(&self, action: Action) -> Result<Gate> {
        if action.qubit >= self.pairs.len() {
            return Err(invalid(format!("qubit index {} >= {}", action.qubit, self.pairs.len())));
        }
        let kind = GateKind::from_index(action.gate)
            .ok_or_else(|| invalid(format!("gate index {} >= {}", action.gate, GateKind::ALL.len())))?;
        Ok(match kind {
            GateKind::Cnot => {
                let (control, target) = self.pairs[action.qubit];
                Gate::Cnot { control, target }
            }
            k => Gate::rotation(k, action.qubit % self.num_qubits).expect("rotation kind"),
        })
    }

    /// Smallest action that decodes to `gate`.
    pub fn encode(&self, gate: Gate) -> Result<Action> {
        gate.validate(self.num_qubits)?;
        Ok(match gate {
            Gate::Cnot { control, target } => {
                let idx = self.pairs.iter().position(|&p| p == (control, target)).expect("pair exists");
                Action::new(GateKind::Cnot.index(), idx)
            }
            g => Action::new(g.kind().index(), g.primary_qubit()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// Same gate as the last one on one of its qubits.
    RepeatedGate,
    /// Some involved qubit is already at the maximum depth.
    DepthExceeded,
}

pub fn is_illegal(seq: &GateSequence, gate: &Gate) -> Option<Violation> {
    if gate.qubits().any(|q| seq.last_gate_on(q) == Some(*gate)) {
        return Some(Violation::RepeatedGate);
    }
    if seq.landing_depth(gate) >= seq.max_depth() {
        return Some(Violation::DepthExceeded);
    }
    None
}

/// Fraction of the depth and gate budgets still unused, averaged.
/// The gate budget is `Q * D_max`.
pub fn complexity_remaining(seq: &GateSequence) -> f64 {
    let max_depth = seq.max_depth() as f64;
    let max_gates = (seq.num_qubits() * seq.max_depth()) as f64;
    let depth_frac = (max_depth - seq.depth() as f64) / max_depth;
    let gates_frac = (max_gates - seq.len() as f64) / max_gates;
    ((depth_frac + gates_frac) / 2.0).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IllegalMode {
    /// An illegal action ends the episode.
    #[default]
    Terminate,
    /// An illegal action is penalized and ignored; the episode continues.
    Mask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Test accuracy that ends the episode with the success bonus.
    pub threshold: f64,
    pub illegal_penalty: f64,
    pub success_bonus: f64,
    pub legal_scale: f64,
    /// Adds `10 * D_max` to the complexity term when set.
    pub use_extended_horizon: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            illegal_penalty: -0.01,
            success_bonus: 100.0,
            legal_scale: 0.1,
            use_extended_horizon: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(invalid("performance threshold must be in (0, 1]"));
        }
        if !(self.illegal_penalty < 0.0) {
            return Err(invalid("illegal-action penalty must be negative"));
        }
        Ok(())
    }

    pub fn extended_horizon(&self, max_depth: usize) -> f64 {
        if self.use_extended_horizon {
            10.0 * max_depth as f64
        } else {
            0.0
        }
    }

    /// Reward of a legal action below the threshold:
    /// `scale * (p_delta / 2 + p_delta * (c_rem + e_h))`.
    pub fn shaped(&self, p_delta: f64, c_rem: f64, max_depth: usize) -> f64 {
        self.legal_scale * (0.5 * p_delta + p_delta * (c_rem + self.extended_horizon(max_depth)))
    }

    /// Full reward. `p_delta` and `c_rem` are ignored for illegal actions.
    pub fn reward(&self, legal: bool, p_current: f64, p_delta: f64, c_rem: f64, max_depth: usize) -> f64 {
        if !legal {
            return self.illegal_penalty;
        }
        let shaped = self.shaped(p_delta, c_rem, max_depth);
        if p_current >= self.threshold {
            shaped + self.success_bonus
        } else {
            shaped
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub num_qubits: usize,
    pub max_depth: usize,
    pub reward: RewardConfig,
    pub illegal_mode: IllegalMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { num_qubits: 2, max_depth: 4, reward: RewardConfig::default(), illegal_mode: IllegalMode::Terminate }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    ThresholdMet,
    IllegalAction,
    DepthExhausted,
}

impl DoneReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DoneReason::ThresholdMet => "threshold_met",
            DoneReason::IllegalAction => "illegal_action",
            DoneReason::DepthExhausted => "depth_exhausted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [DoneReason::ThresholdMet, DoneReason::IllegalAction, DoneReason::DepthExhausted]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub action: Action,
    pub gate: Gate,
    pub violation: Option<Violation>,
    /// Aggregate test accuracy of the circuit after a legal action.
    pub p_current: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub p_delta: f64,
    pub c_rem: f64,
    pub metrics: CircuitMetrics,
    pub done_reason: Option<DoneReason>,
    pub step_in_episode: usize,
    /// Circuit after the step.
    pub circuit: CircuitTensor,
    /// Inner-loop result for the new circuit (legal steps only).
    pub result: Option<EvalResult>,
}

impl StepInfo {
    pub fn legal(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    /// Snapshot of the circuit after this step.
    pub observation: CircuitTensor,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState {
    pub tensor: CircuitTensor,
    pub seq: GateSequence,
    pub previous_performance: Option<f64>,
    pub step_count: usize,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
}

impl EpisodeState {
    fn new(num_qubits: usize, max_depth: usize) -> Self {
        Self {
            tensor: empty_tensor(num_qubits, max_depth),
            seq: GateSequence::new(num_qubits, max_depth),
            previous_performance: None,
            step_count: 0,
            done: false,
            done_reason: None,
        }
    }

    fn depth_exhausted(&self) -> bool {
        self.seq.qubit_depths().iter().all(|&d| d >= self.seq.max_depth())
    }
}

pub struct QasEnv<E> {
    cfg: EnvConfig,
    actions: ActionSpace,
    evaluator: E,
    state: EpisodeState,
}

impl<E: CircuitEvaluator> QasEnv<E> {
    pub fn new(cfg: EnvConfig, evaluator: E) -> Result<Self> {
        cfg.reward.validate()?;
        if cfg.max_depth == 0 {
            return Err(invalid("max depth must be positive"));
        }
        let actions = ActionSpace::new(cfg.num_qubits)?;
        let state = EpisodeState::new(cfg.num_qubits, cfg.max_depth);
        Ok(Self { cfg, actions, evaluator, state })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn evaluator(&self) -> &E {
        &self.evaluator
    }

    pub fn reset(&mut self) -> CircuitTensor {
        self.state = EpisodeState::new(self.cfg.num_qubits, self.cfg.max_depth);
        self.state.tensor.clone()
    }

    pub fn step(&mut self, action: Action) -> Result<Step> {
        if self.state.done {
            return Err(Error::EpisodeDone);
        }
        let gate = self.actions.decode(action)?;
        self.state.step_count += 1;
        let reward_cfg = &self.cfg.reward;

        if let Some(violation) = is_illegal(&self.state.seq, &gate) {
            let done = self.cfg.illegal_mode == IllegalMode::Terminate;
            if done {
                self.state.done = true;
                self.state.done_reason = Some(DoneReason::IllegalAction);
            }
            return Ok(Step {
                observation: self.state.tensor.clone(),
                reward: reward_cfg.illegal_penalty,
                done,
                info: StepInfo {
                    action,
                    gate,
                    violation: Some(violation),
                    p_current: None,
                    train_accuracy: None,
                    p_delta: 0.0,
                    c_rem: complexity_remaining(&self.state.seq),
                    metrics: metrics(&self.state.seq),
                    done_reason: self.state.done_reason,
                    step_in_episode: self.state.step_count,
                    circuit: self.state.tensor.clone(),
                    result: None,
                },
            });
        }

        place_gate(&mut self.state.tensor, &mut self.state.seq, gate)?;
        let result = self.evaluator.evaluate(&self.state.tensor)?;
        let p_current = result.aggregate_test_acc;
        let p_delta = match self.state.previous_performance {
            None => p_current,
            Some(prev) => p_current - prev,
        };
        self.state.previous_performance = Some(p_current);
        let c_rem = complexity_remaining(&self.state.seq);
        let reward = reward_cfg.reward(true, p_current, p_delta, c_rem, self.cfg.max_depth);

        let done_reason = if p_current >= reward_cfg.threshold {
            Some(DoneReason::ThresholdMet)
        } else if self.state.depth_exhausted() {
            Some(DoneReason::DepthExhausted)
        } else {
            None
        };
        self.state.done = done_reason.is_some();
        self.state.done_reason = done_reason;

        Ok(Step {
            observation: self.state.tensor.clone(),
            reward,
            done: self.state.done,
            info: StepInfo {
                action,
                gate,
                violation: None,
                p_current: Some(p_current),
                train_accuracy: Some(result.aggregate_train_acc),
                p_delta,
                c_rem,
                metrics: metrics(&self.state.seq),
                done_reason,
                step_in_episode: self.state.step_count,
                circuit: self.state.tensor.clone(),
                result: Some(result),
            },
        })
    }
}
