//! Dense statevector simulation over the gate set {RX, RY, RZ, CNOT}.
//!
//! Qubit 0 is the most significant bit of a basis-state index, so on two
//! qubits `|q0 q1>` maps to index `2*q0 + q1`.
//!
//! Gradients of the classification loss use the adjoint method: one forward
//! pass, then a single backward sweep that un-applies each gate to both the
//! state and the loss cotangent.

use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::circuits::GateSequence;
use crate::error::{invalid, Error, Result};

pub type C64 = Complex<f64>;

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

const ENCODE_NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cnot,
}

impl GateKind {
    pub const ALL: [GateKind; 4] = [GateKind::Rx, GateKind::Ry, GateKind::Rz, GateKind::Cnot];

    /// Position of the gate in the gate set, which is also the action's gate index.
    pub fn index(self) -> usize {
        match self {
            GateKind::Rx => 0,
            GateKind::Ry => 1,
            GateKind::Rz => 2,
            GateKind::Cnot => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_rotation(self) -> bool {
        self != GateKind::Cnot
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Cnot => "CNOT",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    Rx(usize),
    Ry(usize),
    Rz(usize),
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn rotation(kind: GateKind, qubit: usize) -> Option<Gate> {
        match kind {
            GateKind::Rx => Some(Gate::Rx(qubit)),
            GateKind::Ry => Some(Gate::Ry(qubit)),
            GateKind::Rz => Some(Gate::Rz(qubit)),
            GateKind::Cnot => None,
        }
    }

    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Rx(_) => GateKind::Rx,
            Gate::Ry(_) => GateKind::Ry,
            Gate::Rz(_) => GateKind::Rz,
            Gate::Cnot { .. } => GateKind::Cnot,
        }
    }

    pub fn is_rotation(&self) -> bool {
        self.kind().is_rotation()
    }

    /// The qubit a rotation acts on, or the control of a CNOT.
    pub fn primary_qubit(&self) -> usize {
        match *self {
            Gate::Rx(q) | Gate::Ry(q) | Gate::Rz(q) => q,
            Gate::Cnot { control, .. } => control,
        }
    }

    /// All qubits the gate touches, in (control, target) order for CNOT.
    pub fn qubits(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            Gate::Rx(q) | Gate::Ry(q) | Gate::Rz(q) => (q, None),
            Gate::Cnot { control, target } => (control, Some(target)),
        };
        std::iter::once(a).chain(b)
    }

    pub fn touches(&self, qubit: usize) -> bool {
        self.qubits().any(|q| q == qubit)
    }

    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        for q in self.qubits() {
            if q >= num_qubits {
                return Err(Error::QubitOutOfRange { index: q, num_qubits });
            }
        }
        if let Gate::Cnot { control, target } = *self {
            if control == target {
                return Err(invalid(format!("CNOT control and target are both {control}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::Cnot { control, target } => write!(f, "CNOT q{control} q{target}"),
            g => write!(f, "{} q{}", g.kind(), g.primary_qubit()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    amps: Vec<C64>,
    num_qubits: usize,
}

impl Statevector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Self {
        assert!(num_qubits >= 1, "a statevector needs at least one qubit");
        let mut amps = vec![C64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = C64::new(1.0, 0.0);
        Self { amps, num_qubits }
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let num_qubits = qubits_for_len(amps.len())?;
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > ENCODE_NORM_TOL {
            return Err(invalid(format!("state norm is {norm}, expected 1")));
        }
        Ok(Self { amps, num_qubits })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn apply(&mut self, gate: &Gate, theta: Option<f64>) -> Result<()> {
        gate.validate(self.num_qubits)?;
        match (gate.is_rotation(), theta) {
            (true, None) => return Err(invalid(format!("{gate} needs an angle"))),
            (false, Some(_)) => return Err(invalid("CNOT takes no angle")),
            _ => {}
        }
        apply_in_place(&mut self.amps, self.num_qubits, gate, theta.unwrap_or(0.0));
        Ok(())
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(invalid(format!("length {len} is not a power of two >= 2")));
    }
    Ok(len.trailing_zeros() as usize)
}

/// Loads an L2-normalized real feature vector as state amplitudes.
pub fn amplitude_encode(features: &[f64]) -> Result<Statevector> {
    let num_qubits = qubits_for_len(features.len())?;
    let norm = features.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > ENCODE_NORM_TOL {
        return Err(invalid(format!("features have L2 norm {norm}, expected 1")));
    }
    Ok(Statevector {
        amps: features.iter().map(|&x| C64::new(x, 0.0)).collect(),
        num_qubits,
    })
}

pub fn apply_gate(state: &Statevector, gate: &Gate, theta: Option<f64>) -> Result<Statevector> {
    let mut out = state.clone();
    out.apply(gate, theta)?;
    Ok(out)
}

pub fn run_circuit(seq: &GateSequence, params: &[f64], input: &Statevector) -> Result<Statevector> {
    check_circuit_inputs(seq, params, input.num_qubits)?;
    let mut out = input.clone();
    forward(seq, params, &mut out.amps, out.num_qubits);
    Ok(out)
}

fn check_circuit_inputs(seq: &GateSequence, params: &[f64], num_qubits: usize) -> Result<()> {
    if params.len() != seq.num_params() {
        return Err(Error::ParamCountMismatch {
            expected: seq.num_params(),
            actual: params.len(),
        });
    }
    if seq.num_qubits() != num_qubits {
        return Err(invalid(format!(
            "circuit has {} qubits, state has {num_qubits}",
            seq.num_qubits()
        )));
    }
    Ok(())
}

#[inline]
fn bit_mask(num_qubits: usize, qubit: usize) -> usize {
    1 << (num_qubits - 1 - qubit)
}

fn forward(seq: &GateSequence, params: &[f64], amps: &mut [C64], num_qubits: usize) {
    for placed in seq.gates() {
        let theta = placed.param.map_or(0.0, |p| params[p]);
        apply_in_place(amps, num_qubits, &placed.gate, theta);
    }
}

fn apply_in_place(amps: &mut [C64], num_qubits: usize, gate: &Gate, theta: f64) {
    let (s, c) = (theta / 2.0).sin_cos();
    match *gate {
        Gate::Rx(q) => {
            let m = bit_mask(num_qubits, q);
            let mis = C64::new(0.0, -s);
            for i in (0..amps.len()).filter(|i| i & m == 0) {
                let (a0, a1) = (amps[i], amps[i | m]);
                amps[i] = a0 * c + a1 * mis;
                amps[i | m] = a0 * mis + a1 * c;
            }
        }
        Gate::Ry(q) => {
            let m = bit_mask(num_qubits, q);
            for i in (0..amps.len()).filter(|i| i & m == 0) {
                let (a0, a1) = (amps[i], amps[i | m]);
                amps[i] = a0 * c - a1 * s;
                amps[i | m] = a0 * s + a1 * c;
            }
        }
        Gate::Rz(q) => {
            let m = bit_mask(num_qubits, q);
            let lo = C64::new(c, -s);
            let hi = C64::new(c, s);
            for (i, a) in amps.iter_mut().enumerate() {
                *a *= if i & m == 0 { lo } else { hi };
            }
        }
        Gate::Cnot { control, target } => {
            let mc = bit_mask(num_qubits, control);
            let mt = bit_mask(num_qubits, target);
            for i in (0..amps.len()).filter(|i| i & mc != 0 && i & mt == 0) {
                amps.swap(i, i | mt);
            }
        }
    }
}

/// Im(<lambda| P |phi>) for the Pauli generator P of a rotation gate.
fn generator_overlap_im(lambda: &[C64], phi: &[C64], num_qubits: usize, gate: &Gate) -> f64 {
    let m = bit_mask(num_qubits, gate.primary_qubit());
    let mut acc = C64::new(0.0, 0.0);
    match gate.kind() {
        GateKind::Rx => {
            for i in 0..phi.len() {
                acc += lambda[i].conj() * phi[i ^ m];
            }
        }
        GateKind::Ry => {
            for i in 0..phi.len() {
                let flipped = phi[i ^ m];
                let y = if i & m == 0 {
                    C64::new(flipped.im, -flipped.re)
                } else {
                    C64::new(-flipped.im, flipped.re)
                };
                acc += lambda[i].conj() * y;
            }
        }
        GateKind::Rz => {
            for i in 0..phi.len() {
                let z = if i & m == 0 { phi[i] } else { -phi[i] };
                acc += lambda[i].conj() * z;
            }
        }
        GateKind::Cnot => unreachable!("CNOT has no parameter"),
    }
    acc.im
}

/// Probabilities of each class after mapping basis states to contiguous,
/// evenly sized blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(invalid("empty class distribution"));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0 + 1e-12).contains(p)) {
            return Err(invalid("probability outside [0, 1]"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self(probabilities))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }
}

/// Class owning basis state `index` among `dim` states: `floor(index * num_classes / dim)`.
#[inline]
pub fn class_of_basis_state(index: usize, num_classes: usize, dim: usize) -> usize {
    index * num_classes / dim
}

pub fn class_probabilities(state: &Statevector, num_classes: usize) -> Result<ClassDistribution> {
    let dim = state.dim();
    if num_classes == 0 || num_classes > dim {
        return Err(invalid(format!("{num_classes} classes for {dim} basis states")));
    }
    let mut probs = vec![0.0; num_classes];
    for (i, a) in state.amps.iter().enumerate() {
        probs[class_of_basis_state(i, num_classes, dim)] += a.norm_sqr();
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(ClassDistribution(probs))
}

/// Argmax with ties resolved toward the lowest class index.
pub fn predict(probs: &ClassDistribution) -> usize {
    argmax(&probs.0)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug)]
pub struct LabeledSample<'a> {
    /// L2-normalized real amplitudes.
    pub amplitudes: &'a [f64],
    pub label: usize,
}

/// Mean cross-entropy of the circuit's class distribution against the labels.
pub fn cross_entropy(
    seq: &GateSequence,
    params: &[f64],
    batch: &[LabeledSample<'_>],
    num_classes: usize,
) -> Result<f64> {
    let mut work = Workspace::default();
    let mut total = 0.0;
    for sample in checked_batch(seq, params, batch, num_classes)? {
        work.load(sample.amplitudes);
        forward(seq, params, &mut work.phi, seq.num_qubits());
        total += -block_probability(&work.phi, sample.label, num_classes).max(PROB_FLOOR).ln();
    }
    Ok(total / batch.len() as f64)
}

pub fn loss_gradient(
    seq: &GateSequence,
    params: &[f64],
    batch: &[LabeledSample<'_>],
    num_classes: usize,
) -> Result<Vec<f64>> {
    loss_and_gradient(seq, params, batch, num_classes).map(|(_, g)| g)
}

/// Mean cross-entropy and its exact gradient with respect to `params`.
pub fn loss_and_gradient(
    seq: &GateSequence,
    params: &[f64],
    batch: &[LabeledSample<'_>],
    num_classes: usize,
) -> Result<(f64, Vec<f64>)> {
    let num_qubits = seq.num_qubits();
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    let mut work = Workspace::default();
    let gates: Vec<_> = seq.gates().collect();

    for sample in checked_batch(seq, params, batch, num_classes)? {
        work.load(sample.amplitudes);
        forward(seq, params, &mut work.phi, num_qubits);

        let dim = work.phi.len();
        let p = block_probability(&work.phi, sample.label, num_classes);
        total += -p.max(PROB_FLOOR).ln();
        if p <= PROB_FLOOR {
            // clamped region: the loss is flat in every parameter
            continue;
        }

        // dL/d(conj psi) for L = -ln p
        work.lambda.clear();
        work.lambda.extend(work.phi.iter().enumerate().map(|(i, a)| {
            if class_of_basis_state(i, num_classes, dim) == sample.label {
                -a / p
            } else {
                C64::new(0.0, 0.0)
            }
        }));

        for placed in gates.iter().rev() {
            let theta = placed.param.map_or(0.0, |k| params[k]);
            if let Some(k) = placed.param {
                grad[k] += generator_overlap_im(&work.lambda, &work.phi, num_qubits, &placed.gate);
            }
            apply_in_place(&mut work.phi, num_qubits, &placed.gate, -theta);
            apply_in_place(&mut work.lambda, num_qubits, &placed.gate, -theta);
        }
    }

    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

fn checked_batch<'a, 'b>(
    seq: &GateSequence,
    params: &[f64],
    batch: &'b [LabeledSample<'a>],
    num_classes: usize,
) -> Result<&'b [LabeledSample<'a>]> {
    check_circuit_inputs(seq, params, seq.num_qubits())?;
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let dim = 1usize << seq.num_qubits();
    if num_classes == 0 || num_classes > dim {
        return Err(invalid(format!("{num_classes} classes for {dim} basis states")));
    }
    for s in batch {
        if s.amplitudes.len() != dim {
            return Err(invalid(format!(
                "sample has {} amplitudes, circuit needs {dim}",
                s.amplitudes.len()
            )));
        }
        if s.label >= num_classes {
            return Err(invalid(format!("label {} >= {num_classes} classes", s.label)));
        }
    }
    Ok(batch)
}

fn block_probability(amps: &[C64], class: usize, num_classes: usize) -> f64 {
    let dim = amps.len();
    amps.iter()
        .enumerate()
        .filter(|(i, _)| class_of_basis_state(*i, num_classes, dim) == class)
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

/// Class distribution for one real sample without building a `Statevector`.
pub(crate) fn sample_distribution(
    seq: &GateSequence,
    params: &[f64],
    amplitudes: &[f64],
    num_classes: usize,
) -> Vec<f64> {
    let mut phi: Vec<C64> = amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect();
    forward(seq, params, &mut phi, seq.num_qubits());
    let dim = phi.len();
    let mut probs = vec![0.0; num_classes];
    for (i, a) in phi.iter().enumerate() {
        probs[class_of_basis_state(i, num_classes, dim)] += a.norm_sqr();
    }
    probs
}

#[derive(Default)]
struct Workspace {
    phi: Vec<C64>,
    lambda: Vec<C64>,
}

impl Workspace {
    fn load(&mut self, amplitudes: &[f64]) {
        self.phi.clear();
        self.phi.extend(amplitudes.iter().map(|&x| C64::new(x, 0.0)));
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::circuits::GateSequence;

    fn basis(num_qubits: usize, index: usize) -> Statevector {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << num_qubits];
        amps[index] = C64::new(1.0, 0.0);
        Statevector::from_amplitudes(amps).unwrap()
    }

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn encode_basis_and_probabilities() {
        let s = amplitude_encode(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.num_qubits(), 2);
        assert_eq!(s.probabilities(), vec![1.0, 0.0, 0.0, 0.0]);

        let s = amplitude_encode(&[0.6, 0.8, 0.0, 0.0]).unwrap();
        let p = s.probabilities();
        assert!((p[0] - 0.36).abs() < 1e-12 && (p[1] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn encode_rejects_bad_input() {
        assert!(amplitude_encode(&[0.6, 0.8, 0.0]).is_err());
        assert!(amplitude_encode(&[1.0, 1.0, 0.0, 0.0]).is_err());
        assert!(amplitude_encode(&[1.0]).is_err());
    }

    #[test]
    fn qubit_counts_for_datasets() {
        let iris = vec![0.5; 4];
        assert_eq!(amplitude_encode(&iris).unwrap().num_qubits(), 2);
        let mnist = vec![1.0 / 32f64.sqrt(); 32];
        assert_eq!(amplitude_encode(&mnist).unwrap().num_qubits(), 5);
    }

    #[test]
    fn rx_pi_flips_with_phase() {
        let out = apply_gate(&Statevector::zero(1), &Gate::Rx(0), Some(PI)).unwrap();
        assert!(close(out.amplitudes()[0], C64::new(0.0, 0.0)));
        assert!(close(out.amplitudes()[1], C64::new(0.0, -1.0)));
    }

    #[test]
    fn cnot_truth_table() {
        let cnot = Gate::Cnot { control: 0, target: 1 };
        // |10> -> |11>, |00> and |01> unchanged, |11> -> |10>
        for (input, expected) in [(0b10, 0b11), (0b00, 0b00), (0b01, 0b01), (0b11, 0b10)] {
            let out = apply_gate(&basis(2, input), &cnot, None).unwrap();
            assert!(close(out.amplitudes()[expected], C64::new(1.0, 0.0)), "{input:b}");
        }
    }

    #[test]
    fn rz_is_diagonal() {
        for i in 0..8 {
            let out = apply_gate(&basis(3, i), &Gate::Rz(1), Some(0.731)).unwrap();
            assert!((out.probabilities()[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_rejects_bad_gates() {
        let mut s = Statevector::zero(2);
        assert!(matches!(s.apply(&Gate::Rx(2), Some(0.1)), Err(Error::QubitOutOfRange { .. })));
        assert!(s.apply(&Gate::Cnot { control: 1, target: 1 }, None).is_err());
        assert!(s.apply(&Gate::Ry(0), None).is_err());
        assert!(s.apply(&Gate::Cnot { control: 0, target: 1 }, Some(0.2)).is_err());
    }

    #[test]
    fn empty_sequence_is_identity() {
        let seq = GateSequence::new(2, 3);
        let input = amplitude_encode(&[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(run_circuit(&seq, &[], &input).unwrap(), input);
        assert!(matches!(
            run_circuit(&seq, &[0.1], &input),
            Err(Error::ParamCountMismatch { expected: 0, actual: 1 })
        ));
    }

    #[test]
    fn two_rx_compose_like_one() {
        // independent route: multiply the 2x2 RX matrices directly
        let rx = |t: f64| {
            let (s, c) = (t / 2.0).sin_cos();
            [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]]
        };
        let (a, b) = (0.4, 1.3);
        let (ma, mb) = (rx(a), rx(b));
        let mut prod = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    prod[i][j] += mb[i][k] * ma[k][j];
                }
            }
        }
        let direct = [prod[0][0].norm_sqr(), prod[1][0].norm_sqr()];

        let mut seq = GateSequence::new(1, 2);
        seq.push(Gate::Rx(0)).unwrap();
        seq.push(Gate::Rx(0)).unwrap();
        let out = run_circuit(&seq, &[a, b], &Statevector::zero(1)).unwrap();
        let single = apply_gate(&Statevector::zero(1), &Gate::Rx(0), Some(a + b)).unwrap();
        for i in 0..2 {
            assert!((out.probabilities()[i] - direct[i]).abs() < 1e-12);
            assert!((out.probabilities()[i] - single.probabilities()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn class_blocks() {
        let owners: Vec<_> = (0..4).map(|i| class_of_basis_state(i, 3, 4)).collect();
        assert_eq!(owners, vec![0, 0, 1, 2]);
        let owners: Vec<_> = (0..4).map(|i| class_of_basis_state(i, 2, 4)).collect();
        assert_eq!(owners, vec![0, 0, 1, 1]);

        let uniform = amplitude_encode(&[0.5; 4]).unwrap();
        let d = class_probabilities(&uniform, 2).unwrap();
        assert_eq!(d.probabilities(), &[0.5, 0.5]);
        assert!(class_probabilities(&uniform, 5).is_err());
        assert!(class_probabilities(&uniform, 0).is_err());
    }

    #[test]
    fn predict_ties_go_low() {
        assert_eq!(predict(&ClassDistribution::new(vec![0.1, 0.7, 0.2]).unwrap()), 1);
        assert_eq!(predict(&ClassDistribution::new(vec![0.5, 0.5]).unwrap()), 0);
    }

    #[test]
    fn no_rotations_means_empty_gradient() {
        let mut seq = GateSequence::new(2, 2);
        seq.push(Gate::Cnot { control: 0, target: 1 }).unwrap();
        let x = [0.5; 4];
        let batch = [LabeledSample { amplitudes: &x, label: 1 }];
        assert!(loss_gradient(&seq, &[], &batch, 2).unwrap().is_empty());
        assert!(loss_gradient(&seq, &[], &[], 2).is_err());
    }

    #[test]
    fn single_ry_gradient_matches_finite_difference() {
        let mut seq = GateSequence::new(1, 1);
        seq.push(Gate::Ry(0)).unwrap();
        let x = [1.0, 0.0];
        let batch = [LabeledSample { amplitudes: &x, label: 1 }];
        // at theta = 0 the class-1 probability is exactly 0: loss is clamped and flat
        let theta = 0.0;
        let h = 1e-5;
        let fd = (cross_entropy(&seq, &[theta + h], &batch, 2).unwrap()
            - cross_entropy(&seq, &[theta - h], &batch, 2).unwrap())
            / (2.0 * h);
        let g = loss_gradient(&seq, &[theta], &batch, 2).unwrap();
        assert!((g[0] - fd).abs() < 1e-6, "{} vs {fd}", g[0]);

        // away from the clamp the gradient is -cot(theta/2)
        let theta = 0.9;
        let g = loss_gradient(&seq, &[theta], &batch, 2).unwrap();
        assert!((g[0] + 1.0 / (theta / 2.0).tan()).abs() < 1e-10);
    }
}
