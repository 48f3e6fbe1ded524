//! Circuit architectures and their binary tensor encoding.
//!
//! A tensor has shape `[Q x (G + Q - 1) x D]` with `G = 4`. Along the gate
//! axis, columns 0..=2 are RX, RY, RZ on the row's qubit and column `3 + t`
//! is "CNOT controlled by this row's qubit, targeting qubit `t`". Gates are
//! scheduled as soon as possible: a gate lands at the largest current depth
//! among the qubits it touches.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::{Gate, GateKind};

/// Size of the gate set {RX, RY, RZ, CNOT}.
pub const GATE_SET_SIZE: usize = 4;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CircuitTensor {
    num_qubits: usize,
    max_depth: usize,
    bits: Vec<u8>,
}

impl CircuitTensor {
    pub fn empty(num_qubits: usize, max_depth: usize) -> Self {
        assert!(num_qubits >= 1 && max_depth >= 1, "tensor needs Q >= 1 and D >= 1");
        let len = num_qubits * (GATE_SET_SIZE + num_qubits - 1) * max_depth;
        Self { num_qubits, max_depth, bits: vec![0; len] }
    }

    /// Rebuilds a tensor from its flattened bits, validating the layout.
    pub fn from_bits(num_qubits: usize, max_depth: usize, bits: Vec<u8>) -> Result<Self> {
        let expected = num_qubits * (GATE_SET_SIZE + num_qubits - 1) * max_depth;
        if bits.len() != expected {
            return Err(Error::MalformedTensor(format!(
                "{} bits for shape needing {expected}",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::MalformedTensor("entries must be 0 or 1".into()));
        }
        let t = Self { num_qubits, max_depth, bits };
        decode(&t)?;
        Ok(t)
    }

    /// `[Q, G + Q - 1, D]`
    pub fn shape(&self) -> [usize; 3] {
        [self.num_qubits, self.gate_columns(), self.max_depth]
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn gate_columns(&self) -> usize {
        GATE_SET_SIZE + self.num_qubits - 1
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, qubit: usize, column: usize, depth: usize) -> bool {
        self.bits[self.offset(qubit, column, depth)] != 0
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Flattened entries as `f64` for the policy network input.
    pub fn to_observation(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }

    fn offset(&self, qubit: usize, column: usize, depth: usize) -> usize {
        (qubit * self.gate_columns() + column) * self.max_depth + depth
    }

    fn set(&mut self, qubit: usize, column: usize, depth: usize) {
        let o = self.offset(qubit, column, depth);
        self.bits[o] = 1;
    }
}

pub fn empty_tensor(num_qubits: usize, max_depth: usize) -> CircuitTensor {
    CircuitTensor::empty(num_qubits, max_depth)
}

fn column_of(gate: &Gate) -> usize {
    match *gate {
        Gate::Cnot { target, .. } => 3 + target,
        g => g.kind().index(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedGate {
    pub gate: Gate,
    pub depth: usize,
    /// Index into the parameter vector, present for rotations only.
    pub param: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateSequence {
    num_qubits: usize,
    max_depth: usize,
    gates: Vec<PlacedGate>,
    qubit_depths: Vec<usize>,
    last_gate: Vec<Option<Gate>>,
    num_params: usize,
}

impl GateSequence {
    pub fn new(num_qubits: usize, max_depth: usize) -> Self {
        Self {
            num_qubits,
            max_depth,
            gates: Vec::new(),
            qubit_depths: vec![0; num_qubits],
            last_gate: vec![None; num_qubits],
            num_params: 0,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gates(&self) -> impl DoubleEndedIterator<Item = &PlacedGate> + ExactSizeIterator {
        self.gates.iter()
    }

    pub fn qubit_depth(&self, qubit: usize) -> usize {
        self.qubit_depths[qubit]
    }

    pub fn qubit_depths(&self) -> &[usize] {
        &self.qubit_depths
    }

    /// Largest per-qubit depth.
    pub fn depth(&self) -> usize {
        self.qubit_depths.iter().copied().max().unwrap_or(0)
    }

    /// Most recent gate touching `qubit`.
    pub fn last_gate_on(&self, qubit: usize) -> Option<Gate> {
        self.last_gate[qubit]
    }

    /// Depth at which `gate` would land under ASAP scheduling.
    pub fn landing_depth(&self, gate: &Gate) -> usize {
        gate.qubits().map(|q| self.qubit_depths[q]).max().unwrap_or(0)
    }

    /// Appends `gate` at its ASAP depth, assigning the next parameter index
    /// to rotations.
    pub fn push(&mut self, gate: Gate) -> Result<PlacedGate> {
        gate.validate(self.num_qubits)?;
        let depth = self.landing_depth(&gate);
        if depth >= self.max_depth {
            return Err(Error::DepthOverflow { depth, max_depth: self.max_depth });
        }
        Ok(self.push_at(gate, depth))
    }

    fn push_at(&mut self, gate: Gate, depth: usize) -> PlacedGate {
        let param = gate.is_rotation().then(|| {
            self.num_params += 1;
            self.num_params - 1
        });
        for q in gate.qubits() {
            self.qubit_depths[q] = depth + 1;
            self.last_gate[q] = Some(gate);
        }
        let placed = PlacedGate { gate, depth, param };
        self.gates.push(placed);
        placed
    }

    /// Tensor encoding of this sequence.
    pub fn to_tensor(&self) -> CircuitTensor {
        let mut t = CircuitTensor::empty(self.num_qubits, self.max_depth);
        for p in &self.gates {
            t.set(p.gate.primary_qubit(), column_of(&p.gate), p.depth);
        }
        t
    }

    /// Gate kinds in sequence order, e.g. `[CNOT, RY, RX, RY]`.
    pub fn kinds(&self) -> Vec<GateKind> {
        self.gates.iter().map(|p| p.gate.kind()).collect()
    }
}

/// Places `gate` in both representations of an episode's circuit.
pub fn place_gate(tensor: &mut CircuitTensor, seq: &mut GateSequence, gate: Gate) -> Result<PlacedGate> {
    if tensor.num_qubits != seq.num_qubits || tensor.max_depth != seq.max_depth {
        return Err(invalid("tensor and sequence shapes differ"));
    }
    let placed = seq.push(gate)?;
    tensor.set(gate.primary_qubit(), column_of(&gate), placed.depth);
    Ok(placed)
}

/// Re-places every gate of `seq` into a fresh tensor.
pub fn encode(seq: &GateSequence) -> CircuitTensor {
    seq.to_tensor()
}

/// Reads the gates of a tensor back in (depth, qubit) order; rotations get
/// parameter indices in that order.
pub fn decode(tensor: &CircuitTensor) -> Result<GateSequence> {
    let q_count = tensor.num_qubits;
    let mut seq = GateSequence::new(q_count, tensor.max_depth);
    let mut occupied = vec![false; q_count * tensor.max_depth];
    for d in 0..tensor.max_depth {
        for q in 0..q_count {
            let mut found = None;
            for col in 0..tensor.gate_columns() {
                if !tensor.get(q, col, d) {
                    continue;
                }
                if found.is_some() {
                    return Err(Error::MalformedTensor(format!("qubit {q} has two gates at depth {d}")));
                }
                let gate = match col {
                    0..=2 => Gate::rotation(GateKind::ALL[col], q).expect("rotation column"),
                    _ if col - 3 == q => {
                        return Err(Error::MalformedTensor(format!("CNOT on qubit {q} targets itself")))
                    }
                    _ => Gate::Cnot { control: q, target: col - 3 },
                };
                found = Some(gate);
            }
            let Some(gate) = found else { continue };
            for touched in gate.qubits() {
                let slot = &mut occupied[touched * tensor.max_depth + d];
                if *slot {
                    return Err(Error::MalformedTensor(format!(
                        "qubit {touched} used twice at depth {d}"
                    )));
                }
                *slot = true;
            }
            seq.push_at(gate, d);
        }
    }
    Ok(seq)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitMetrics {
    pub gates: usize,
    pub params: usize,
    pub cnots: usize,
    pub depth: usize,
}

pub fn metrics(seq: &GateSequence) -> CircuitMetrics {
    let cnots = seq.gates.iter().filter(|p| !p.gate.is_rotation()).count();
    CircuitMetrics {
        gates: seq.gates.len(),
        params: seq.num_params,
        cnots,
        depth: seq.depth(),
    }
}

/// Strongly entangling layers: RZ, RY, RZ on every qubit, then a ring of
/// CNOTs `i -> (i + 1) mod Q`.
pub fn sel_ansatz(num_qubits: usize, layers: usize) -> Result<GateSequence> {
    if num_qubits < 2 {
        return Err(invalid("SEL needs at least two qubits"));
    }
    if layers == 0 {
        return Err(invalid("SEL needs at least one layer"));
    }
    let mut seq = GateSequence::new(num_qubits, layers * (3 + num_qubits));
    for _ in 0..layers {
        for q in 0..num_qubits {
            for g in [Gate::Rz(q), Gate::Ry(q), Gate::Rz(q)] {
                seq.push(g)?;
            }
        }
        for q in 0..num_qubits {
            seq.push(Gate::Cnot { control: q, target: (q + 1) % num_qubits })?;
        }
    }
    seq.max_depth = seq.depth();
    Ok(seq)
}

/// 64-bit FNV-1a over the tensor entries, one byte per entry, in
/// (qubit, gate, depth) row-major order.
pub fn canonical_hash(tensor: &CircuitTensor) -> u64 {
    fnv1a(FNV_OFFSET, &tensor.bits)
}

pub(crate) fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

pub(crate) fn fnv1a_bytes(bytes: &[u8]) -> u64 {
    fnv1a(FNV_OFFSET, bytes)
}

/// Plain-text export: a header, one gate per line (`RX q0 p0`, `CNOT q0 q1`)
/// and a JSON metrics block.
///
/// ```text
/// # qas-circuit v1
/// qubits 2
/// max_depth 4
/// CNOT q0 q1
/// RY q0 p0
/// metrics {"gates":2,"params":1,"cnots":1,"depth":2}
/// params [0.1]
/// ```
pub fn export_circuit(seq: &GateSequence, params: Option<&[f64]>) -> String {
    let mut out = String::from("# qas-circuit v1\n");
    let _ = writeln!(out, "qubits {}", seq.num_qubits);
    let _ = writeln!(out, "max_depth {}", seq.max_depth);
    for p in &seq.gates {
        match (p.gate, p.param) {
            (Gate::Cnot { control, target }, _) => {
                let _ = writeln!(out, "CNOT q{control} q{target}");
            }
            (g, Some(k)) => {
                let _ = writeln!(out, "{} q{} p{k}", g.kind(), g.primary_qubit());
            }
            (g, None) => unreachable!("rotation {g} without parameter"),
        }
    }
    let m = serde_json::to_string(&metrics(seq)).expect("metrics serialize");
    let _ = writeln!(out, "metrics {m}");
    if let Some(params) = params {
        let p = serde_json::to_string(params).expect("params serialize");
        let _ = writeln!(out, "params {p}");
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImportedCircuit {
    pub seq: GateSequence,
    pub params: Option<Vec<f64>>,
}

/// Parses the export format. Gates are re-placed in file order; parameter
/// indices in the file must match that order.
pub fn import_circuit(text: &str) -> Result<ImportedCircuit> {
    let mut num_qubits = None;
    let mut max_depth = None;
    let mut seq: Option<GateSequence> = None;
    let mut params = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse(format!("line {}: {msg}: `{line}`", lineno + 1));
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match head {
            "qubits" => num_qubits = Some(rest.parse::<usize>().map_err(|_| err("bad qubit count"))?),
            "max_depth" => max_depth = Some(rest.parse::<usize>().map_err(|_| err("bad depth"))?),
            "metrics" => {}
            "params" => params = Some(serde_json::from_str::<Vec<f64>>(rest).map_err(|_| err("bad params"))?),
            _ => {
                if seq.is_none() {
                    let q = num_qubits.ok_or_else(|| err("gate before `qubits`"))?;
                    let d = max_depth.ok_or_else(|| err("gate before `max_depth`"))?;
                    if q == 0 || d == 0 {
                        return Err(err("qubits and max_depth must be positive"));
                    }
                    seq = Some(GateSequence::new(q, d));
                }
                let seq = seq.as_mut().expect("initialized above");
                let fields: Vec<&str> = rest.split_whitespace().collect();
                let qubit = |s: &str| -> Result<usize> {
                    s.strip_prefix('q').and_then(|n| n.parse().ok()).ok_or_else(|| err("bad qubit"))
                };
                let gate = match (head, fields.as_slice()) {
                    ("CNOT", [c, t]) => Gate::Cnot { control: qubit(c)?, target: qubit(t)? },
                    (kind @ ("RX" | "RY" | "RZ"), [q, p]) => {
                        let k: usize = p
                            .strip_prefix('p')
                            .and_then(|n| n.parse().ok())
                            .ok_or_else(|| err("bad parameter"))?;
                        if k != seq.num_params() {
                            return Err(err("parameter indices must follow gate order"));
                        }
                        let kind = match kind {
                            "RX" => GateKind::Rx,
                            "RY" => GateKind::Ry,
                            _ => GateKind::Rz,
                        };
                        Gate::rotation(kind, qubit(q)?).expect("rotation kind")
                    }
                    _ => return Err(err("unknown gate line")),
                };
                seq.push(gate).map_err(|e| err(&e.to_string()))?;
            }
        }
    }
    let seq = match seq {
        Some(s) => s,
        None => GateSequence::new(
            num_qubits.ok_or_else(|| Error::Parse("missing `qubits`".into()))?,
            max_depth.ok_or_else(|| Error::Parse("missing `max_depth`".into()))?,
        ),
    };
    if let Some(p) = &params {
        if p.len() != seq.num_params() {
            return Err(Error::ParamCountMismatch { expected: seq.num_params(), actual: p.len() });
        }
    }
    Ok(ImportedCircuit { seq, params })
}
