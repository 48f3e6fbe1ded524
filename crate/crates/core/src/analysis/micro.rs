use std::collections::{HashSet, VecDeque};

use super::CsvTable;
use crate::circuits::{metrics, sel_ansatz, GateSequence};
use crate::datasets::{Dataset, Split};
use crate::environment::{is_illegal, ActionSpace, Action};
use crate::error::{invalid, Result};
use crate::inner_loop::{train_vqc, OptConfig};
use crate::quantum::cross_entropy;

pub const COMPARISON_HEADER: [&str; 7] = ["model", "G", "P", "C", "D", "TrA", "TeA"];

/// Trains the given circuit and `SEL(L)` for each requested `L` on `data`
/// and tabulates their structure and accuracies.
pub fn compare_baselines(
    data: &Dataset,
    circuit: Option<(&str, &GateSequence)>,
    layers: &[usize],
    cfg: &OptConfig,
) -> Result<CsvTable> {
    let mut table = CsvTable::new(COMPARISON_HEADER);
    let mut models: Vec<(String, GateSequence)> = Vec::new();
    if let Some((name, seq)) = circuit {
        models.push((name.to_string(), seq.clone()));
    }
    for &l in layers {
        models.push((format!("SEL({l})"), sel_ansatz(data.num_qubits(), l)?));
    }
    for (name, seq) in models {
        let m = metrics(&seq);
        let r = train_vqc(&seq, data, cfg)?;
        table.push(vec![
            name,
            m.gates.to_string(),
            m.params.to_string(),
            m.cnots.to_string(),
            m.depth.to_string(),
            r.aggregate_train_acc.to_string(),
            r.aggregate_test_acc.to_string(),
        ]);
    }
    Ok(table)
}

/// Training-set cross-entropy over a square grid of two parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Landscape {
    pub pair: (usize, usize),
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `loss[i][j]` at `(xs[i], ys[j])`.
    pub loss: Vec<Vec<f64>>,
}

impl Landscape {
    pub fn min(&self) -> f64 {
        self.loss.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new([format!("theta{}", self.pair.0), format!("theta{}", self.pair.1), "loss".into()]);
        for (i, x) in self.xs.iter().enumerate() {
            for (j, y) in self.ys.iter().enumerate() {
                t.push(vec![x.to_string(), y.to_string(), self.loss[i][j].to_string()]);
            }
        }
        t
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points).map(|k| if k + 1 == points { hi } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 }).collect()
}

/// Sweeps parameters `pair` over `[lo, hi]` with the others held at `params`.
pub fn cost_landscape(
    seq: &GateSequence,
    params: &[f64],
    data: &Dataset,
    pair: (usize, usize),
    range: (f64, f64),
    points: usize,
) -> Result<Landscape> {
    if seq.num_params() < 2 {
        return Err(invalid("a cost landscape needs a circuit with at least two parameters"));
    }
    if params.len() != seq.num_params() {
        return Err(crate::Error::ParamCountMismatch { expected: seq.num_params(), actual: params.len() });
    }
    if pair.0 == pair.1 || pair.0 >= params.len() || pair.1 >= params.len() {
        return Err(invalid(format!("parameter pair {pair:?} is not two distinct indices below {}", params.len())));
    }
    if points < 2 || !(range.0 < range.1) {
        return Err(invalid("landscape grid needs at least two points over a non-empty range"));
    }
    let train = data.samples(Split::Train);
    let xs = linspace(range.0, range.1, points);
    let mut p = params.to_vec();
    let mut loss = Vec::with_capacity(points);
    for &x in &xs {
        p[pair.0] = x;
        let mut row = Vec::with_capacity(points);
        for &y in &xs {
            p[pair.1] = y;
            row.push(cross_entropy(seq, &p, &train, data.num_classes())?);
        }
        loss.push(row);
    }
    Ok(Landscape { pair, ys: xs.clone(), xs, loss })
}

/// Number of distinct circuit tensors an agent can build with legal actions
/// from the empty circuit, indexed by gate count. Exploration is
/// breadth-first over tensors; it fails beyond `max_states` tensors.
pub fn reachable_circuits(num_qubits: usize, max_depth: usize, max_states: usize) -> Result<Vec<u64>> {
    let space = ActionSpace::new(num_qubits)?;
    let gates: Vec<_> = (0..space.num_gate_choices())
        .flat_map(|g| (0..space.num_qubit_choices()).map(move |q| Action::new(g, q)))
        .map(|a| space.decode(a))
        .collect::<Result<Vec<_>>>()?;
    let mut unique = gates.clone();
    unique.sort_by_key(|g| g.to_string());
    unique.dedup();

    let empty = GateSequence::new(num_qubits, max_depth);
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    seen.insert(empty.to_tensor().bits().to_vec());
    let mut counts = vec![1u64];
    let mut queue = VecDeque::from([empty]);
    while let Some(seq) = queue.pop_front() {
        for g in &unique {
            if is_illegal(&seq, g).is_some() {
                continue;
            }
            let mut next = seq.clone();
            next.push(*g)?;
            let bits = next.to_tensor().bits().to_vec();
            if seen.contains(&bits) {
                continue;
            }
            if seen.len() >= max_states {
                return Err(invalid(format!("more than {max_states} reachable circuits")));
            }
            seen.insert(bits);
            if counts.len() <= next.len() {
                counts.resize(next.len() + 1, 0);
            }
            counts[next.len()] += 1;
            queue.push_back(next);
        }
    }
    Ok(counts)
}
