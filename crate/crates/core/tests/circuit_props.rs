mod common;

use std::collections::{HashMap, HashSet};

use common::{build, dense_run};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qas_core::circuits::{canonical_hash, decode, encode, metrics, CircuitTensor, GateSequence};
use qas_core::datasets::{fit_pca, RawTable};
use qas_core::environment::{is_illegal, ActionSpace, Action};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn raw_gates() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
    prop::collection::vec(any::<(u8, u8, u8)>(), 0..24)
}

/// Textbook 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

/// Landing depths from an explicit occupancy grid: the lowest depth above
/// every occupied cell of the touched qubits.
fn grid_depths(seq: &GateSequence) -> Vec<usize> {
    let mut occ = vec![vec![false; seq.max_depth()]; seq.num_qubits()];
    let mut out = Vec::new();
    for p in seq.gates() {
        let touched: Vec<usize> = p.gate.qubits().collect();
        let d = (0..seq.max_depth())
            .find(|&d| touched.iter().all(|&q| (d..seq.max_depth()).all(|e| !occ[q][e])))
            .expect("room left");
        for &q in &touched {
            occ[q][d] = true;
        }
        out.push(d);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn asap_depths_match_an_occupancy_grid(q in 2usize..=5, d in 1usize..=6, raw in raw_gates()) {
        let seq = build(q, d, &raw);
        let placed: Vec<usize> = seq.gates().map(|p| p.depth).collect();
        prop_assert_eq!(placed, grid_depths(&seq));
        let deepest = seq.gates().map(|p| p.depth + 1).max().unwrap_or(0);
        prop_assert_eq!(metrics(&seq).depth, deepest);
    }

    #[test]
    fn decode_inverts_encode(
        q in 2usize..=4,
        d in 1usize..=5,
        raw in raw_gates(),
        thetas in prop::collection::vec(-3.0f64..3.0, 24),
        amps in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let seq = build(q, d, &raw);
        let t = encode(&seq);
        let back = decode(&t).unwrap();
        prop_assert_eq!(encode(&back), t.clone());
        prop_assert_eq!(decode(&encode(&back)).unwrap(), back.clone());
        prop_assert_eq!(metrics(&back), metrics(&seq));
        prop_assert_eq!(canonical_hash(&t), fnv1a(t.bits()));

        // same unitary once parameters follow their gates
        let params = &thetas[..seq.num_params()];
        let by_slot: HashMap<(usize, usize), f64> = seq
            .gates()
            .filter_map(|p| p.param.map(|k| ((p.depth, p.gate.primary_qubit()), params[k])))
            .collect();
        let mut moved = vec![0.0; back.num_params()];
        for p in back.gates() {
            if let Some(k) = p.param {
                moved[k] = by_slot[&(p.depth, p.gate.primary_qubit())];
            }
        }
        let n = amps[..1 << q].iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(n > 1e-6);
        let input: Vec<C64> = amps[..1 << q].iter().map(|x| C64::new(x / n, 0.0)).collect();
        let a = dense_run(&seq, params, &input);
        let b = dense_run(&back, &moved, &input);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn tensors_are_accepted_exactly_when_no_qubit_is_shared(
        q in 2usize..=4,
        d in 1usize..=4,
        cells in prop::collection::vec(any::<(u8, u8)>(), 32),
    ) {
        let cols = q + 3;
        let mut bits = vec![0u8; q * cols * d];
        // how many gates touch each (qubit, depth) slot
        let mut load = vec![vec![0; d]; q];
        for (i, &(on, col)) in cells.iter().enumerate().take(q * d) {
            let (qq, dd, col) = (i / d, i % d, col as usize % cols);
            if on % 3 == 0 && col != 3 + qq {
                bits[(qq * cols + col) * d + dd] = 1;
                load[qq][dd] += 1;
                if col >= 3 {
                    load[col - 3][dd] += 1;
                }
            }
        }
        let valid = load.iter().flatten().all(|&n| n <= 1);
        let t = CircuitTensor::from_bits(q, d, bits);
        prop_assert_eq!(t.is_ok(), valid);
        if let Ok(t) = t {
            prop_assert_eq!(encode(&decode(&t).unwrap()), t);
        }
    }

    #[test]
    fn action_codes_are_a_bijection(q in 2usize..=6) {
        let space = ActionSpace::new(q).unwrap();
        let mut seen = HashSet::new();
        for g in 0..space.num_gate_choices() {
            for k in 0..space.num_qubit_choices() {
                let a = Action::new(g, k);
                let gate = space.decode(a).unwrap();
                prop_assert!(gate.validate(q).is_ok());
                if g == 3 {
                    prop_assert!(seen.insert(gate));
                    prop_assert_eq!(space.encode(gate).unwrap(), a);
                } else {
                    // rotations repeat with period Q in the qubit index
                    prop_assert_eq!(gate.primary_qubit(), k % q);
                    prop_assert_eq!(space.decode(space.encode(gate).unwrap()).unwrap(), gate);
                    seen.insert(gate);
                }
            }
        }
        prop_assert_eq!(seen.len(), 3 * q + q * (q - 1));
    }
}

#[test]
fn empty_tensor_hash_is_pinned() {
    let t = encode(&GateSequence::new(2, 4));
    assert_eq!(t.bits().len(), 2 * 5 * 4);
    assert_eq!(canonical_hash(&t), fnv1a(&[0u8; 40]));
    assert_eq!(canonical_hash(&t), 0x40d6_9e0c_f0f6_5c45);
}

#[test]
fn no_hash_collisions_among_ten_thousand_circuits() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tensors: HashSet<(usize, usize, Vec<u8>)> = HashSet::new();
    while tensors.len() < 10_000 {
        let (q, d) = (rng.gen_range(2..=4), rng.gen_range(2..=6));
        let space = ActionSpace::new(q).unwrap();
        let mut seq = GateSequence::new(q, d);
        for _ in 0..rng.gen_range(1..=q * d) {
            let a = Action::new(rng.gen_range(0..space.num_gate_choices()), rng.gen_range(0..space.num_qubit_choices()));
            let gate = space.decode(a).unwrap();
            if is_illegal(&seq, &gate).is_none() {
                seq.push(gate).unwrap();
            }
        }
        tensors.insert((q, d, encode(&seq).bits().to_vec()));
    }
    // equal byte strings across shapes are distinct circuits but one hash
    let mut by_hash: HashMap<u64, &Vec<u8>> = HashMap::new();
    for (_, _, bits) in &tensors {
        if let Some(prev) = by_hash.insert(fnv1a(bits), bits) {
            assert_eq!(prev, bits, "FNV-1a collision");
        }
    }
    assert!(by_hash.len() > 9_000);
}

#[test]
fn pca_error_falls_with_more_components() {
    let table = RawTable::digits();
    let rows: Vec<Vec<f64>> = table.features.iter().take(300).cloned().collect();
    let sst: f64 = {
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        rows.iter().flat_map(|r| r.iter().zip(&mean).map(|(x, m)| (x - m).powi(2))).sum()
    };
    let mut last = f64::INFINITY;
    for k in [1, 2, 4, 8, 16, 32, 48] {
        let pca = fit_pca(&rows, k).unwrap();
        let sse: f64 = rows
            .iter()
            .map(|r| {
                let back = pca.reconstruct(&pca.transform(r));
                r.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum();
        assert!(sse <= last + 1e-9, "k={k}: {sse} > {last}");
        // explained variance is exactly the variance the projection keeps
        assert!((pca.explained_variance_ratio - (1.0 - sse / sst)).abs() < 1e-8, "k={k}");
        last = sse;
    }
}
