#![allow(dead_code)]

use num_complex::Complex64 as C64;
use qas_core::circuits::GateSequence;
use qas_core::quantum::{Gate, GateKind};

/// Builds a circuit from raw `(kind, a, b)` triples, skipping gates that
/// would overflow the depth limit or name the same qubit twice.
pub fn build(num_qubits: usize, max_depth: usize, raw: &[(u8, u8, u8)]) -> GateSequence {
    let mut seq = GateSequence::new(num_qubits, max_depth);
    for &(k, a, b) in raw {
        let a = a as usize % num_qubits;
        let gate = match k % 4 {
            3 => {
                let t = (a + 1 + b as usize % (num_qubits - 1)) % num_qubits;
                Gate::Cnot { control: a, target: t }
            }
            k => Gate::rotation(GateKind::ALL[k as usize], a).unwrap(),
        };
        if seq.landing_depth(&gate) < max_depth {
            seq.push(gate).unwrap();
        }
    }
    seq
}

fn bit(index: usize, qubit: usize, n: usize) -> usize {
    (index >> (n - 1 - qubit)) & 1
}

/// Dense `2^n x 2^n` unitary of one gate, qubit 0 most significant.
pub fn dense(gate: &Gate, theta: f64, n: usize) -> Vec<Vec<C64>> {
    let dim = 1 << n;
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let i = C64::i();
    let one = |q: usize, m: [[C64; 2]; 2]| {
        let mut u = vec![vec![C64::new(0.0, 0.0); dim]; dim];
        for (r, row) in u.iter_mut().enumerate() {
            for (col, v) in row.iter_mut().enumerate() {
                if (r ^ col) & !(1 << (n - 1 - q)) == 0 {
                    *v = m[bit(r, q, n)][bit(col, q, n)];
                }
            }
        }
        u
    };
    let re = |x: f64| C64::new(x, 0.0);
    match *gate {
        Gate::Rx(q) => one(q, [[re(c), -i * s], [-i * s, re(c)]]),
        Gate::Ry(q) => one(q, [[re(c), re(-s)], [re(s), re(c)]]),
        Gate::Rz(q) => one(q, [[(-i * theta / 2.0).exp(), re(0.0)], [re(0.0), (i * theta / 2.0).exp()]]),
        Gate::Cnot { control, target } => {
            let mut u = vec![vec![C64::new(0.0, 0.0); dim]; dim];
            for (r, row) in u.iter_mut().enumerate() {
                let col = if bit(r, control, n) == 1 { r ^ (1 << (n - 1 - target)) } else { r };
                row[col] = re(1.0);
            }
            u
        }
    }
}

/// Runs `seq` by dense matrix products.
pub fn dense_run(seq: &GateSequence, params: &[f64], input: &[C64]) -> Vec<C64> {
    let n = seq.num_qubits();
    let mut psi = input.to_vec();
    for p in seq.gates() {
        let u = dense(&p.gate, p.param.map_or(0.0, |k| params[k]), n);
        psi = u.iter().map(|row| row.iter().zip(&psi).map(|(a, b)| a * b).sum()).collect();
    }
    psi
}
