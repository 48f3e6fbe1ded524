//! Browser bindings: train a circuit, sweep its cost landscape and evaluate
//! the step reward. Every export returns a JSON string.

use qas_core::analysis::cost_landscape;
use qas_core::circuits::{export_circuit, import_circuit, metrics};
use qas_core::config::Task;
use qas_core::datasets::DEFAULT_SPLIT_SEED;
use qas_core::environment::RewardConfig;
use qas_core::inner_loop::train_vqc;
use qas_core::{Error, Result};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn demo_task(name: &str) -> Result<Task> {
    let task: Task = name.parse()?;
    if task == Task::Mnist2 {
        return Err(Error::InvalidInput("mnist2 is too slow for the browser demo".into()));
    }
    Ok(task)
}

/// Trains `circuit` (export format) on `task` and returns its accuracies
/// together with the circuit re-exported with the best seed's parameters.
pub fn train_json(task: &str, circuit: &str, epochs: usize, seeds: usize) -> Result<String> {
    let task = demo_task(task)?;
    let c = import_circuit(circuit)?;
    let data = task.load(DEFAULT_SPLIT_SEED)?;
    if c.seq.num_qubits() != data.num_qubits() {
        return Err(Error::InvalidInput(format!("{task} needs a {}-qubit circuit", data.num_qubits())));
    }
    let cfg = qas_core::inner_loop::OptConfig { epochs, num_seeds: seeds, ..task.default_opt() };
    let r = train_vqc(&c.seq, &data, &cfg)?;
    let best = r.best();
    let m = metrics(&c.seq);
    Ok(json!({
        "gates": m.gates,
        "params": m.params,
        "cnots": m.cnots,
        "depth": m.depth,
        "train_accuracy": r.aggregate_train_acc,
        "test_accuracy": r.aggregate_test_acc,
        "best_seed": best.seed,
        "initial_loss": best.initial_loss,
        "final_loss": best.final_loss,
        "circuit": export_circuit(&c.seq, Some(&best.trained_params)),
    })
    .to_string())
}

/// Training loss over `[-pi, pi]^2` for parameters `a` and `b` of a circuit
/// that carries trained parameters.
pub fn landscape_json(task: &str, circuit: &str, a: usize, b: usize, points: usize) -> Result<String> {
    let task = demo_task(task)?;
    let c = import_circuit(circuit)?;
    let params = c.params.ok_or_else(|| Error::InvalidInput("train the circuit first".into()))?;
    let data = task.load(DEFAULT_SPLIT_SEED)?;
    let pi = std::f64::consts::PI;
    let l = cost_landscape(&c.seq, &params, &data, (a, b), (-pi, pi), points)?;
    let max = l.loss.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(json!({ "xs": l.xs, "loss": l.loss, "min": l.min(), "max": max, "at": [params[a], params[b]] }).to_string())
}

/// Reward for one step under the default reward settings.
pub fn reward_json(
    legal: bool,
    p_current: f64,
    p_delta: f64,
    c_rem: f64,
    max_depth: usize,
    extended_horizon: bool,
) -> Result<String> {
    let cfg = RewardConfig { use_extended_horizon: extended_horizon, ..RewardConfig::default() };
    cfg.validate()?;
    Ok(json!({
        "reward": cfg.reward(legal, p_current, p_delta, c_rem, max_depth),
        "shaped": cfg.shaped(p_delta, c_rem, max_depth),
        "extended_horizon": cfg.extended_horizon(max_depth),
        "threshold": cfg.threshold,
        "bonus": legal && p_current >= cfg.threshold,
    })
    .to_string())
}

fn js(r: Result<String>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn train(task: &str, circuit: &str, epochs: usize, seeds: usize) -> std::result::Result<String, JsValue> {
    js(train_json(task, circuit, epochs, seeds))
}

#[wasm_bindgen]
pub fn landscape(task: &str, circuit: &str, a: usize, b: usize, points: usize) -> std::result::Result<String, JsValue> {
    js(landscape_json(task, circuit, a, b, points))
}

#[wasm_bindgen]
pub fn reward(
    legal: bool,
    p_current: f64,
    p_delta: f64,
    c_rem: f64,
    max_depth: usize,
    extended_horizon: bool,
) -> std::result::Result<String, JsValue> {
    js(reward_json(legal, p_current, p_delta, c_rem, max_depth, extended_horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const CIRCUIT: &str = "# qas-circuit v1\nqubits 2\nmax_depth 4\nRY q0 p0\nCNOT q0 q1\nRY q1 p1\n";

    #[test]
    fn train_then_sweep() {
        let v: Value = serde_json::from_str(&train_json("iris2_01", CIRCUIT, 100, 1).unwrap()).unwrap();
        assert_eq!(v["gates"], 3);
        assert!(v["final_loss"].as_f64().unwrap() < v["initial_loss"].as_f64().unwrap());
        let trained = v["circuit"].as_str().unwrap();
        let l: Value = serde_json::from_str(&landscape_json("iris2_01", trained, 0, 1, 7).unwrap()).unwrap();
        assert_eq!(l["xs"].as_array().unwrap().len(), 7);
        assert!(l["min"].as_f64().unwrap() <= l["max"].as_f64().unwrap());
    }

    #[test]
    fn untrained_circuit_has_no_landscape() {
        assert!(landscape_json("iris2_01", CIRCUIT, 0, 1, 5).is_err());
        assert!(train_json("mnist2", CIRCUIT, 1, 1).is_err());
        assert!(train_json("iris", "# qas-circuit v1\nqubits 3\nmax_depth 4\n", 1, 1).is_err());
    }

    #[test]
    fn reward_matches_hand_value() {
        // 0.1 * (0.5 * 0.3 + 0.3 * (0.5 + 40))
        let v: Value = serde_json::from_str(&reward_json(true, 0.8, 0.3, 0.5, 4, true).unwrap()).unwrap();
        assert!((v["reward"].as_f64().unwrap() - 1.23).abs() < 1e-12);
        let v: Value = serde_json::from_str(&reward_json(false, 0.8, 0.3, 0.5, 4, true).unwrap()).unwrap();
        assert_eq!(v["reward"].as_f64().unwrap(), -0.01);
        let v: Value = serde_json::from_str(&reward_json(true, 1.0, 0.0, 0.0, 4, false).unwrap()).unwrap();
        assert_eq!(v["reward"].as_f64().unwrap(), 100.0);
    }
}
