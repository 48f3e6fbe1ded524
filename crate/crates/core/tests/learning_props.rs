use std::sync::Arc;

use proptest::prelude::*;
use qas_core::agent::{Control, PpoAgent, PpoConfig};
use qas_core::circuits::GateSequence;
use qas_core::config::Task;
use qas_core::environment::{EnvConfig, QasEnv};
use qas_core::inner_loop::{train_vqc, EvalCache, OptConfig, VqcEvaluator};
use qas_core::quantum::{Gate, GateKind};

fn cheap_opt() -> OptConfig {
    OptConfig { epochs: 15, num_seeds: 1, ..Task::Iris2_01.default_opt() }
}

/// Mean policy entropy over the rollouts of the first updates, trained
/// with entropy coefficient `ent` under the Iris 2 preset.
fn early_entropy(ent: f64, seed: u64) -> f64 {
    let data = Arc::new(Task::Iris2_01.load(42).unwrap());
    let cache = Arc::new(EvalCache::in_memory("entropy-test"));
    let evaluator = VqcEvaluator::new(data, cheap_opt(), Some(cache));
    let mut env = QasEnv::new(EnvConfig::default(), evaluator).unwrap();
    let cfg = PpoConfig { total_steps: 1024, ent_coef: ent, ..Task::Iris2_01.default_ppo() };
    let mut agent = PpoAgent::for_env(&env, cfg, seed).unwrap();
    let mut seen = Vec::new();
    agent.train(&mut env, |_| Ok(Control::Continue), |_, s| Ok(seen.push(s.last_epoch.entropy))).unwrap();
    assert_eq!(seen.len(), 8);
    seen.iter().sum::<f64>() / seen.len() as f64
}

#[test]
fn entropy_bonus_keeps_early_policies_broader() {
    let seeds = [1, 2, 3];
    let with: f64 = seeds.iter().map(|&s| early_entropy(0.03, s)).sum::<f64>() / 3.0;
    let without: f64 = seeds.iter().map(|&s| early_entropy(0.0, s)).sum::<f64>() / 3.0;
    // uniform heads over 4 gates and 2 pairs
    let max = 4f64.ln() + 2f64.ln();
    assert!(with > without, "entropy with bonus {with} vs without {without}");
    assert!(with <= max + 1e-9 && without > 0.0);
}

fn circuit(raw: &[(u8, u8)]) -> GateSequence {
    let mut seq = GateSequence::new(2, 4);
    for &(k, q) in raw {
        let q = q as usize % 2;
        let gate = match k % 4 {
            3 => Gate::Cnot { control: q, target: 1 - q },
            k => Gate::rotation(GateKind::ALL[k as usize], q).unwrap(),
        };
        if seq.landing_depth(&gate) < 4 {
            seq.push(gate).unwrap();
        }
    }
    seq
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adam_training_does_not_raise_the_training_loss(raw in prop::collection::vec(any::<(u8, u8)>(), 1..8)) {
        let seq = circuit(&raw);
        prop_assume!(seq.num_params() > 0);
        let data = Task::Iris2_12.load(42).unwrap();
        let r = train_vqc(&seq, &data, &OptConfig { epochs: 60, ..Task::Iris2_12.default_opt() }).unwrap();
        for s in &r.per_seed {
            prop_assert!(s.final_loss <= s.initial_loss + 1e-9, "seed {}: {} -> {}", s.seed, s.initial_loss, s.final_loss);
        }
    }
}
