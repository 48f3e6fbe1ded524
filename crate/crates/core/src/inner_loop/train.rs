use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::GateSequence;
use crate::datasets::{Dataset, Split};
use crate::error::{invalid, Result};
use crate::optim::Adam;
use crate::quantum::{self, argmax, LabeledSample};

/// How the per-seed runs combine into one score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Values of the seed with the highest test accuracy (lowest seed on ties).
    #[default]
    Best,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub num_seeds: usize,
    /// Seeds are `first_seed, first_seed + 1, ...`.
    pub first_seed: u64,
    pub init_low: f64,
    pub init_high: f64,
    pub aggregation: Aggregation,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 1000,
            batch_size: 20,
            num_seeds: 3,
            first_seed: 1,
            init_low: -1.0,
            init_high: 1.0,
            aggregation: Aggregation::Best,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.epochs == 0 || self.batch_size == 0 || self.num_seeds == 0 {
            return Err(invalid("optimizer settings must be positive"));
        }
        if !(self.init_low < self.init_high) {
            return Err(invalid("parameter init range is empty"));
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.num_seeds as u64).map(move |i| self.first_seed + i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    /// Mean training cross-entropy after the last epoch.
    pub final_loss: f64,
    /// Mean training cross-entropy at the initial parameters.
    pub initial_loss: f64,
    pub trained_params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_seed: Vec<SeedResult>,
    pub aggregate_train_acc: f64,
    pub aggregate_test_acc: f64,
    /// Seed with the highest test accuracy.
    pub best_seed: usize,
}

impl EvalResult {
    pub fn from_seeds(per_seed: Vec<SeedResult>, aggregation: Aggregation) -> Self {
        assert!(!per_seed.is_empty());
        let mut best = 0;
        for (i, s) in per_seed.iter().enumerate() {
            if s.final_test_acc > per_seed[best].final_test_acc {
                best = i;
            }
        }
        let (train, test) = match aggregation {
            Aggregation::Best => (per_seed[best].final_train_acc, per_seed[best].final_test_acc),
            Aggregation::Mean => {
                let n = per_seed.len() as f64;
                (
                    per_seed.iter().map(|s| s.final_train_acc).sum::<f64>() / n,
                    per_seed.iter().map(|s| s.final_test_acc).sum::<f64>() / n,
                )
            }
        };
        Self { per_seed, aggregate_train_acc: train, aggregate_test_acc: test, best_seed: best }
    }

    pub fn best(&self) -> &SeedResult {
        &self.per_seed[self.best_seed]
    }
}

/// Fraction of `split` samples whose argmax class matches the label.
pub fn evaluate(seq: &GateSequence, params: &[f64], data: &Dataset, split: Split) -> Result<f64> {
    accuracy(seq, params, &data.samples(split), data.num_classes())
}

pub(crate) fn accuracy(
    seq: &GateSequence,
    params: &[f64],
    samples: &[LabeledSample<'_>],
    num_classes: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("cannot score an empty split"));
    }
    if params.len() != seq.num_params() {
        return Err(crate::Error::ParamCountMismatch { expected: seq.num_params(), actual: params.len() });
    }
    let correct = samples
        .iter()
        .filter(|s| argmax(&quantum::sample_distribution(seq, params, s.amplitudes, num_classes)) == s.label)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Trains the circuit's rotation angles once per seed and scores each run.
pub fn train_vqc(seq: &GateSequence, data: &Dataset, cfg: &OptConfig) -> Result<EvalResult> {
    cfg.validate()?;
    if seq.is_empty() {
        return Err(invalid("cannot train an empty circuit"));
    }
    if seq.num_qubits() != data.num_qubits() || data.num_features() != 1 << seq.num_qubits() {
        return Err(invalid(format!(
            "circuit has {} qubits but {} needs {}",
            seq.num_qubits(),
            data.name(),
            data.num_qubits()
        )));
    }
    let train = data.samples(Split::Train);
    let test = data.samples(Split::Test);
    if train.is_empty() || test.is_empty() {
        return Err(invalid("dataset needs both train and test samples"));
    }
    let per_seed = cfg
        .seeds()
        .map(|seed| train_one_seed(seq, &train, &test, data.num_classes(), cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult::from_seeds(per_seed, cfg.aggregation))
}

fn train_one_seed(
    seq: &GateSequence,
    train: &[LabeledSample<'_>],
    test: &[LabeledSample<'_>],
    num_classes: usize,
    cfg: &OptConfig,
    seed: u64,
) -> Result<SeedResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: Vec<f64> =
        (0..seq.num_params()).map(|_| rng.gen_range(cfg.init_low..cfg.init_high)).collect();
    let initial_loss = quantum::cross_entropy(seq, &params, train, num_classes)?;

    if !params.is_empty() {
        let mut adam = Adam::new(params.len(), cfg.learning_rate);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| train[i]));
                let (_, grad) = quantum::loss_and_gradient(seq, &params, &batch, num_classes)?;
                adam.step(&mut params, &grad);
            }
        }
    }

    let final_loss = quantum::cross_entropy(seq, &params, train, num_classes)?;
    if !final_loss.is_finite() {
        return Err(crate::Error::NonFinite("inner-loop loss".into()));
    }
    Ok(SeedResult {
        seed,
        final_train_acc: accuracy(seq, &params, train, num_classes)?,
        final_test_acc: accuracy(seq, &params, test, num_classes)?,
        final_loss,
        initial_loss,
        trained_params: params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{load_iris, DEFAULT_SPLIT_SEED};
    use crate::quantum::Gate;

    fn quick() -> OptConfig {
        OptConfig { epochs: 30, batch_size: 16, ..OptConfig::default() }
    }

    fn seq_of(q: usize, gates: &[Gate]) -> GateSequence {
        let mut s = GateSequence::new(q, 8);
        for g in gates {
            s.push(*g).unwrap();
        }
        s
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = load_iris(Some((0, 1)), DEFAULT_SPLIT_SEED).unwrap();
        assert!(train_vqc(&GateSequence::new(2, 4), &data, &quick()).is_err());
        assert!(train_vqc(&seq_of(3, &[Gate::Ry(0)]), &data, &quick()).is_err());
        let bad = OptConfig { init_low: 1.0, init_high: 1.0, ..quick() };
        assert!(train_vqc(&seq_of(2, &[Gate::Ry(0)]), &data, &bad).is_err());
    }

    #[test]
    fn seeds_are_deterministic() {
        let data = load_iris(Some((1, 2)), DEFAULT_SPLIT_SEED).unwrap();
        let seq = seq_of(2, &[Gate::Ry(0), Gate::Cnot { control: 0, target: 1 }, Gate::Rx(1)]);
        let a = train_vqc(&seq, &data, &quick()).unwrap();
        let b = train_vqc(&seq, &data, &quick()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_seed.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn rz_only_matches_untrained_baseline() {
        // RZ never changes probabilities, so training cannot move accuracy
        let data = load_iris(None, DEFAULT_SPLIT_SEED).unwrap();
        let seq = seq_of(2, &[Gate::Rz(0), Gate::Rz(1)]);
        let r = train_vqc(&seq, &data, &quick()).unwrap();
        let identity = GateSequence::new(2, 1);
        let baseline = evaluate(&identity, &[], &data, Split::Test).unwrap();
        for s in &r.per_seed {
            assert_eq!(s.final_test_acc, baseline);
            assert!((s.final_loss - s.initial_loss).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_aggregation() {
        let mk = |seed, test| SeedResult {
            seed,
            final_train_acc: 0.5,
            final_test_acc: test,
            final_loss: 0.0,
            initial_loss: 0.0,
            trained_params: vec![],
        };
        let r = EvalResult::from_seeds(vec![mk(1, 0.5), mk(2, 1.0), mk(3, 1.0)], Aggregation::Mean);
        assert!((r.aggregate_test_acc - 2.5 / 3.0).abs() < 1e-12);
        assert_eq!(r.best_seed, 1);
        let r = EvalResult::from_seeds(vec![mk(1, 0.5), mk(2, 1.0), mk(3, 1.0)], Aggregation::Best);
        assert_eq!(r.aggregate_test_acc, 1.0);
    }

    #[test]
    fn evaluate_edge_cases() {
        // a two-sample toy set the identity circuit classifies perfectly
        let data = Dataset::new(
            "toy",
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0, 1, 0],
            2,
            vec![Split::Test, Split::Test, Split::Train],
        )
        .unwrap();
        let id = GateSequence::new(1, 1);
        assert_eq!(evaluate(&id, &[], &data, Split::Test).unwrap(), 1.0);

        let only_train = Dataset::new("t", vec![vec![1.0, 0.0]], vec![0], 2, vec![Split::Train]).unwrap();
        assert!(evaluate(&id, &[], &only_train, Split::Test).is_err());
    }
}
