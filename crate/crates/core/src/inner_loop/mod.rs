//! Inner loop: train a fixed architecture's angles and score it, with a
//! persistent cache so each distinct tensor is trained once.

mod cache;
mod train;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use cache::{decode_result, encode_result, read_namespace, CacheEntry, EvalCache, CACHE_MAGIC, CACHE_VERSION};
pub use train::{evaluate, train_vqc, Aggregation, EvalResult, OptConfig, SeedResult};

use crate::circuits::{canonical_hash, decode, CircuitTensor};
use crate::datasets::Dataset;
use crate::error::Result;

/// Identity of a cache: scores are only comparable for the same data split,
/// circuit shape and optimizer settings.
pub fn cache_namespace(data: &Dataset, split_seed: u64, max_depth: usize, cfg: &OptConfig) -> String {
    format!(
        "{}|split_seed={split_seed}|qubits={}|max_depth={max_depth}|lr={}|epochs={}|batch={}|seeds={}x{}|init=[{},{}]|agg={:?}",
        data.name(),
        data.num_qubits(),
        cfg.learning_rate,
        cfg.epochs,
        cfg.batch_size,
        cfg.first_seed,
        cfg.num_seeds,
        cfg.init_low,
        cfg.init_high,
        cfg.aggregation,
    )
}

/// Returns the stored result for `tensor`, training and storing it on a miss.
pub fn cached_evaluate(
    tensor: &CircuitTensor,
    data: &Dataset,
    cfg: &OptConfig,
    cache: &EvalCache,
) -> Result<EvalResult> {
    if let Some(hit) = cache.get(canonical_hash(tensor))? {
        return Ok(hit);
    }
    let seq = decode(tensor)?;
    let result = train_vqc(&seq, data, cfg)?;
    cache.insert(tensor, result)
}

/// Scores a circuit tensor; the environment's view of the inner loop.
pub trait CircuitEvaluator {
    fn evaluate(&self, tensor: &CircuitTensor) -> Result<EvalResult>;
}

impl<E: CircuitEvaluator + ?Sized> CircuitEvaluator for Arc<E> {
    fn evaluate(&self, tensor: &CircuitTensor) -> Result<EvalResult> {
        (**self).evaluate(tensor)
    }
}

/// Trains circuits on a dataset, optionally through an [`EvalCache`].
#[derive(Debug)]
pub struct VqcEvaluator {
    data: Arc<Dataset>,
    cfg: OptConfig,
    cache: Option<Arc<EvalCache>>,
    trained: AtomicU64,
    hits: AtomicU64,
}

impl VqcEvaluator {
    pub fn new(data: Arc<Dataset>, cfg: OptConfig, cache: Option<Arc<EvalCache>>) -> Self {
        Self { data, cfg, cache, trained: AtomicU64::new(0), hits: AtomicU64::new(0) }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn config(&self) -> &OptConfig {
        &self.cfg
    }

    pub fn cache(&self) -> Option<&Arc<EvalCache>> {
        self.cache.as_ref()
    }

    /// (circuits trained, cache hits)
    pub fn counters(&self) -> (u64, u64) {
        (self.trained.load(Ordering::Relaxed), self.hits.load(Ordering::Relaxed))
    }
}

impl CircuitEvaluator for VqcEvaluator {
    fn evaluate(&self, tensor: &CircuitTensor) -> Result<EvalResult> {
        match &self.cache {
            Some(cache) => {
                if let Some(hit) = cache.get(canonical_hash(tensor))? {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(hit);
                }
                self.trained.fetch_add(1, Ordering::Relaxed);
                let result = train_vqc(&decode(tensor)?, &self.data, &self.cfg)?;
                cache.insert(tensor, result)
            }
            None => {
                self.trained.fetch_add(1, Ordering::Relaxed);
                train_vqc(&decode(tensor)?, &self.data, &self.cfg)
            }
        }
    }
}
