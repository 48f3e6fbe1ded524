//! Running an agent on a task and persisting what happened.
//!
//! A run directory holds:
//!
//! - `metrics.csv`: one row per environment step (see [`MetricsRow`]),
//!   preceded by the line `# qas-metrics v1`. Rows depend only on the
//!   config and seed, so reruns give byte-identical files.
//! - `best_circuit.qc`: best circuit found, in the circuit export format.
//! - `summary.json`: counters, timing and the best circuit's scores.
//! - `agent.ckpt`: final PPO checkpoint (PPO runs only).
//! - `config.toml`: the effective configuration.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agent::{random_agent, Control, PpoAgent, StepRecord};
use crate::circuits::{canonical_hash, decode, export_circuit, CircuitMetrics, CircuitTensor};
use crate::config::{AgentKind, ExperimentConfig};
use crate::environment::{DoneReason, QasEnv, StepInfo, Violation};
use crate::error::{Error, Result};
use crate::inner_loop::{cache_namespace, EvalCache, EvalResult, VqcEvaluator};

pub const METRICS_HEADER: &str = "# qas-metrics v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub step: u64,
    pub episode: u64,
    pub gate_index: usize,
    pub qubit_index: usize,
    pub gate: String,
    pub legal: bool,
    pub violation: Option<Violation>,
    pub reward: f64,
    pub episode_return: f64,
    /// Empty for illegal steps.
    pub test_accuracy: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub p_delta: f64,
    pub c_rem: f64,
    pub gates: usize,
    pub params: usize,
    pub cnots: usize,
    pub depth: usize,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
    /// Canonical hash of the circuit after the step, 16 hex digits.
    pub circuit_hash: String,
}

impl MetricsRow {
    pub fn from_step(run_id: &str, rec: &StepRecord<'_, StepInfo>) -> Self {
        let info = rec.info;
        Self {
            run_id: run_id.to_string(),
            step: rec.step,
            episode: rec.episode,
            gate_index: rec.action.0,
            qubit_index: rec.action.1,
            gate: info.gate.to_string(),
            legal: info.legal(),
            violation: info.violation,
            reward: rec.reward,
            episode_return: rec.episode_return,
            test_accuracy: info.p_current,
            train_accuracy: info.train_accuracy,
            p_delta: info.p_delta,
            c_rem: info.c_rem,
            gates: info.metrics.gates,
            params: info.metrics.params,
            cnots: info.metrics.cnots,
            depth: info.metrics.depth,
            done: rec.done,
            done_reason: info.done_reason,
            circuit_hash: format!("{:016x}", canonical_hash(&info.circuit)),
        }
    }
}

pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(Self { inner: csv::Writer::from_writer(out) })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("csv: {other:?}")),
    }
}

pub fn read_metrics<R: std::io::Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != METRICS_HEADER {
        return Err(Error::Parse(format!("metrics log must start with {METRICS_HEADER:?}")));
    }
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        rows.push(row.map_err(csv_err)?);
    }
    Ok(rows)
}

pub fn load_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    read_metrics(File::open(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestCircuit {
    pub step: u64,
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub metrics: CircuitMetrics,
    pub gates: Vec<String>,
    pub circuit_hash: String,
    /// Trained angles of the best inner-loop seed.
    pub params: Vec<f64>,
    #[serde(skip)]
    pub tensor: Option<CircuitTensor>,
}

impl BestCircuit {
    fn from_info(step: u64, info: &StepInfo, result: &EvalResult) -> Result<Self> {
        let seq = decode(&info.circuit)?;
        Ok(Self {
            step,
            test_accuracy: result.aggregate_test_acc,
            train_accuracy: result.aggregate_train_acc,
            metrics: info.metrics,
            gates: seq.gates().map(|g| g.gate.to_string()).collect(),
            circuit_hash: format!("{:016x}", canonical_hash(&info.circuit)),
            params: result.best().trained_params.clone(),
            tensor: Some(info.circuit.clone()),
        })
    }
}

/// Tracks the best circuit so far and the best-so-far accuracy curve.
#[derive(Clone, Debug, Default)]
pub struct BestTracker {
    pub best: Option<BestCircuit>,
}

impl BestTracker {
    pub fn observe(&mut self, step: u64, info: &StepInfo) -> Result<bool> {
        let Some(result) = &info.result else { return Ok(false) };
        let candidate_better = match &self.best {
            None => true,
            Some(b) => {
                result.aggregate_test_acc > b.test_accuracy
                    || (result.aggregate_test_acc == b.test_accuracy
                        && (info.metrics.gates, info.metrics.cnots) < (b.metrics.gates, b.metrics.cnots))
            }
        };
        if candidate_better {
            let c = BestCircuit::from_info(step, info, result)?;
            self.best = Some(c);
        }
        Ok(candidate_better)
    }

    pub fn best_accuracy(&self) -> f64 {
        self.best.as_ref().map_or(0.0, |b| b.test_accuracy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub task: String,
    pub agent: String,
    pub seed: u64,
    pub steps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub stopped_early: bool,
    pub wall_seconds: f64,
    pub wall_hours: f64,
    pub circuits_trained: u64,
    pub cache_hits: u64,
    pub unique_circuits: usize,
    pub threshold: f64,
    pub reached_threshold: bool,
    pub best: Option<BestCircuit>,
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub rows: Vec<MetricsRow>,
}

pub fn run_id(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}-{}-seed{}", cfg.task, cfg.agent.name(), seed)
}

/// Opens the evaluation cache the config asks for.
pub fn open_cache(cfg: &ExperimentConfig, data: &crate::datasets::Dataset) -> Result<Arc<EvalCache>> {
    let ns = cache_namespace(data, cfg.split_seed, cfg.environment.max_depth, &cfg.inner_loop);
    Ok(Arc::new(match &cfg.cache_dir {
        Some(dir) => EvalCache::open_in_dir(dir, &ns)?,
        None => EvalCache::in_memory(ns),
    }))
}

pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    run_experiment_with(cfg, seed, |_| false)
}

/// Runs one seed and writes its run directory under `cfg.out_dir`.
/// `stop` sees every row after it is logged; returning true ends the run.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    seed: u64,
    mut stop: impl FnMut(&MetricsRow) -> bool,
) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let id = run_id(cfg, seed);
    let dir = cfg.out_dir.join(&id);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;

    let data = Arc::new(cfg.task.load(cfg.split_seed)?);
    let cache = open_cache(cfg, &data)?;
    let evaluator = Arc::new(VqcEvaluator::new(data, cfg.inner_loop.clone(), Some(cache)));
    let mut env = QasEnv::new(cfg.env_config(), evaluator.clone())?;

    let mut log = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let mut rows = Vec::new();
    let mut tracker = BestTracker::default();
    let mut seen = std::collections::HashSet::new();
    let mut on_step = |rec: &StepRecord<'_, StepInfo>| -> Result<Control> {
        let row = MetricsRow::from_step(&id, rec);
        log.write(&row)?;
        tracker.observe(rec.step, rec.info)?;
        if row.legal {
            seen.insert(row.circuit_hash.clone());
        }
        let halt = stop(&row);
        rows.push(row);
        Ok(if halt { Control::Stop } else { Control::Continue })
    };

    let (summary, agent) = match cfg.agent {
        AgentKind::Ppo => {
            let mut agent = PpoAgent::for_env(&env, cfg.ppo.clone(), seed)?;
            let ckpt = dir.join("agent.ckpt");
            let every = cfg.checkpoint_every;
            let s = agent.train(&mut env, &mut on_step, |a, _| {
                let (_, _, updates) = a.progress();
                if every > 0 && updates % every == 0 {
                    a.save_checkpoint(&ckpt)?;
                }
                Ok(())
            })?;
            (s, Some(agent))
        }
        AgentKind::Random => (random_agent(&mut env, cfg.ppo.total_steps, seed, &mut on_step)?, None),
    };
    log.finish()?;
    if let Some(agent) = &agent {
        agent.save_checkpoint(&dir.join("agent.ckpt"))?;
    }

    let best = tracker.best;
    if let Some(b) = &best {
        let seq = decode(b.tensor.as_ref().expect("tracked tensor"))?;
        std::fs::write(dir.join("best_circuit.qc"), export_circuit(&seq, Some(&b.params)))?;
    }
    let (trained, hits) = evaluator.counters();
    let wall = started.elapsed().as_secs_f64();
    let threshold = cfg.environment.reward.threshold;
    let summary = RunSummary {
        run_id: id,
        task: cfg.task.to_string(),
        agent: cfg.agent.name().to_string(),
        seed,
        steps: summary.steps,
        episodes: summary.episodes,
        updates: summary.updates,
        stopped_early: summary.stopped_early,
        wall_seconds: wall,
        wall_hours: wall / 3600.0,
        circuits_trained: trained,
        cache_hits: hits,
        unique_circuits: seen.len(),
        threshold,
        reached_threshold: best.as_ref().is_some_and(|b| b.test_accuracy >= threshold),
        best,
    };
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutput { dir, summary, rows })
}

/// Best test accuracy seen up to and including each step (0 before any legal step).
pub fn best_so_far(rows: &[MetricsRow]) -> Vec<f64> {
    let mut best = 0.0f64;
    rows.iter()
        .map(|r| {
            if let Some(a) = r.test_accuracy {
                best = best.max(a);
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Task;

    fn tiny(task: Task, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_task(task);
        cfg.out_dir = dir.join("runs");
        cfg.cache_dir = Some(dir.join("cache"));
        cfg.ppo.total_steps = 150;
        cfg.ppo.n_steps = 64;
        cfg.ppo.batch_size = 32;
        cfg.inner_loop.epochs = 3;
        cfg
    }

    #[test]
    fn metrics_round_trip() {
        let row = MetricsRow {
            run_id: "r".into(),
            step: 1,
            episode: 0,
            gate_index: 3,
            qubit_index: 1,
            gate: "CNOT q1 q0".into(),
            legal: false,
            violation: Some(Violation::RepeatedGate),
            reward: -0.01,
            episode_return: 0.1 + 0.2,
            test_accuracy: None,
            train_accuracy: Some(1.0 / 3.0),
            p_delta: 0.0,
            c_rem: 0.5625,
            gates: 2,
            params: 1,
            cnots: 1,
            depth: 2,
            done: true,
            done_reason: Some(DoneReason::IllegalAction),
            circuit_hash: "0123456789abcdef".into(),
        };
        let mut w = MetricsWriter::new(Vec::new()).unwrap();
        w.write(&row).unwrap();
        let bytes = w.finish().unwrap();
        assert!(bytes.starts_with(METRICS_HEADER.as_bytes()));
        assert_eq!(read_metrics(&bytes[..]).unwrap(), vec![row]);
        assert!(read_metrics(&b"step\n1\n"[..]).is_err());
    }

    #[test]
    fn run_writes_artifacts_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(Task::Iris2_01, dir.path());
        let a = run_experiment(&cfg, 5).unwrap();
        let first = std::fs::read(a.dir.join("metrics.csv")).unwrap();
        assert_eq!(a.rows.len(), 150);
        assert!(a.rows.windows(2).all(|w| w[1].step == w[0].step + 1));
        for f in ["best_circuit.qc", "summary.json", "agent.ckpt", "config.toml"] {
            assert!(a.dir.join(f).exists(), "{f}");
        }
        assert_eq!(load_metrics(&a.dir.join("metrics.csv")).unwrap(), a.rows);

        let b = run_experiment(&cfg, 5).unwrap();
        assert_eq!(std::fs::read(b.dir.join("metrics.csv")).unwrap(), first);
        assert!(b.summary.cache_hits > 0);
    }

    #[test]
    fn random_agent_run_and_early_stop() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(Task::Iris2_02, dir.path());
        cfg.agent = AgentKind::Random;
        let out = run_experiment_with(&cfg, 1, |r| r.step == 40).unwrap();
        assert_eq!(out.rows.len(), 40);
        assert!(out.summary.stopped_early);
        assert!(!out.dir.join("agent.ckpt").exists());
        let curve = best_so_far(&out.rows);
        assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    }
}
