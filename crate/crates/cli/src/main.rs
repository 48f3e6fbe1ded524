use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qas_core::analysis::{
    analyze_macro, compare_baselines, cost_landscape, reachable_circuits, render_csv, DEFAULT_ACCURACY_THRESHOLD,
};
use qas_core::circuits::{import_circuit, metrics, decode, ImportedCircuit};
use qas_core::config::{AgentKind, ExperimentConfig, Task};
use qas_core::experiment::{load_metrics, open_cache, run_experiment, MetricsRow};
use qas_core::inner_loop::EvalCache;
use qas_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qas", version, about = "Reinforcement-learning search for quantum classifier circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML experiment config; keys it omits come from the task preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task preset: iris2_01, iris2_02, iris2_12, iris or mnist2.
    #[arg(long)]
    task: Option<String>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; one run per seed.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Use the uniform-random baseline agent.
        #[arg(long)]
        random: bool,
        /// Override the number of environment steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Macro statistics over every circuit in the task's evaluation cache.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Read this cache file instead of the configured one.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Metrics logs to replay for the cross-check.
        #[arg(long = "log")]
        logs: Vec<PathBuf>,
        /// Test accuracy that counts as high-performing.
        #[arg(long, default_value_t = DEFAULT_ACCURACY_THRESHOLD)]
        threshold: f64,
    },
    /// Train a circuit file and SEL baselines side by side.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Circuit in the export format, e.g. a run's best_circuit.qc.
        #[arg(long)]
        circuit: PathBuf,
        /// SEL layer counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
    },
    /// Loss over a grid of two parameters of a trained circuit.
    Landscape {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        circuit: PathBuf,
        /// Parameter indices, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        pair: Vec<usize>,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Render metrics logs and report tables as SVG.
    Plot {
        /// CSV files written by `run`, `analyze`, `compare` or `landscape`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for the SVGs (default: next to each input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluation cache tools.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
    /// Print a task's preset config as TOML.
    Preset {
        #[arg(long)]
        task: String,
    },
    /// Count circuits reachable with legal actions, by gate count.
    Space {
        #[arg(long)]
        qubits: usize,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 5_000_000)]
        max_states: usize,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    /// Summarize a cache: namespace, size and best circuits.
    Inspect {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Cache file (default: the task's cache under the configured directory).
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.task) {
        (Some(path), task) => {
            let cfg = ExperimentConfig::load(path)?;
            if let Some(t) = task {
                let t: Task = t.parse()?;
                if t != cfg.task {
                    return Err(Error::InvalidInput(format!("--task {t} conflicts with config task {}", cfg.task)));
                }
            }
            cfg
        }
        (None, Some(task)) => ExperimentConfig::for_task(task.parse()?),
        (None, None) => return Err(Error::InvalidInput("pass --config PATH or --task NAME".into())),
    };
    cfg.apply_env_overrides(|k| std::env::var(k).ok());
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn load_circuit(path: &Path, data_qubits: usize) -> Result<ImportedCircuit> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read circuit file {}: {e}", path.display())))?;
    let c = import_circuit(&text)?;
    if c.seq.num_qubits() != data_qubits {
        return Err(Error::InvalidInput(format!(
            "circuit has {} qubits, the task needs {data_qubits}",
            c.seq.num_qubits()
        )));
    }
    Ok(c)
}

fn cmd_run(cfg: &mut ExperimentConfig, seed: Option<u64>, random: bool, steps: Option<u64>) -> Result<()> {
    if random {
        cfg.agent = AgentKind::Random;
    }
    if let Some(s) = steps {
        cfg.ppo.total_steps = s;
    }
    let seeds = seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
    for s in seeds {
        let out = run_experiment(cfg, s)?;
        let sum = &out.summary;
        let best = sum.best.as_ref().map_or("none".to_string(), |b| {
            format!("test {:.4} train {:.4} gates {} depth {} [{}]", b.test_accuracy, b.train_accuracy, b.metrics.gates, b.metrics.depth, b.gates.join(", "))
        });
        println!(
            "{}: {} steps, {} episodes, {} circuits trained, {} cache hits, {:.1}s; best {best}",
            sum.run_id, sum.steps, sum.episodes, sum.circuits_trained, sum.cache_hits, sum.wall_seconds
        );
        println!("  wrote {}", out.dir.display());
    }
    Ok(())
}

fn open_task_cache(cfg: &ExperimentConfig, file: Option<&Path>) -> Result<EvalCache> {
    match file {
        Some(f) => EvalCache::open_existing(f),
        None => {
            if cfg.cache_dir.is_none() {
                return Err(Error::InvalidInput("config has no cache_dir; pass a cache file".into()));
            }
            let data = cfg.task.load(cfg.split_seed)?;
            let cache = open_cache(cfg, &data)?;
            std::sync::Arc::try_unwrap(cache).map_err(|_| Error::InvalidInput("cache is shared".into()))
        }
    }
}

fn cmd_analyze(cfg: &ExperimentConfig, cache: Option<&Path>, logs: &[PathBuf], threshold: f64) -> Result<()> {
    let cache = open_task_cache(cfg, cache)?;
    let rows: Vec<MetricsRow> =
        logs.iter().map(|p| load_metrics(p)).collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let report = analyze_macro(&cache.entries(), (!logs.is_empty()).then_some(&rows[..]), threshold)?;
    let dir = cfg.out_dir.join("analysis").join(cfg.task.name());
    for path in report.write(&dir)? {
        println!("wrote {}", path.display());
    }
    println!("{} unique circuits, {} with test accuracy >= {threshold}", report.unique_circuits, report.high_performing);
    if let Some(n) = &report.notice {
        println!("notice: {n}");
    }
    if let Some(cc) = &report.cross_check {
        println!(
            "log cross-check: {} logged circuits, {} missing from cache, {} mismatched: {}",
            cc.log_unique,
            cc.missing_from_cache,
            cc.mismatched,
            if cc.consistent() { "consistent" } else { "INCONSISTENT" }
        );
    }
    Ok(())
}

fn cmd_compare(cfg: &ExperimentConfig, circuit: &Path, layers: Option<Vec<usize>>) -> Result<()> {
    let data = cfg.task.load(cfg.split_seed)?;
    let c = load_circuit(circuit, data.num_qubits())?;
    let layers = layers.unwrap_or_else(|| match cfg.task {
        Task::Iris => vec![1, 2, 3],
        Task::Mnist2 => vec![1, 2],
        _ => vec![1],
    });
    let table = compare_baselines(&data, Some(("searched", &c.seq)), &layers, &cfg.inner_loop)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("compare_{}.csv", cfg.task));
    table.write(&path)?;
    print!("{}", table.to_csv_string());
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_landscape(cfg: &ExperimentConfig, circuit: &Path, pair: &[usize], points: usize) -> Result<()> {
    let data = cfg.task.load(cfg.split_seed)?;
    let c = load_circuit(circuit, data.num_qubits())?;
    let params = c.params.ok_or_else(|| Error::InvalidInput("circuit file has no trained parameters".into()))?;
    let [a, b] = pair else { return Err(Error::InvalidInput("--pair takes two indices".into())) };
    let pi = std::f64::consts::PI;
    std::fs::create_dir_all(&cfg.out_dir)?;
    for (label, range) in [("unit", (-1.0, 1.0)), ("pi", (-pi, pi))] {
        let l = cost_landscape(&c.seq, &params, &data, (*a, *b), range, points)?;
        let path = cfg.out_dir.join(format!("landscape_{}_{a}_{b}_{label}.csv", cfg.task));
        l.to_table().write(&path)?;
        println!("wrote {} (min loss {:.6})", path.display(), l.min());
    }
    Ok(())
}

fn cmd_plot(inputs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    for input in inputs {
        let text = std::fs::read_to_string(input)?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot").to_string();
        let title = match input.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
            Some(parent) => format!("{parent}/{stem}"),
            None => stem.clone(),
        };
        let svg = render_csv(&title, &text).map_err(|e| Error::Parse(format!("{}: {e}", input.display())))?;
        let dir = out.map(Path::to_path_buf).unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{stem}.svg"));
        std::fs::write(&path, svg)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_cache_inspect(cfg: Option<&ExperimentConfig>, file: Option<&Path>, top: usize) -> Result<()> {
    let cache = match (cfg, file) {
        (_, Some(f)) => EvalCache::open_existing(f)?,
        (Some(cfg), None) => open_task_cache(cfg, None)?,
        (None, None) => return Err(Error::InvalidInput("pass --file, --config or --task".into())),
    };
    println!("file: {}", cache.path().map_or("(memory)".into(), |p| p.display().to_string()));
    println!("namespace: {}", cache.namespace());
    let mut entries = cache.entries();
    println!("entries: {}", entries.len());
    entries.sort_by(|x, y| {
        y.result.aggregate_test_acc.total_cmp(&x.result.aggregate_test_acc).then_with(|| x.key.cmp(&y.key))
    });
    for e in entries.iter().take(top) {
        let seq = decode(&e.tensor)?;
        let m = metrics(&seq);
        let gates: Vec<String> = seq.gates().map(|g| g.gate.to_string()).collect();
        println!(
            "{:016x} test {:.4} train {:.4} G{} P{} C{} D{} [{}]",
            e.key,
            e.result.aggregate_test_acc,
            e.result.aggregate_train_acc,
            m.gates,
            m.params,
            m.cnots,
            m.depth,
            gates.join(", ")
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { cfg, seed, random, steps } => cmd_run(&mut load_config(&cfg)?, seed, random, steps),
        Command::Analyze { cfg, cache, logs, threshold } => {
            cmd_analyze(&load_config(&cfg)?, cache.as_deref(), &logs, threshold)
        }
        Command::Compare { cfg, circuit, layers } => cmd_compare(&load_config(&cfg)?, &circuit, layers),
        Command::Landscape { cfg, circuit, pair, points } => cmd_landscape(&load_config(&cfg)?, &circuit, &pair, points),
        Command::Plot { inputs, out } => cmd_plot(&inputs, out.as_deref()),
        Command::Cache { command: CacheCommand::Inspect { cfg, file, top } } => {
            let config = if cfg.config.is_some() || cfg.task.is_some() { Some(load_config(&cfg)?) } else { None };
            cmd_cache_inspect(config.as_ref(), file.as_deref(), top)
        }
        Command::Preset { task } => {
            print!("{}", ExperimentConfig::for_task(task.parse()?).to_toml_string()?);
            Ok(())
        }
        Command::Space { qubits, depth, max_states } => {
            let counts = reachable_circuits(qubits, depth, max_states)?;
            println!("gates,circuits,cumulative");
            let mut total = 0;
            for (g, c) in counts.iter().enumerate() {
                total += c;
                println!("{g},{c},{total}");
            }
            println!("total reachable (excluding the empty circuit): {}", total - 1);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
