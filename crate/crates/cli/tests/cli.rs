use std::path::Path;
use std::process::{Command, Output};

fn qas(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qas"))
        .args(args)
        .current_dir(dir)
        .env("QAS_CACHE_DIR", dir.join("cache-env"))
        .output()
        .expect("spawn qas")
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout:\n{stdout}\nstderr:\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn err(out: &Output) -> String {
    assert!(!out.status.success());
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_then_analyze_inspect_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let stdout = ok(&qas(d, &["run", "--task", "iris2_01", "--seed", "7", "--steps", "300", "--out", "runs"]));
    assert!(stdout.contains("iris2_01-ppo-seed7: 300 steps"), "{stdout}");
    let run = d.join("runs/iris2_01-ppo-seed7");
    for f in ["metrics.csv", "best_circuit.qc", "summary.json", "agent.ckpt", "config.toml"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    // the env var wins over the preset cache directory
    assert!(d.join("cache-env").is_dir());
    assert!(!d.join("cache").exists());

    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("# qas-metrics v1\n"));
    assert_eq!(metrics.lines().count(), 302);

    let stdout = ok(&qas(d, &["analyze", "--task", "iris2_01", "--out", "runs", "--log", "runs/iris2_01-ppo-seed7/metrics.csv"]));
    assert!(stdout.contains(": consistent"), "{stdout}");
    assert!(d.join("runs/analysis/iris2_01/transitions.csv").is_file());

    let stdout = ok(&qas(d, &["cache", "inspect", "--task", "iris2_01", "--top", "2"]));
    assert!(stdout.contains("namespace: iris2_01|split_seed=42"), "{stdout}");

    let stdout = ok(&qas(
        d,
        &["plot", "runs/iris2_01-ppo-seed7/metrics.csv", "runs/analysis/iris2_01/macro_summary.csv", "--out", "svg"],
    ));
    assert_eq!(stdout.lines().count(), 2);
    let svg = std::fs::read_to_string(d.join("svg/metrics.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("Test accuracy"));
}

#[test]
fn random_agent_and_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("exp.toml"), "task = \"iris2_02\"\nseeds = [5]\n[ppo]\ntotal_steps = 50\n").unwrap();
    let stdout = ok(&qas(d, &["run", "--config", "exp.toml", "--random", "--out", "o"]));
    assert!(stdout.contains("iris2_02-random-seed5: 50 steps"), "{stdout}");
    let cfg = std::fs::read_to_string(d.join("o/iris2_02-random-seed5/config.toml")).unwrap();
    assert!(cfg.contains("agent = \"random\""), "{cfg}");
}

#[test]
fn compare_and_landscape_from_a_circuit_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let circuit = "# qas-circuit v1\nqubits 2\nmax_depth 4\nRY q0 p0\nCNOT q0 q1\nRY q1 p1\nparams [0.4, -0.3]\n";
    std::fs::write(d.join("c.qc"), circuit).unwrap();
    let stdout = ok(&qas(d, &["compare", "--task", "iris2_01", "--circuit", "c.qc", "--out", "o"]));
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "model,G,P,C,D,TrA,TeA");
    assert!(lines[1].starts_with("searched,3,2,1,3,"), "{stdout}");
    assert!(lines[2].starts_with("SEL(1),8,6,2,5,"), "{stdout}");

    let stdout = ok(&qas(d, &["landscape", "--task", "iris2_01", "--circuit", "c.qc", "--points", "5", "--out", "o"]));
    assert_eq!(stdout.lines().count(), 2);
    let grid = std::fs::read_to_string(d.join("o/landscape_iris2_01_0_1_pi.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("theta0,theta1,loss"));
    assert_eq!(grid.lines().count(), 26);
}

#[test]
fn search_space_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&qas(tmp.path(), &["space", "--qubits", "2", "--depth", "1"]));
    assert!(stdout.contains("\n2,9,18\n"), "{stdout}");
}

#[test]
fn bad_input_fails_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(err(&qas(d, &["compare", "--task", "iris", "--circuit", "missing.qc"])).contains("cannot read circuit file"));
    assert!(err(&qas(d, &["run", "--task", "nosuchtask"])).contains("unknown task"));
    assert!(err(&qas(d, &["run"])).contains("--config"));
    std::fs::write(d.join("bad.toml"), "task = \"iris\"\nbogus = 1\n").unwrap();
    assert!(!qas(d, &["run", "--config", "bad.toml"]).status.success());
    std::fs::write(d.join("c.qc"), "# qas-circuit v1\nqubits 5\nmax_depth 4\nRY q0 p0\n").unwrap();
    assert!(err(&qas(d, &["compare", "--task", "iris", "--circuit", "c.qc"])).contains("qubits"));
}

#[test]
fn shipped_configs_match_presets() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for task in ["iris2_01", "iris2_02", "iris2_12", "iris", "mnist2"] {
        let shipped = std::fs::read_to_string(root.join(format!("{task}.toml"))).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(ok(&qas(tmp.path(), &["preset", "--task", task])), shipped, "{task}");
    }
}
