use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use super::CsvTable;
use crate::circuits::decode;
use crate::error::{invalid, Result};
use crate::experiment::MetricsRow;
use crate::inner_loop::CacheEntry;
use crate::quantum::{Gate, GateKind};

pub const DEFAULT_ACCURACY_THRESHOLD: f64 = 0.9;
/// Length of the gate-kind windows counted as patterns.
pub const PATTERN_LEN: usize = 4;

/// Gate roles counted per qubit.
pub const USAGE_ROLES: [&str; 5] = ["RX", "RY", "RZ", "CNOT_control", "CNOT_target"];

#[derive(Clone, Debug, PartialEq)]
pub struct MacroReport {
    pub threshold: f64,
    pub unique_circuits: usize,
    pub high_performing: usize,
    /// Set when no circuit reaches the threshold.
    pub notice: Option<String>,
    /// (accuracy bin, depth) -> count, over all circuits.
    pub accuracy_depth: BTreeMap<(String, usize), usize>,
    /// `gate_usage[qubit][role]` over high performers, roles as in [`USAGE_ROLES`].
    pub gate_usage: Vec<[usize; 5]>,
    /// Consecutive gate kinds in decode order, high performers only.
    pub transition_counts: [[usize; 4]; 4],
    /// `gate_by_depth[depth][kind]` (depth 0-based), high performers only.
    pub gate_by_depth: Vec<[usize; 4]>,
    /// Kind windows and their counts, most frequent first.
    pub patterns: Vec<(String, usize)>,
    pub cross_check: Option<CrossCheck>,
}

/// Comparison of the report's cache view with a replay of metrics logs.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossCheck {
    pub log_unique: usize,
    pub missing_from_cache: usize,
    pub mismatched: usize,
    /// Accuracy/depth counts of the logged circuits, from the log alone.
    pub replay_counts: BTreeMap<(String, usize), usize>,
    /// The same counts computed from the cache entries.
    pub cache_counts: BTreeMap<(String, usize), usize>,
}

impl CrossCheck {
    pub fn consistent(&self) -> bool {
        self.missing_from_cache == 0 && self.mismatched == 0 && self.replay_counts == self.cache_counts
    }
}

/// Bins of width 0.1 labelled by their lower edge; exactly 1.0 gets its own bin.
pub fn accuracy_bin(acc: f64) -> String {
    if acc >= 1.0 {
        return "1.0".into();
    }
    let b = (acc * 10.0 + 1e-9).floor().clamp(0.0, 9.0) as usize;
    format!("0.{b}")
}

fn kind_name(k: GateKind) -> &'static str {
    k.name()
}

impl MacroReport {
    pub fn transition_probabilities(&self) -> [[f64; 4]; 4] {
        let mut p = [[0.0; 4]; 4];
        for (i, row) in self.transition_counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            if total > 0 {
                for j in 0..4 {
                    p[i][j] = row[j] as f64 / total as f64;
                }
            }
        }
        p
    }

    pub fn accuracy_depth_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["accuracy_bin", "depth", "count"]);
        for ((bin, d), c) in &self.accuracy_depth {
            t.push(vec![bin.clone(), d.to_string(), c.to_string()]);
        }
        t
    }

    pub fn gate_usage_table(&self) -> CsvTable {
        let mut t = CsvTable::new(std::iter::once("qubit").chain(USAGE_ROLES));
        for (q, counts) in self.gate_usage.iter().enumerate() {
            t.push(std::iter::once(q.to_string()).chain(counts.iter().map(|c| c.to_string())).collect());
        }
        t
    }

    pub fn transition_table(&self) -> CsvTable {
        let mut t = CsvTable::new(std::iter::once("from").chain(GateKind::ALL.iter().map(|k| kind_name(*k))));
        let p = self.transition_probabilities();
        for (i, k) in GateKind::ALL.iter().enumerate() {
            t.push(std::iter::once(kind_name(*k).to_string()).chain(p[i].iter().map(|v| v.to_string())).collect());
        }
        t
    }

    pub fn gate_by_depth_table(&self) -> CsvTable {
        let mut t = CsvTable::new(std::iter::once("depth").chain(GateKind::ALL.iter().map(|k| kind_name(*k))));
        for (d, counts) in self.gate_by_depth.iter().enumerate() {
            t.push(std::iter::once((d + 1).to_string()).chain(counts.iter().map(|c| c.to_string())).collect());
        }
        t
    }

    pub fn patterns_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["pattern", "count"]);
        for (p, c) in &self.patterns {
            t.push(vec![p.clone(), c.to_string()]);
        }
        t
    }

    pub fn summary_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["key", "value"]);
        let mut kv = vec![
            ("threshold", self.threshold.to_string()),
            ("unique_circuits", self.unique_circuits.to_string()),
            ("high_performing", self.high_performing.to_string()),
        ];
        if let Some(cc) = &self.cross_check {
            kv.push(("log_unique_circuits", cc.log_unique.to_string()));
            kv.push(("log_missing_from_cache", cc.missing_from_cache.to_string()));
            kv.push(("log_mismatched", cc.mismatched.to_string()));
            kv.push(("log_cross_check", if cc.consistent() { "consistent" } else { "inconsistent" }.to_string()));
        }
        for (k, v) in kv {
            t.push(vec![k.to_string(), v]);
        }
        t
    }

    /// Writes every table (and `notice.txt` when set) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, table) in [
            ("macro_summary.csv", self.summary_table()),
            ("accuracy_depth.csv", self.accuracy_depth_table()),
            ("gate_usage.csv", self.gate_usage_table()),
            ("transitions.csv", self.transition_table()),
            ("gate_by_depth.csv", self.gate_by_depth_table()),
            ("patterns.csv", self.patterns_table()),
        ] {
            let path = dir.join(name);
            table.write(&path)?;
            written.push(path);
        }
        let notice = dir.join("notice.txt");
        match &self.notice {
            Some(n) => {
                std::fs::write(&notice, format!("{n}\n"))?;
                written.push(notice);
            }
            None if notice.exists() => std::fs::remove_file(notice)?,
            None => {}
        }
        Ok(written)
    }
}

/// Summaries of the unique circuits in `entries`; `logs` adds a replay cross-check.
pub fn analyze_macro(entries: &[CacheEntry], logs: Option<&[MetricsRow]>, threshold: f64) -> Result<MacroReport> {
    if entries.is_empty() {
        return Err(invalid("the evaluation cache is empty"));
    }
    let num_qubits = entries[0].tensor.num_qubits();
    let mut report = MacroReport {
        threshold,
        unique_circuits: entries.len(),
        high_performing: 0,
        notice: None,
        accuracy_depth: BTreeMap::new(),
        gate_usage: vec![[0; 5]; num_qubits],
        transition_counts: [[0; 4]; 4],
        gate_by_depth: Vec::new(),
        patterns: Vec::new(),
        cross_check: None,
    };
    let mut patterns: HashMap<String, usize> = HashMap::new();
    let mut depth_of = HashMap::with_capacity(entries.len());

    for e in entries {
        let seq = decode(&e.tensor)?;
        let acc = e.result.aggregate_test_acc;
        depth_of.insert(e.key, (acc, seq.depth()));
        *report.accuracy_depth.entry((accuracy_bin(acc), seq.depth())).or_default() += 1;
        if acc < threshold {
            continue;
        }
        report.high_performing += 1;
        let kinds = seq.kinds();
        for pg in seq.gates() {
            match pg.gate {
                Gate::Cnot { control, target } => {
                    report.gate_usage[control][3] += 1;
                    report.gate_usage[target][4] += 1;
                }
                g => report.gate_usage[g.primary_qubit()][g.kind().index()] += 1,
            }
            if report.gate_by_depth.len() <= pg.depth {
                report.gate_by_depth.resize(pg.depth + 1, [0; 4]);
            }
            report.gate_by_depth[pg.depth][pg.gate.kind().index()] += 1;
        }
        for w in kinds.windows(2) {
            report.transition_counts[w[0].index()][w[1].index()] += 1;
        }
        let windows: Vec<&[GateKind]> =
            if kinds.len() < PATTERN_LEN { vec![&kinds[..]] } else { kinds.windows(PATTERN_LEN).collect() };
        for w in windows.into_iter().filter(|w| !w.is_empty()) {
            let name = format!("[{}]", w.iter().map(|k| kind_name(*k)).collect::<Vec<_>>().join(", "));
            *patterns.entry(name).or_default() += 1;
        }
    }
    let mut patterns: Vec<(String, usize)> = patterns.into_iter().collect();
    patterns.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    report.patterns = patterns;
    if report.high_performing == 0 {
        report.notice = Some(format!(
            "no circuit reaches test accuracy >= {threshold}; gate usage, transition, depth and pattern reports are empty"
        ));
    }

    if let Some(rows) = logs {
        let mut seen: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.legal) {
            let key = u64::from_str_radix(&r.circuit_hash, 16)
                .map_err(|_| invalid(format!("bad circuit hash {:?} at step {}", r.circuit_hash, r.step)))?;
            let acc = r.test_accuracy.ok_or_else(|| invalid(format!("legal step {} has no accuracy", r.step)))?;
            seen.entry(key).or_insert((acc, r.depth));
        }
        let mut cc = CrossCheck {
            log_unique: seen.len(),
            missing_from_cache: 0,
            mismatched: 0,
            replay_counts: BTreeMap::new(),
            cache_counts: BTreeMap::new(),
        };
        for (key, (acc, depth)) in &seen {
            *cc.replay_counts.entry((accuracy_bin(*acc), *depth)).or_default() += 1;
            match depth_of.get(key) {
                None => cc.missing_from_cache += 1,
                Some(&(c_acc, c_depth)) => {
                    *cc.cache_counts.entry((accuracy_bin(c_acc), c_depth)).or_default() += 1;
                    if c_acc != *acc || c_depth != *depth {
                        cc.mismatched += 1;
                    }
                }
            }
        }
        report.cross_check = Some(cc);
    }
    Ok(report)
}
