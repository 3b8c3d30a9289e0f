//! Corpus runs: generate nets, build one tree per heuristic, cost them and tabulate.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::{MachineError, MachineParams};
use crate::factoring::{build_tree, check_invariants, EvalTree, Heuristic};
use crate::factors::query_scopes;
use crate::metrics::{
    build_report_rows, memory_table, net_table, results_table, tree_parallelism_table, NetInfo,
    ReportRow, Table,
};
use crate::network::{random_net, BeliefNet, NetError, NetGenParams, QuerySpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub nets: usize,
    /// Generator ranges; the seed field is replaced per net by [`net_seed`].
    pub generator: NetGenParams,
    pub heuristics: Vec<Heuristic>,
    pub machine: MachineParams,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nets: 50,
            generator: NetGenParams::default(),
            heuristics: Heuristic::ALL.to_vec(),
            machine: MachineParams::default(),
            master_seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.nets == 0 {
            return Err(ExperimentError::Config("net count must be at least 1".into()));
        }
        if self.heuristics.is_empty() {
            return Err(ExperimentError::Config("heuristic list is empty".into()));
        }
        let mut seen = self.heuristics.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.heuristics.len() {
            return Err(ExperimentError::Config("heuristic listed twice".into()));
        }
        self.machine.validate()?;
        self.generator.check()?;
        Ok(())
    }

    pub fn net_params(&self, index: usize) -> NetGenParams {
        self.generator.clone().with_seed(net_seed(self.master_seed, index))
    }
}

/// SplitMix64 finaliser.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator seed of net `index`: SplitMix64 of `splitmix64(master) ^ index`. Mixing the
/// master first keeps corpora of nearby master seeds from sharing nets.
pub fn net_seed(master: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master) ^ index as u64)
}

/// One generated net with its trees.
#[derive(Clone, Debug)]
pub struct NetCase {
    pub index: usize,
    pub seed: u64,
    pub net: BeliefNet,
    pub query: QuerySpec,
    pub info: NetInfo,
    pub trees: Vec<(Heuristic, EvalTree)>,
}

/// Generates net `index` of the corpus and builds a checked tree for every heuristic.
pub fn plan_net(config: &ExperimentConfig, index: usize) -> Result<NetCase, String> {
    let params = config.net_params(index);
    let (net, query) = random_net(&params).map_err(|e| e.to_string())?;
    let leaves = query_scopes(&net, &query);
    let trees = config
        .heuristics
        .iter()
        .map(|&h| {
            let tree = build_tree(h, &leaves, query.query, &config.machine).map_err(|e| format!("{h}: {e}"))?;
            let problems = check_invariants(&tree);
            if problems.is_empty() {
                Ok((h, tree))
            } else {
                Err(format!("{h}: {}", problems.join("; ")))
            }
        })
        .collect::<Result<Vec<_>, String>>()?;
    let info = NetInfo {
        nodes: net.len(),
        avg_arcs: net.avg_in_arcs(),
        obs: query.evidence.len(),
    };
    Ok(NetCase {
        index,
        seed: params.seed,
        net,
        query,
        info,
        trees,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetFailure {
    pub net: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    /// Net-major, then in configured heuristic order.
    pub rows: Vec<ReportRow>,
    pub failures: Vec<NetFailure>,
}

/// Runs the whole corpus. Nets are processed in parallel; a net that fails is recorded
/// and the rest continue.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun, ExperimentError> {
    config.validate()?;
    let outcomes: Vec<Result<Vec<ReportRow>, NetFailure>> = (0..config.nets)
        .into_par_iter()
        .map(|i| {
            plan_net(config, i)
                .map(|case| build_report_rows(i, &case.info, &case.trees, &config.machine))
                .map_err(|message| NetFailure {
                    net: i,
                    seed: config.net_params(i).seed,
                    message,
                })
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => rows.extend(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(ExperimentRun {
        config: config.clone(),
        rows,
        failures,
    })
}

impl ExperimentRun {
    pub fn rows_for(&self, h: Heuristic) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| r.heuristic == h).collect()
    }

    /// Every table with the file stem it is written under.
    pub fn tables(&self) -> Vec<(String, Table)> {
        let first = self.rows_for(self.config.heuristics[0]);
        let mut out = vec![("table1".to_string(), net_table(&first))];
        for &h in &self.config.heuristics {
            let rows = self.rows_for(h);
            out.push((format!("results_{h}"), results_table(h, &rows)));
            out.push((format!("memory_{h}"), memory_table(h, &rows)));
            out.push((format!("treepar_{h}"), tree_parallelism_table(h, &rows)));
        }
        out
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "net_seed_rule": "seed of net i = splitmix64(splitmix64(master_seed) ^ i)",
            "seq_time_best": "minimum sequential query time over the heuristics of this run",
            "failures": self.failures,
        })
    }

    pub fn tables_text(&self) -> String {
        let mut text = String::new();
        for (_, t) in self.tables() {
            text.push_str(&t.to_text());
            text.push('\n');
        }
        if !self.failures.is_empty() {
            text.push_str("Failed nets\n");
            for f in &self.failures {
                text.push_str(&format!("{} (seed {}): {}\n", f.net, f.seed, f.message));
            }
        }
        text
    }

    /// Writes `<stem>.csv` for every table, `tables.txt` and `run.json` into `dir`,
    /// returning the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ExperimentError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut files: Vec<(PathBuf, String)> = self
            .tables()
            .into_iter()
            .map(|(stem, t)| (dir.join(format!("{stem}.csv")), t.to_csv()))
            .collect();
        files.push((dir.join("tables.txt"), self.tables_text()));
        let meta = serde_json::to_string_pretty(&self.metadata()).expect("metadata serializes");
        files.push((dir.join("run.json"), meta + "\n"));
        for (path, body) in &files {
            std::fs::write(path, body).map_err(io(path))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}
