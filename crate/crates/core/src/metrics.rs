//! Report rows: per-net, per-heuristic metric records and their tabular renderings.

use thiserror::Error;

use crate::costmodel::{bytes_to_f64, memory_accounting, query_costs, MachineParams, QueryCost};
use crate::factoring::{tree_stats, EvalTree, Heuristic};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("parallel time must be positive, got {0}")]
    NonPositiveParallelTime(f64),
    #[error("processor count must be at least 1")]
    NoProcessors,
}

/// Speedup T_s/T_p, cost T_p*N_u, and efficiency T_s/cost.
pub fn speedup_cost_efficiency(t_s: f64, t_p: f64, n_u: u64) -> Result<(f64, f64, f64), MetricsError> {
    if t_p.is_nan() || t_p <= 0.0 {
        return Err(MetricsError::NonPositiveParallelTime(t_p));
    }
    if n_u == 0 {
        return Err(MetricsError::NoProcessors);
    }
    let speedup = t_s / t_p;
    let cost = t_p * n_u as f64;
    Ok((speedup, cost, t_s / cost))
}

/// Descriptive columns of a net.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetInfo {
    pub nodes: usize,
    pub avg_arcs: f64,
    pub obs: usize,
}

/// Evaluation-tree parallelism columns.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeParallelism {
    /// Products that use more than one processor.
    pub para_cp: usize,
    pub pct_cp: f64,
    /// Products on the longest path.
    pub lp_cp: usize,
    pub lp_speedup: f64,
    pub lp_pct_cp: f64,
    /// Longest-path parallel time over the product-parallel-only query time.
    pub pct_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub net: usize,
    pub heuristic: Heuristic,
    pub info: NetInfo,
    pub cp_count: usize,
    /// Smallest sequential query time over the heuristics run on this net.
    pub seq_time_best: f64,
    pub t_s_query: f64,
    pub dm: usize,
    pub md: usize,
    /// max(d1, d2, r) over every product rather than only the largest.
    pub md_all: usize,
    pub dd: f64,
    pub cm_cst: f64,
    pub cp_cst: f64,
    pub cp_over_cm: Option<f64>,
    pub ttl_cst: f64,
    pub r_spdp: f64,
    pub a_spdp: f64,
    pub n_u_query: u64,
    pub efficiency: f64,
    pub bca_cm: f64,
    pub dist_cm: f64,
    pub bca_mem: f64,
    pub dist_mem: f64,
    pub memory: f64,
    /// Dist-mem over memory.
    pub mem_ratio: Option<f64>,
    pub tree_par: TreeParallelism,
}

/// Tree-parallelism columns for one costed tree.
pub fn tree_parallelism_row(qc: &QueryCost, seq_time_best: f64) -> TreeParallelism {
    let cp_count = qc.cps.len();
    let frac = |k: usize| if cp_count == 0 { 0.0 } else { k as f64 / cp_count as f64 };
    let para_cp = qc.cps.iter().filter(|(_, c)| c.is_parallel()).count();
    let lp_cp = qc.lp.cp_count();
    TreeParallelism {
        para_cp,
        pct_cp: frac(para_cp),
        lp_cp,
        lp_speedup: if qc.lp.par_time > 0.0 {
            seq_time_best / qc.lp.par_time
        } else {
            1.0
        },
        lp_pct_cp: frac(lp_cp),
        pct_time: if qc.t_p_query > 0.0 {
            qc.lp.par_time / qc.t_p_query
        } else {
            1.0
        },
    }
}

/// One row per heuristic for a single net. A query needing no products has nothing
/// to parallelise and reports unit speedup and efficiency.
pub fn build_report_rows(
    net: usize,
    info: &NetInfo,
    trees: &[(Heuristic, EvalTree)],
    machine: &MachineParams,
) -> Vec<ReportRow> {
    let costed: Vec<(Heuristic, &EvalTree, QueryCost)> = trees
        .iter()
        .map(|(h, t)| (*h, t, query_costs(t, machine)))
        .collect();
    let seq_time_best = costed
        .iter()
        .map(|(_, _, q)| q.t_s_query)
        .fold(f64::INFINITY, f64::min);

    costed
        .into_iter()
        .map(|(heuristic, tree, qc)| {
            let stats = tree_stats(tree);
            let mem = memory_accounting(tree, machine);
            let (r_spdp, efficiency, a_spdp) =
                match speedup_cost_efficiency(qc.t_s_query, qc.t_p_query, qc.n_u_query) {
                    Ok((s, _, e)) => (s, e, seq_time_best / qc.t_p_query),
                    Err(_) => (1.0, 1.0, 1.0),
                };
            let memory = bytes_to_f64(&mem.bca_mem_excl_final);
            let dist_mem = bytes_to_f64(&mem.dist_mem);
            ReportRow {
                net,
                heuristic,
                info: info.clone(),
                cp_count: stats.cp_count,
                seq_time_best,
                t_s_query: qc.t_s_query,
                dm: stats.dm,
                md: stats.md,
                md_all: stats.md_all,
                dd: stats.dd(),
                cm_cst: qc.cm_total,
                cp_cst: qc.cp_total,
                cp_over_cm: (qc.cm_total > 0.0).then(|| qc.cp_total / qc.cm_total),
                ttl_cst: qc.t_p_query,
                r_spdp,
                a_spdp,
                n_u_query: qc.n_u_query,
                efficiency,
                bca_cm: qc.cm_total,
                dist_cm: qc.dist_cm_total,
                bca_mem: bytes_to_f64(&mem.bca_mem),
                dist_mem,
                memory,
                mem_ratio: (memory > 0.0).then(|| dist_mem / memory),
                tree_par: tree_parallelism_row(&qc, seq_time_best),
            }
        })
        .collect()
}

/// Two significant figures in the compact exponent style used by the tables, e.g.
/// `2.7+8` for 2.7e8.
pub fn fmt_cost(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:.1e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    if exp.starts_with('-') {
        format!("{mantissa}{exp}")
    } else {
        format!("{mantissa}+{exp}")
    }
}

fn fmt_fixed(x: f64, places: usize) -> String {
    format!("{x:.places$}")
}

fn fmt_opt(x: Option<f64>, f: impl Fn(f64) -> String) -> String {
    x.map(f).unwrap_or_else(|| "-".to_string())
}

/// Full-precision CSV cell.
fn csv_f64(x: f64) -> String {
    format!("{x:?}")
}

fn csv_opt(x: Option<f64>) -> String {
    x.map(csv_f64).unwrap_or_default()
}

/// A table with parallel machine-readable and rounded renderings of every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub csv_rows: Vec<Vec<String>>,
    pub text_rows: Vec<Vec<String>>,
}

impl Table {
    fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        Table {
            title: title.into(),
            headers: headers.iter().map(|s| s.to_string()).collect(),
            csv_rows: Vec::new(),
            text_rows: Vec::new(),
        }
    }

    fn push(&mut self, cells: Vec<(String, String)>) {
        let (csv, text) = cells.into_iter().unzip();
        self.csv_rows.push(csv);
        self.text_rows.push(text);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.csv_rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.text_rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = format!("{}\n{}\n", self.title, line(&self.headers));
        for row in &self.text_rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

fn int(x: impl ToString) -> (String, String) {
    let s = x.to_string();
    (s.clone(), s)
}

fn real(x: f64, text: String) -> (String, String) {
    (csv_f64(x), text)
}

/// Net descriptions: nodes, average in-arcs, observations, products, best sequential time.
pub fn net_table(rows: &[&ReportRow]) -> Table {
    let mut t = Table::new("Random net descriptions", &["#", "nodes", "arcs", "obs", "CPs", "seq-time"]);
    for r in rows {
        t.push(vec![
            int(r.net),
            int(r.info.nodes),
            real(r.info.avg_arcs, fmt_fixed(r.info.avg_arcs, 1)),
            int(r.info.obs),
            int(r.cp_count),
            real(r.seq_time_best, fmt_cost(r.seq_time_best)),
        ]);
    }
    t
}

/// Per-heuristic results: dimensions, costs and speedups, followed by auxiliary columns.
pub fn results_table(heuristic: Heuristic, rows: &[&ReportRow]) -> Table {
    let mut t = Table::new(
        format!("Test results for {heuristic}"),
        &[
            "#", "dm", "md", "dd", "cm-cst", "cp-cst", "cp/cm", "ttl-cst", "r-spdp", "a-spdp", "md-all",
            "n-u", "eff",
        ],
    );
    for r in rows {
        t.push(vec![
            int(r.net),
            int(r.dm),
            int(r.md),
            real(r.dd, fmt_fixed(r.dd, 2)),
            real(r.cm_cst, fmt_cost(r.cm_cst)),
            real(r.cp_cst, fmt_cost(r.cp_cst)),
            (csv_opt(r.cp_over_cm), fmt_opt(r.cp_over_cm, |x| fmt_fixed(x, 2))),
            real(r.ttl_cst, fmt_cost(r.ttl_cst)),
            real(r.r_spdp, fmt_fixed(r.r_spdp, 1)),
            real(r.a_spdp, fmt_fixed(r.a_spdp, 1)),
            int(r.md_all),
            int(r.n_u_query),
            real(r.efficiency, fmt_fixed(r.efficiency, 3)),
        ]);
    }
    t
}

/// Communication and memory under the broadcast-compute-aggregate and replicated-net
/// models.
pub fn memory_table(heuristic: Heuristic, rows: &[&ReportRow]) -> Table {
    let mut t = Table::new(
        format!("Dist-net vs BCA for {heuristic}"),
        &["#", "BCA-cm", "Dist-cm", "BCA-mem", "Dist-mem", "memory", "mem/Dist-mem"],
    );
    for r in rows {
        t.push(vec![
            int(r.net),
            real(r.bca_cm, fmt_cost(r.bca_cm)),
            real(r.dist_cm, fmt_cost(r.dist_cm)),
            real(r.bca_mem, fmt_cost(r.bca_mem)),
            real(r.dist_mem, fmt_cost(r.dist_mem)),
            real(r.memory, fmt_cost(r.memory)),
            (csv_opt(r.mem_ratio), fmt_opt(r.mem_ratio, |x| fmt_fixed(x, 0))),
        ]);
    }
    t
}

pub fn tree_parallelism_table(heuristic: Heuristic, rows: &[&ReportRow]) -> Table {
    let mut t = Table::new(
        format!("Evaluation-tree parallelism for {heuristic}"),
        &["net", "para-cp", "%-cp", "lp-cp", "lp-speedup", "lp-%-cp", "%-time"],
    );
    for r in rows {
        let p = &r.tree_par;
        t.push(vec![
            int(r.net),
            int(p.para_cp),
            real(p.pct_cp, fmt_fixed(p.pct_cp, 2)),
            int(p.lp_cp),
            real(p.lp_speedup, fmt_fixed(p.lp_speedup, 1)),
            real(p.lp_pct_cp, fmt_fixed(p.lp_pct_cp, 2)),
            real(p.pct_time, fmt_fixed(p.pct_time, 3)),
        ]);
    }
    t
}
