//! Belief-net representation, structural validation, and relevance pruning.
//!
//! A [`BeliefNet`] stores one conditional probability table per variable. A CPT is laid
//! out row-major over `(parents..., self)` in the order the parents are listed, so the
//! variable's own value is the fastest-varying index and every row of `cardinality`
//! entries is one conditional distribution.

mod generate;
mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{random_net, Interval, NetGenParams};
pub use io::{load_net, net_from_str, net_to_string, save_net, NetFile};

/// Tolerance for CPT row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

pub type VarId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub cardinality: usize,
}

impl Variable {
    pub fn binary(id: VarId) -> Self {
        Variable {
            id,
            name: format!("v{id}"),
            cardinality: 2,
        }
    }
}

/// A discrete belief net. Variable `i` of `variables` must carry id `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefNet {
    pub variables: Vec<Variable>,
    pub parents: Vec<Vec<VarId>>,
    pub cpts: Vec<Vec<f64>>,
}

/// A query for `P(query | evidence)`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct QuerySpec {
    pub query: VarId,
    pub evidence: BTreeMap<VarId, usize>,
}

impl QuerySpec {
    pub fn new(query: VarId) -> Self {
        QuerySpec {
            query,
            evidence: BTreeMap::new(),
        }
    }

    pub fn with_evidence(mut self, var: VarId, value: usize) -> Self {
        self.evidence.insert(var, value);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    /// Variable at position `i` does not carry id `i`.
    NonDenseId,
    Cardinality,
    UnknownParent,
    DuplicateParent,
    Cycle,
    CptLength,
    NegativeEntry,
    RowSum,
    /// `parents` or `cpts` does not have one entry per variable.
    ArityMismatch,
    QueryUnknown,
    QueryObserved,
    EvidenceUnknown,
    EvidenceValue,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::NonDenseId => "non-dense-id",
            ViolationKind::Cardinality => "cardinality",
            ViolationKind::UnknownParent => "unknown-parent",
            ViolationKind::DuplicateParent => "duplicate-parent",
            ViolationKind::Cycle => "cycle",
            ViolationKind::CptLength => "cpt-length",
            ViolationKind::NegativeEntry => "negative-entry",
            ViolationKind::RowSum => "row-sum",
            ViolationKind::ArityMismatch => "arity-mismatch",
            ViolationKind::QueryUnknown => "query-unknown",
            ViolationKind::QueryObserved => "query-observed",
            ViolationKind::EvidenceUnknown => "evidence-unknown",
            ViolationKind::EvidenceValue => "evidence-value",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub var: VarId,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "variable {}: {}: {}", self.var, self.kind, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid net: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("infeasible generator parameters: {0}")]
    InfeasibleParams(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl BeliefNet {
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn cardinality(&self, v: VarId) -> usize {
        self.variables[v].cardinality
    }

    pub fn arc_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Average number of incoming arcs per node.
    pub fn avg_in_arcs(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.arc_count() as f64 / self.len() as f64
        }
    }

    /// Expected CPT length for `v`, or `None` if a parent id is unknown.
    pub fn expected_cpt_len(&self, v: VarId) -> Option<usize> {
        let mut len = self.variables.get(v)?.cardinality;
        for &p in self.parents.get(v)? {
            len *= self.variables.get(p)?.cardinality;
        }
        Some(len)
    }

    /// Collects every structural and numeric invariant violation. An empty report means
    /// the net is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.variables.len();
        let push = |out: &mut Vec<Violation>, var, kind, detail: String| {
            out.push(Violation { var, kind, detail })
        };

        if self.parents.len() != n || self.cpts.len() != n {
            push(
                &mut out,
                0,
                ViolationKind::ArityMismatch,
                format!(
                    "{} variables, {} parent lists, {} cpts",
                    n,
                    self.parents.len(),
                    self.cpts.len()
                ),
            );
            return out;
        }

        for (i, var) in self.variables.iter().enumerate() {
            if var.id != i {
                push(
                    &mut out,
                    i,
                    ViolationKind::NonDenseId,
                    format!("position {i} holds id {}", var.id),
                );
            }
            if var.cardinality < 2 {
                push(
                    &mut out,
                    i,
                    ViolationKind::Cardinality,
                    format!("cardinality {} < 2", var.cardinality),
                );
            }
        }

        for (v, ps) in self.parents.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &p in ps {
                if p >= n {
                    push(
                        &mut out,
                        v,
                        ViolationKind::UnknownParent,
                        format!("parent id {p} does not exist"),
                    );
                } else if !seen.insert(p) {
                    push(
                        &mut out,
                        v,
                        ViolationKind::DuplicateParent,
                        format!("parent {p} listed twice"),
                    );
                }
            }
        }

        if let Some(v) = self.first_cycle_member() {
            push(
                &mut out,
                v,
                ViolationKind::Cycle,
                "parent relation is not acyclic".to_string(),
            );
        }

        for (v, cpt) in self.cpts.iter().enumerate() {
            let Some(expected) = self.expected_cpt_len(v) else {
                continue;
            };
            if cpt.len() != expected {
                push(
                    &mut out,
                    v,
                    ViolationKind::CptLength,
                    format!("cpt has {} entries, expected {expected}", cpt.len()),
                );
                continue;
            }
            if cpt.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
                push(
                    &mut out,
                    v,
                    ViolationKind::NegativeEntry,
                    "cpt entries must be finite and non-negative".to_string(),
                );
                continue;
            }
            let card = self.variables[v].cardinality.max(1);
            for (row, chunk) in cpt.chunks(card).enumerate() {
                let sum: f64 = chunk.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    push(
                        &mut out,
                        v,
                        ViolationKind::RowSum,
                        format!("row {row} sums to {sum}"),
                    );
                }
            }
        }
        out
    }

    /// Validates the query against this net.
    pub fn validate_query(&self, q: &QuerySpec) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.len();
        if q.query >= n {
            out.push(Violation {
                var: q.query,
                kind: ViolationKind::QueryUnknown,
                detail: "query variable does not exist".to_string(),
            });
        }
        if q.evidence.contains_key(&q.query) {
            out.push(Violation {
                var: q.query,
                kind: ViolationKind::QueryObserved,
                detail: "query variable is observed".to_string(),
            });
        }
        for (&v, &val) in &q.evidence {
            if v >= n {
                out.push(Violation {
                    var: v,
                    kind: ViolationKind::EvidenceUnknown,
                    detail: "evidence on unknown variable".to_string(),
                });
            } else if val >= self.variables[v].cardinality {
                out.push(Violation {
                    var: v,
                    kind: ViolationKind::EvidenceValue,
                    detail: format!(
                        "value {val} out of range for cardinality {}",
                        self.variables[v].cardinality
                    ),
                });
            }
        }
        out
    }

    /// Kahn's algorithm over the known-parent arcs; returns the smallest id left
    /// unprocessed when a cycle exists.
    fn first_cycle_member(&self) -> Option<VarId> {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        let mut children = vec![Vec::new(); n];
        for (v, ps) in self.parents.iter().enumerate() {
            let mut uniq: Vec<_> = ps.iter().copied().filter(|&p| p < n).collect();
            uniq.sort_unstable();
            uniq.dedup();
            for p in uniq {
                indeg[v] += 1;
                children[p].push(v);
            }
        }
        let mut stack: Vec<_> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut done = 0;
        while let Some(v) = stack.pop() {
            done += 1;
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    stack.push(c);
                }
            }
        }
        if done == n {
            None
        } else {
            (0..n).find(|&v| indeg[v] > 0)
        }
    }

    /// A topological order of the variables. Only meaningful on a validated net.
    pub fn topological_order(&self) -> Vec<VarId> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (v, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(v);
            }
        }
        let mut ready: BTreeSet<_> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }
}

/// Ids of the variables whose CPTs take part in answering `q`: the ancestral closure of
/// the query and evidence variables. Every other variable is barren and can be dropped
/// without changing the posterior.
pub fn relevant_factors(net: &BeliefNet, q: &QuerySpec) -> BTreeSet<VarId> {
    let mut relevant = BTreeSet::new();
    let mut stack: Vec<VarId> = std::iter::once(q.query)
        .chain(q.evidence.keys().copied())
        .collect();
    while let Some(v) = stack.pop() {
        if relevant.insert(v) {
            stack.extend(net.parents[v].iter().copied());
        }
    }
    relevant
}
