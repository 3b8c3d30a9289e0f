//! Evaluation-tree construction.
//!
//! An evaluation tree is a binary tree over the query's factors. Each internal node
//! takes the conformal product of its children and then sums out every variable that no
//! factor outside its subtree mentions (the query variable is never summed). Builders
//! differ only in which pair of pending factors they combine next.

mod eval;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::{parallel_cp_cost, MachineParams};
use crate::factors::{FactorError, Scope};
use crate::network::VarId;

pub use eval::{evaluate_tree, DEFAULT_EVAL_CAP};
pub use stats::{check_invariants, tree_stats, TreeStats};

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("no factors to combine")]
    NoFactors,
    #[error("query variable {0} appears in no factor")]
    QueryAbsent(VarId),
    #[error("node {node} has a {dimension}-variable product with {entries} entries, above the cap of {cap}")]
    CapExceeded {
        node: NodeId,
        dimension: usize,
        entries: u128,
        cap: u128,
    },
    #[error("tree has {tree} leaves but {given} factors were supplied")]
    LeafCount { tree: usize, given: usize },
    #[error("leaf {node} expects scope {expected}, factor has {got}")]
    LeafScope {
        node: NodeId,
        expected: Scope,
        got: Scope,
    },
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("tree file parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Factor(#[from] FactorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Input factor `factor`, by position in the builder's input list.
    Leaf { factor: usize, scope: Scope },
    /// Product of two children followed by summing out `sum_out`; `scope` is the
    /// variable set left afterwards.
    Product {
        left: NodeId,
        right: NodeId,
        sum_out: Vec<VarId>,
        scope: Scope,
    },
}

impl Node {
    pub fn scope(&self) -> &Scope {
        match self {
            Node::Leaf { scope, .. } | Node::Product { scope, .. } => scope,
        }
    }
}

/// Leaves come first, in input order; every product node follows its children, so
/// visiting nodes by ascending id is a valid bottom-up schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalTree {
    pub query: VarId,
    pub nodes: Vec<Node>,
    pub root: NodeId,
}

/// Shape of one conformal product: its two inputs, their union, and the result left
/// after summing out.
#[derive(Clone, Debug, PartialEq)]
pub struct CpShape {
    pub left: Scope,
    pub right: Scope,
    pub union: Scope,
    pub result: Scope,
}

impl CpShape {
    pub fn new(left: Scope, right: Scope, sum_out: &BTreeSet<VarId>) -> Self {
        let union = left.union(&right);
        let result = union.without(sum_out);
        CpShape {
            left,
            right,
            union,
            result,
        }
    }

    pub fn d1(&self) -> usize {
        self.left.len()
    }

    pub fn d2(&self) -> usize {
        self.right.len()
    }

    /// Dimension of the product: the number of distinct input variables.
    pub fn u(&self) -> usize {
        self.union.len()
    }

    pub fn r(&self) -> usize {
        self.result.len()
    }

    /// max(d1, d2, r)
    pub fn md(&self) -> usize {
        self.d1().max(self.d2()).max(self.r())
    }

    /// Number of multiplies: the table size of the union.
    pub fn multiplies(&self) -> u128 {
        self.union.size()
    }
}

impl EvalTree {
    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn product_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }

    pub fn children(&self, id: NodeId) -> Option<(NodeId, NodeId)> {
        match self.nodes[id] {
            Node::Product { left, right, .. } => Some((left, right)),
            Node::Leaf { .. } => None,
        }
    }

    /// Shape of the product at `id`, or `None` for a leaf.
    pub fn shape(&self, id: NodeId) -> Option<CpShape> {
        match &self.nodes[id] {
            Node::Product {
                left,
                right,
                scope,
                ..
            } => {
                let l = self.nodes[*left].scope().clone();
                let r = self.nodes[*right].scope().clone();
                let union = l.union(&r);
                Some(CpShape {
                    left: l,
                    right: r,
                    union,
                    result: scope.clone(),
                })
            }
            Node::Leaf { .. } => None,
        }
    }

    /// Product-node ids in ascending (bottom-up) order.
    pub fn product_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| matches!(self.nodes[i], Node::Product { .. }))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tree serialization cannot fail");
        s.push('\n');
        s
    }

    /// Parses a tree and checks its structural invariants.
    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let tree: EvalTree = serde_json::from_str(text).map_err(|e| TreeError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let problems = check_invariants(&tree);
        if problems.is_empty() {
            Ok(tree)
        } else {
            Err(TreeError::Malformed(problems.join("; ")))
        }
    }
}

/// Which tree builder to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heuristic {
    #[serde(rename = "set-factoring")]
    SetFactoring,
    #[serde(rename = "set-factoring-c")]
    SetFactoringC,
    #[serde(rename = "chain")]
    Chain,
}

impl Heuristic {
    pub const ALL: [Heuristic; 3] = [
        Heuristic::SetFactoring,
        Heuristic::SetFactoringC,
        Heuristic::Chain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::SetFactoring => "set-factoring",
            Heuristic::SetFactoringC => "set-factoring-c",
            Heuristic::Chain => "chain",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| {
                format!("unknown heuristic '{s}' (expected set-factoring, set-factoring-c or chain)")
            })
    }
}

pub fn build_tree(
    heuristic: Heuristic,
    leaves: &[Scope],
    query: VarId,
    machine: &MachineParams,
) -> Result<EvalTree, TreeError> {
    match heuristic {
        Heuristic::SetFactoring => build_set_factoring(leaves, query),
        Heuristic::SetFactoringC => build_set_factoring_c(leaves, query, machine),
        Heuristic::Chain => build_chain_baseline(leaves, query),
    }
}

fn check_inputs(leaves: &[Scope], query: VarId) -> Result<(), TreeError> {
    if leaves.is_empty() {
        return Err(TreeError::NoFactors);
    }
    if !leaves.iter().any(|s| s.contains(query)) {
        return Err(TreeError::QueryAbsent(query));
    }
    Ok(())
}

fn leaf_nodes(leaves: &[Scope]) -> Vec<Node> {
    leaves
        .iter()
        .enumerate()
        .map(|(factor, scope)| Node::Leaf {
            factor,
            scope: scope.clone(),
        })
        .collect()
}

/// Pending factors of a greedy build, with a count of how many mention each variable.
struct Pending {
    items: Vec<(NodeId, Scope)>,
    uses: BTreeMap<VarId, usize>,
}

impl Pending {
    fn new(leaves: &[Scope]) -> Self {
        let mut uses = BTreeMap::new();
        for s in leaves {
            for v in s.vars() {
                *uses.entry(v).or_insert(0) += 1;
            }
        }
        Pending {
            items: leaves.iter().cloned().enumerate().collect(),
            uses,
        }
    }

    /// Variables of `a ∪ b` that no other pending factor mentions, except the query.
    fn dead_after(&self, a: &Scope, b: &Scope, query: VarId) -> BTreeSet<VarId> {
        a.union(b)
            .vars()
            .filter(|&v| {
                let inside = usize::from(a.contains(v)) + usize::from(b.contains(v));
                v != query && self.uses[&v] == inside
            })
            .collect()
    }

    /// Replaces pending positions `i < j` with a product node appended to `nodes`.
    fn combine(&mut self, nodes: &mut Vec<Node>, i: usize, j: usize, query: VarId) {
        let (right, rs) = self.items.remove(j);
        let (left, ls) = self.items.remove(i);
        let sum_out = self.dead_after(&ls, &rs, query);
        let scope = ls.union(&rs).without(&sum_out);
        for v in ls.vars().chain(rs.vars()) {
            *self.uses.get_mut(&v).expect("counted") -= 1;
        }
        for v in scope.vars() {
            *self.uses.get_mut(&v).expect("counted") += 1;
        }
        let id = nodes.len();
        nodes.push(Node::Product {
            left,
            right,
            sum_out: sum_out.into_iter().collect(),
            scope: scope.clone(),
        });
        self.items.push((id, scope));
    }
}

/// Greedy pairwise builder: at each step combine the pending pair with the smallest
/// `key`. Ties go to the lexicographically smallest pair of pending positions.
/// The combined factor is appended after the remaining ones.
///
/// A pair's key depends only on its two scopes and on how many pending factors use
/// each of their variables, so keys are cached and dropped only for pairs that share a
/// variable with a combined factor.
fn build_greedy<K, F>(leaves: &[Scope], query: VarId, key: F) -> Result<EvalTree, TreeError>
where
    K: PartialOrd + Clone,
    F: Fn(&CpShape) -> K,
{
    check_inputs(leaves, query)?;
    let mut nodes = leaf_nodes(leaves);
    let mut pending = Pending::new(leaves);
    let mut cache: HashMap<(NodeId, NodeId), K> = HashMap::new();
    while pending.items.len() > 1 {
        let mut best: Option<(K, usize, usize)> = None;
        for i in 0..pending.items.len() {
            for j in i + 1..pending.items.len() {
                let ((ia, a), (ib, b)) = (&pending.items[i], &pending.items[j]);
                let k = cache
                    .entry((*ia, *ib))
                    .or_insert_with(|| {
                        key(&CpShape::new(a.clone(), b.clone(), &pending.dead_after(a, b, query)))
                    })
                    .clone();
                if best.as_ref().is_none_or(|(bk, _, _)| k < *bk) {
                    best = Some((k, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least one pair");
        let touched: BTreeSet<VarId> = pending.items[i].1.union(&pending.items[j].1).var_set();
        pending.combine(&mut nodes, i, j, query);
        let stale: BTreeSet<NodeId> = pending
            .items
            .iter()
            .filter(|(_, s)| s.vars().any(|v| touched.contains(&v)))
            .map(|(id, _)| *id)
            .collect();
        let live: BTreeSet<NodeId> = pending.items.iter().map(|(id, _)| *id).collect();
        cache.retain(|(a, b), _| {
            live.contains(a) && live.contains(b) && !stale.contains(a) && !stale.contains(b)
        });
    }
    let root = pending.items[0].0;
    Ok(EvalTree { query, nodes, root })
}

/// Cost key of the sequential greedy builder: multiplies first, then result size.
pub fn sequential_key(shape: &CpShape) -> (u128, u128) {
    (shape.multiplies(), shape.result.size())
}

/// Set-factoring: repeatedly perform the cheapest conformal product, measured by
/// multiplies and then by result table size.
pub fn build_set_factoring(leaves: &[Scope], query: VarId) -> Result<EvalTree, TreeError> {
    build_greedy(leaves, query, sequential_key)
}

/// Set-factoring scored by the modelled parallel time of each candidate product.
pub fn build_set_factoring_c(
    leaves: &[Scope],
    query: VarId,
    machine: &MachineParams,
) -> Result<EvalTree, TreeError> {
    build_greedy(leaves, query, |shape| {
        (parallel_cp_cost(shape, machine).t_p, shape.result.size())
    })
}

/// Left-deep chain in input order: `((f0 · f1) · f2) ...`.
pub fn build_chain_baseline(leaves: &[Scope], query: VarId) -> Result<EvalTree, TreeError> {
    check_inputs(leaves, query)?;
    let mut nodes = leaf_nodes(leaves);
    let mut pending = Pending::new(leaves);
    while pending.items.len() > 1 {
        pending.combine(&mut nodes, 0, 1, query);
        // Keep the accumulated product at the front.
        let last = pending.items.pop().expect("just pushed");
        pending.items.insert(0, last);
    }
    let root = pending.items[0].0;
    Ok(EvalTree { query, nodes, root })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scopes(sets: &[&[VarId]]) -> Vec<Scope> {
        sets.iter().map(|s| Scope::binary(s)).collect()
    }

    #[test]
    fn first_product_avoids_wide_pair() {
        // {A,B}, {B,C}, {C,D} with query A: the disjoint pair {A,B}x{C,D} has four
        // variables, the other two pairs three.
        let leaves = scopes(&[&[0, 1], &[1, 2], &[2, 3]]);
        let tree = build_set_factoring(&leaves, 0).unwrap();
        let first = tree.shape(leaves.len()).unwrap();
        assert_eq!(first.u(), 3);
        let (l, r) = tree.children(leaves.len()).unwrap();
        assert_ne!((l, r), (0, 2));
    }

    /// Greedy build that rescans every pair from scratch at each step.
    fn rescan_greedy<K: PartialOrd>(leaves: &[Scope], query: VarId, key: impl Fn(&CpShape) -> K) -> EvalTree {
        let mut nodes = leaf_nodes(leaves);
        let mut pending = Pending::new(leaves);
        while pending.items.len() > 1 {
            let mut best: Option<(K, usize, usize)> = None;
            for i in 0..pending.items.len() {
                for j in i + 1..pending.items.len() {
                    let (a, b) = (&pending.items[i].1, &pending.items[j].1);
                    let k = key(&CpShape::new(a.clone(), b.clone(), &pending.dead_after(a, b, query)));
                    if best.as_ref().is_none_or(|(bk, _, _)| k < *bk) {
                        best = Some((k, i, j));
                    }
                }
            }
            let (_, i, j) = best.unwrap();
            pending.combine(&mut nodes, i, j, query);
        }
        let root = pending.items[0].0;
        EvalTree { query, nodes, root }
    }

    #[test]
    fn cached_keys_match_rescan() {
        use crate::factors::query_scopes;
        use crate::network::{random_net, Interval, NetGenParams};
        let m = MachineParams::default();
        let params = NetGenParams {
            nodes: Interval::new(10, 40),
            ..NetGenParams::default()
        };
        for seed in 0..25 {
            let (net, q) = random_net(&params.clone().with_seed(seed)).unwrap();
            let leaves = query_scopes(&net, &q);
            assert_eq!(
                build_set_factoring(&leaves, q.query).unwrap(),
                rescan_greedy(&leaves, q.query, sequential_key)
            );
            assert_eq!(
                build_set_factoring_c(&leaves, q.query, &m).unwrap(),
                rescan_greedy(&leaves, q.query, |s| (parallel_cp_cost(s, &m).t_p, s.result.size()))
            );
        }
    }

    #[test]
    fn single_leaf_tree() {
        let leaves = scopes(&[&[4]]);
        for h in Heuristic::ALL {
            let tree = build_tree(h, &leaves, 4, &MachineParams::default()).unwrap();
            assert_eq!(tree.nodes.len(), 1);
            assert_eq!(tree.root, 0);
            assert_eq!(tree.product_count(), 0);
        }
    }

    #[test]
    fn chain_is_left_deep() {
        let leaves = scopes(&[&[0, 1], &[1, 2], &[2]]);
        let tree = build_chain_baseline(&leaves, 0).unwrap();
        assert_eq!(tree.children(3), Some((0, 1)));
        assert_eq!(tree.children(4), Some((3, 2)));
        assert_eq!(tree.root, 4);
        assert_eq!(tree.nodes[4].scope(), &Scope::binary(&[0]));
    }

    #[test]
    fn errors_on_bad_input() {
        assert!(matches!(build_set_factoring(&[], 0), Err(TreeError::NoFactors)));
        assert!(matches!(
            build_set_factoring(&scopes(&[&[1]]), 0),
            Err(TreeError::QueryAbsent(0))
        ));
    }

    #[test]
    fn one_processor_comm_key_matches_sequential() {
        let machine = MachineParams {
            n_a: 1,
            ..MachineParams::default()
        };
        let leaves = scopes(&[&[0, 1], &[1, 2, 3], &[3, 4], &[0, 4, 5], &[5], &[2, 6], &[6, 7, 1]]);
        for q in 0..8 {
            assert_eq!(
                build_set_factoring(&leaves, q).unwrap(),
                build_set_factoring_c(&leaves, q, &machine).unwrap()
            );
        }
    }

    #[test]
    fn heuristic_names_round_trip() {
        for h in Heuristic::ALL {
            assert_eq!(h.name().parse::<Heuristic>().unwrap(), h);
        }
        assert!("spi".parse::<Heuristic>().is_err());
    }

    #[test]
    fn tree_json_round_trip() {
        let leaves = scopes(&[&[0, 1], &[1, 2], &[2, 3]]);
        let tree = build_set_factoring(&leaves, 0).unwrap();
        assert_eq!(EvalTree::from_json(&tree.to_json()).unwrap(), tree);
    }

    #[test]
    fn from_json_rejects_broken_tree() {
        let leaves = scopes(&[&[0, 1], &[1, 2]]);
        let mut tree = build_set_factoring(&leaves, 0).unwrap();
        if let Node::Product { sum_out, .. } = &mut tree.nodes[2] {
            sum_out.push(0);
        }
        assert!(matches!(
            EvalTree::from_json(&tree.to_json()),
            Err(TreeError::Malformed(_))
        ));
    }
}
