use std::collections::{BTreeMap, BTreeSet};

use super::{CpShape, EvalTree, Node, NodeId};
use crate::network::VarId;

/// Per-product shapes and the dimension summary of a tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeStats {
    /// `(node id, shape)` for every product, bottom-up.
    pub shapes: Vec<(NodeId, CpShape)>,
    /// Largest product dimension; 0 for a leaf-only tree.
    pub dm: usize,
    /// max(d1, d2, r) at the largest product. When several products reach `dm` the
    /// largest of their values is taken.
    pub md: usize,
    /// max(d1, d2, r) over every product.
    pub md_all: usize,
    pub cp_count: usize,
}

impl TreeStats {
    /// (dm - md) / dm, or 0 when there are no products.
    pub fn dd(&self) -> f64 {
        if self.dm == 0 {
            0.0
        } else {
            (self.dm - self.md) as f64 / self.dm as f64
        }
    }
}

pub fn tree_stats(tree: &EvalTree) -> TreeStats {
    let shapes: Vec<(NodeId, CpShape)> = tree
        .product_ids()
        .map(|id| (id, tree.shape(id).expect("product node")))
        .collect();
    let dm = shapes.iter().map(|(_, s)| s.u()).max().unwrap_or(0);
    let md = shapes
        .iter()
        .filter(|(_, s)| s.u() == dm)
        .map(|(_, s)| s.md())
        .max()
        .unwrap_or(0);
    let md_all = shapes.iter().map(|(_, s)| s.md()).max().unwrap_or(0);
    TreeStats {
        cp_count: shapes.len(),
        shapes,
        dm,
        md,
        md_all,
    }
}

/// Structural checks for an evaluation tree. Returns one message per problem found;
/// an empty list means the tree is well formed.
pub fn check_invariants(tree: &EvalTree) -> Vec<String> {
    let mut problems = Vec::new();
    let n = tree.nodes.len();
    if n == 0 || tree.root >= n {
        problems.push(format!("root {} is not a node of a {n}-node tree", tree.root));
        return problems;
    }

    let leaf_factors: Vec<usize> = tree
        .nodes
        .iter()
        .filter_map(|node| match node {
            Node::Leaf { factor, .. } => Some(*factor),
            Node::Product { .. } => None,
        })
        .collect();
    let mut sorted = leaf_factors.clone();
    sorted.sort_unstable();
    if sorted != (0..leaf_factors.len()).collect::<Vec<_>>() {
        problems.push(format!("leaves do not cover each factor exactly once: {leaf_factors:?}"));
    }

    let mut parent_count = vec![0usize; n];
    for (id, node) in tree.nodes.iter().enumerate() {
        if let Node::Product { left, right, .. } = node {
            for &c in [left, right] {
                if c >= id {
                    problems.push(format!("node {id} has child {c} that does not precede it"));
                    return problems;
                }
                parent_count[c] += 1;
            }
            if left == right {
                problems.push(format!("node {id} uses child {left} twice"));
            }
        }
    }
    for (id, &count) in parent_count.iter().enumerate() {
        let expected = usize::from(id != tree.root);
        if count != expected {
            problems.push(format!("node {id} is used as a child {count} times, expected {expected}"));
        }
    }
    if !problems.is_empty() {
        return problems;
    }

    // How many leaves mention each variable, overall and per subtree.
    let mut total: BTreeMap<VarId, usize> = BTreeMap::new();
    let mut below: Vec<BTreeMap<VarId, usize>> = vec![BTreeMap::new(); n];
    let mut summed: BTreeMap<VarId, usize> = BTreeMap::new();
    for (id, node) in tree.nodes.iter().enumerate() {
        match node {
            Node::Leaf { scope, .. } => {
                for v in scope.vars() {
                    *total.entry(v).or_insert(0) += 1;
                    below[id].insert(v, 1);
                }
            }
            Node::Product {
                left,
                right,
                sum_out,
                scope,
            } => {
                let mut counts = below[*left].clone();
                for (&v, &c) in &below[*right] {
                    *counts.entry(v).or_insert(0) += c;
                }
                below[id] = counts;

                let union = tree.nodes[*left].scope().union(tree.nodes[*right].scope());
                let drop: BTreeSet<VarId> = sum_out.iter().copied().collect();
                if drop.len() != sum_out.len() {
                    problems.push(format!("node {id} lists a summed variable twice"));
                }
                for &v in &drop {
                    *summed.entry(v).or_insert(0) += 1;
                    if !union.contains(v) {
                        problems.push(format!("node {id} sums out {v}, which is not in its inputs"));
                    }
                    if v == tree.query {
                        problems.push(format!("node {id} sums out the query variable"));
                    }
                }
                if union.without(&drop) != *scope {
                    problems.push(format!("node {id} scope {scope} != inputs minus summed variables"));
                }
            }
        }
    }
    for (id, node) in tree.nodes.iter().enumerate() {
        if let Node::Product { sum_out, .. } = node {
            for v in sum_out {
                if below[id].get(v) != total.get(v) {
                    problems.push(format!(
                        "node {id} sums out {v}, which a factor outside its subtree still uses"
                    ));
                }
            }
        }
    }

    if tree.product_count() > 0 {
        for &v in total.keys() {
            let times = summed.get(&v).copied().unwrap_or(0);
            if v != tree.query && times != 1 {
                problems.push(format!("variable {v} is summed out {times} times"));
            }
        }
    }
    let root_vars: Vec<VarId> = tree.nodes[tree.root].scope().vars().collect();
    if root_vars != [tree.query] {
        problems.push(format!(
            "root scope {} is not {{{}}}",
            tree.nodes[tree.root].scope(),
            tree.query
        ));
    }
    problems
}
