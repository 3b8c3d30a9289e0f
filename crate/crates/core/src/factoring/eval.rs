use std::collections::BTreeSet;

use super::{EvalTree, Node, TreeError};
use crate::factors::{conformal_product, marginalize_out, normalize, Factor, Scope};

/// Largest product table `evaluate_tree` will materialise: 2^25 entries.
pub const DEFAULT_EVAL_CAP: u128 = 1 << 25;

/// Numerically evaluates `tree` over `factors` bottom-up and returns the normalised
/// posterior over the query variable. Any variable other than the query still present
/// at the root is summed out before normalising.
pub fn evaluate_tree(tree: &EvalTree, factors: &[Factor], cap: u128) -> Result<Factor, TreeError> {
    if tree.leaf_count() != factors.len() {
        return Err(TreeError::LeafCount {
            tree: tree.leaf_count(),
            given: factors.len(),
        });
    }
    for id in tree.product_ids() {
        let shape = tree.shape(id).expect("product node");
        let entries = shape.multiplies();
        if entries > cap {
            return Err(TreeError::CapExceeded {
                node: id,
                dimension: shape.u(),
                entries,
                cap,
            });
        }
    }

    let mut values: Vec<Option<Factor>> = vec![None; tree.nodes.len()];
    for (id, node) in tree.nodes.iter().enumerate() {
        let value = match node {
            Node::Leaf { factor, scope } => {
                let f = factors.get(*factor).ok_or_else(|| {
                    TreeError::Malformed(format!("leaf {id} refers to missing factor {factor}"))
                })?;
                if Scope::of(f) != *scope {
                    return Err(TreeError::LeafScope {
                        node: id,
                        expected: scope.clone(),
                        got: Scope::of(f),
                    });
                }
                f.clone()
            }
            Node::Product {
                left,
                right,
                sum_out,
                ..
            } => {
                let (l, r) = match (values[*left].take(), values[*right].take()) {
                    (Some(l), Some(r)) => (l, r),
                    _ => {
                        return Err(TreeError::Malformed(format!(
                            "node {id} consumes a child that is missing or already used"
                        )))
                    }
                };
                let product = conformal_product(&l, &r)?;
                marginalize_out(&product, &sum_out.iter().copied().collect())?
            }
        };
        values[id] = Some(value);
    }

    let root = values[tree.root]
        .take()
        .ok_or_else(|| TreeError::Malformed("root has no value".to_string()))?;
    let residual: BTreeSet<_> = root.vars().iter().copied().filter(|&v| v != tree.query).collect();
    let marginal = marginalize_out(&root, &residual)?;
    Ok(normalize(&marginal)?)
}
