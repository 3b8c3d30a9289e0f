use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Factor;
use crate::network::VarId;

/// The variable set of a factor without its values: `(id, cardinality)` pairs sorted
/// by id. Cost modelling and tree construction work on scopes alone.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scope(Vec<(VarId, usize)>);

impl Scope {
    /// Sorts and deduplicates `pairs`; a repeated id keeps its first cardinality.
    pub fn new(mut pairs: Vec<(VarId, usize)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        pairs.dedup_by_key(|p| p.0);
        Scope(pairs)
    }

    /// A scope of binary variables.
    pub fn binary(ids: &[VarId]) -> Self {
        Scope::new(ids.iter().map(|&v| (v, 2)).collect())
    }

    pub fn of(f: &Factor) -> Self {
        Scope(f.vars().iter().copied().zip(f.cards().iter().copied()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[(VarId, usize)] {
        &self.0
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.iter().map(|p| p.0)
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.0.binary_search_by_key(&v, |p| p.0).is_ok()
    }

    pub fn cardinality(&self, v: VarId) -> Option<usize> {
        self.0
            .binary_search_by_key(&v, |p| p.0)
            .ok()
            .map(|k| self.0[k].1)
    }

    /// Table length, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.0
            .iter()
            .fold(1u128, |acc, &(_, c)| acc.saturating_mul(c as u128))
    }

    /// Product of the cardinalities of the variables of `self` that are in `vars`.
    pub fn size_over(&self, vars: &[VarId]) -> u128 {
        self.0
            .iter()
            .filter(|(v, _)| vars.contains(v))
            .fold(1u128, |acc, &(_, c)| acc.saturating_mul(c as u128))
    }

    pub fn union(&self, other: &Scope) -> Scope {
        let mut pairs = self.0.clone();
        pairs.extend(other.0.iter().filter(|(v, _)| !self.contains(*v)));
        pairs.sort_by_key(|p| p.0);
        Scope(pairs)
    }

    pub fn without(&self, drop: &BTreeSet<VarId>) -> Scope {
        Scope(self.0.iter().copied().filter(|(v, _)| !drop.contains(v)).collect())
    }

    pub fn var_set(&self) -> BTreeSet<VarId> {
        self.vars().collect()
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.vars().map(|v| v.to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}
