//! Dense discrete factors and the operations evaluation trees are built from.
//!
//! A factor's variables are kept sorted by id and its table is row-major in that order,
//! last variable fastest. Every operation returns a factor in that canonical form, so
//! two factors over the same scope compare entry by entry.

mod oracle;
mod scope;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::network::{relevant_factors, BeliefNet, QuerySpec, VarId};

pub use oracle::{brute_force_posterior, DEFAULT_JOINT_CAP};
pub use scope::Scope;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("variable {var} has cardinality {left} in one factor and {right} in the other")]
    CardinalityMismatch { var: VarId, left: usize, right: usize },
    #[error("variable {var} is not in the factor's scope")]
    NotInScope { var: VarId },
    #[error("value {value} out of range for variable {var} with cardinality {cardinality}")]
    ValueOutOfRange {
        var: VarId,
        value: usize,
        cardinality: usize,
    },
    #[error("table has {got} entries, scope requires {expected}")]
    TableLength { expected: usize, got: usize },
    #[error("scope must be strictly ascending by variable id")]
    UnsortedScope,
    #[error("variable {var} has cardinality 0")]
    ZeroCardinality { var: VarId },
    #[error("table entries must be finite and non-negative")]
    InvalidEntry,
    #[error("evidence is inconsistent: total probability mass is zero")]
    InconsistentEvidence,
    #[error("joint distribution has {size} entries, above the cap of {cap}")]
    JointTooLarge { size: u128, cap: u128 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    vars: Vec<VarId>,
    cards: Vec<usize>,
    table: Vec<f64>,
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for k in (0..cards.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * cards[k + 1];
    }
    s
}

impl Factor {
    /// Builds a factor over `vars` (strictly ascending) with the given cardinalities.
    pub fn new(vars: Vec<VarId>, cards: Vec<usize>, table: Vec<f64>) -> Result<Self, FactorError> {
        if vars.len() != cards.len() || vars.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FactorError::UnsortedScope);
        }
        if let Some(k) = cards.iter().position(|&c| c == 0) {
            return Err(FactorError::ZeroCardinality { var: vars[k] });
        }
        let expected: usize = cards.iter().product();
        if table.len() != expected {
            return Err(FactorError::TableLength {
                expected,
                got: table.len(),
            });
        }
        if table.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(FactorError::InvalidEntry);
        }
        Ok(Factor { vars, cards, table })
    }

    /// A factor with no variables holding a single value.
    pub fn scalar(value: f64) -> Self {
        Factor {
            vars: Vec::new(),
            cards: Vec::new(),
            table: vec![value],
        }
    }

    /// The CPT of `v` as a factor over `parents(v) ∪ {v}`.
    pub fn from_cpt(net: &BeliefNet, v: VarId) -> Self {
        let parents = &net.parents[v];
        let mut vars: Vec<VarId> = parents.iter().copied().chain(std::iter::once(v)).collect();
        vars.sort_unstable();
        let cards: Vec<usize> = vars.iter().map(|&x| net.cardinality(x)).collect();
        // Position in `vars` of each CPT axis, CPT axes being (parents..., v).
        let cpt_axes: Vec<usize> = parents
            .iter()
            .chain(std::iter::once(&v))
            .map(|x| vars.binary_search(x).expect("axis is in scope"))
            .collect();
        let cpt_cards: Vec<usize> = cpt_axes.iter().map(|&k| cards[k]).collect();
        let cpt_strides = strides(&cpt_cards);
        // Stride into the CPT for each factor axis.
        let mut step = vec![0; vars.len()];
        for (axis, &k) in cpt_axes.iter().enumerate() {
            step[k] = cpt_strides[axis];
        }
        let cpt = &net.cpts[v];
        let mut table = Vec::with_capacity(cards.iter().product());
        walk(&cards, &[step.as_slice()], |idx| table.push(cpt[idx[0]]));
        Factor { vars, cards, table }
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.vars.binary_search(&v).is_ok()
    }

    pub fn cardinality_of(&self, v: VarId) -> Option<usize> {
        self.vars.binary_search(&v).ok().map(|k| self.cards[k])
    }

    /// Sum of all entries.
    pub fn mass(&self) -> f64 {
        self.table.iter().sum()
    }

    /// Entry at `assignment`, given in scope order.
    pub fn get(&self, assignment: &[usize]) -> f64 {
        let idx: usize = assignment
            .iter()
            .zip(strides(&self.cards))
            .map(|(a, s)| a * s)
            .sum();
        self.table[idx]
    }

    /// Entry at the restriction of a full assignment keyed by variable id.
    pub fn value_at(&self, assignment: &BTreeMap<VarId, usize>) -> f64 {
        let local: Vec<usize> = self.vars.iter().map(|v| assignment[v]).collect();
        self.get(&local)
    }
}

/// Visits every assignment of `cards` in row-major order, passing the running offset
/// into each of the strided tables described by `steps`.
fn walk(cards: &[usize], steps: &[&[usize]], mut f: impl FnMut(&[usize])) {
    let total: usize = cards.iter().product();
    let mut digits = vec![0usize; cards.len()];
    let mut idx = vec![0usize; steps.len()];
    for _ in 0..total {
        f(&idx);
        for k in (0..cards.len()).rev() {
            digits[k] += 1;
            for (i, s) in steps.iter().enumerate() {
                idx[i] += s[k];
            }
            if digits[k] < cards[k] {
                break;
            }
            digits[k] = 0;
            for (i, s) in steps.iter().enumerate() {
                idx[i] -= s[k] * cards[k];
            }
        }
    }
}

/// Per-axis stride of `f` for each variable in `scope` (0 when `f` lacks the variable).
fn aligned_strides(f: &Factor, scope: &[VarId]) -> Vec<usize> {
    let own = strides(&f.cards);
    scope
        .iter()
        .map(|v| f.vars.binary_search(v).map_or(0, |k| own[k]))
        .collect()
}

/// Pointwise product over the union of both scopes. The number of multiplies is the
/// table length of the result.
pub fn conformal_product(f1: &Factor, f2: &Factor) -> Result<Factor, FactorError> {
    let mut vars = Vec::with_capacity(f1.vars.len() + f2.vars.len());
    let mut cards = Vec::with_capacity(vars.capacity());
    let (mut i, mut j) = (0, 0);
    while i < f1.vars.len() || j < f2.vars.len() {
        let a = f1.vars.get(i).copied();
        let b = f2.vars.get(j).copied();
        match (a, b) {
            (Some(x), Some(y)) if x == y => {
                if f1.cards[i] != f2.cards[j] {
                    return Err(FactorError::CardinalityMismatch {
                        var: x,
                        left: f1.cards[i],
                        right: f2.cards[j],
                    });
                }
                vars.push(x);
                cards.push(f1.cards[i]);
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                vars.push(x);
                cards.push(f1.cards[i]);
                i += 1;
            }
            (Some(x), None) => {
                vars.push(x);
                cards.push(f1.cards[i]);
                i += 1;
            }
            (_, Some(y)) => {
                vars.push(y);
                cards.push(f2.cards[j]);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    let s1 = aligned_strides(f1, &vars);
    let s2 = aligned_strides(f2, &vars);
    let mut table = Vec::with_capacity(cards.iter().product());
    walk(&cards, &[&s1, &s2], |idx| {
        table.push(f1.table[idx[0]] * f2.table[idx[1]])
    });
    Ok(Factor { vars, cards, table })
}

/// Sums `drop` out of `f`. Dropping every variable leaves a scalar holding the mass.
pub fn marginalize_out(f: &Factor, drop: &BTreeSet<VarId>) -> Result<Factor, FactorError> {
    if let Some(&v) = drop.iter().find(|v| !f.contains(**v)) {
        return Err(FactorError::NotInScope { var: v });
    }
    if drop.is_empty() {
        return Ok(f.clone());
    }
    let (vars, cards): (Vec<_>, Vec<_>) = f
        .vars
        .iter()
        .zip(&f.cards)
        .filter(|(v, _)| !drop.contains(v))
        .map(|(&v, &c)| (v, c))
        .unzip();
    let kept = strides(&cards);
    let mut to_result = vec![0; f.vars.len()];
    for (k, v) in f.vars.iter().enumerate() {
        if let Ok(r) = vars.binary_search(v) {
            to_result[k] = kept[r];
        }
    }
    let mut table = vec![0.0; cards.iter().product()];
    let mut src = 0;
    walk(&f.cards, &[&to_result], |idx| {
        table[idx[0]] += f.table[src];
        src += 1;
    });
    Ok(Factor { vars, cards, table })
}

/// Restricts `f` to the evidence, removing the observed variables from its scope.
/// Evidence on variables outside the scope is ignored.
pub fn condition(f: &Factor, evidence: &BTreeMap<VarId, usize>) -> Result<Factor, FactorError> {
    let own = strides(&f.cards);
    let mut base = 0;
    let mut vars = Vec::new();
    let mut cards = Vec::new();
    let mut step = Vec::new();
    for (k, &v) in f.vars.iter().enumerate() {
        match evidence.get(&v) {
            Some(&value) => {
                if value >= f.cards[k] {
                    return Err(FactorError::ValueOutOfRange {
                        var: v,
                        value,
                        cardinality: f.cards[k],
                    });
                }
                base += value * own[k];
            }
            None => {
                vars.push(v);
                cards.push(f.cards[k]);
                step.push(own[k]);
            }
        }
    }
    if vars.len() == f.vars.len() {
        return Ok(f.clone());
    }
    let mut table = Vec::with_capacity(cards.iter().product());
    walk(&cards, &[&step], |idx| table.push(f.table[base + idx[0]]));
    Ok(Factor { vars, cards, table })
}

/// Scales `f` to unit mass.
pub fn normalize(f: &Factor) -> Result<Factor, FactorError> {
    let mass = f.mass();
    if mass.is_nan() || mass <= 0.0 {
        return Err(FactorError::InconsistentEvidence);
    }
    Ok(Factor {
        vars: f.vars.clone(),
        cards: f.cards.clone(),
        table: f.table.iter().map(|x| x / mass).collect(),
    })
}

/// The conditioned CPT factors relevant to `q`, in ascending variable order. These are
/// the leaves of any evaluation tree for the query.
pub fn query_factors(net: &BeliefNet, q: &QuerySpec) -> Result<Vec<Factor>, FactorError> {
    relevant_factors(net, q)
        .into_iter()
        .map(|v| condition(&Factor::from_cpt(net, v), &q.evidence))
        .collect()
}

/// Scopes of [`query_factors`] without building any tables.
pub fn query_scopes(net: &BeliefNet, q: &QuerySpec) -> Vec<Scope> {
    relevant_factors(net, q)
        .into_iter()
        .map(|v| {
            Scope::new(
                net.parents[v]
                    .iter()
                    .chain(std::iter::once(&v))
                    .filter(|u| !q.evidence.contains_key(u))
                    .map(|&u| (u, net.cardinality(u)))
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn binary(vars: &[VarId], table: &[f64]) -> Factor {
        Factor::new(vars.to_vec(), vec![2; vars.len()], table.to_vec()).unwrap()
    }

    fn random_binary(vars: &[VarId], rng: &mut ChaCha8Rng) -> Factor {
        let table = (0..1usize << vars.len()).map(|_| rng.gen::<f64>()).collect::<Vec<_>>();
        binary(vars, &table)
    }

    /// All assignments of binary `vars`, as id -> value maps.
    fn assignments(vars: &[VarId]) -> Vec<BTreeMap<VarId, usize>> {
        (0..1usize << vars.len())
            .map(|bits| {
                vars.iter()
                    .enumerate()
                    .map(|(k, &v)| (v, (bits >> (vars.len() - 1 - k)) & 1))
                    .collect()
            })
            .collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn scopes_match_factors() {
        use crate::network::{random_net, NetGenParams};
        for seed in 0..20 {
            let (net, q) = random_net(&NetGenParams::default().with_seed(seed)).unwrap();
            let scopes: Vec<Scope> = query_factors(&net, &q).unwrap().iter().map(Scope::of).collect();
            assert_eq!(query_scopes(&net, &q), scopes);
        }
    }

    #[test]
    fn pointwise_product() {
        let r = conformal_product(&binary(&[0], &[0.3, 0.7]), &binary(&[0], &[0.5, 0.5])).unwrap();
        assert_eq!(r.vars(), &[0]);
        assert_close(r.table(), &[0.15, 0.35], 1e-15);
    }

    #[test]
    fn outer_product_last_fastest() {
        let r = conformal_product(&binary(&[0], &[1.0, 2.0]), &binary(&[1], &[3.0, 4.0])).unwrap();
        assert_eq!(r.vars(), &[0, 1]);
        assert_eq!(r.table(), &[3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn product_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f1 = random_binary(&[0, 1], &mut rng);
        let f2 = random_binary(&[1, 2], &mut rng);
        let r = conformal_product(&f1, &f2).unwrap();
        assert_eq!(r.vars(), &[0, 1, 2]);
        for (k, a) in assignments(&[0, 1, 2]).iter().enumerate() {
            let expected = f1.get(&[a[&0], a[&1]]) * f2.get(&[a[&1], a[&2]]);
            assert_eq!(r.table()[k], expected);
        }
    }

    #[test]
    fn product_rejects_cardinality_mismatch() {
        let f1 = Factor::new(vec![3], vec![2], vec![1.0, 1.0]).unwrap();
        let f2 = Factor::new(vec![3], vec![3], vec![1.0; 3]).unwrap();
        assert_eq!(
            conformal_product(&f1, &f2),
            Err(FactorError::CardinalityMismatch {
                var: 3,
                left: 2,
                right: 3
            })
        );
    }

    #[test]
    fn mixed_cardinality_product() {
        let f1 = Factor::new(vec![0], vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let f2 = Factor::new(vec![1], vec![2], vec![10.0, 20.0]).unwrap();
        let r = conformal_product(&f1, &f2).unwrap();
        assert_eq!(r.table(), &[10.0, 20.0, 20.0, 40.0, 30.0, 60.0]);
        let m = marginalize_out(&r, &BTreeSet::from([0])).unwrap();
        assert_eq!(m.table(), &[60.0, 120.0]);
    }

    #[test]
    fn marginalize_row_sums() {
        let f = binary(&[0, 1], &[1.0, 2.0, 3.0, 4.0]);
        let r = marginalize_out(&f, &BTreeSet::from([1])).unwrap();
        assert_eq!(r.vars(), &[0]);
        assert_eq!(r.table(), &[3.0, 7.0]);
        let c = marginalize_out(&f, &BTreeSet::from([0])).unwrap();
        assert_eq!(c.table(), &[4.0, 6.0]);
    }

    #[test]
    fn marginalize_nothing_is_identity() {
        let f = binary(&[0, 1], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(marginalize_out(&f, &BTreeSet::new()).unwrap(), f);
    }

    #[test]
    fn marginalize_everything_gives_mass() {
        let f = binary(&[0, 1], &[1.0, 2.0, 3.0, 4.0]);
        let r = marginalize_out(&f, &BTreeSet::from([0, 1])).unwrap();
        assert!(r.vars().is_empty());
        assert_eq!(r.table(), &[10.0]);
    }

    #[test]
    fn marginalize_rejects_foreign_var() {
        let f = binary(&[0], &[1.0, 2.0]);
        assert_eq!(
            marginalize_out(&f, &BTreeSet::from([5])),
            Err(FactorError::NotInScope { var: 5 })
        );
    }

    #[test]
    fn marginalize_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vars = [1, 4, 6, 9];
        let f = random_binary(&vars, &mut rng);
        let r = marginalize_out(&f, &BTreeSet::from([4, 9])).unwrap();
        assert_eq!(r.vars(), &[1, 6]);
        let mut expected = vec![0.0; 4];
        for a in assignments(&vars) {
            expected[a[&1] * 2 + a[&6]] += f.value_at(&a);
        }
        assert_close(r.table(), &expected, 1e-14);
    }

    #[test]
    fn condition_slices() {
        let f = binary(&[0, 1], &[1.0, 2.0, 3.0, 4.0]);
        let r = condition(&f, &BTreeMap::from([(1, 0)])).unwrap();
        assert_eq!(r.vars(), &[0]);
        assert_eq!(r.table(), &[1.0, 3.0]);
    }

    #[test]
    fn condition_on_foreign_var_is_identity() {
        let f = binary(&[0, 1], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(condition(&f, &BTreeMap::from([(7, 1)])).unwrap(), f);
    }

    #[test]
    fn condition_rejects_out_of_range() {
        let f = binary(&[0], &[1.0, 2.0]);
        assert!(matches!(
            condition(&f, &BTreeMap::from([(0, 2)])),
            Err(FactorError::ValueOutOfRange { var: 0, value: 2, .. })
        ));
    }

    #[test]
    fn condition_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_binary(&[2, 3, 5], &mut rng);
        let ev = BTreeMap::from([(2, 1), (5, 0)]);
        let r = condition(&f, &ev).unwrap();
        assert_eq!(r.vars(), &[3]);
        for b in 0..2 {
            let full = BTreeMap::from([(2, 1), (3, b), (5, 0)]);
            assert_eq!(r.table()[b], f.value_at(&full));
        }
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize(&binary(&[0], &[2.0, 2.0])).unwrap().table(), &[0.5, 0.5]);
        assert_close(
            normalize(&binary(&[0], &[0.15, 0.35])).unwrap().table(),
            &[0.3, 0.7],
            1e-15,
        );
        assert_eq!(
            normalize(&binary(&[0], &[0.0, 0.0])),
            Err(FactorError::InconsistentEvidence)
        );
    }

    #[test]
    fn new_rejects_bad_input() {
        assert_eq!(
            Factor::new(vec![1, 0], vec![2, 2], vec![0.0; 4]),
            Err(FactorError::UnsortedScope)
        );
        assert!(matches!(
            Factor::new(vec![0], vec![2], vec![0.0; 3]),
            Err(FactorError::TableLength { expected: 2, got: 3 })
        ));
        assert_eq!(
            Factor::new(vec![0], vec![2], vec![-1.0, 0.0]),
            Err(FactorError::InvalidEntry)
        );
    }

    #[test]
    fn cpt_factor_reorders_axes() {
        // v1 has parent v2; CPT axes are (v2, v1), factor axes are (v1, v2).
        let net = BeliefNet {
            variables: (0..3).map(crate::network::Variable::binary).collect(),
            parents: vec![vec![], vec![2], vec![]],
            cpts: vec![vec![0.5, 0.5], vec![0.1, 0.9, 0.7, 0.3], vec![0.4, 0.6]],
        };
        let f = Factor::from_cpt(&net, 1);
        assert_eq!(f.vars(), &[1, 2]);
        // f(v1, v2) = P(v1 | v2)
        assert_eq!(f.table(), &[0.1, 0.7, 0.9, 0.3]);
    }

    fn scope_strategy() -> impl Strategy<Value = Vec<VarId>> {
        proptest::sample::subsequence((0..6).collect::<Vec<_>>(), 0..=4)
    }

    fn factor_strategy() -> impl Strategy<Value = Factor> {
        scope_strategy().prop_flat_map(|vars| {
            let n = 1usize << vars.len();
            proptest::collection::vec(0.0f64..4.0, n).prop_map(move |t| binary(&vars, &t))
        })
    }

    proptest! {
        #[test]
        fn product_commutes(f1 in factor_strategy(), f2 in factor_strategy()) {
            let a = conformal_product(&f1, &f2).unwrap();
            let b = conformal_product(&f2, &f1).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn product_associates(f1 in factor_strategy(), f2 in factor_strategy(), f3 in factor_strategy()) {
            let a = conformal_product(&conformal_product(&f1, &f2).unwrap(), &f3).unwrap();
            let b = conformal_product(&f1, &conformal_product(&f2, &f3).unwrap()).unwrap();
            prop_assert_eq!(a.vars(), b.vars());
            for (x, y) in a.table().iter().zip(b.table()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
            }
        }

        #[test]
        fn mass_multiplies_on_disjoint_scopes(t1 in proptest::collection::vec(0.0f64..4.0, 4),
                                              t2 in proptest::collection::vec(0.0f64..4.0, 2)) {
            let f1 = binary(&[0, 1], &t1);
            let f2 = binary(&[3], &t2);
            let m = conformal_product(&f1, &f2).unwrap().mass();
            let expected = f1.mass() * f2.mass();
            prop_assert!((m - expected).abs() <= 1e-12 * expected.max(1.0));
        }

        #[test]
        fn sum_product_exchange(t1 in proptest::collection::vec(0.0f64..4.0, 4),
                                t2 in proptest::collection::vec(0.0f64..4.0, 8)) {
            // f1 over {0,1}; f2 over {1,2,3}; S = {2,3} is disjoint from f1.
            let f1 = binary(&[0, 1], &t1);
            let f2 = binary(&[1, 2, 3], &t2);
            let s = BTreeSet::from([2, 3]);
            let lhs = marginalize_out(&conformal_product(&f1, &f2).unwrap(), &s).unwrap();
            let rhs = conformal_product(&f1, &marginalize_out(&f2, &s).unwrap()).unwrap();
            prop_assert_eq!(lhs.vars(), rhs.vars());
            for (x, y) in lhs.table().iter().zip(rhs.table()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0));
            }
        }
    }
}
