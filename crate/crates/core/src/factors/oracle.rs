//! Posterior by full joint enumeration. This is the reference the evaluation-tree path
//! is checked against, so it reads CPTs directly and shares no code with the factor
//! algebra.

use super::{Factor, FactorError};
use crate::network::{BeliefNet, QuerySpec};

/// Default cap on the number of joint assignments enumerated.
pub const DEFAULT_JOINT_CAP: u128 = 1 << 24;

/// `P(query | evidence)` as a factor over the query variable.
pub fn brute_force_posterior(
    net: &BeliefNet,
    q: &QuerySpec,
    cap: u128,
) -> Result<Factor, FactorError> {
    let n = net.len();
    let free: Vec<usize> = (0..n).filter(|v| !q.evidence.contains_key(v)).collect();
    let size = free
        .iter()
        .try_fold(1u128, |acc, &v| acc.checked_mul(net.cardinality(v) as u128))
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(FactorError::JointTooLarge { size, cap });
    }

    let mut value = vec![0usize; n];
    for (&v, &x) in &q.evidence {
        value[v] = x;
    }
    let qcard = net.cardinality(q.query);
    let mut posterior = vec![0.0; qcard];

    'outer: loop {
        let mut p = 1.0;
        for v in 0..n {
            let mut idx = 0;
            for &u in &net.parents[v] {
                idx = idx * net.cardinality(u) + value[u];
            }
            idx = idx * net.cardinality(v) + value[v];
            p *= net.cpts[v][idx];
        }
        posterior[value[q.query]] += p;

        for &v in free.iter().rev() {
            value[v] += 1;
            if value[v] < net.cardinality(v) {
                continue 'outer;
            }
            value[v] = 0;
        }
        break;
    }

    let mass: f64 = posterior.iter().sum();
    if mass.is_nan() || mass <= 0.0 {
        return Err(FactorError::InconsistentEvidence);
    }
    for x in &mut posterior {
        *x /= mass;
    }
    Factor::new(vec![q.query], vec![qcard], posterior)
}
