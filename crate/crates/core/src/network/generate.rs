//! Random belief-net generation for experiment corpora.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BeliefNet, NetError, QuerySpec, Variable};

/// Closed interval `[lo, hi]`. Parses from `"a..b"` or a single value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Copy> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: T) -> Self {
        Interval { lo: v, hi: v }
    }
}

impl<T: fmt::Display> fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

impl<T: FromStr + PartialOrd + Copy> FromStr for Interval<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |x: &str| {
            x.trim()
                .parse::<T>()
                .map_err(|_| format!("cannot parse '{x}' in range '{s}'"))
        };
        let iv = match s.split_once("..") {
            Some((a, b)) => Interval::new(parse(a)?, parse(b.trim_start_matches('='))?),
            None => Interval::point(parse(s)?),
        };
        if iv.lo > iv.hi {
            return Err(format!("empty range '{s}': lower bound exceeds upper bound"));
        }
        Ok(iv)
    }
}

/// Parameters of the random-net protocol. Defaults: 10 to 100 nodes, 1 to 5 average
/// in-arcs per node, 1 to 20 observations, all variables binary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetGenParams {
    pub nodes: Interval<usize>,
    pub avg_arcs: Interval<f64>,
    pub observations: Interval<usize>,
    pub seed: u64,
}

impl Default for NetGenParams {
    fn default() -> Self {
        NetGenParams {
            nodes: Interval::new(10, 100),
            avg_arcs: Interval::new(1.0, 5.0),
            observations: Interval::new(1, 20),
            seed: 0,
        }
    }
}

impl NetGenParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Admissible total arc counts for a net of `n` nodes.
    fn arc_bounds(&self, n: usize) -> (usize, usize) {
        let max_dag = n * n.saturating_sub(1) / 2;
        let lo = (self.avg_arcs.lo * n as f64 - 1e-9).ceil().max(0.0) as usize;
        let hi = ((self.avg_arcs.hi * n as f64 + 1e-9).floor().max(0.0) as usize).min(max_dag);
        (lo, hi)
    }

    /// Rejects ranges that cannot be honoured for some node count they admit.
    pub fn check(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InfeasibleParams(m));
        if self.nodes.lo == 0 || self.nodes.lo > self.nodes.hi {
            return bad(format!("node range {} is empty or starts at 0", self.nodes));
        }
        if !(self.avg_arcs.lo >= 0.0 && self.avg_arcs.lo <= self.avg_arcs.hi) {
            return bad(format!("average-arc range {} is empty", self.avg_arcs));
        }
        if self.observations.lo > self.observations.hi {
            return bad(format!("observation range {} is empty", self.observations));
        }
        if self.observations.lo >= self.nodes.lo {
            return bad(format!(
                "{} observations leave no unobserved query node in a {}-node net",
                self.observations.lo, self.nodes.lo
            ));
        }
        for n in self.nodes.lo..=self.nodes.hi {
            let (lo, hi) = self.arc_bounds(n);
            if lo > hi {
                return bad(format!(
                    "no {n}-node DAG has an average in-degree in {} (at most {} arcs fit)",
                    self.avg_arcs,
                    n * (n - 1) / 2
                ));
            }
        }
        Ok(())
    }
}

/// Generates a binary belief net with an observation set and an unobserved query node.
/// The result is a pure function of `params`.
///
/// Node count and the target average in-degree are drawn uniformly from their ranges.
/// Nodes are placed in a random topological order, and arcs are added one at a time to
/// a uniformly chosen node that still has unused predecessors, from a uniformly chosen
/// predecessor. CPT entries are uniform on `[0, 1)` and then row-normalised.
pub fn random_net(params: &NetGenParams) -> Result<(BeliefNet, QuerySpec), NetError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let n = rng.gen_range(params.nodes.lo..=params.nodes.hi);
    let target = if params.avg_arcs.lo < params.avg_arcs.hi {
        rng.gen_range(params.avg_arcs.lo..=params.avg_arcs.hi)
    } else {
        params.avg_arcs.lo
    };
    let (arc_lo, arc_hi) = params.arc_bounds(n);
    let arcs = ((target * n as f64).round() as usize).clamp(arc_lo, arc_hi);

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    // parent_pos[j] holds positions (in `order`) of the parents of order[j].
    let mut parent_pos: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut open: Vec<usize> = (1..n).collect();
    for _ in 0..arcs {
        let k = rng.gen_range(0..open.len());
        let j = open[k];
        let taken = &parent_pos[j];
        let free: Vec<usize> = (0..j).filter(|p| !taken.contains(p)).collect();
        let p = free[rng.gen_range(0..free.len())];
        parent_pos[j].push(p);
        if parent_pos[j].len() == j {
            open.swap_remove(k);
        }
    }

    let mut parents = vec![Vec::new(); n];
    for (j, ps) in parent_pos.iter().enumerate() {
        let mut ids: Vec<usize> = ps.iter().map(|&p| order[p]).collect();
        ids.sort_unstable();
        parents[order[j]] = ids;
    }

    let variables: Vec<Variable> = (0..n).map(Variable::binary).collect();
    let mut cpts = Vec::with_capacity(n);
    for v in 0..n {
        let card = variables[v].cardinality;
        let rows: usize = parents[v].iter().map(|&p| variables[p].cardinality).product();
        let mut cpt = Vec::with_capacity(rows * card);
        for _ in 0..rows {
            let row: Vec<f64> = (0..card).map(|_| rng.gen::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                cpt.extend(row.iter().map(|x| x / sum));
            } else {
                cpt.extend(std::iter::repeat_n(1.0 / card as f64, card));
            }
        }
        cpts.push(cpt);
    }

    let obs_hi = params.observations.hi.min(n - 1);
    let obs_count = rng.gen_range(params.observations.lo..=obs_hi);
    let mut observed: Vec<usize> = sample(&mut rng, n, obs_count).into_vec();
    observed.sort_unstable();
    let mut query = QuerySpec::default();
    for &v in &observed {
        let value = rng.gen_range(0..variables[v].cardinality);
        query.evidence.insert(v, value);
    }
    let unobserved: Vec<usize> = (0..n).filter(|v| !query.evidence.contains_key(v)).collect();
    query.query = unobserved[rng.gen_range(0..unobserved.len())];

    Ok((
        BeliefNet {
            variables,
            parents,
            cpts,
        },
        query,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(nodes: usize, arcs: f64, obs: usize, seed: u64) -> NetGenParams {
        NetGenParams {
            nodes: Interval::point(nodes),
            avg_arcs: Interval::point(arcs),
            observations: Interval::point(obs),
            seed,
        }
    }

    #[test]
    fn degenerate_ranges_force_counts() {
        let (net, q) = random_net(&fixed(10, 1.0, 1, 7)).unwrap();
        assert_eq!(net.len(), 10);
        assert_eq!(net.arc_count(), 10);
        assert_eq!(q.evidence.len(), 1);
        assert!(!q.evidence.contains_key(&q.query));
        assert!(net.validate().is_empty());
        assert!(net.validate_query(&q).is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let p = NetGenParams::default().with_seed(42);
        let a = random_net(&p).unwrap();
        let b = random_net(&p).unwrap();
        assert_eq!(a, b);
        let c = random_net(&p.clone().with_seed(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_arc_density_rejected() {
        // 4 nodes hold at most 6 arcs: average 1.5.
        let err = random_net(&fixed(4, 2.0, 1, 0)).unwrap_err();
        assert!(matches!(err, NetError::InfeasibleParams(_)), "{err}");
    }

    #[test]
    fn too_many_observations_rejected() {
        assert!(random_net(&fixed(5, 1.0, 5, 0)).is_err());
    }

    #[test]
    fn interval_parsing() {
        assert_eq!("10..100".parse::<Interval<usize>>().unwrap(), Interval::new(10, 100));
        assert_eq!("3".parse::<Interval<usize>>().unwrap(), Interval::point(3));
        assert_eq!("1.5..2".parse::<Interval<f64>>().unwrap(), Interval::new(1.5, 2.0));
        assert!("5..4".parse::<Interval<usize>>().is_err());
        assert!("a..4".parse::<Interval<usize>>().is_err());
    }

    #[test]
    fn default_corpus_mean_node_count() {
        let total: usize = (0..1000)
            .map(|s| random_net(&NetGenParams::default().with_seed(s)).unwrap().0.len())
            .sum();
        let mean = total as f64 / 1000.0;
        assert!((50.0..=60.0).contains(&mean), "mean node count {mean}");
    }

    #[test]
    fn counts_within_ranges() {
        let p = NetGenParams::default();
        for s in 0..200 {
            let (net, q) = random_net(&p.clone().with_seed(s)).unwrap();
            assert!((10..=100).contains(&net.len()));
            let avg = net.avg_in_arcs();
            assert!((1.0 - 1e-9..=5.0 + 1e-9).contains(&avg), "avg {avg}");
            assert!((1..=20).contains(&q.evidence.len()));
            assert!(net.variables.iter().all(|v| v.cardinality == 2));
            assert!(net.validate().is_empty());
            assert!(net.validate_query(&q).is_empty());
        }
    }
}
