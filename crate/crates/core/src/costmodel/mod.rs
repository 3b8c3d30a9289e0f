//! Analytic cost of evaluating an evaluation tree, sequentially and on a hypercube.
//!
//! Everything here works on scopes; factor values are never touched. A conformal
//! product is parallelised broadcast-compute-aggregate style: one processor slices the
//! inputs on a set of result variables, sends one slice to each worker, and collects the
//! result slices. Distribution and return each pay a spanning-tree startup per cube
//! dimension plus a per-byte cost on every link, with no overlap of computation and
//! communication.

mod machine;

use num_rational::Ratio;

use crate::factoring::{CpShape, EvalTree, NodeId};
use crate::network::VarId;

pub use machine::{MachineError, MachineParams};

/// Exact byte counts.
pub type Bytes = Ratio<u128>;

/// Processor cap used when the processor limit is lifted.
pub const UNBOUNDED_PROCESSORS: u64 = 1 << 62;

pub fn bytes_to_f64(b: &Bytes) -> f64 {
    *b.numer() as f64 / *b.denom() as f64
}

/// How one conformal product is split across processors.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    /// Result variables the inputs are sliced on.
    pub split_vars: Vec<VarId>,
    /// Processors used.
    pub n_u: u64,
    /// Multiplies per processor.
    pub g: f64,
    /// Dimension of the sub-cube used.
    pub d_max: u32,
    /// Bytes sent to each processor.
    pub b_d: Bytes,
    /// Bytes returned by each processor.
    pub b_r: Bytes,
    /// Bytes distributed in total.
    pub b_total: Bytes,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpCost {
    pub t_s: f64,
    pub t_p: f64,
    /// Work per processor, alpha * g.
    pub w: f64,
    pub c_d: f64,
    pub c_r: f64,
    /// Communication of the same product when every processor holds the whole net.
    pub c_dist: f64,
    pub plan: SplitPlan,
    pub shape: CpShape,
}

impl CpCost {
    pub fn n_u(&self) -> u64 {
        self.plan.n_u
    }

    pub fn is_parallel(&self) -> bool {
        self.plan.n_u > 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LongestPath {
    /// Product nodes on the path, root first.
    pub nodes: Vec<NodeId>,
    /// Sequential time of the path: the lower bound on tree-parallel execution.
    pub seq_time: f64,
    /// Parallel time of the path's products with the processor limit lifted.
    pub par_time: f64,
}

impl LongestPath {
    pub fn cp_count(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryCost {
    pub cps: Vec<(NodeId, CpCost)>,
    pub t_s_query: f64,
    pub t_p_query: f64,
    /// Most processors any single product uses.
    pub n_u_query: u64,
    /// Communication: distribution plus return, summed over products.
    pub cm_total: f64,
    /// Computation: per-processor work of parallel products plus the full time of
    /// sequential ones.
    pub cp_total: f64,
    pub dist_cm_total: f64,
    pub lp: LongestPath,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryUse {
    /// Bytes sent to and returned from a worker, summed over distributed products.
    pub bca_mem: Bytes,
    /// As `bca_mem`, leaving out the root product.
    pub bca_mem_excl_final: Bytes,
    /// Input plus result bytes of the largest product, held on every processor when
    /// the whole net is replicated.
    pub dist_mem: Bytes,
}

/// alpha * M(c), M(c) being the product of the cardinalities of the input variables.
pub fn seq_cp_cost(shape: &CpShape, machine: &MachineParams) -> f64 {
    machine.alpha * shape.multiplies() as f64
}

fn floor_pow2(x: u128) -> u128 {
    if x == 0 {
        0
    } else {
        1 << (127 - x.leading_zeros())
    }
}

/// Total bytes distributed when the inputs are sliced on `split`: each input is sent
/// once for every assignment of the split variables it does not contain.
fn distributed_bytes(shape: &CpShape, split: &[VarId], bpe: u128) -> u128 {
    let copies = |s: &crate::factors::Scope| {
        split
            .iter()
            .filter(|v| !s.contains(**v))
            .map(|&v| shape.union.cardinality(v).unwrap_or(1) as u128)
            .product::<u128>()
    };
    bpe * (shape.left.size() * copies(&shape.left) + shape.right.size() * copies(&shape.right))
}

/// Chooses the processor count and split variables for one product.
///
/// The processor count is the largest power of two with at most `n_a` processors, at
/// least `g_min` multiplies each, and no more processors than result entries. Split
/// variables are taken from the result one at a time, each time picking the variable
/// that keeps the distributed byte count lowest; variables shared by both inputs cost
/// nothing extra and so come first, ties going to the smaller id.
pub fn plan_split(shape: &CpShape, machine: &MachineParams) -> SplitPlan {
    let m = shape.multiplies();
    let bpe = machine.bytes_per_entry as u128;
    let result_cap = floor_pow2(shape.result.size());
    let mut n_u: u128 = 1;
    while n_u * 2 <= machine.n_a as u128
        && n_u * 2 <= result_cap
        && m >= (machine.g_min as u128).saturating_mul(n_u * 2)
    {
        n_u *= 2;
    }

    let mut split: Vec<VarId> = Vec::new();
    let mut slices: u128 = 1;
    // Copies of each input sent so far: the product of the cardinalities of the split
    // variables it lacks.
    let (mut copies_l, mut copies_r) = (1u128, 1u128);
    let (size_l, size_r) = (shape.left.size(), shape.right.size());
    while floor_pow2(slices) < n_u {
        let next = shape
            .result
            .pairs()
            .iter()
            .filter(|(v, _)| !split.contains(v))
            .map(|&(v, card)| {
                let in_l = shape.left.contains(v);
                let in_r = shape.right.contains(v);
                let cl = if in_l { copies_l } else { copies_l * card as u128 };
                let cr = if in_r { copies_r } else { copies_r * card as u128 };
                (bpe * (size_l * cl + size_r * cr), u8::from(!(in_l && in_r)), v, card, cl, cr)
            })
            .min()
            .expect("result has enough variables for the processor count");
        split.push(next.2);
        slices *= next.3 as u128;
        (copies_l, copies_r) = (next.4, next.5);
    }

    let b_total = Bytes::from_integer(distributed_bytes(shape, &split, bpe));
    let b_result = Bytes::from_integer(bpe * shape.result.size());
    let n = Bytes::from_integer(n_u);
    SplitPlan {
        split_vars: split,
        n_u: n_u as u64,
        g: m as f64 / n_u as f64,
        d_max: n_u.trailing_zeros(),
        b_d: b_total / n,
        b_r: b_result / n,
        b_total,
    }
}

fn spanning_tree_cost(plan: &SplitPlan, bytes: &Bytes, machine: &MachineParams) -> f64 {
    if plan.n_u <= 1 {
        return 0.0;
    }
    (plan.d_max as f64 * machine.c_st)
        + (bytes_to_f64(bytes) * ((plan.n_u - 1) as f64 * machine.c_b))
}

/// C_d = D_max * C_st + B_d * ((N_u - 1) * C_b); zero for a product kept on one
/// processor.
pub fn comm_distribute(plan: &SplitPlan, machine: &MachineParams) -> f64 {
    spanning_tree_cost(plan, &plan.b_d, machine)
}

/// C_r = D_max * C_st + B_r * ((N_u - 1) * C_b); zero for a product kept on one
/// processor.
pub fn comm_return(plan: &SplitPlan, machine: &MachineParams) -> f64 {
    spanning_tree_cost(plan, &plan.b_r, machine)
}

/// Communication of a product when every processor holds the whole net. There is no
/// input distribution; the result slices are exchanged so that every processor ends up
/// with the whole result. A recursive-doubling all-gather on the sub-cube takes one
/// startup per dimension and delivers the other `n_u - 1` slices to each processor, the
/// same form as the return cost.
pub fn distnet_cp_comm(_shape: &CpShape, plan: &SplitPlan, machine: &MachineParams) -> f64 {
    comm_return(plan, machine)
}

/// T_p = P + S + alpha * G + C_d + C_r + B for a distributed product; a product kept on
/// one processor costs exactly its sequential time.
pub fn parallel_cp_cost(shape: &CpShape, machine: &MachineParams) -> CpCost {
    let plan = plan_split(shape, machine);
    let t_s = seq_cp_cost(shape, machine);
    let c_dist = distnet_cp_comm(shape, &plan, machine);
    if plan.n_u <= 1 {
        return CpCost {
            t_s,
            t_p: t_s,
            w: t_s,
            c_d: 0.0,
            c_r: 0.0,
            c_dist,
            plan,
            shape: shape.clone(),
        };
    }
    let w = machine.alpha * plan.g;
    let c_d = comm_distribute(&plan, machine);
    let c_r = comm_return(&plan, machine);
    CpCost {
        t_s,
        t_p: machine.p_init + machine.s_setup + w + c_d + c_r + machine.b_buffer,
        w,
        c_d,
        c_r,
        c_dist,
        plan,
        shape: shape.clone(),
    }
}

/// Costs every product of `tree` and sums them into query totals.
pub fn query_costs(tree: &EvalTree, machine: &MachineParams) -> QueryCost {
    let cps: Vec<(NodeId, CpCost)> = tree
        .product_ids()
        .map(|id| (id, parallel_cp_cost(&tree.shape(id).expect("product"), machine)))
        .collect();
    let sum = |f: fn(&CpCost) -> f64| cps.iter().map(|(_, c)| f(c)).sum::<f64>();
    QueryCost {
        t_s_query: sum(|c| c.t_s),
        t_p_query: sum(|c| c.t_p),
        n_u_query: cps.iter().map(|(_, c)| c.plan.n_u).max().unwrap_or(1),
        cm_total: sum(|c| c.c_d + c.c_r),
        cp_total: sum(|c| c.w),
        dist_cm_total: sum(|c| c.c_dist),
        lp: longest_path(tree, machine),
        cps,
    }
}

/// Root-to-leaf path with the largest summed sequential product time. Its parallel time
/// is evaluated with the processor limit lifted.
pub fn longest_path(tree: &EvalTree, machine: &MachineParams) -> LongestPath {
    longest_path_with(tree, machine, UNBOUNDED_PROCESSORS)
}

/// As [`longest_path`], with the path's parallel time evaluated at `n_a` processors.
pub fn longest_path_with(tree: &EvalTree, machine: &MachineParams, n_a: u64) -> LongestPath {
    let n = tree.nodes.len();
    let mut best = vec![0.0f64; n];
    let mut next: Vec<Option<NodeId>> = vec![None; n];
    for id in tree.product_ids() {
        let (l, r) = tree.children(id).expect("product");
        let t = seq_cp_cost(&tree.shape(id).expect("product"), machine);
        let child = if best[r] > best[l] { r } else { l };
        best[id] = t + best[child];
        next[id] = Some(child);
    }

    let relaxed = MachineParams {
        n_a,
        ..machine.clone()
    };
    let mut nodes = Vec::new();
    let mut par_time = 0.0;
    let mut cur = tree.root;
    while tree.children(cur).is_some() {
        nodes.push(cur);
        par_time += parallel_cp_cost(&tree.shape(cur).expect("product"), &relaxed).t_p;
        cur = next[cur].expect("product has a successor");
    }
    LongestPath {
        seq_time: best[tree.root],
        par_time,
        nodes,
    }
}

/// Per-processor memory under both models.
pub fn memory_accounting(tree: &EvalTree, machine: &MachineParams) -> MemoryUse {
    let bpe = machine.bytes_per_entry as u128;
    let mut bca = Bytes::from_integer(0);
    let mut bca_excl = Bytes::from_integer(0);
    let mut dist = Bytes::from_integer(0);
    for id in tree.product_ids() {
        let shape = tree.shape(id).expect("product");
        let plan = plan_split(&shape, machine);
        if plan.n_u > 1 {
            let per_proc = plan.b_d + plan.b_r;
            bca += per_proc;
            if id != tree.root {
                bca_excl += per_proc;
            }
        }
        let held = Bytes::from_integer(
            bpe * (shape.left.size() + shape.right.size() + shape.result.size()),
        );
        if held > dist {
            dist = held;
        }
    }
    MemoryUse {
        bca_mem: bca,
        bca_mem_excl_final: bca_excl,
        dist_mem: dist,
    }
}
