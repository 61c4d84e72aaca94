//! Random binary collision trees and the discrete-time iteration.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::kernel::CollisionContext;
use crate::rng::{self, Reduction};
use crate::spin::ProbVec;

/// Finite rooted binary tree stored as the sorted list of its node paths.
///
/// A path is a sequence of 0 (left) / 1 (right) steps from the root; the
/// root is the empty path. Lexicographic order lists every node before its
/// descendants and the leaves from left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CollisionTree {
    nodes: Vec<Vec<u8>>,
}

impl CollisionTree {
    pub fn root() -> Self {
        CollisionTree { nodes: vec![Vec::new()] }
    }

    /// Validate and normalise a node set.
    pub fn from_paths(mut nodes: Vec<Vec<u8>>) -> Result<Self> {
        nodes.sort();
        nodes.dedup();
        let t = CollisionTree { nodes };
        t.validate()?;
        Ok(t)
    }

    /// Regular tree of the given depth (`2^depth` leaves).
    pub fn regular(depth: usize) -> Self {
        let mut nodes = vec![Vec::new()];
        let mut level = vec![Vec::new()];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(level.len() * 2);
            for p in &level {
                for b in 0..2u8 {
                    let mut c: Vec<u8> = p.clone();
                    c.push(b);
                    next.push(c);
                }
            }
            nodes.extend(next.iter().cloned());
            level = next;
        }
        nodes.sort();
        CollisionTree { nodes }
    }

    /// Comb whose internal nodes lie on the leftmost branch, so the root
    /// value is `((p o p) o p) ... o p` with `leaves` factors.
    pub fn comb(leaves: usize) -> Self {
        assert!(leaves >= 1);
        let mut nodes = vec![Vec::new()];
        let mut spine: Vec<u8> = Vec::new();
        for _ in 1..leaves {
            let mut right = spine.clone();
            right.push(1);
            spine.push(0);
            nodes.push(spine.clone());
            nodes.push(right);
        }
        nodes.sort();
        CollisionTree { nodes }
    }

    fn contains(&self, path: &[u8]) -> bool {
        self.nodes.binary_search_by(|p| p.as_slice().cmp(path)).is_ok()
    }

    /// Every node's parent is present and every node has 0 or 2 children.
    pub fn validate(&self) -> Result<()> {
        if !self.contains(&[]) {
            return Err(Error::invalid("tree has no root"));
        }
        for p in &self.nodes {
            if p.iter().any(|&b| b > 1) {
                return Err(Error::invalid("path steps must be 0 or 1"));
            }
            if let Some((_, parent)) = p.split_last() {
                if !self.contains(parent) {
                    return Err(Error::invalid("tree is not closed under taking ancestors"));
                }
            }
            let mut l = p.clone();
            l.push(0);
            let mut r = p.clone();
            r.push(1);
            if self.contains(&l) != self.contains(&r) {
                return Err(Error::invalid("a node has exactly one child"));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Vec<u8>] {
        &self.nodes
    }

    fn is_leaf(&self, path: &[u8]) -> bool {
        let mut l = path.to_vec();
        l.push(0);
        !self.contains(&l)
    }

    /// Leaves from left to right.
    pub fn leaves(&self) -> Vec<&[u8]> {
        self.nodes.iter().filter(|p| self.is_leaf(p)).map(Vec::as_slice).collect()
    }

    pub fn num_leaves(&self) -> usize {
        (self.nodes.len() + 1) / 2
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Yule tree at time `t`: every leaf splits at rate 1.
pub fn sample_tree<R: Rng>(t: f64, rng: &mut R) -> Result<CollisionTree> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("tree time {t} must be >= 0")));
    }
    let mut nodes = Vec::new();
    // depth-first with the remaining time at each node
    let mut stack: Vec<(Vec<u8>, f64)> = vec![(Vec::new(), t)];
    while let Some((path, left)) = stack.pop() {
        let clock: f64 = rng.sample(Exp1);
        if clock <= left {
            for b in [1u8, 0] {
                let mut c = path.clone();
                c.push(b);
                stack.push((c, left - clock));
            }
        }
        nodes.push(path);
    }
    nodes.sort();
    Ok(CollisionTree { nodes })
}

/// Recursive collision of the leaf measures. A single measure is broadcast to
/// every leaf; otherwise leaves take measures in left-to-right order.
pub fn eval_tree(ctx: &CollisionContext, tree: &CollisionTree, leaves: &[ProbVec]) -> Result<ProbVec> {
    let nl = tree.num_leaves();
    if leaves.len() != 1 && leaves.len() != nl {
        return Err(Error::invalid(format!("tree has {nl} leaves but {} measures were given", leaves.len())));
    }
    let mut next_leaf = 0;
    eval_node(ctx, tree, &mut Vec::new(), leaves, &mut next_leaf)
}

fn eval_node(
    ctx: &CollisionContext,
    tree: &CollisionTree,
    path: &mut Vec<u8>,
    leaves: &[ProbVec],
    next_leaf: &mut usize,
) -> Result<ProbVec> {
    if tree.is_leaf(path) {
        let p = if leaves.len() == 1 { leaves[0].clone() } else { leaves[*next_leaf].clone() };
        *next_leaf += 1;
        return Ok(p);
    }
    path.push(0);
    let a = eval_node(ctx, tree, path, leaves, next_leaf)?;
    path.pop();
    path.push(1);
    let b = eval_node(ctx, tree, path, leaves, next_leaf)?;
    path.pop();
    ctx.collision_product(&a, &b)
}

/// Monte Carlo estimate with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

impl McEstimate {
    /// Largest `|mean - exact| / stderr`; entries with zero spread must match
    /// to 1e-12.
    pub fn max_z(&self, exact: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.stderr)
            .zip(exact)
            .map(|((m, s), e)| {
                let d = (m - e).abs();
                if *s > 0.0 {
                    d / s
                } else if d <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Mean and standard error of `count` vector samples.
pub(crate) fn mc_estimate<F>(count: usize, len: usize, reduction: Reduction, f: F) -> McEstimate
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let sums = rng::par_vec_sum(count, 2 * len, reduction, |i| {
        let x = f(i);
        let mut out = Vec::with_capacity(2 * len);
        out.extend_from_slice(&x);
        out.extend(x.iter().map(|v| v * v));
        out
    });
    let c = count as f64;
    let mean: Vec<f64> = sums[..len].iter().map(|s| s / c).collect();
    let stderr = (0..len)
        .map(|i| {
            let var = (sums[len + i] / c - mean[i] * mean[i]).max(0.0) * c / (c - 1.0).max(1.0);
            (var / c).sqrt()
        })
        .collect();
    McEstimate { mean, stderr, samples: count }
}

/// `p_t = E[T_{gamma_t}(p)]` by sampling trees.
pub fn mc_solution(
    ctx: &CollisionContext,
    p0: &ProbVec,
    t: f64,
    samples: usize,
    seed: u64,
    reduction: Reduction,
) -> Result<McEstimate> {
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("time {t} must be >= 0")));
    }
    let leaves = [p0.clone()];
    Ok(mc_estimate(samples, p0.len(), reduction, |i| {
        let mut r = rng::stream_rng(seed, i as u64);
        let tree = sample_tree(t, &mut r).expect("t checked above");
        eval_tree(ctx, &tree, &leaves).expect("dimensions checked").into_vec()
    }))
}

/// `Phi_k(p)`: `k` rounds of squaring under the collision product.
pub fn discrete_iterate(ctx: &CollisionContext, p: &ProbVec, k: usize) -> Result<ProbVec> {
    let mut q = p.clone();
    for _ in 0..k {
        q = ctx.collision_product(&q, &q)?;
    }
    Ok(q)
}

/// `Phi_u(p_1, ..., p_{2^u})`: pair neighbours level by level.
pub fn discrete_iterate_leaves(ctx: &CollisionContext, leaves: &[ProbVec]) -> Result<ProbVec> {
    if !leaves.len().is_power_of_two() {
        return Err(Error::invalid("number of leaf measures must be a power of two"));
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = level.chunks(2).map(|c| ctx.collision_product(&c[0], &c[1])).collect::<Result<_>>()?;
    }
    Ok(level.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, EvolveOptions};
    use crate::kernel::{build_transport_kernel, KernelSpec};
    use crate::spin::{gibbs_measure, magnetization_profile, FieldVector, InteractionMatrix, SitePartition};
    use proptest::prelude::*;

    fn ctx(j: InteractionMatrix, spec: KernelSpec) -> CollisionContext {
        let k = build_transport_kernel(j.n(), &spec).unwrap();
        CollisionContext::new(j, k).unwrap()
    }

    fn j2() -> InteractionMatrix {
        InteractionMatrix::new(2, vec![0.1, 0.3, 0.3, -0.2]).unwrap()
    }

    #[test]
    fn trivial_trees() {
        let mut r = rng::stream_rng(1, 0);
        let t = sample_tree(0.0, &mut r).unwrap();
        assert_eq!(t, CollisionTree::root());
        assert_eq!(t.num_leaves(), 1);
        assert!(sample_tree(-1.0, &mut r).is_err());
        assert!(CollisionTree::from_paths(vec![vec![], vec![0]]).is_err());
        assert!(CollisionTree::from_paths(vec![vec![0], vec![1]]).is_err());
        CollisionTree::from_paths(vec![vec![], vec![0], vec![1]]).unwrap();
    }

    #[test]
    fn yule_mean_leaves_and_root_survival() {
        let n = 100_000;
        let mut leaves = 0.0;
        let mut leaves2 = 0.0;
        let mut unsplit = 0.0;
        for i in 0..n {
            let mut r = rng::stream_rng(7, i);
            let t = sample_tree(1.0, &mut r).unwrap();
            let l = t.num_leaves() as f64;
            leaves += l;
            leaves2 += l * l;
            if l == 1.0 {
                unsplit += 1.0;
            }
        }
        let nf = n as f64;
        let mean = leaves / nf;
        let sd = ((leaves2 / nf - mean * mean) / nf).sqrt();
        assert!((mean - 1f64.exp()).abs() < 3.0 * sd, "mean {mean} sd {sd}");
        let p = (-1.0f64).exp();
        let sdp = (p * (1.0 - p) / nf).sqrt();
        assert!((unsplit / nf - p).abs() < 3.0 * sdp);
    }

    #[test]
    fn eval_small_trees() {
        let c = ctx(j2(), KernelSpec::MeanField);
        let p = ProbVec::from_weights(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(eval_tree(&c, &CollisionTree::root(), &[p.clone()]).unwrap(), p);
        let pp = c.collision_product(&p, &p).unwrap();
        assert_eq!(eval_tree(&c, &CollisionTree::regular(1), &[p.clone()]).unwrap(), pp);
        let comb = CollisionTree::comb(4);
        assert_eq!(comb.num_leaves(), 4);
        let direct = c.collision_product(&c.collision_product(&pp, &p).unwrap(), &p).unwrap();
        assert!(eval_tree(&c, &comb, &[p.clone()]).unwrap().max_diff(&direct) < 1e-16);
        assert!(eval_tree(&c, &comb, &[p.clone(), p.clone()]).is_err());
        let two = discrete_iterate(&c, &p, 2).unwrap();
        assert!(two.max_diff(&c.collision_product(&pp, &pp).unwrap()) < 1e-16);
        assert!(eval_tree(&c, &CollisionTree::regular(2), &[p.clone()]).unwrap().max_diff(&two) < 1e-16);
    }

    #[test]
    fn leaf_order_is_left_to_right() {
        let c = ctx(InteractionMatrix::zeros(2).unwrap(), KernelSpec::MeanField);
        let ps: Vec<ProbVec> = (0..4)
            .map(|i| ProbVec::from_weights(2, vec![1.0 + i as f64, 2.0, 0.5 * i as f64 + 0.1, 1.0]).unwrap())
            .collect();
        let via_tree = eval_tree(&c, &CollisionTree::regular(2), &ps).unwrap();
        let via_levels = discrete_iterate_leaves(&c, &ps).unwrap();
        assert!(via_tree.max_diff(&via_levels) < 1e-16);
    }

    #[test]
    fn mc_matches_ode_n2() {
        let c = ctx(j2(), KernelSpec::MeanField);
        let p0 = ProbVec::from_weights(2, vec![0.6, 0.1, 0.05, 0.25]).unwrap();
        let est = mc_solution(&c, &p0, 1.0, 10_000, 11, Reduction::Deterministic).unwrap();
        let ode = evolve(&c, &p0, EvolveOptions::new(1.0, 0.01)).unwrap();
        assert!(est.max_z(ode.final_state().as_slice()) < 3.0, "{:?} {:?} {:?}", est.mean, est.stderr, ode.final_state().as_slice());
        let at0 = mc_solution(&c, &p0, 0.0, 10, 1, Reduction::Deterministic).unwrap();
        assert!(at0.mean.iter().zip(p0.as_slice()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn variance_scales_inverse_samples() {
        let c = ctx(j2(), KernelSpec::MeanField);
        let p0 = ProbVec::from_weights(2, vec![0.6, 0.1, 0.05, 0.25]).unwrap();
        let a = mc_solution(&c, &p0, 1.5, 4_000, 2, Reduction::Deterministic).unwrap();
        let b = mc_solution(&c, &p0, 1.5, 16_000, 3, Reduction::Deterministic).unwrap();
        for (x, y) in a.stderr.iter().zip(&b.stderr) {
            let r = x / y;
            assert!((r - 2.0).abs() < 0.2, "ratio {r}");
        }
    }

    #[test]
    fn deterministic_reduction_is_reproducible() {
        let c = ctx(j2(), KernelSpec::MeanField);
        let p0 = ProbVec::from_weights(2, vec![0.6, 0.1, 0.05, 0.25]).unwrap();
        let a = mc_solution(&c, &p0, 1.0, 3000, 5, Reduction::Deterministic).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_solution(&c, &p0, 1.0, 3000, 5, Reduction::Deterministic).unwrap());
        assert_eq!(a.mean, b.mean);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sampled_trees_are_valid(seed in 0u64..10_000, t in 0.0f64..3.0) {
            let mut r = rng::stream_rng(seed, 0);
            let tree = sample_tree(t, &mut r).unwrap();
            prop_assert!(tree.validate().is_ok());
            prop_assert_eq!(tree.leaves().len(), tree.num_leaves());
        }

        #[test]
        fn gibbs_leaves_fixed(seed in 0u64..10_000, h in -1.0f64..1.0) {
            let j = j2();
            let c = ctx(j.clone(), KernelSpec::MeanField);
            let mu = gibbs_measure(&j, &FieldVector(vec![h, h])).unwrap();
            let mut r = rng::stream_rng(seed, 1);
            let tree = sample_tree(2.0, &mut r).unwrap();
            prop_assert!(eval_tree(&c, &tree, &[mu.clone()]).unwrap().max_diff(&mu) < 1e-12);
        }

        #[test]
        fn iterate_conserves_profile(w in prop::collection::vec(0.01f64..1.0, 8), k in 0usize..4) {
            let a = SitePartition::new(3, vec![vec![0, 2], vec![1]]).unwrap();
            let j = InteractionMatrix::new(3, vec![0.0, 0.2, -0.1, 0.2, 0.0, 0.3, -0.1, 0.3, 0.0]).unwrap();
            let c = ctx(j, KernelSpec::Blocks(a.clone()));
            let p = ProbVec::from_weights(3, w).unwrap();
            let q = discrete_iterate(&c, &p, k).unwrap();
            let (mp, mq) = (magnetization_profile(&p, &a), magnetization_profile(&q, &a));
            for b in 0..2 {
                prop_assert!((mp[b] - mq[b]).abs() < 1e-12);
            }
        }
    }
}
