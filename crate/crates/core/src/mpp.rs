//! Marked partition process for the zero-interaction iteration.
//!
//! A fragment is a set of sites with a mark: `None`, or a site whose
//! single-site marginal is read off. Fragment `i` at depth `u` has children
//! `2i` and `2i + 1` (0-based) at depth `u + 1`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{CollisionContext, TransportKernel};
use crate::rng::{self, Reduction};
use crate::spin::ProbVec;
use crate::wild::{discrete_iterate_leaves, mc_estimate, McEstimate};

/// Deepest level simulated densely.
pub const MAX_DENSE_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fragment {
    pub sites: u32,
    pub mark: Option<usize>,
}

impl Fragment {
    pub const EMPTY: Fragment = Fragment { sites: 0, mark: None };

    pub fn is_empty(&self) -> bool {
        self.sites == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedPartition {
    n: usize,
    fragments: Vec<Fragment>,
}

impl MarkedPartition {
    pub fn initial(n: usize) -> Self {
        MarkedPartition { n, fragments: vec![Fragment { sites: full_mask(n), mark: None }] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn depth(&self) -> usize {
        self.fragments.len().trailing_zeros() as usize
    }

    /// All nonempty fragments carry a mark.
    pub fn is_fragmented(&self) -> bool {
        self.fragments.iter().all(|f| f.is_empty() || f.mark.is_some())
    }
}

fn full_mask(n: usize) -> u32 {
    if n == 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

fn sample_row<R: Rng>(kernel: &TransportKernel, from: usize, rng: &mut R) -> usize {
    let n = kernel.n();
    let mut r: f64 = rng.random();
    for k in 0..n {
        r -= kernel.get(from, k);
        if r < 0.0 {
            return k;
        }
    }
    // rounding: last state with positive weight
    (0..n).rev().find(|&k| kernel.get(from, k) > 0.0).unwrap_or(from)
}

/// One step of the lazy chain `K/n + (1 - 1/n) I`.
fn lazy_step<R: Rng>(kernel: &TransportKernel, from: usize, rng: &mut R) -> usize {
    let n = kernel.n();
    if rng.random_range(0..n) == 0 {
        sample_row(kernel, from, rng)
    } else {
        from
    }
}

/// Children of one fragment given the uniform draws `u` (site) and `b` (1..=4).
pub fn split_fragment<R: Rng>(
    kernel: &TransportKernel,
    c: Fragment,
    u: usize,
    b: u8,
    rng: &mut R,
) -> (Fragment, Fragment) {
    match b {
        1 => (c, Fragment::EMPTY),
        2 => (Fragment::EMPTY, c),
        3 | 4 => {
            let pair = match c.mark {
                None if c.sites >> u & 1 == 1 => (
                    Fragment { sites: c.sites & !(1 << u), mark: None },
                    Fragment { sites: 1 << u, mark: Some(sample_row(kernel, u, rng)) },
                ),
                None => (c, Fragment::EMPTY),
                Some(x) => (Fragment { sites: c.sites, mark: Some(lazy_step(kernel, x, rng)) }, Fragment::EMPTY),
            };
            if b == 3 {
                pair
            } else {
                (pair.1, pair.0)
            }
        }
        _ => panic!("b must lie in 1..=4"),
    }
}

fn split_random<R: Rng>(kernel: &TransportKernel, c: Fragment, rng: &mut R) -> (Fragment, Fragment) {
    let u = rng.random_range(0..kernel.n());
    let b = rng.random_range(1..=4u8);
    split_fragment(kernel, c, u, b, rng)
}

/// Next generation; every fragment (empty ones included) draws its own
/// `(U, B)` in left-to-right order.
pub fn mpp_step<R: Rng>(kernel: &TransportKernel, state: &MarkedPartition, rng: &mut R) -> Result<MarkedPartition> {
    if state.depth() >= MAX_DENSE_DEPTH {
        return Err(Error::Capacity(format!("depth beyond {MAX_DENSE_DEPTH} is not simulated densely")));
    }
    if kernel.n() != state.n {
        return Err(Error::invalid("kernel and partition sizes differ"));
    }
    let mut out = Vec::with_capacity(2 * state.fragments.len());
    for &c in &state.fragments {
        let (l, r) = split_random(kernel, c, rng);
        out.push(l);
        out.push(r);
    }
    Ok(MarkedPartition { n: state.n, fragments: out })
}

/// Lazy kernel `K/n + (1 - 1/n) I` and its half-lazy version `(I + Kbar)/2`,
/// both row-major.
pub fn lazy_kernels(kernel: &TransportKernel) -> (Vec<f64>, Vec<f64>) {
    let n = kernel.n();
    let nf = n as f64;
    let mut kbar = vec![0.0; n * n];
    let mut khat = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            let id = if x == y { 1.0 } else { 0.0 };
            kbar[x * n + y] = kernel.get(x, y) / nf + id * (nf - 1.0) / nf;
            khat[x * n + y] = 0.5 * id + 0.5 * kbar[x * n + y];
        }
    }
    (kbar, khat)
}

pub fn mpp_run<R: Rng>(kernel: &TransportKernel, depth: usize, rng: &mut R) -> Result<MarkedPartition> {
    let mut s = MarkedPartition::initial(kernel.n());
    for _ in 0..depth {
        s = mpp_step(kernel, &s, rng)?;
    }
    Ok(s)
}

/// Product over fragments of the marginal of `leaves[i]` selected by
/// fragment `i`.
pub fn psi(leaves: &[ProbVec], state: &MarkedPartition) -> Result<Vec<f64>> {
    if leaves.len() != state.fragments.len() {
        return Err(Error::invalid(format!(
            "{} fragments but {} leaf measures",
            state.fragments.len(),
            leaves.len()
        )));
    }
    let n = state.n;
    let mut out = vec![1.0; 1 << n];
    for (f, p) in state.fragments.iter().zip(leaves) {
        if f.is_empty() {
            continue;
        }
        match f.mark {
            None => {
                let m = p.marginal_on(f.sites);
                for (t, o) in out.iter_mut().enumerate() {
                    *o *= m[t & f.sites as usize];
                }
            }
            Some(x) => {
                let j = f.sites.trailing_zeros() as usize;
                let m = p.site_marginal(x);
                for (t, o) in out.iter_mut().enumerate() {
                    *o *= m[t >> j & 1];
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MppCheck {
    pub estimate: McEstimate,
    pub exact: Vec<f64>,
    pub max_z: f64,
}

/// Compare the sample mean of `Psi` at depth `log2(leaves.len())` with the
/// exact zero-interaction iterate.
pub fn mpp_representation_check(
    ctx: &CollisionContext,
    leaves: &[ProbVec],
    runs: usize,
    seed: u64,
    reduction: Reduction,
) -> Result<MppCheck> {
    if !ctx.interaction().is_zero() {
        return Err(Error::precondition("the marked partition representation needs J = 0"));
    }
    if !leaves.len().is_power_of_two() {
        return Err(Error::invalid("number of leaf measures must be a power of two"));
    }
    let depth = leaves.len().trailing_zeros() as usize;
    let kernel = ctx.kernel();
    let n = kernel.n();
    let exact = discrete_iterate_leaves(ctx, leaves)?.into_vec();
    // validate once so the closure can unwrap
    mpp_run(kernel, depth, &mut rng::stream_rng(seed, u64::MAX))?;
    let estimate = mc_estimate(runs, 1 << n, reduction, |i| {
        let mut r = rng::stream_rng(seed, i as u64);
        let s = mpp_run(kernel, depth, &mut r).expect("depth validated");
        psi(leaves, &s).expect("sizes validated")
    });
    let max_z = estimate.max_z(&exact);
    Ok(MppCheck { estimate, exact, max_z })
}

/// First depth at which the process is fragmented. Empty fragments never
/// become nonempty, so only the nonempty ones are tracked.
pub fn fragmentation_time<R: Rng>(kernel: &TransportKernel, rng: &mut R) -> u64 {
    let mut live = vec![Fragment { sites: full_mask(kernel.n()), mark: None }];
    let mut u = 0;
    while !live.iter().all(|f| f.mark.is_some()) {
        let mut next = Vec::with_capacity(live.len() + 1);
        for &c in &live {
            let (l, r) = split_random(kernel, c, rng);
            next.extend([l, r].into_iter().filter(|f| !f.is_empty()));
        }
        live = next;
        u += 1;
    }
    u
}

#[derive(Debug, Clone, Copy)]
pub struct TailPoint {
    pub u: u64,
    /// Empirical `P(H >= u)`.
    pub empirical: f64,
    pub stderr: f64,
    /// `n exp(-u / 2n)`.
    pub bound: f64,
}

impl TailPoint {
    pub fn holds(&self) -> bool {
        self.empirical <= self.bound + 3.0 * self.stderr
    }
}

pub fn fragmentation_tail(kernel: &TransportKernel, us: &[u64], samples: usize, seed: u64) -> Vec<TailPoint> {
    let n = kernel.n() as f64;
    let hs: Vec<u64> = (0..samples).map(|i| fragmentation_time(kernel, &mut rng::stream_rng(seed, i as u64))).collect();
    us.iter()
        .map(|&u| {
            let p = hs.iter().filter(|&&h| h >= u).count() as f64 / samples as f64;
            TailPoint {
                u,
                empirical: p,
                stderr: (p * (1.0 - p) / samples as f64).sqrt(),
                bound: n * (-(u as f64) / (2.0 * n)).exp(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_transport_kernel, KernelSpec};
    use crate::spin::{InteractionMatrix, SitePartition};

    fn kern(n: usize, spec: KernelSpec) -> TransportKernel {
        build_transport_kernel(n, &spec).unwrap()
    }

    fn measures(n: usize, count: usize) -> Vec<ProbVec> {
        (0..count)
            .map(|i| {
                let w = (0..1 << n).map(|s| 1.0 + ((s * 7 + i * 3) % 5) as f64 + 0.3 * i as f64).collect();
                ProbVec::from_weights(n, w).unwrap()
            })
            .collect()
    }

    /// Exact `E[Psi]` by enumerating every draw of the process.
    fn exact_expectation(kernel: &TransportKernel, leaves: &[ProbVec]) -> Vec<f64> {
        let n = kernel.n();
        let depth = leaves.len().trailing_zeros() as usize;
        let kbar = |x: usize, y: usize| kernel.get(x, y) / n as f64 + if x == y { (n - 1) as f64 / n as f64 } else { 0.0 };
        // distribution over generations as (weight, fragments)
        let mut gens: Vec<(f64, Vec<Fragment>)> = vec![(1.0, vec![Fragment { sites: full_mask(n), mark: None }])];
        for _ in 0..depth {
            let mut next = Vec::new();
            for (w, frs) in gens {
                let mut partial: Vec<(f64, Vec<Fragment>)> = vec![(w, Vec::new())];
                for c in frs {
                    let mut opts: Vec<(f64, Fragment, Fragment)> = Vec::new();
                    let pu = 1.0 / (4.0 * n as f64);
                    for u in 0..n {
                        opts.push((pu, c, Fragment::EMPTY));
                        opts.push((pu, Fragment::EMPTY, c));
                        let mut b3: Vec<(f64, Fragment, Fragment)> = Vec::new();
                        match c.mark {
                            None if c.sites >> u & 1 == 1 => {
                                for x in 0..n {
                                    b3.push((
                                        kernel.get(u, x),
                                        Fragment { sites: c.sites & !(1 << u), mark: None },
                                        Fragment { sites: 1 << u, mark: Some(x) },
                                    ));
                                }
                            }
                            None => b3.push((1.0, c, Fragment::EMPTY)),
                            Some(x) => {
                                for y in 0..n {
                                    b3.push((kbar(x, y), Fragment { sites: c.sites, mark: Some(y) }, Fragment::EMPTY));
                                }
                            }
                        }
                        for (q, l, r) in b3 {
                            if q > 0.0 {
                                opts.push((pu * q, l, r));
                                opts.push((pu * q, r, l));
                            }
                        }
                    }
                    let mut np = Vec::new();
                    for (pw, pf) in &partial {
                        for (q, l, r) in &opts {
                            let mut f = pf.clone();
                            f.push(*l);
                            f.push(*r);
                            np.push((pw * q, f));
                        }
                    }
                    partial = np;
                }
                next.extend(partial);
            }
            gens = next;
        }
        let mut out = vec![0.0; 1 << n];
        for (w, frs) in gens {
            let s = MarkedPartition { n, fragments: frs };
            for (o, v) in out.iter_mut().zip(psi(leaves, &s).unwrap()) {
                *o += w * v;
            }
        }
        out
    }

    #[test]
    fn exact_enumeration_matches_iterate() {
        let cases = [
            (2, KernelSpec::MeanField, 1),
            (2, KernelSpec::SingleSite, 1),
            (3, KernelSpec::Blocks(SitePartition::new(3, vec![vec![0, 2], vec![1]]).unwrap()), 1),
            (2, KernelSpec::MeanField, 2),
            (3, KernelSpec::MeanField, 2),
        ];
        for (n, spec, depth) in cases {
            let k = kern(n, spec);
            let leaves = measures(n, 1 << depth);
            let ctx = CollisionContext::new(InteractionMatrix::zeros(n).unwrap(), k.clone()).unwrap();
            let direct = discrete_iterate_leaves(&ctx, &leaves).unwrap();
            let via = exact_expectation(&k, &leaves);
            for (a, b) in direct.as_slice().iter().zip(&via) {
                assert!((a - b).abs() < 1e-14, "n={n} depth={depth}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn psi_is_a_probability() {
        let k = kern(3, KernelSpec::MeanField);
        let leaves = measures(3, 8);
        for i in 0..50 {
            let s = mpp_run(&k, 3, &mut rng::stream_rng(9, i)).unwrap();
            let v = psi(&leaves, &s).unwrap();
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let union = s.fragments().iter().fold(0u32, |acc, f| {
                assert_eq!(acc & f.sites, 0);
                acc | f.sites
            });
            assert_eq!(union, 0b111);
            assert!(s.fragments().iter().filter(|f| f.mark.is_none() && f.sites.count_ones() > 1).count() <= 1);
        }
    }

    #[test]
    fn marks_stay_in_component() {
        let a = SitePartition::new(4, vec![vec![0, 3], vec![1, 2]]).unwrap();
        let k = kern(4, KernelSpec::Blocks(a.clone()));
        for i in 0..200 {
            let s = mpp_run(&k, 6, &mut rng::stream_rng(3, i)).unwrap();
            for f in s.fragments() {
                if let Some(x) = f.mark {
                    let j = f.sites.trailing_zeros() as usize;
                    assert_eq!(a.block_of(j), a.block_of(x));
                }
            }
        }
    }

    fn zero_ctx(k: &TransportKernel) -> CollisionContext {
        CollisionContext::new(InteractionMatrix::zeros(k.n()).unwrap(), k.clone()).unwrap()
    }

    #[test]
    fn monte_carlo_representation() {
        let k = kern(3, KernelSpec::MeanField);
        let ctx = zero_ctx(&k);
        let leaves = measures(3, 4);
        let c = mpp_representation_check(&ctx, &leaves, 20_000, 5, Reduction::Deterministic).unwrap();
        assert!(c.max_z < 4.0, "{}", c.max_z);
        assert!(mpp_representation_check(&ctx, &leaves[..3], 10, 1, Reduction::Deterministic).is_err());
        let p = &leaves[..1];
        let c0 = mpp_representation_check(&ctx, p, 10, 1, Reduction::Deterministic).unwrap();
        assert!(c0.estimate.mean.iter().zip(p[0].as_slice()).all(|(a, b)| (a - b).abs() < 1e-15));
        let j = InteractionMatrix::new(3, vec![0.0, 0.1, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let hot = CollisionContext::new(j, k).unwrap();
        assert!(matches!(
            mpp_representation_check(&hot, &leaves, 10, 1, Reduction::Deterministic),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn single_site_depth_one_closed_form() {
        // J = 0, single-site kernel: with probability 1/2 one factor is kept,
        // otherwise a uniform site is taken from the other factor
        let k = kern(2, KernelSpec::SingleSite);
        let leaves = measures(2, 2);
        let (p, q) = (&leaves[0], &leaves[1]);
        let mut expect = vec![0.0; 4];
        for t in 0..4usize {
            let mut v = 0.25 * (p.get(t as u32) + q.get(t as u32));
            for l in 0..2 {
                let rest = 0b11 ^ (1 << l);
                let (pr, qr) = (p.marginal_on(rest as u32), q.marginal_on(rest as u32));
                let (pl, ql) = (p.site_marginal(l), q.site_marginal(l));
                let bit = t >> l & 1;
                v += 0.125 * (pr[t & rest] * ql[bit] + qr[t & rest] * pl[bit]);
            }
            expect[t] = v;
        }
        let c = mpp_representation_check(&zero_ctx(&k), &leaves, 40_000, 3, Reduction::Deterministic).unwrap();
        for (a, b) in c.exact.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(c.estimate.max_z(&expect) < 4.0);
    }

    #[test]
    fn rule_cases() {
        let k = kern(3, KernelSpec::MeanField);
        let mut r = rng::stream_rng(0, 0);
        for b in 1..=4 {
            assert_eq!(split_fragment(&k, Fragment::EMPTY, 1, b, &mut r), (Fragment::EMPTY, Fragment::EMPTY));
        }
        let full = Fragment { sites: 0b111, mark: None };
        let (l, rr) = split_fragment(&k, full, 1, 3, &mut r);
        assert_eq!(l, Fragment { sites: 0b101, mark: None });
        assert_eq!(rr.sites, 0b010);
        assert!(rr.mark.is_some());
        let (l4, r4) = split_fragment(&k, full, 1, 4, &mut r);
        assert_eq!((l4.sites, r4), (0b010, Fragment { sites: 0b101, mark: None }));
        let part = Fragment { sites: 0b101, mark: None };
        assert_eq!(split_fragment(&k, part, 1, 3, &mut r), (part, Fragment::EMPTY));
        assert_eq!(split_fragment(&k, part, 1, 4, &mut r), (Fragment::EMPTY, part));
        let single = Fragment { sites: 0b001, mark: Some(2) };
        let (s3, e3) = split_fragment(&k, single, 0, 3, &mut r);
        assert_eq!((s3.sites, e3), (0b001, Fragment::EMPTY));
        assert_eq!(split_fragment(&k, single, 0, 1, &mut r), (single, Fragment::EMPTY));
    }

    #[test]
    fn lazy_kernels_are_symmetric_stochastic() {
        let a = SitePartition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let k = kern(3, KernelSpec::Blocks(a));
        let (kbar, khat) = lazy_kernels(&k);
        for m in [&kbar, &khat] {
            for x in 0..3 {
                assert!((m[x * 3..x * 3 + 3].iter().sum::<f64>() - 1.0).abs() < 1e-15);
                for y in 0..3 {
                    assert_eq!(m[x * 3 + y], m[y * 3 + x]);
                }
            }
        }
    }

    #[test]
    fn mean_fragmentation_time_is_coupon_collector() {
        // each step collects a uniform coupon with probability 1/2
        for n in [2usize, 4, 8] {
            let k = kern(n, KernelSpec::MeanField);
            let m = 20_000;
            let hs: Vec<f64> = (0..m).map(|i| fragmentation_time(&k, &mut rng::stream_rng(4, i)) as f64).collect();
            let mean = hs.iter().sum::<f64>() / m as f64;
            let var = hs.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            let expect: f64 = (1..=n).map(|j| 2.0 * n as f64 / j as f64).sum();
            assert!((mean - expect).abs() < 4.0 * (var / m as f64).sqrt(), "n={n}: {mean} vs {expect}");
        }
    }

    #[test]
    fn single_site_fragmentation_is_geometric() {
        // n = 1: each step fragments with probability 1/2, so P(H > u) = 2^-u
        let k = kern(1, KernelSpec::SingleSite);
        let m = 40_000;
        let hs: Vec<u64> = (0..m).map(|i| fragmentation_time(&k, &mut rng::stream_rng(2, i))).collect();
        for u in 0..6u64 {
            let p = hs.iter().filter(|&&h| h > u).count() as f64 / m as f64;
            let e = 0.5f64.powi(u as i32);
            let sd = (e * (1.0 - e) / m as f64).sqrt().max(1e-12);
            assert!((p - e).abs() < 4.0 * sd, "u={u}: {p} vs {e}");
            assert!(p <= (-(u as f64) / 2.0).exp() + 3.0 * sd);
        }
    }

    #[test]
    fn sparse_and_dense_fragmentation_agree() {
        let k = kern(2, KernelSpec::MeanField);
        let m = 20_000;
        let depth = 6;
        let mut dense = 0.0;
        let mut sparse = 0.0;
        for i in 0..m {
            let mut r = rng::stream_rng(8, i);
            let mut s = MarkedPartition::initial(2);
            let mut h = None;
            for u in 0..=depth {
                if s.is_fragmented() {
                    h = Some(u);
                    break;
                }
                if u < depth {
                    s = mpp_step(&k, &s, &mut r).unwrap();
                }
            }
            if h.is_none() {
                dense += 1.0;
            }
            if fragmentation_time(&k, &mut rng::stream_rng(9, i)) > depth as u64 {
                sparse += 1.0;
            }
        }
        let (pd, ps) = (dense / m as f64, sparse / m as f64);
        let sd = (pd * (1.0 - pd) / m as f64).sqrt();
        assert!((pd - ps).abs() < 5.0 * sd, "{pd} vs {ps}");
    }

    #[test]
    fn tail_bound_for_larger_n() {
        for n in [2usize, 4] {
            let k = kern(n, KernelSpec::MeanField);
            let us: Vec<u64> = (0..8).map(|i| (i * n) as u64 * 2).collect();
            for t in fragmentation_tail(&k, &us, 5_000, 1) {
                assert!(t.holds(), "n={n} u={} {} > {}", t.u, t.empirical, t.bound);
            }
        }
    }
}
