//! Canonical densities, restricted masses of product measures, the local
//! CLT, and Kac, entropic and Fisher chaos.

use nalgebra::DMatrix;

use crate::dynamics::dissipation;
use crate::error::{Error, Result};
use crate::field::solve_field;
use crate::kac::{block_counts_table, multicanonical_measure, DensityProfile};
use crate::kernel::{logistic, CollisionContext};
use crate::linalg;
use crate::spin::{self, gibbs_measure, FieldVector, ProbVec, SitePartition};

fn describe_block(partition: &SitePartition, b: usize) -> String {
    let sites: Vec<String> = partition.block(b).iter().map(|s| (s + 1).to_string()).collect();
    format!("block {} (sites {{{}}})", b + 1, sites.join(","))
}

/// `rho(A) = floor(N |A| (1 + m(A)) / 2) / (N |A|)`; the floor absorbs
/// rounding up to 1e-9.
pub fn canonical_density(nu: &ProbVec, partition: &SitePartition, particles: usize) -> Result<DensityProfile> {
    let m = spin::magnetization_profile(nu, partition);
    let plus = m
        .iter()
        .zip(partition.sizes())
        .map(|(x, a)| {
            let slots = (particles * a) as f64;
            ((slots * (1.0 + x) / 2.0 + 1e-9).floor() as usize).min(particles * a)
        })
        .collect();
    DensityProfile::from_plus_counts(partition, particles, plus)
}

/// Every block admits a count vector `c` with `nu(c) > 0` and
/// `nu(c + e_A) > 0`.
pub fn check_irreducible(nu: &ProbVec, partition: &SitePartition) -> Result<()> {
    let counts = block_counts_table(partition);
    let law = single_law(nu, &counts);
    for b in 0..partition.len() {
        let ok = law.iter().any(|(c, _)| law.iter().any(|(d, _)| (0..c.len()).all(|x| d[x] == c[x] + usize::from(x == b))));
        if !ok {
            return Err(Error::precondition(format!(
                "measure is not irreducible: {} never changes by a single spin",
                describe_block(partition, b)
            )));
        }
    }
    Ok(())
}

/// Law of the plus-count vector of one particle.
fn single_law(nu: &ProbVec, counts: &[Vec<usize>]) -> Vec<(Vec<usize>, f64)> {
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    for (s, &p) in nu.as_slice().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        match out.iter_mut().find(|(c, _)| *c == counts[s]) {
            Some(e) => e.1 += p,
            None => out.push((counts[s].clone(), p)),
        }
    }
    out
}

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-probabilities of the plus-count vector of `N` i.i.d. particles.
#[derive(Debug, Clone)]
pub struct CountLaw {
    particles: usize,
    radix: Vec<usize>,
    log_p: Vec<f64>,
}

impl CountLaw {
    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn log_prob(&self, plus: &[usize]) -> f64 {
        let mut idx = 0;
        let mut stride = 1;
        for (c, r) in plus.iter().zip(&self.radix) {
            if *c >= *r {
                return f64::NEG_INFINITY;
            }
            idx += c * stride;
            stride *= r;
        }
        self.log_p[idx]
    }
}

/// Convolve the single-particle count law `N` times in log space.
pub fn count_law(nu: &ProbVec, partition: &SitePartition, particles: usize) -> Result<CountLaw> {
    let radix: Vec<usize> = partition.sizes().iter().map(|a| particles * a + 1).collect();
    let size = radix.iter().try_fold(1usize, |acc, r| acc.checked_mul(*r)).filter(|&s| s <= 1 << 26);
    let size = size.ok_or_else(|| Error::Capacity("count lattice larger than 2^26 points".into()))?;
    let counts = block_counts_table(partition);
    let steps: Vec<(usize, f64)> = single_law(nu, &counts)
        .into_iter()
        .map(|(c, p)| {
            let mut off = 0;
            let mut stride = 1;
            for (x, r) in c.iter().zip(&radix) {
                off += x * stride;
                stride *= r;
            }
            (off, p.ln())
        })
        .collect();
    let mut cur = vec![f64::NEG_INFINITY; size];
    cur[0] = 0.0;
    // reachable indices stay below the running maximum offset
    let max_off = steps.iter().map(|s| s.0).max().unwrap_or(0);
    let mut hi = 0;
    for _ in 0..particles {
        let mut next = vec![f64::NEG_INFINITY; size];
        for idx in 0..=hi {
            let v = cur[idx];
            if v == f64::NEG_INFINITY {
                continue;
            }
            for &(off, lp) in &steps {
                next[idx + off] = log_add(next[idx + off], v + lp);
            }
        }
        hi += max_off;
        cur = next;
    }
    Ok(CountLaw { particles, radix, log_p: cur })
}

/// `log nu^{N}(Omega_{N,rho})`.
pub fn log_restricted_mass(nu: &ProbVec, partition: &SitePartition, profile: &DensityProfile) -> Result<f64> {
    Ok(count_law(nu, partition, profile.particles())?.log_prob(profile.plus_counts()))
}

pub fn restricted_mass(nu: &ProbVec, partition: &SitePartition, profile: &DensityProfile) -> Result<f64> {
    log_restricted_mass(nu, partition, profile).map(f64::exp)
}

/// Restricted mass next to its local-CLT approximation.
#[derive(Debug, Clone, Copy)]
pub struct LocalClt {
    pub mass: f64,
    /// `2^{|A|} exp(-|z|^2/2) / ((2 pi N)^{|A|/2} sqrt(det V))`; the factor
    /// `2^{|A|}` is the volume of a lattice cell, since block sums move in
    /// steps of two.
    pub gaussian: f64,
    pub ratio: f64,
}

pub fn local_clt(nu: &ProbVec, partition: &SitePartition, profile: &DensityProfile) -> Result<LocalClt> {
    check_irreducible(nu, partition)?;
    let d = partition.len();
    let n = nu.n();
    let big_n = profile.particles() as f64;
    let sizes = partition.sizes();
    let masks = partition.masks();
    let block_sum = |s: usize, b: usize| 2.0 * (s as u32 & masks[b]).count_ones() as f64 - sizes[b] as f64;
    let mut mean = vec![0.0; d];
    let mut second = DMatrix::<f64>::zeros(d, d);
    for s in 0..1usize << n {
        let p = nu.as_slice()[s];
        for a in 0..d {
            mean[a] += p * block_sum(s, a);
            for b in 0..d {
                second[(a, b)] += p * block_sum(s, a) * block_sum(s, b);
            }
        }
    }
    let v = DMatrix::from_fn(d, d, |a, b| second[(a, b)] - mean[a] * mean[b]);
    let chol = v.clone().cholesky().ok_or_else(|| Error::Numeric("covariance of block sums is singular".into()))?;
    let det = v.determinant();
    let diff = nalgebra::DVector::from_fn(d, |a, _| {
        2.0 * profile.plus_counts()[a] as f64 - big_n * sizes[a] as f64 - big_n * mean[a]
    });
    let q = diff.dot(&chol.solve(&diff)) / big_n;
    let gaussian = 2f64.powi(d as i32) * (-0.5 * q).exp()
        / ((2.0 * std::f64::consts::PI * big_n).powf(d as f64 / 2.0) * det.sqrt());
    let mass = restricted_mass(nu, partition, profile)?;
    Ok(LocalClt { mass, gaussian, ratio: mass / gaussian })
}

/// `P_k gamma_N(nu)` on `Omega^k`; tuple index packs particle `i` at bits
/// `i n .. (i + 1) n`.
pub fn marginal_law(nu: &ProbVec, partition: &SitePartition, profile: &DensityProfile, k: usize) -> Result<Vec<f64>> {
    let n = nu.n();
    let big_n = profile.particles();
    if k == 0 || k > big_n {
        return Err(Error::invalid(format!("marginal order {k} outside 1..={big_n}")));
    }
    if n * k > 20 {
        return Err(Error::Capacity(format!("k n = {} exceeds 20", n * k)));
    }
    let full = count_law(nu, partition, big_n)?;
    let log_z = full.log_prob(profile.plus_counts());
    if log_z == f64::NEG_INFINITY {
        return Err(Error::Domain("the profile has zero probability under nu".into()));
    }
    let rest = count_law(nu, partition, big_n - k)?;
    let counts = block_counts_table(partition);
    let target = profile.plus_counts();
    let mask = (1usize << n) - 1;
    let mut out = vec![0.0; 1 << (n * k)];
    let mut need = vec![0usize; target.len()];
    'tuple: for (t, o) in out.iter_mut().enumerate() {
        let mut lp = 0.0;
        need.copy_from_slice(target);
        for i in 0..k {
            let s = t >> (i * n) & mask;
            let p = nu.as_slice()[s];
            if p <= 0.0 {
                continue 'tuple;
            }
            lp += p.ln();
            for (b, c) in need.iter_mut().enumerate() {
                if counts[s][b] > *c {
                    continue 'tuple;
                }
                *c -= counts[s][b];
            }
        }
        *o = (lp + rest.log_prob(&need) - log_z).exp();
    }
    Ok(out)
}

fn product_law(nu: &ProbVec, k: usize) -> Vec<f64> {
    let n = nu.n();
    let mask = (1usize << n) - 1;
    (0..1usize << (n * k)).map(|t| (0..k).map(|i| nu.as_slice()[t >> (i * n) & mask]).product()).collect()
}

/// `|| P_k gamma_N(nu) - nu^{k} ||_TV` at the canonical density.
pub fn kac_chaos_tv(nu: &ProbVec, partition: &SitePartition, particles: usize, k: usize) -> Result<f64> {
    let profile = canonical_density(nu, partition, particles)?;
    let pk = marginal_law(nu, partition, &profile, k)?;
    Ok(spin::tv_raw(&pk, &product_law(nu, k)))
}

/// `(1/N) H_N(gamma_N(nu1) | gamma_N(nu2))` through the one-particle
/// marginal and the two restricted masses.
pub fn entropic_chaos(nu1: &ProbVec, nu2: &ProbVec, partition: &SitePartition, particles: usize) -> Result<f64> {
    let (m1, m2) = (spin::magnetization_profile(nu1, partition), spin::magnetization_profile(nu2, partition));
    if m1.iter().zip(&m2).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(Error::precondition("the two measures have different block magnetisations"));
    }
    if nu1.as_slice().iter().zip(nu2.as_slice()).any(|(a, b)| *a > 0.0 && *b <= 0.0) {
        return Err(Error::precondition("nu1 is not absolutely continuous with respect to nu2"));
    }
    let profile = canonical_density(nu1, partition, particles)?;
    let p1 = marginal_law(nu1, partition, &profile, 1)?;
    let cross: f64 = p1
        .iter()
        .zip(nu1.as_slice().iter().zip(nu2.as_slice()))
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, (a, b))| p * (a / b).ln())
        .sum();
    let l1 = log_restricted_mass(nu1, partition, &profile)?;
    let l2 = log_restricted_mass(nu2, partition, &profile)?;
    Ok(cross - (l1 - l2) / particles as f64)
}

#[derive(Debug, Clone)]
pub struct ChaosRow {
    pub particles: usize,
    pub tv: f64,
    pub entropy_per_particle: f64,
    pub entropy_gap: f64,
    /// `(1/N) log nu^{N}(Omega_{N,rho})`.
    pub log_mass_per_particle: f64,
}

#[derive(Debug, Clone)]
pub struct ChaosReport {
    pub k: usize,
    pub rows: Vec<ChaosRow>,
    /// Least-squares slope of `log TV` against `log N`.
    pub tv_slope: Option<f64>,
    /// `H(nu | mu)` for the Gibbs measure `mu` with the magnetisations of `nu`.
    pub entropy_limit: f64,
}

/// Kac and entropic chaos of `nu` against the Gibbs measure with the same
/// block magnetisations.
pub fn chaos_scan(ctx: &CollisionContext, nu: &ProbVec, k: usize, grid: &[usize]) -> Result<ChaosReport> {
    let partition = ctx.components();
    check_irreducible(nu, partition)?;
    let m = spin::magnetization_profile(nu, partition);
    let h = solve_field(ctx.interaction(), partition, &m)?;
    let mu = gibbs_measure(ctx.interaction(), &h)?;
    let entropy_limit = spin::relative_entropy(nu, &mu).to_f64();
    let mut rows = Vec::with_capacity(grid.len());
    for &big_n in grid {
        let tv = kac_chaos_tv(nu, partition, big_n, k)?;
        let e = entropic_chaos(nu, &mu, partition, big_n)?;
        let profile = canonical_density(nu, partition, big_n)?;
        let lm = log_restricted_mass(nu, partition, &profile)? / big_n as f64;
        rows.push(ChaosRow {
            particles: big_n,
            tv,
            entropy_per_particle: e,
            entropy_gap: (e - entropy_limit).abs(),
            log_mass_per_particle: lm,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.tv > 0.0).map(|r| ((r.particles as f64).ln(), r.tv.ln())).unzip();
    let tv_slope = (xs.len() >= 2).then(|| linalg::linear_fit(&xs, &ys).0);
    Ok(ChaosReport { k, rows, tv_slope, entropy_limit })
}

#[derive(Debug, Clone, Copy)]
pub struct FisherRow {
    pub particles: usize,
    /// `(1/N) E(F_N, log F_N)`.
    pub lhs: f64,
    /// `2 D_mu(f)`.
    pub rhs: f64,
    pub gap: f64,
}

fn fisher_setup(ctx: &CollisionContext, h: &FieldVector, f: &[f64]) -> Result<(ProbVec, ProbVec)> {
    let partition = ctx.components();
    h.check_admissible(partition)?;
    let mu = gibbs_measure(ctx.interaction(), h)?;
    if f.len() != mu.len() || f.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("f must be a nonnegative function on the cube"));
    }
    let w: Vec<f64> = f.iter().zip(mu.as_slice()).map(|(a, b)| a * b).collect();
    let mass: f64 = w.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::precondition(format!("mu[f] = {mass}, expected 1")));
    }
    let nu = ProbVec::from_weights(mu.n(), w)?;
    let (mn, mm) = (spin::magnetization_profile(&nu, partition), spin::magnetization_profile(&mu, partition));
    if mn.iter().zip(&mm).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(Error::precondition("f mu does not have the block magnetisations of mu"));
    }
    check_irreducible(&nu, partition)?;
    Ok((mu, nu))
}

/// Exact `(1/N) E(F_N, log F_N)` with `F_N = gamma_N(f mu) / gamma_N(mu)` on
/// the enumerated state space, next to `2 D_mu(f)`.
pub fn fisher_chaos_check(ctx: &CollisionContext, h: &FieldVector, f: &[f64], grid: &[usize]) -> Result<Vec<FisherRow>> {
    let (mu, nu) = fisher_setup(ctx, h, f)?;
    let rhs = 2.0 * dissipation(ctx, f, &mu)?.to_f64();
    let mut rows = Vec::with_capacity(grid.len());
    for &big_n in grid {
        let profile = canonical_density(&nu, ctx.components(), big_n)?;
        let measure = multicanonical_measure(ctx, &profile, None)?;
        let raw: Vec<f64> = measure
            .states()
            .iter()
            .map(|&x| (0..big_n).map(|i| f[measure.config(x, i) as usize]).product())
            .collect();
        let z: f64 = raw.iter().zip(measure.probs()).map(|(a, p)| a * p).sum();
        let fz: Vec<f64> = raw.iter().map(|v| v / z).collect();
        let lhs = measure.dirichlet_log(&fz)? / big_n as f64;
        rows.push(FisherRow { particles: big_n, lhs, rhs, gap: (lhs - rhs).abs() });
    }
    Ok(rows)
}

/// The same left-hand side via exchange symmetry: only the one- and
/// two-particle marginals of `gamma_N(f mu)` enter, so large `N` is cheap.
/// Needs `f > 0`.
pub fn fisher_chaos_marginal(ctx: &CollisionContext, h: &FieldVector, f: &[f64], particles: usize) -> Result<f64> {
    let (_, nu) = fisher_setup(ctx, h, f)?;
    if f.iter().any(|v| *v <= 0.0) || particles < 2 {
        return Err(Error::precondition("needs a positive density and at least two particles"));
    }
    let partition = ctx.components();
    let n = ctx.n();
    let profile = canonical_density(&nu, partition, particles)?;
    let p1 = marginal_law(&nu, partition, &profile, 1)?;
    let p2 = marginal_law(&nu, partition, &profile, 2)?;
    let kernel = ctx.kernel();
    let g = |r: f64| (r - 1.0) * r.ln();
    let mask = (1usize << n) - 1;
    let mut t12 = 0.0;
    for (t, &w) in p2.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (s, sp) = ((t & mask) as u32, (t >> n) as u32);
        for l in 0..n {
            for k in 0..n {
                let kk = kernel.get(l, k);
                if kk == 0.0 || (s >> l & 1) == (sp >> k & 1) {
                    continue;
                }
                let (a, b) = (s ^ 1 << l, sp ^ 1 << k);
                let acc = logistic(ctx.log_weight(a) + ctx.log_weight(b) - ctx.log_weight(s) - ctx.log_weight(sp));
                let r = f[a as usize] * f[b as usize] / (f[s as usize] * f[sp as usize]);
                t12 += w * kk * acc * g(r);
            }
        }
    }
    let mut t11 = 0.0;
    for (s, &w) in p1.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let s = s as u32;
        for l in 0..n {
            for k in 0..n {
                let kk = kernel.get(l, k);
                if kk == 0.0 || (s >> l & 1) == (s >> k & 1) {
                    continue;
                }
                let a = s ^ (1 << l | 1 << k);
                let acc = logistic(ctx.log_weight(a) - ctx.log_weight(s));
                t11 += w * kk * acc * g(f[a as usize] / f[s as usize]);
            }
        }
    }
    let nf = particles as f64;
    Ok(((nf - 1.0) / nf * t12 + t11 / nf) / (2.0 * n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kac::{multicanonical_measure, CanonicalMeasure};
    use crate::kernel::{build_transport_kernel, KernelSpec};
    use crate::spin::InteractionMatrix;
    use proptest::prelude::*;

    fn ctx(j: InteractionMatrix, spec: KernelSpec) -> CollisionContext {
        let k = build_transport_kernel(j.n(), &spec).unwrap();
        CollisionContext::new(j, k).unwrap()
    }

    fn bern(p: f64) -> ProbVec {
        ProbVec::new(1, vec![1.0 - p, p]).unwrap()
    }

    fn single(n: usize) -> SitePartition {
        SitePartition::single_block(n)
    }

    fn brute_mass(nu: &ProbVec, partition: &SitePartition, profile: &DensityProfile) -> f64 {
        let n = nu.n();
        let big_n = profile.particles();
        let counts = block_counts_table(partition);
        let mut total = 0.0;
        for t in 0..1usize << (n * big_n) {
            let mut c = vec![0; partition.len()];
            let mut p = 1.0;
            for i in 0..big_n {
                let s = t >> (i * n) & ((1 << n) - 1);
                p *= nu.as_slice()[s];
                for b in 0..c.len() {
                    c[b] += counts[s][b];
                }
            }
            if c == profile.plus_counts() {
                total += p;
            }
        }
        total
    }

    #[test]
    fn canonical_density_examples() {
        let a = single(1);
        assert_eq!(canonical_density(&bern(0.5), &a, 4).unwrap().rho(), &[0.5]);
        assert_eq!(canonical_density(&bern(1.0), &a, 3).unwrap().rho(), &[1.0]);
        // m = 0.3, N = 5, |A| = 2: floor(6.5) / 10
        let a2 = single(2);
        let nu = ProbVec::product(&[0.65, 0.65]).unwrap();
        assert_eq!(canonical_density(&nu, &a2, 5).unwrap().rho(), &[0.6]);
    }

    #[test]
    fn binomial_mass() {
        for big_n in [2usize, 10, 50, 200] {
            let p = DensityProfile::from_plus_counts(&single(1), big_n, vec![big_n / 2]).unwrap();
            let m = restricted_mass(&bern(0.5), &single(1), &p).unwrap();
            let mut lc = 0.0;
            for i in 0..big_n / 2 {
                lc += ((big_n - i) as f64).ln() - ((i + 1) as f64).ln();
            }
            let oracle = (lc - big_n as f64 * 2f64.ln()).exp();
            assert!((m / oracle - 1.0).abs() < 1e-12, "{m} vs {oracle}");
        }
        let p1 = DensityProfile::from_plus_counts(&single(1), 1, vec![1]).unwrap();
        assert!((restricted_mass(&bern(0.3), &single(1), &p1).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn dp_matches_brute_force() {
        let a = SitePartition::new(4, vec![vec![0, 3], vec![1], vec![2]]).unwrap();
        let w: Vec<f64> = (0..16).map(|s| 0.2 + ((s * 5) % 7) as f64).collect();
        let nu = ProbVec::from_weights(4, w).unwrap();
        for big_n in 1..=4 {
            for profile in crate::kac::all_profiles(&a, big_n).into_iter().step_by(3) {
                let dp = restricted_mass(&nu, &a, &profile).unwrap();
                let bf = brute_mass(&nu, &a, &profile);
                assert!((dp - bf).abs() <= 1e-12 * bf.max(1e-300), "{dp} vs {bf}");
            }
        }
    }

    #[test]
    fn local_clt_ratio_tends_to_one() {
        let a = SitePartition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let nu = ProbVec::from_weights(3, vec![1.0, 2.0, 0.5, 1.5, 1.0, 0.7, 2.0, 1.3]).unwrap();
        let ratio = |big_n| local_clt(&nu, &a, &canonical_density(&nu, &a, big_n).unwrap()).unwrap().ratio;
        let r200 = ratio(200);
        assert!((r200 - 1.0).abs() < 0.05, "{r200}");
        assert!((ratio(400) - 1.0).abs() <= (ratio(25) - 1.0).abs());
    }

    #[test]
    fn irreducibility() {
        let a = single(2);
        // only ++ and -- : block sum jumps by two spins
        let nu = ProbVec::new(2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let e = check_irreducible(&nu, &a).unwrap_err().to_string();
        assert!(e.contains("block 1 (sites {1,2})"), "{e}");
        assert!(check_irreducible(&ProbVec::uniform(2).unwrap(), &a).is_ok());
    }

    #[test]
    fn marginals_are_exchangeable_and_normalised() {
        let a = SitePartition::new(2, vec![vec![0], vec![1]]).unwrap();
        let nu = ProbVec::from_weights(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let profile = canonical_density(&nu, &a, 7).unwrap();
        let p2 = marginal_law(&nu, &a, &profile, 2).unwrap();
        assert!((p2.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        for s in 0..4 {
            for t in 0..4 {
                assert!((p2[s | t << 2] - p2[t | s << 2]).abs() < 1e-15);
            }
        }
        let p1 = marginal_law(&nu, &a, &profile, 1).unwrap();
        for s in 0..4 {
            let sum: f64 = (0..4).map(|t| p2[s | t << 2]).sum();
            assert!((sum - p1[s]).abs() < 1e-14);
        }
    }

    #[test]
    fn gibbs_tensor_product_is_canonical_measure() {
        let j = InteractionMatrix::new(2, vec![0.0, 0.3, 0.3, 0.0]).unwrap();
        let c = ctx(j.clone(), KernelSpec::SingleSite);
        let h = FieldVector(vec![0.4, -0.2]);
        let mu = gibbs_measure(&j, &h).unwrap();
        let profile = canonical_density(&mu, c.components(), 4).unwrap();
        let m: CanonicalMeasure = multicanonical_measure(&c, &profile, None).unwrap();
        // one-particle marginal of the enumerated measure against the DP
        let mut p1 = vec![0.0; 4];
        for (x, p) in m.states().iter().zip(m.probs()) {
            p1[m.config(*x, 0) as usize] += p;
        }
        let dp = marginal_law(&mu, c.components(), &profile, 1).unwrap();
        for (a, b) in p1.iter().zip(&dp) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn kac_chaos_slope_n1() {
        let a = single(1);
        let nu = bern(0.25);
        let grid = [8usize, 16, 32, 64, 128, 256];
        let tvs: Vec<f64> = grid.iter().map(|&n| kac_chaos_tv(&nu, &a, n, 2).unwrap()).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = grid.iter().zip(&tvs).map(|(n, t)| ((*n as f64).ln(), t.ln())).unzip();
        let slope = linalg::linear_fit(&xs, &ys).0;
        assert!((slope + 1.0).abs() < 0.1, "{slope}");
        // exact: the pair law is hypergeometric
        let big_n: f64 = 16.0;
        let plus: f64 = 4.0;
        let pp = plus * (plus - 1.0) / (big_n * (big_n - 1.0));
        let pm = plus * (big_n - plus) / (big_n * (big_n - 1.0));
        let mm = (big_n - plus) * (big_n - plus - 1.0) / (big_n * (big_n - 1.0));
        let oracle = 0.5 * ((pp - 0.0625).abs() + 2.0 * (pm - 0.1875).abs() + (mm - 0.5625).abs());
        assert!((tvs[1] - oracle).abs() < 1e-14);
    }

    #[test]
    fn entropic_chaos_matches_enumeration() {
        let j = InteractionMatrix::new(2, vec![0.0, 0.2, 0.2, 0.0]).unwrap();
        let c = ctx(j.clone(), KernelSpec::MeanField);
        let nu = ProbVec::from_weights(2, vec![1.0, 3.0, 2.0, 1.5]).unwrap();
        let m = spin::magnetization_profile(&nu, c.components());
        let h = solve_field(&j, c.components(), &m).unwrap();
        let mu = gibbs_measure(&j, &h).unwrap();
        for big_n in [2usize, 3, 5] {
            let profile = canonical_density(&nu, c.components(), big_n).unwrap();
            // brute force H_N over Omega_{N,rho}
            let counts = block_counts_table(c.components());
            let (mut w1, mut w2) = (Vec::new(), Vec::new());
            for t in 0..1usize << (2 * big_n) {
                let cfg: Vec<usize> = (0..big_n).map(|i| t >> (2 * i) & 3).collect();
                if cfg.iter().map(|&s| counts[s][0]).sum::<usize>() != profile.plus_counts()[0] {
                    continue;
                }
                w1.push(cfg.iter().map(|&s| nu.as_slice()[s]).product::<f64>());
                w2.push(cfg.iter().map(|&s| mu.as_slice()[s]).product::<f64>());
            }
            let (z1, z2): (f64, f64) = (w1.iter().sum(), w2.iter().sum());
            let h: f64 = w1.iter().zip(&w2).map(|(a, b)| a / z1 * ((a / z1) / (b / z2)).ln()).sum();
            let e = entropic_chaos(&nu, &mu, c.components(), big_n).unwrap();
            assert!((e - h / big_n as f64).abs() < 1e-12, "{e} vs {}", h / big_n as f64);
        }
        let rep = chaos_scan(&c, &nu, 1, &[16, 128]).unwrap();
        assert!(rep.rows[1].entropy_gap < 0.05);
        assert!(rep.rows[1].entropy_gap < rep.rows[0].entropy_gap);
    }

    #[test]
    fn fisher_routes_agree_and_converge() {
        let j = InteractionMatrix::new(2, vec![0.0, 0.2, 0.2, 0.0]).unwrap();
        let c = ctx(j.clone(), KernelSpec::MeanField);
        let h = FieldVector(vec![0.1, 0.1]);
        let mu = gibbs_measure(&j, &h).unwrap();
        // density changing correlations but not the magnetisation
        let tilt = [1.0, 0.0, 0.0, 1.0];
        let raw: Vec<f64> = tilt.iter().map(|t: &f64| (0.8 * t).exp()).collect();
        let nu0 = ProbVec::from_weights(2, raw.iter().zip(mu.as_slice()).map(|(a, b)| a * b).collect()).unwrap();
        let m = spin::magnetization_profile(&mu, c.components());
        let base: Vec<f64> = nu0.as_slice().iter().map(|p| p.ln()).collect();
        let proj = crate::field::solve_tilt(&base, c.components(), &m).unwrap();
        let f: Vec<f64> = proj.measure.iter().zip(mu.as_slice()).map(|(a, b)| a / b).collect();
        let rows = fisher_chaos_check(&c, &h, &f, &[2, 4, 6, 8]).unwrap();
        for r in &rows {
            let via = fisher_chaos_marginal(&c, &h, &f, r.particles).unwrap();
            assert!((via - r.lhs).abs() < 1e-12 * r.lhs.max(1.0), "{via} vs {}", r.lhs);
        }
        let far = fisher_chaos_marginal(&c, &h, &f, 2000).unwrap();
        assert!((far - rows[0].rhs).abs() < 2e-3 * rows[0].rhs, "{far} vs {}", rows[0].rhs);
        let ones = vec![1.0; 4];
        for r in fisher_chaos_check(&c, &h, &ones, &[2, 4]).unwrap() {
            assert!(r.lhs.abs() < 1e-15 && r.rhs.abs() < 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn log_mass_is_a_log_probability(w in prop::collection::vec(0.05f64..1.0, 4), big_n in 1usize..30) {
            let nu = ProbVec::from_weights(2, w).unwrap();
            let a = single(2);
            let law = count_law(&nu, &a, big_n).unwrap();
            let total = (0..=2 * big_n).map(|c| law.log_prob(&[c]).exp()).sum::<f64>();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let p = canonical_density(&nu, &a, big_n).unwrap();
            prop_assert!(log_restricted_mass(&nu, &a, &p).unwrap() <= 1e-15);
        }
    }
}
