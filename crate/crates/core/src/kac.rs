//! The N-particle exchange chain: simulation, multi-canonical equilibria,
//! Dirichlet forms and entropy decay on enumerable instances.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;

use crate::dynamics::{alpha_bound, AlphaBound};
use crate::error::{Error, Result};
use crate::kernel::{logistic, CollisionContext};
use crate::linalg;
use crate::rng;
use crate::spin::{self, FieldVector, InteractionMatrix, SitePartition};

/// Largest `N n` for enumerating the constrained state space.
pub const MAX_ENUM_SITES: usize = 22;
/// Largest `N n` for dense generator computations.
pub const MAX_DENSE_SITES: usize = 12;

/// Number of plus spins prescribed in every block of `N` particles.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    particles: usize,
    plus: Vec<usize>,
    rho: Vec<f64>,
}

impl DensityProfile {
    pub fn from_plus_counts(partition: &SitePartition, particles: usize, plus: Vec<usize>) -> Result<Self> {
        if particles == 0 {
            return Err(Error::invalid("need at least one particle"));
        }
        if plus.len() != partition.len() {
            return Err(Error::invalid(format!("{} blocks but {} counts", partition.len(), plus.len())));
        }
        let sizes = partition.sizes();
        let mut rho = Vec::with_capacity(plus.len());
        for (b, (&c, &a)) in plus.iter().zip(&sizes).enumerate() {
            if c > particles * a {
                return Err(Error::Domain(format!("block {} holds at most {} plus spins, got {c}", b + 1, particles * a)));
            }
            rho.push(c as f64 / (particles * a) as f64);
        }
        Ok(DensityProfile { particles, plus, rho })
    }

    /// `N |A| rho(A)` must be an integer (to 1e-9) for every block.
    pub fn from_rho(partition: &SitePartition, particles: usize, rho: &[f64]) -> Result<Self> {
        if rho.len() != partition.len() {
            return Err(Error::invalid(format!("{} blocks but {} densities", partition.len(), rho.len())));
        }
        let mut plus = Vec::with_capacity(rho.len());
        for (b, (&r, &a)) in rho.iter().zip(&partition.sizes()).enumerate() {
            let x = r * (particles * a) as f64;
            if !(0.0..=1.0).contains(&r) || (x - x.round()).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "density {r} of block {} is not a multiple of 1/{}",
                    b + 1,
                    particles * a
                )));
            }
            plus.push(x.round() as usize);
        }
        Self::from_plus_counts(partition, particles, plus)
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn plus_counts(&self) -> &[usize] {
        &self.plus
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
}

/// Every admissible profile for `N` particles.
pub fn all_profiles(partition: &SitePartition, particles: usize) -> Vec<DensityProfile> {
    let radix: Vec<usize> = partition.sizes().iter().map(|a| particles * a + 1).collect();
    let total: usize = radix.iter().product();
    (0..total)
        .map(|mut idx| {
            let plus = radix
                .iter()
                .map(|r| {
                    let c = idx % r;
                    idx /= r;
                    c
                })
                .collect();
            DensityProfile::from_plus_counts(partition, particles, plus).unwrap()
        })
        .collect()
}

/// Plus-spin count of every block for every single-particle configuration.
pub(crate) fn block_counts_table(partition: &SitePartition) -> Vec<Vec<usize>> {
    let masks = partition.masks();
    (0..1u32 << partition.n()).map(|s| masks.iter().map(|m| (s & m).count_ones() as usize).collect()).collect()
}

/// `N` spin configurations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticleState {
    n: usize,
    configs: Vec<u32>,
}

impl ParticleState {
    pub fn new(n: usize, configs: Vec<u32>) -> Result<Self> {
        if n == 0 || n > spin::MAX_SITES {
            return Err(Error::Capacity(format!("n = {n} outside 1..={}", spin::MAX_SITES)));
        }
        if let Some(c) = configs.iter().find(|&&c| c >> n != 0) {
            return Err(Error::invalid(format!("configuration {c:#b} has more than {n} sites")));
        }
        if configs.is_empty() {
            return Err(Error::invalid("need at least one particle"));
        }
        Ok(ParticleState { n, configs })
    }

    /// Deterministic state in the profile: plus spins fill each block in
    /// particle-major order.
    pub fn fill(partition: &SitePartition, profile: &DensityProfile) -> Self {
        let n = partition.n();
        let mut configs = vec![0u32; profile.particles];
        for (b, &c) in profile.plus.iter().enumerate() {
            let block = partition.block(b);
            for slot in 0..c {
                let (i, l) = (slot / block.len(), block[slot % block.len()]);
                configs[i] |= 1 << l;
            }
        }
        ParticleState { n, configs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn particles(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[u32] {
        &self.configs
    }

    pub fn plus_counts(&self, partition: &SitePartition) -> Vec<usize> {
        let masks = partition.masks();
        masks.iter().map(|m| self.configs.iter().map(|c| (c & m).count_ones() as usize).sum()).collect()
    }

    pub fn satisfies(&self, partition: &SitePartition, profile: &DensityProfile) -> bool {
        self.particles() == profile.particles && self.plus_counts(partition) == profile.plus
    }

    /// Particle `i` occupies bits `i n .. (i + 1) n`.
    pub fn packed(&self) -> Option<u64> {
        if self.n * self.configs.len() > 64 {
            return None;
        }
        Some(self.configs.iter().enumerate().fold(0u64, |acc, (i, &c)| acc | (c as u64) << (i * self.n)))
    }
}

#[inline]
fn unpack(state: u64, i: usize, n: usize) -> u32 {
    (state >> (i * n) & ((1u64 << n) - 1)) as u32
}

#[inline]
fn swap_bits(s: u32, l: usize, k: usize) -> u32 {
    let d = (s >> l ^ s >> k) & 1;
    s ^ (d << l | d << k)
}

/// Configurations of particles `i` and `j` after exchanging site `l` of `i`
/// with site `k` of `j` (an internal swap when `i == j`).
#[inline]
fn exchange_pair(si: u32, sj: u32, same: bool, l: usize, k: usize) -> (u32, u32) {
    if same {
        let t = swap_bits(si, l, k);
        (t, t)
    } else {
        let (a, b) = (si >> l & 1, sj >> k & 1);
        ((si & !(1 << l)) | b << l, (sj & !(1 << k)) | a << k)
    }
}

/// Options for [`simulate_particles`].
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub t_end: f64,
    /// Spacing of recorded snapshots.
    pub record_dt: f64,
    /// Accumulate the time spent in every packed state.
    pub track_occupation: bool,
}

#[derive(Debug, Clone)]
pub struct KacRecord {
    pub t: f64,
    pub events: u64,
    pub block_magnetization: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KacRun {
    pub records: Vec<KacRecord>,
    pub final_state: ParticleState,
    pub events: u64,
    pub accepted: u64,
    pub occupation: Option<HashMap<u64, f64>>,
}

fn sample_kernel_row<R: Rng>(kernel: &[f64], n: usize, l: usize, rng: &mut R) -> usize {
    let mut r: f64 = rng.random();
    let row = &kernel[l * n..(l + 1) * n];
    for (k, &w) in row.iter().enumerate() {
        r -= w;
        if r < 0.0 {
            return k;
        }
    }
    (0..n).rev().find(|&k| row[k] > 0.0).unwrap_or(l)
}

/// Kinetic Monte Carlo with aggregate rate `N`: an ordered pair of
/// particles is drawn uniformly (self-pairs included), then `l` uniformly
/// and `k ~ K(l, .)`.
pub fn simulate_particles(
    ctx: &CollisionContext,
    profile: &DensityProfile,
    initial: &ParticleState,
    opts: SimOptions,
    seed: u64,
) -> Result<KacRun> {
    let partition = ctx.components();
    let n = ctx.n();
    if initial.n != n {
        return Err(Error::invalid(format!("state has {} sites, model has {n}", initial.n)));
    }
    if !initial.satisfies(partition, profile) {
        return Err(Error::precondition(format!(
            "initial state has plus counts {:?}, profile requires {:?}",
            initial.plus_counts(partition),
            profile.plus
        )));
    }
    if !(opts.t_end >= 0.0) || !(opts.record_dt > 0.0) {
        return Err(Error::invalid("t_end must be >= 0 and record_dt > 0"));
    }
    if opts.track_occupation && initial.packed().is_none() {
        return Err(Error::Capacity("occupation tracking needs N n <= 64".into()));
    }
    let big_n = initial.particles();
    let counts_of = block_counts_table(partition);
    let kernel = ctx.kernel().as_slice();
    let mut rng = rng::stream_rng(seed, 0);
    let clock = Exp::new(big_n as f64).expect("positive rate");
    let mut state = initial.clone();
    let mut counts = state.plus_counts(partition);
    let sizes = partition.sizes();
    let mags = |c: &[usize]| -> Vec<f64> {
        c.iter().zip(&sizes).map(|(&x, &a)| 2.0 * x as f64 / (big_n * a) as f64 - 1.0).collect()
    };
    let mut occupation = opts.track_occupation.then(HashMap::new);
    let mut records = Vec::new();
    let mut next_record = 0.0;
    let (mut t, mut events, mut accepted) = (0.0f64, 0u64, 0u64);
    loop {
        let t_next = t + rng.sample(clock);
        let horizon = t_next.min(opts.t_end);
        while next_record <= horizon + 1e-12 && next_record <= opts.t_end + 1e-12 {
            records.push(KacRecord { t: next_record, events, block_magnetization: mags(&counts) });
            next_record = (records.len() as f64) * opts.record_dt;
        }
        if let Some(occ) = occupation.as_mut() {
            *occ.entry(state.packed().unwrap()).or_insert(0.0) += horizon - t;
        }
        if t_next > opts.t_end {
            break;
        }
        t = t_next;
        events += 1;
        let i = rng.random_range(0..big_n);
        let j = rng.random_range(0..big_n);
        let l = rng.random_range(0..n);
        let k = sample_kernel_row(kernel, n, l, &mut rng);
        let (si, sj) = (state.configs[i], state.configs[j]);
        let same = i == j;
        let (ti, tj) = exchange_pair(si, sj, same, l, k);
        if ti == si && tj == sj {
            continue;
        }
        let delta = if same {
            ctx.log_weight(ti) - ctx.log_weight(si)
        } else {
            ctx.log_weight(ti) + ctx.log_weight(tj) - ctx.log_weight(si) - ctx.log_weight(sj)
        };
        if rng.random::<f64>() >= logistic(delta) {
            continue;
        }
        accepted += 1;
        for (b, c) in counts.iter_mut().enumerate() {
            let before = counts_of[si as usize][b] + if same { 0 } else { counts_of[sj as usize][b] };
            let after = counts_of[ti as usize][b] + if same { 0 } else { counts_of[tj as usize][b] };
            *c = *c + after - before;
        }
        if counts != profile.plus {
            return Err(Error::Numeric(format!("event {events} left the constrained state space: {counts:?}")));
        }
        state.configs[i] = ti;
        state.configs[j] = tj;
    }
    Ok(KacRun { records, final_state: state, events, accepted, occupation })
}

/// Product of single-particle Gibbs weights restricted to the profile.
#[derive(Debug, Clone)]
pub struct CanonicalMeasure {
    n: usize,
    particles: usize,
    j: InteractionMatrix,
    partition: SitePartition,
    profile: DensityProfile,
    kernel: Vec<f64>,
    /// Per-particle log weight tables.
    lw: Vec<Vec<f64>>,
    states: Vec<u64>,
    probs: Vec<f64>,
}

/// `mu_{N,J,h,rho}`; `fields[i]` is the field of particle `i` (zero when
/// absent).
pub fn multicanonical_measure(
    ctx: &CollisionContext,
    profile: &DensityProfile,
    fields: Option<&[FieldVector]>,
) -> Result<CanonicalMeasure> {
    let n = ctx.n();
    let big_n = profile.particles;
    if n * big_n > MAX_ENUM_SITES {
        return Err(Error::Capacity(format!("N n = {} exceeds {MAX_ENUM_SITES}", n * big_n)));
    }
    let partition = ctx.components().clone();
    if profile.plus.len() != partition.len() {
        return Err(Error::invalid("profile does not match the kernel components"));
    }
    let base: Vec<f64> = (0..1u32 << n).map(|s| ctx.log_weight(s)).collect();
    let lw: Vec<Vec<f64>> = match fields {
        None => vec![base; big_n],
        Some(f) => {
            if f.len() != big_n || f.iter().any(|h| h.len() != n) {
                return Err(Error::invalid("need one field of length n per particle"));
            }
            f.iter()
                .map(|h| {
                    base.iter()
                        .enumerate()
                        .map(|(s, w)| w + (0..n).map(|l| h.0[l] * spin::spin(s as u32, l)).sum::<f64>())
                        .collect()
                })
                .collect()
        }
    };
    let counts = block_counts_table(&partition);
    let sizes = partition.sizes();
    let mut states = Vec::new();
    let mut rem = profile.plus.clone();
    enumerate(&counts, &sizes, n, big_n, 0, 0, &mut rem, &mut states);
    assert!(!states.is_empty(), "an admissible profile always has states");
    states.sort_unstable();
    let logw: Vec<f64> =
        states.iter().map(|&x| (0..big_n).map(|i| lw[i][unpack(x, i, n) as usize]).sum::<f64>()).collect();
    let probs = spin::normalize_log_weights(&logw);
    Ok(CanonicalMeasure {
        n,
        particles: big_n,
        j: ctx.interaction().clone(),
        partition,
        profile: profile.clone(),
        kernel: ctx.kernel().as_slice().to_vec(),
        lw,
        states,
        probs,
    })
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    counts: &[Vec<usize>],
    sizes: &[usize],
    n: usize,
    big_n: usize,
    i: usize,
    acc: u64,
    rem: &mut [usize],
    out: &mut Vec<u64>,
) {
    if i == big_n {
        out.push(acc);
        return;
    }
    let left = big_n - i - 1;
    'cfg: for (s, c) in counts.iter().enumerate() {
        for b in 0..rem.len() {
            if c[b] > rem[b] || rem[b] - c[b] > left * sizes[b] {
                continue 'cfg;
            }
        }
        for b in 0..rem.len() {
            rem[b] -= c[b];
        }
        enumerate(counts, sizes, n, big_n, i + 1, acc | (s as u64) << (i * n), rem, out);
        for b in 0..rem.len() {
            rem[b] += c[b];
        }
    }
}

impl CanonicalMeasure {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn profile(&self) -> &DensityProfile {
        &self.profile
    }

    pub fn partition(&self) -> &SitePartition {
        &self.partition
    }

    pub fn interaction(&self) -> &InteractionMatrix {
        &self.j
    }

    /// Packed states in increasing order.
    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }

    /// Configuration of particle `i` in packed state `x`.
    pub fn config(&self, x: u64, i: usize) -> u32 {
        unpack(x, i, self.n)
    }

    fn log_weight(&self, x: u64) -> f64 {
        (0..self.particles).map(|i| self.lw[i][unpack(x, i, self.n) as usize]).sum()
    }

    /// Calls `f(target, rate)` for every move out of `x` that changes the
    /// state; moves reaching the same target are reported separately.
    pub fn for_each_move(&self, x: u64, mut f: impl FnMut(u64, f64)) {
        let (n, big_n) = (self.n, self.particles);
        let scale = 1.0 / (big_n * n) as f64;
        for i in 0..big_n {
            let si = unpack(x, i, n);
            for j in 0..big_n {
                let sj = unpack(x, j, n);
                let same = i == j;
                for l in 0..n {
                    for k in 0..n {
                        let w = self.kernel[l * n + k];
                        if w == 0.0 {
                            continue;
                        }
                        let (ti, tj) = exchange_pair(si, sj, same, l, k);
                        if ti == si && tj == sj {
                            continue;
                        }
                        let mut delta = self.lw[i][ti as usize] - self.lw[i][si as usize];
                        let mut y = x & !(((1u64 << n) - 1) << (i * n)) | (ti as u64) << (i * n);
                        if !same {
                            delta += self.lw[j][tj as usize] - self.lw[j][sj as usize];
                            y = y & !(((1u64 << n) - 1) << (j * n)) | (tj as u64) << (j * n);
                        }
                        f(y, w * scale * logistic(delta));
                    }
                }
            }
        }
    }

    /// `(1/2) sum_x mu(x) sum_moves rate (F(y) - F(x)) (G(y) - G(x))`.
    pub fn dirichlet_form(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(self.sum_over_moves(|a, b| (f[b] - f[a]) * (g[b] - g[a])) / 2.0)
    }

    /// `E(F, log F)`; `+inf` when a move connects a zero and a positive value.
    pub fn dirichlet_log(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        if f.iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("F must be nonnegative".into()));
        }
        Ok(self.sum_over_moves(|a, b| {
            let (x, y) = (f[a], f[b]);
            if x == y {
                0.0
            } else if x == 0.0 || y == 0.0 {
                f64::INFINITY
            } else {
                (y - x) * (y.ln() - x.ln())
            }
        }) / 2.0)
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::invalid(format!("function has {} values, state space has {}", f.len(), self.len())));
        }
        Ok(())
    }

    fn sum_over_moves(&self, term: impl Fn(usize, usize) -> f64 + Sync) -> f64 {
        let parts: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|a| {
                let mut acc = 0.0;
                self.for_each_move(self.states[a], |y, r| {
                    let b = self.index_of(y).expect("moves stay in the state space");
                    acc += r * term(a, b);
                });
                self.probs[a] * acc
            })
            .collect();
        parts.iter().sum()
    }

    /// `Ent_mu(F) = mu[F log F] - mu[F] log mu[F]`.
    pub fn entropy(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        let m: f64 = f.iter().zip(&self.probs).map(|(a, p)| a * p).sum();
        let flf: f64 = f.iter().zip(&self.probs).map(|(&a, p)| if a > 0.0 { p * a * a.ln() } else { 0.0 }).sum();
        Ok(if m > 0.0 { flf - m * m.ln() } else { 0.0 })
    }

    /// Relative entropy of a distribution on the state space.
    pub fn relative_entropy(&self, nu: &[f64]) -> Result<f64> {
        self.check_len(nu)?;
        Ok(spin::relative_entropy_raw(nu, &self.probs).to_f64())
    }

    /// Dense generator `L(x, y)`, rows summing to zero.
    pub fn generator(&self) -> Result<DMatrix<f64>> {
        if self.n * self.particles > MAX_DENSE_SITES {
            return Err(Error::Capacity(format!(
                "dense generator needs N n <= {MAX_DENSE_SITES}, got {}",
                self.n * self.particles
            )));
        }
        let m = self.len();
        let mut l = DMatrix::zeros(m, m);
        for a in 0..m {
            self.for_each_move(self.states[a], |y, r| {
                let b = self.index_of(y).expect("moves stay in the state space");
                l[(a, b)] += r;
                l[(a, a)] -= r;
            });
        }
        Ok(l)
    }

    /// `max |mu(x) L(x,y) - mu(y) L(y,x)|` over the dense generator.
    pub fn detailed_balance_residual(&self) -> Result<f64> {
        let l = self.generator()?;
        let m = self.len();
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in 0..a {
                worst = worst.max((self.probs[a] * l[(a, b)] - self.probs[b] * l[(b, a)]).abs());
            }
        }
        Ok(worst)
    }

    /// Unnormalised log weight of every state, for callers that reweight.
    pub fn log_weights(&self) -> Vec<f64> {
        self.states.iter().map(|&x| self.log_weight(x)).collect()
    }
}

/// Relative entropy curve of `nu0 e^{tL}`.
#[derive(Debug, Clone)]
pub struct ParticleDecay {
    pub times: Vec<f64>,
    pub entropies: Vec<f64>,
    pub alpha_bound: AlphaBound,
    /// `-slope` of `log H` against time over points above 1e-12.
    pub fitted_rate: Option<f64>,
    /// `H_t <= H_0 e^{-alpha t}` at every time, when the bound applies.
    pub bound_holds: Option<bool>,
    pub spectral_gap: f64,
}

/// Exact entropy decay via the spectral decomposition of the symmetrised
/// generator.
pub fn particle_entropy_decay(measure: &CanonicalMeasure, nu0: &[f64], times: &[f64]) -> Result<ParticleDecay> {
    measure.check_len(nu0)?;
    let l = measure.generator()?;
    let mu = measure.probs();
    let m = mu.len();
    let sq: Vec<f64> = mu.iter().map(|p| p.sqrt()).collect();
    let s = DMatrix::from_fn(m, m, |a, b| {
        let v = sq[a] * l[(a, b)] / sq[b];
        let w = sq[b] * l[(b, a)] / sq[a];
        0.5 * (v + w)
    });
    let (vals, vecs) = linalg::sym_eigen_large(s);
    let w: Vec<f64> = nu0.iter().zip(&sq).map(|(v, q)| v / q).collect();
    let coeffs: Vec<f64> = (0..m).map(|c| (0..m).map(|a| vecs[(a, c)] * w[a]).sum()).collect();
    let mut entropies = Vec::with_capacity(times.len());
    for &t in times {
        let mut nu = vec![0.0; m];
        for c in 0..m {
            let e = coeffs[c] * (vals[c] * t).exp();
            if e != 0.0 {
                for a in 0..m {
                    nu[a] += vecs[(a, c)] * e;
                }
            }
        }
        for (a, v) in nu.iter_mut().enumerate() {
            *v = (*v * sq[a]).max(0.0);
        }
        let z: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|v| *v /= z);
        entropies.push(spin::relative_entropy_raw(&nu, mu).to_f64());
    }
    let alpha = if is_block_kernel(measure) {
        alpha_bound(&measure.j)
    } else {
        AlphaBound::Inapplicable("the transport kernel is not the block kernel of its components".into())
    };
    let bound_holds = alpha.value().map(|a| {
        let h0 = spin::relative_entropy_raw(nu0, mu).to_f64();
        times.iter().zip(&entropies).all(|(t, h)| *h <= h0 * (-a * t).exp() * (1.0 + 1e-9) + 1e-14)
    });
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        times.iter().zip(&entropies).filter(|(_, &h)| h > 1e-12).map(|(t, h)| (*t, h.ln())).unzip();
    let fitted_rate = (xs.len() >= 2).then(|| -linalg::linear_fit(&xs, &ys).0);
    // vals are descending; vals[0] = 0 belongs to the constants
    let spectral_gap = if m > 1 { -vals[1] } else { 0.0 };
    Ok(ParticleDecay { times: times.to_vec(), entropies, alpha_bound: alpha, fitted_rate, bound_holds, spectral_gap })
}

fn is_block_kernel(measure: &CanonicalMeasure) -> bool {
    let n = measure.n;
    (0..n).all(|l| {
        (0..n).all(|k| {
            let same = measure.partition.block_of(l) == measure.partition.block_of(k);
            let want = if same { 1.0 / measure.partition.block(measure.partition.block_of(l)).len() as f64 } else { 0.0 };
            (measure.kernel[l * n + k] - want).abs() < 1e-15
        })
    })
}

#[derive(Debug, Clone)]
pub struct ParticleMlsi {
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub samples: usize,
    pub alpha_bound: AlphaBound,
}

fn sample_function<R: Rng>(rng: &mut R, measure: &CanonicalMeasure, family: usize) -> Vec<f64> {
    let m = measure.len();
    match family % 4 {
        0 => {
            let s: f64 = rng.random_range(0.1..4.0);
            (0..m).map(|_| (s * rng.sample::<f64, _>(StandardNormal)).exp()).collect()
        }
        1 => {
            let eps = 10f64.powf(rng.random_range(-4.0..0.0));
            let hot = rng.random_range(0..m);
            (0..m).map(|a| if a == hot { 1.0 } else { eps }).collect()
        }
        2 => {
            let eps: f64 = rng.random_range(1e-3..0.3);
            (0..m).map(|_| (1.0 + eps * rng.sample::<f64, _>(StandardNormal)).max(1e-3)).collect()
        }
        _ => {
            // product of one random single-particle function
            let g: Vec<f64> = (0..1 << measure.n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let s: f64 = rng.random_range(0.1..2.0);
            measure
                .states
                .iter()
                .map(|&x| (s * (0..measure.particles).map(|i| g[measure.config(x, i) as usize]).sum::<f64>()).exp())
                .collect()
        }
    }
}

/// Minimum of `E(F, log F) / Ent(F)` over random positive `F`.
pub fn particle_mlsi_scan(measure: &CanonicalMeasure, trials: usize, seed: u64) -> Result<ParticleMlsi> {
    if measure.len() < 2 {
        return Err(Error::precondition("the state space has a single point; every F is constant"));
    }
    let mut ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream_rng(seed, t as u64);
            let mut f = sample_function(&mut r, measure, t);
            // both sides are 1-homogeneous; normalising keeps the constant test scale-free
            let mean: f64 = f.iter().zip(measure.probs()).map(|(a, p)| a * p).sum();
            f.iter_mut().for_each(|v| *v /= mean);
            let ent = measure.entropy(&f).unwrap();
            if ent < 1e-14 {
                return None;
            }
            Some(measure.dirichlet_log(&f).unwrap() / ent)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    if ratios.is_empty() {
        return Err(Error::Numeric("every sampled F was constant".into()));
    }
    ratios.sort_by(f64::total_cmp);
    let alpha = if is_block_kernel(measure) {
        alpha_bound(&measure.j)
    } else {
        AlphaBound::Inapplicable("the transport kernel is not the block kernel of its components".into())
    };
    Ok(ParticleMlsi {
        min_ratio: ratios[0],
        median_ratio: ratios[ratios.len() / 2],
        samples: ratios.len(),
        alpha_bound: alpha,
    })
}

/// Time-weighted occupation normalised and laid out on the measure's states.
pub fn occupation_distribution(measure: &CanonicalMeasure, occ: &HashMap<u64, f64>) -> Result<Vec<f64>> {
    let total: f64 = occ.values().sum();
    let mut out = vec![0.0; measure.len()];
    for (x, w) in occ {
        let a = measure.index_of(*x).ok_or_else(|| Error::Numeric("occupied state outside the state space".into()))?;
        out[a] = w / total;
    }
    Ok(out)
}
