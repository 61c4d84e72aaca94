//! Down-Up walks on canonical and multicomponent Ising slices.
//!
//! A configuration is a bitmask over `L` sites (bit set = `+1`, a ball).
//! States of a slice are ranked by combinadic order inside each block and by
//! mixed radix across blocks, block 0 varying fastest.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kac::{self, DensityProfile};
use crate::kernel::CollisionContext;
use crate::linalg;
use crate::rng;
use crate::spin::{self, FieldVector, InteractionMatrix, SitePartition};

pub const MAX_DU_SITES: usize = 22;
/// Largest state space for which the dense generator is built.
pub const MAX_DENSE_STATES: usize = 4096;
/// Largest state space for the spectral gap.
pub const MAX_GAP_STATES: usize = 1500;
/// Ridge added to a singular interaction before the covariance bound.
pub const COV_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DuInstance {
    lambda: InteractionMatrix,
    w: Vec<f64>,
    blocks: SitePartition,
    mags: Vec<i64>,
}

impl DuInstance {
    /// `mags[b]` is the total spin of block `b`.
    pub fn new(lambda: InteractionMatrix, w: Vec<f64>, blocks: SitePartition, mags: Vec<i64>) -> Result<Self> {
        let l = lambda.n();
        if l > MAX_DU_SITES {
            return Err(Error::Capacity(format!("L = {l} exceeds {MAX_DU_SITES}")));
        }
        if w.len() != l || blocks.n() != l {
            return Err(Error::invalid(format!(
                "Lambda has {l} sites, w has {}, blocks cover {}",
                w.len(),
                blocks.n()
            )));
        }
        if let Some(x) = w.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("w has non-finite entry {x}")));
        }
        if mags.len() != blocks.len() {
            return Err(Error::invalid(format!("{} blocks but {} magnetizations", blocks.len(), mags.len())));
        }
        for (b, &m) in mags.iter().enumerate() {
            let size = blocks.block(b).len() as i64;
            if m.abs() > size {
                return Err(Error::Domain(format!("block {b}: |M| = {} exceeds its size {size}", m.abs())));
            }
            if (size + m).rem_euclid(2) != 0 {
                return Err(Error::Domain(format!("block {b}: size {size} + M = {m} is odd, the slice is empty")));
            }
        }
        Ok(DuInstance { lambda, w, blocks, mags })
    }

    /// Single-block slice `sum_i eta_i = m`.
    pub fn canonical(lambda: InteractionMatrix, w: Vec<f64>, m: i64) -> Result<Self> {
        let l = lambda.n();
        Self::new(lambda, w, SitePartition::single_block(l), vec![m])
    }

    pub fn l(&self) -> usize {
        self.lambda.n()
    }

    pub fn lambda(&self) -> &InteractionMatrix {
        &self.lambda
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn blocks(&self) -> &SitePartition {
        &self.blocks
    }

    pub fn mags(&self) -> &[i64] {
        &self.mags
    }

    pub fn is_single_block(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Balls per block, `(|B| + M_B) / 2`.
    pub fn balls(&self) -> Vec<usize> {
        self.mags.iter().enumerate().map(|(b, &m)| ((self.blocks.block(b).len() as i64 + m) / 2) as usize).collect()
    }

    /// `1/2 <eta, Lambda eta> + <w, eta>`.
    pub fn log_weight(&self, mask: u32) -> f64 {
        let l = self.l();
        let lam = self.lambda.as_slice();
        let mut q = 0.0;
        let mut lin = 0.0;
        for i in 0..l {
            let si = spin::spin(mask, i);
            lin += self.w[i] * si;
            let row: f64 = (0..l).map(|j| lam[i * l + j] * spin::spin(mask, j)).sum();
            q += si * row;
        }
        0.5 * q + lin
    }

    /// Image under `eta -> -eta`: `w -> -w`, `M -> -M`.
    pub fn flipped(&self) -> DuInstance {
        DuInstance {
            lambda: self.lambda.clone(),
            w: self.w.iter().map(|x| -x).collect(),
            blocks: self.blocks.clone(),
            mags: self.mags.iter().map(|m| -m).collect(),
        }
    }

    /// `lambda(Lambda)` when `Lambda` is nonnegative definite with top
    /// eigenvalue below 1/2.
    fn admissible_lambda(&self) -> Option<f64> {
        let lam = self.lambda.lambda_max().max(0.0);
        (self.lambda.is_psd() && lam < 0.5).then_some(lam)
    }

    /// MLSI constant of the walk: `1 - 2 lambda` for one block, its square
    /// for several.
    pub fn mlsi_constant(&self) -> Option<f64> {
        self.admissible_lambda().map(|l| {
            let c = 1.0 - 2.0 * l;
            if self.is_single_block() {
                c
            } else {
                c * c
            }
        })
    }

    /// Block factorization constant `1 - 2 lambda`.
    pub fn factorization_constant(&self) -> Option<f64> {
        self.admissible_lambda().map(|l| 1.0 - 2.0 * l)
    }
}

fn binomial_table(n: usize) -> Vec<Vec<usize>> {
    let mut c = vec![vec![0usize; n + 2]; n + 2];
    for a in 0..=n + 1 {
        c[a][0] = 1;
        for b in 1..=a {
            c[a][b] = c[a - 1][b - 1] + c[a - 1][b];
        }
    }
    c
}

/// Exact measure on the enumerated slice.
#[derive(Debug, Clone)]
pub struct DuMeasure {
    inst: DuInstance,
    binom: Vec<Vec<usize>>,
    strides: Vec<usize>,
    states: Vec<u32>,
    log_w: Vec<f64>,
    probs: Vec<f64>,
}

pub fn du_measure(inst: &DuInstance) -> Result<DuMeasure> {
    let l = inst.l();
    let binom = binomial_table(l);
    let balls = inst.balls();
    // per block: subsets in colex order, as global masks
    let mut subsets: Vec<Vec<u32>> = Vec::with_capacity(inst.blocks.len());
    for (b, &k) in balls.iter().enumerate() {
        let sites = inst.blocks.block(b);
        let size = sites.len();
        let mut list = Vec::with_capacity(binom[size][k]);
        if k == 0 {
            list.push(0);
        } else {
            let mut local: u32 = (1u32 << k) - 1;
            while (local as u64) < (1u64 << size) {
                let mut g = 0u32;
                for (t, &s) in sites.iter().enumerate() {
                    if local >> t & 1 == 1 {
                        g |= 1 << s;
                    }
                }
                list.push(g);
                // next subset of the same size (Gosper)
                let c = local & local.wrapping_neg();
                let r = local.wrapping_add(c);
                if r == 0 {
                    break;
                }
                local = (((r ^ local) >> 2) / c) | r;
            }
        }
        subsets.push(list);
    }
    let mut strides = Vec::with_capacity(subsets.len());
    let mut total: usize = 1;
    for s in &subsets {
        strides.push(total);
        total = total.checked_mul(s.len()).filter(|&t| t <= 1 << 21).ok_or_else(|| {
            Error::Capacity("the slice has more than 2^21 states".into())
        })?;
    }
    let states: Vec<u32> = (0..total)
        .map(|r| {
            subsets.iter().zip(&strides).fold(0u32, |acc, (s, &st)| acc | s[(r / st) % s.len()])
        })
        .collect();
    let log_w: Vec<f64> = states.par_iter().map(|&x| inst.log_weight(x)).collect();
    let probs = spin::normalize_log_weights(&log_w);
    Ok(DuMeasure { inst: inst.clone(), binom, strides, states, log_w, probs })
}

impl DuMeasure {
    pub fn instance(&self) -> &DuInstance {
        &self.inst
    }

    pub fn states(&self) -> &[u32] {
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

    /// Combinadic rank of `mask`, or `None` off the slice.
    pub fn index_of(&self, mask: u32) -> Option<usize> {
        let l = self.inst.l();
        if l < 32 && mask >> l != 0 {
            return None;
        }
        let balls = self.inst.balls();
        let mut rank = 0;
        for (b, &k) in balls.iter().enumerate() {
            let mut r = 0;
            let mut t = 0;
            for (pos, &s) in self.inst.blocks.block(b).iter().enumerate() {
                if mask >> s & 1 == 1 {
                    t += 1;
                    r += self.binom[pos][t];
                }
            }
            if t != k {
                return None;
            }
            rank += r * self.strides[b];
        }
        Some(rank)
    }

    fn check_state(&self, x: usize) -> Result<u32> {
        self.states
            .get(x)
            .copied()
            .ok_or_else(|| Error::invalid(format!("state index {x} outside 0..{}", self.len())))
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::invalid(format!("function has {} values, state space has {}", f.len(), self.len())));
        }
        Ok(())
    }

    /// Targets of the ball at `i`: `(j, state index, probability)` over
    /// `U_i`, the stay move `j = i` included. Empty when site `i` is a hole.
    fn moves_of(&self, x: usize, i: usize, out: &mut Vec<(usize, usize, f64)>) {
        out.clear();
        let eta = self.states[x];
        if eta >> i & 1 == 0 {
            return;
        }
        let b = self.inst.blocks.block_of(i);
        for &j in self.inst.blocks.block(b) {
            if j == i {
                out.push((j, x, 0.0));
            } else if eta >> j & 1 == 0 {
                let y = self.index_of(eta ^ (1 << i) ^ (1 << j)).expect("a block swap stays on the slice");
                out.push((j, y, 0.0));
            }
        }
        let top = out.iter().map(|m| self.log_w[m.1]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = out.iter().map(|m| (self.log_w[m.1] - top).exp()).sum();
        for m in out.iter_mut() {
            m.2 = (self.log_w[m.1] - top).exp() / z;
        }
    }

    /// Probabilities of the available targets of the ball at `i`, summing
    /// to 1; empty for a hole.
    pub fn move_distribution(&self, x: usize, i: usize) -> Result<Vec<(usize, f64)>> {
        self.check_state(x)?;
        if i >= self.inst.l() {
            return Err(Error::invalid(format!("site {i} outside 0..{}", self.inst.l())));
        }
        let mut buf = Vec::new();
        self.moves_of(x, i, &mut buf);
        Ok(buf.into_iter().map(|(j, _, p)| (j, p)).collect())
    }

    /// Off-diagonal transitions `(y, rate)` out of state `x`.
    pub fn transitions(&self, x: usize) -> Vec<(usize, f64)> {
        let eta = self.states[x];
        let mut out = Vec::new();
        let mut buf = Vec::new();
        for i in 0..self.inst.l() {
            if eta >> i & 1 == 1 {
                self.moves_of(x, i, &mut buf);
                out.extend(buf.iter().filter(|m| m.0 != i).map(|m| (m.1, m.2)));
            }
        }
        out
    }

    /// Dense generator, rows summing to zero.
    pub fn generator(&self) -> Result<DMatrix<f64>> {
        let m = self.len();
        if m > MAX_DENSE_STATES {
            return Err(Error::Capacity(format!("{m} states exceed the dense limit {MAX_DENSE_STATES}")));
        }
        let mut g = DMatrix::zeros(m, m);
        for x in 0..m {
            let mut out = 0.0;
            for (y, r) in self.transitions(x) {
                g[(x, y)] += r;
                out += r;
            }
            g[(x, x)] = -out;
        }
        Ok(g)
    }

    /// `max |nu(x) c(x,y) - nu(y) c(y,x)|` over transitions.
    pub fn detailed_balance_residual(&self) -> f64 {
        let rows: Vec<Vec<(usize, f64)>> = (0..self.len()).into_par_iter().map(|x| self.transitions(x)).collect();
        let mut worst: f64 = 0.0;
        for (x, row) in rows.iter().enumerate() {
            for &(y, r) in row {
                let back: f64 = rows[y].iter().filter(|t| t.0 == x).map(|t| t.1).sum();
                worst = worst.max((self.probs[x] * r - self.probs[y] * back).abs());
            }
        }
        worst
    }

    /// Whether the transition graph is a single communicating class.
    pub fn is_irreducible(&self) -> bool {
        let m = self.len();
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = stack.pop() {
            for (y, r) in self.transitions(x) {
                if r > 0.0 && !seen[y] {
                    seen[y] = true;
                    count += 1;
                    stack.push(y);
                }
            }
        }
        count == m
    }

    fn sum_over_moves(&self, term: impl Fn(usize, usize) -> f64 + Sync) -> f64 {
        let parts: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|x| {
                let acc: f64 = self.transitions(x).iter().map(|&(y, r)| r * term(x, y)).sum();
                self.probs[x] * acc
            })
            .collect();
        parts.iter().sum()
    }

    /// `E(F, G)` summed over transitions.
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

    /// Groups `(nu(eta), index)` by the configuration with one ball of
    /// `eta` removed.
    fn down_groups(&self) -> BTreeMap<u32, Vec<(f64, usize)>> {
        let mut groups: BTreeMap<u32, Vec<(f64, usize)>> = BTreeMap::new();
        for (x, &eta) in self.states.iter().enumerate() {
            for i in 0..self.inst.l() {
                if eta >> i & 1 == 1 {
                    groups.entry(eta & !(1 << i)).or_default().push((self.probs[x], x));
                }
            }
        }
        groups
    }

    /// `E(F, G)` as `sum_xi Z_xi Cov_xi(F, G)` over down configurations `xi`,
    /// where `Cov_xi` is taken under `nu` restricted to the completions of
    /// `xi`.
    pub fn dirichlet_form_down_up(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(self
            .down_groups()
            .values()
            .map(|grp| {
                let (mut z, mut sf, mut sg, mut sfg) = (0.0, 0.0, 0.0, 0.0);
                for &(p, x) in grp {
                    z += p;
                    sf += p * f[x];
                    sg += p * g[x];
                    sfg += p * f[x] * g[x];
                }
                sfg - sf * sg / z
            })
            .sum())
    }

    /// `Ent_nu(F)`.
    pub fn entropy(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        Ok(weighted_entropy(self.probs.iter().copied().zip(f.iter().copied())))
    }

    /// Mean vector `nu[eta]`.
    pub fn mean(&self) -> Vec<f64> {
        let l = self.inst.l();
        (0..l).map(|i| self.states.iter().zip(&self.probs).map(|(&x, p)| p * spin::spin(x, i)).sum()).collect()
    }

    /// Covariance matrix of `eta`, row-major `L x L`.
    pub fn covariance(&self) -> Vec<f64> {
        covariance_of(&self.states, &self.probs, self.inst.l())
    }

    /// `T_v nu`, proportional to `nu(eta) e^{<v, eta>}` on the same slice.
    /// Equals the measure of the instance with field `w + v`.
    pub fn tilt(&self, v: &[f64]) -> Result<DuMeasure> {
        let l = self.inst.l();
        if v.len() != l {
            return Err(Error::invalid(format!("tilt has {} entries, expected {l}", v.len())));
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("tilt has non-finite entry {x}")));
        }
        let mut out = self.clone();
        out.inst.w.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        for (lw, &x) in out.log_w.iter_mut().zip(&self.states) {
            *lw += (0..l).map(|i| v[i] * spin::spin(x, i)).sum::<f64>();
        }
        out.probs = spin::normalize_log_weights(&out.log_w);
        Ok(out)
    }
}

/// `Z Ent(F)` for a weighted group with total weight `Z`.
fn weighted_entropy(it: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut z, mut sf, mut flf) = (0.0, 0.0, 0.0);
    for (p, v) in it {
        z += p;
        sf += p * v;
        if v > 0.0 {
            flf += p * v * v.ln();
        }
    }
    if sf > 0.0 {
        flf - sf * (sf / z).ln()
    } else {
        0.0
    }
}

fn covariance_of(states: &[u32], probs: &[f64], l: usize) -> Vec<f64> {
    let m: Vec<f64> = (0..l).map(|i| states.iter().zip(probs).map(|(&x, p)| p * spin::spin(x, i)).sum()).collect();
    let mut c = vec![0.0; l * l];
    for (&x, &p) in states.iter().zip(probs) {
        let d: Vec<f64> = (0..l).map(|i| spin::spin(x, i) - m[i]).collect();
        for i in 0..l {
            for j in 0..=i {
                c[i * l + j] += p * d[i] * d[j];
            }
        }
    }
    for i in 0..l {
        for j in 0..i {
            c[j * l + i] = c[i * l + j];
        }
    }
    c
}

/// Rate `c(eta, eta^{ij})` at state index `x`. Zero unless `eta_i = +1`,
/// `eta_j = -1` and `i, j` share a block.
pub fn du_rates(meas: &DuMeasure, x: usize, i: usize, j: usize) -> Result<f64> {
    let l = meas.inst.l();
    if j >= l {
        return Err(Error::invalid(format!("site {j} outside 0..{l}")));
    }
    Ok(meas.move_distribution(x, i)?.into_iter().find(|&(k, _)| k == j && k != i).map_or(0.0, |m| m.1))
}

pub fn du_generator(meas: &DuMeasure) -> Result<DMatrix<f64>> {
    meas.generator()
}

/// Spectral gap and its eigenfunction, from the symmetrised generator.
pub fn du_spectral_gap(meas: &DuMeasure) -> Result<(f64, Vec<f64>)> {
    let m = meas.len();
    if m > MAX_GAP_STATES {
        return Err(Error::Capacity(format!("{m} states exceed the spectral limit {MAX_GAP_STATES}")));
    }
    if m < 2 {
        return Err(Error::precondition("the state space has a single point"));
    }
    let g = meas.generator()?;
    let sq: Vec<f64> = meas.probs.iter().map(|p| p.sqrt()).collect();
    let s = DMatrix::from_fn(m, m, |a, b| 0.5 * (sq[a] * g[(a, b)] / sq[b] + sq[b] * g[(b, a)] / sq[a]));
    let (vals, vecs) = linalg::sym_eigen_large(s);
    let phi = (0..m).map(|a| vecs[(a, 1)] / sq[a]).collect();
    Ok((-vals[1], phi))
}

fn sample_function<R: Rng>(rng: &mut R, meas: &DuMeasure, family: usize) -> Vec<f64> {
    let l = meas.inst.l();
    let m = meas.len();
    let field = |rng: &mut R, s: f64| -> Vec<f64> { (0..l).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect() };
    let lin = |v: &[f64], x: u32| -> f64 { (0..l).map(|i| v[i] * spin::spin(x, i)).sum() };
    match family % 4 {
        0 => {
            let s = rng.random_range(0.1..3.0);
            let v = field(rng, s);
            meas.states.iter().map(|&x| lin(&v, x).exp()).collect()
        }
        1 => {
            let centre = meas.states[rng.random_range(0..m)];
            let radius = 2 * rng.random_range(0..=l / 2) as u32;
            let eps = 10f64.powf(rng.random_range(-4.0..-1.0));
            meas.states.iter().map(|&x| if (x ^ centre).count_ones() <= radius { 1.0 } else { eps }).collect()
        }
        2 => {
            let hot = rng.random_range(0..m);
            let eps = 10f64.powf(rng.random_range(-6.0..-1.0));
            (0..m).map(|a| if a == hot { 1.0 } else { eps }).collect()
        }
        _ => {
            let a: f64 = rng.random_range(0.05..0.95);
            let v1 = field(rng, 2.0);
            let v2 = field(rng, 2.0);
            meas.states.iter().map(|&x| a * lin(&v1, x).exp() + (1.0 - a) * lin(&v2, x).exp()).collect()
        }
    }
}

fn normalized(meas: &DuMeasure, mut f: Vec<f64>) -> Vec<f64> {
    let mean: f64 = f.iter().zip(&meas.probs).map(|(a, p)| a * p).sum();
    f.iter_mut().for_each(|v| *v /= mean);
    f
}

#[derive(Debug, Clone)]
pub struct DuMlsi {
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub samples: usize,
    /// `1 - 2 lambda` (one block) or its square; `None` outside the
    /// hypotheses.
    pub constant: Option<f64>,
    /// Spectral gap when the state space is small enough.
    pub gap: Option<f64>,
}

/// Minimum of `E(F, log F) / Ent(F)` over sampled positive `F`. When the gap
/// is available the direction `1 + eps phi` of its eigenfunction is included.
pub fn du_mlsi_scan(meas: &DuMeasure, trials: usize, seed: u64) -> Result<DuMlsi> {
    if meas.len() < 2 {
        return Err(Error::precondition("the state space has a single point; every F is constant"));
    }
    let mut ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .filter_map(|t| {
            let mut r = rng::stream_rng(seed, t as u64);
            let f = normalized(meas, sample_function(&mut r, meas, t));
            let ent = meas.entropy(&f).unwrap();
            (ent >= 1e-14).then(|| meas.dirichlet_log(&f).unwrap() / ent)
        })
        .collect();
    let gap = if meas.len() <= MAX_GAP_STATES {
        let (gap, phi) = du_spectral_gap(meas)?;
        let top = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let f = normalized(meas, phi.iter().map(|v| 1.0 + 1e-3 * v / top).collect());
        let ent = meas.entropy(&f)?;
        if ent >= 1e-14 {
            ratios.push(meas.dirichlet_log(&f)? / ent);
        }
        Some(gap)
    } else {
        None
    };
    if ratios.is_empty() {
        return Err(Error::Numeric("every sampled F was constant".into()));
    }
    ratios.sort_by(f64::total_cmp);
    Ok(DuMlsi {
        min_ratio: ratios[0],
        median_ratio: ratios[ratios.len() / 2],
        samples: ratios.len(),
        constant: meas.inst.mlsi_constant(),
        gap,
    })
}

#[derive(Debug, Clone)]
pub struct Factorization {
    /// `min sum_xi Z_xi Ent_xi(F) / Ent(F)` over one-ball conditionals.
    pub single_site_min: f64,
    /// `min sum_B nu[Ent_{nu_B} F] / Ent(F)`.
    pub block_min: f64,
    /// Bound for the single-site ratio: the MLSI constant of the walk.
    pub single_site_constant: Option<f64>,
    pub block_constant: Option<f64>,
    /// Largest `Z_xi (Ent_xi(F) - Cov_xi(F, log F))` seen; nonpositive up to
    /// rounding.
    pub jensen_max_excess: f64,
    pub samples: usize,
}

/// Compares one-ball and block conditional entropies with the full entropy.
pub fn factorization_check(meas: &DuMeasure, trials: usize, seed: u64) -> Result<Factorization> {
    if meas.len() < 2 {
        return Err(Error::precondition("the state space has a single point; every F is constant"));
    }
    let groups: Vec<Vec<(f64, usize)>> = meas.down_groups().into_values().collect();
    let l = meas.inst.l();
    let full: u32 = if l == 32 { u32::MAX } else { (1u32 << l) - 1 };
    let outside: Vec<Vec<Vec<(f64, usize)>>> = meas
        .inst
        .blocks
        .masks()
        .iter()
        .map(|&bm| {
            let mut g: BTreeMap<u32, Vec<(f64, usize)>> = BTreeMap::new();
            for (x, &eta) in meas.states.iter().enumerate() {
                g.entry(eta & full & !bm).or_default().push((meas.probs[x], x));
            }
            g.into_values().collect()
        })
        .collect();
    let rows: Vec<(f64, f64, f64)> = (0..trials)
        .into_par_iter()
        .filter_map(|t| {
            let mut r = rng::stream_rng(seed, t as u64);
            let f = normalized(meas, sample_function(&mut r, meas, t));
            let ent = meas.entropy(&f).unwrap();
            if ent < 1e-14 {
                return None;
            }
            let mut single = 0.0;
            let mut excess = f64::NEG_INFINITY;
            for grp in &groups {
                let e = weighted_entropy(grp.iter().map(|&(p, x)| (p, f[x])));
                let (mut z, mut sf, mut sl, mut sfl) = (0.0, 0.0, 0.0, 0.0);
                for &(p, x) in grp {
                    z += p;
                    sf += p * f[x];
                    sl += p * f[x].ln();
                    sfl += p * f[x] * f[x].ln();
                }
                single += e;
                excess = excess.max(e - (sfl - sf * sl / z));
            }
            let block: f64 = outside
                .iter()
                .flat_map(|gs| gs.iter().map(|grp| weighted_entropy(grp.iter().map(|&(p, x)| (p, f[x])))))
                .sum();
            Some((single / ent, block / ent, excess))
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Numeric("every sampled F was constant".into()));
    }
    Ok(Factorization {
        single_site_min: rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        block_min: rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        single_site_constant: meas.inst.mlsi_constant(),
        block_constant: meas.inst.factorization_constant(),
        jensen_max_excess: rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max),
        samples: rows.len(),
    })
}

/// `T_v nu`.
pub fn tilt(meas: &DuMeasure, v: &[f64]) -> Result<DuMeasure> {
    meas.tilt(v)
}

#[derive(Debug, Clone)]
pub struct CovBound {
    pub max_eigenvalue: f64,
    /// `2 / (1 - 2 lambda)`.
    pub bound: f64,
    pub tilts: usize,
    /// `lambda` after the ridge, if one was added.
    pub lambda: f64,
    pub regularized: bool,
}

/// Tilt `t` of the covariance scan: zero, then `+-30 e_i`, then Gaussian
/// fields at scales 0.3, 1, 3, 10.
fn scan_tilt(t: usize, l: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; l];
    if t == 0 {
        return v;
    }
    if t <= 2 * l {
        let i = (t - 1) / 2;
        v[i] = if t % 2 == 1 { 30.0 } else { -30.0 };
        return v;
    }
    let scale = [0.3, 1.0, 3.0, 10.0][t % 4];
    let mut r = rng::stream_rng(seed, t as u64);
    v.iter_mut().for_each(|x| *x = scale * r.sample::<f64, _>(StandardNormal));
    v
}

/// Largest covariance eigenvalue over tilts `T_v nu`, against
/// `2 / (1 - 2 lambda)`. At least `1 + 2L` tilts are used.
pub fn cov_bound_check(inst: &DuInstance, tilt_samples: usize, seed: u64) -> Result<CovBound> {
    if !inst.lambda.is_psd() {
        return Err(Error::precondition(format!(
            "Lambda must be nonnegative definite (smallest eigenvalue {:.3e})",
            inst.lambda.lambda_min()
        )));
    }
    let scale = inst.lambda.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let regularized = inst.lambda.lambda_min() <= 1e-12 * scale;
    let lambda = inst.lambda.lambda_max().max(0.0) + if regularized { COV_RIDGE } else { 0.0 };
    if lambda >= 0.5 {
        return Err(Error::precondition(format!("lambda(Lambda) = {lambda} is not below 1/2")));
    }
    // the ridge shifts every log weight by the same constant on the slice
    let base = du_measure(inst)?;
    let l = inst.l();
    let count = tilt_samples.max(1 + 2 * l);
    let max_eigenvalue = (0..count)
        .into_par_iter()
        .map(|t| {
            let v = scan_tilt(t, l, seed);
            let lw: Vec<f64> = base
                .log_w
                .iter()
                .zip(&base.states)
                .map(|(w, &x)| w + (0..l).map(|i| v[i] * spin::spin(x, i)).sum::<f64>())
                .collect();
            let p = spin::normalize_log_weights(&lw);
            linalg::max_eigenvalue(&covariance_of(&base.states, &p, l), l)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(CovBound { max_eigenvalue, bound: 2.0 / (1.0 - 2.0 * lambda), tilts: count, lambda, regularized })
}

/// Largest off-diagonal covariance of a measure with `Lambda = 0`.
pub fn strong_rayleigh_negcorr_check(meas: &DuMeasure) -> Result<f64> {
    if !meas.inst.lambda.is_zero() {
        return Err(Error::precondition("negative correlation is checked only for Lambda = 0"));
    }
    let l = meas.inst.l();
    let c = meas.covariance();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..l {
        for j in 0..l {
            if i != j {
                worst = worst.max(c[i * l + j]);
            }
        }
    }
    Ok(worst)
}

/// Largest `lambda` among the eigenvalues other than the one of the constant
/// vector, when the constant vector is an eigenvector. Used only to report
/// instances where the relaxed hypothesis would differ.
pub fn second_eigenvalue_if_constant_top(lambda: &InteractionMatrix) -> Option<f64> {
    let l = lambda.n();
    let eig = linalg::jacobi_eigen(lambda.as_slice(), l);
    let norm = 1.0 / (l as f64).sqrt();
    let top_is_constant = (0..l).all(|a| (eig.vectors[a * l].abs() - norm).abs() < 1e-9);
    (l > 1 && top_is_constant).then(|| eig.values[1])
}

#[derive(Debug, Clone)]
pub struct Bridge {
    /// `min E_bar(F, log F) / E_du(F, log F)` over sampled `F`.
    pub min_ratio: f64,
    /// `1/4 e^{-8 (Jbar + hbar)}`.
    pub constant: f64,
    pub samples: usize,
    /// `max |mu_N - nu_{L,M}|` after the site correspondence.
    pub measure_diff: f64,
    /// The comparison ran on `eta -> -eta` because `M > 0`.
    pub flipped: bool,
}

/// Mean-field exchange form against the Down-Up form of the slice built by
/// laying particle `i` on sites `i n .. (i + 1) n`.
pub fn bridge_check(
    ctx: &CollisionContext,
    profile: &DensityProfile,
    fields: Option<&[FieldVector]>,
    trials: usize,
    seed: u64,
) -> Result<Bridge> {
    let n = ctx.n();
    let uniform = 1.0 / n as f64;
    if ctx.kernel().as_slice().iter().any(|&k| (k - uniform).abs() > 1e-15) {
        return Err(Error::precondition("the comparison needs the mean-field kernel K = 1/n"));
    }
    let big_n = profile.particles();
    let l = big_n * n;
    if l > MAX_DU_SITES {
        return Err(Error::Capacity(format!("N n = {l} exceeds {MAX_DU_SITES}")));
    }
    let km = kac::multicanonical_measure(ctx, profile, fields)?;
    let j = ctx.interaction();
    let mut lam = vec![0.0; l * l];
    for p in 0..big_n {
        for a in 0..n {
            for b in 0..n {
                lam[(p * n + a) * l + p * n + b] = j.get(a, b);
            }
        }
    }
    let w: Vec<f64> = match fields {
        Some(f) => f.iter().flat_map(|h| h.0.iter().copied()).collect(),
        None => vec![0.0; l],
    };
    let hbar = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let k: usize = profile.plus_counts().iter().sum();
    let m = 2 * k as i64 - l as i64;
    let mut inst = DuInstance::canonical(InteractionMatrix::new(l, lam)?, w, m)?;
    let flipped = m > 0;
    if flipped {
        inst = inst.flipped();
    }
    let du = du_measure(&inst)?;
    let full: u32 = if l == 32 { u32::MAX } else { (1u32 << l) - 1 };
    let map: Vec<usize> = km
        .states()
        .iter()
        .map(|&x| {
            let eta = if flipped { !(x as u32) & full } else { x as u32 };
            du.index_of(eta).ok_or_else(|| Error::Numeric("particle state outside the slice".into()))
        })
        .collect::<Result<_>>()?;
    if map.len() != du.len() {
        return Err(Error::Numeric("state spaces differ in size".into()));
    }
    let measure_diff = km.probs().iter().zip(&map).map(|(p, &b)| (p - du.probs[b]).abs()).fold(0.0, f64::max);
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .filter_map(|t| {
            let mut r = rng::stream_rng(seed, t as u64);
            let fd = normalized(&du, sample_function(&mut r, &du, t));
            let fk: Vec<f64> = map.iter().map(|&b| fd[b]).collect();
            let d = du.dirichlet_log(&fd).unwrap();
            (d > 1e-14).then(|| n as f64 * km.dirichlet_log(&fk).unwrap() / d)
        })
        .collect();
    if ratios.is_empty() {
        return Err(Error::Numeric("every sampled F was constant".into()));
    }
    Ok(Bridge {
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        constant: 0.25 * (-8.0 * (j.jbar() + hbar)).exp(),
        samples: ratios.len(),
        measure_diff,
        flipped,
    })
}

/// Random nonnegative definite `l x l` matrix with top eigenvalue `top`.
pub fn scaled_psd(l: usize, top: f64, seed: u64) -> Result<InteractionMatrix> {
    let mut r = rng::stream_rng(seed, 0);
    let b: Vec<f64> = (0..l * l).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let mut a = vec![0.0; l * l];
    for i in 0..l {
        for j in 0..=i {
            let v: f64 = (0..l).map(|k| b[i * l + k] * b[j * l + k]).sum();
            a[i * l + j] = v;
            a[j * l + i] = v;
        }
    }
    let lam = linalg::max_eigenvalue(&a, l);
    a.iter_mut().for_each(|x| *x *= top / lam);
    InteractionMatrix::new(l, a)
}
