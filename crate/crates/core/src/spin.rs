//! Spin configurations, Ising models, partitions and information functionals.
//!
//! A configuration of `n` spins is an `n`-bit mask: bit `l` set means the
//! spin at site `l` (0-based) is `+1`. Every dense measure is a vector indexed
//! by the mask.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg;

/// Largest site count for dense enumeration.
pub const MAX_SITES: usize = 24;

/// Tolerance on the total mass of a [`ProbVec`].
pub const MASS_TOL: f64 = 1e-12;

/// Spin value (`+1` or `-1`) of site `l` in mask `bits`.
#[inline]
pub fn spin(bits: u32, l: usize) -> f64 {
    if bits >> l & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// One configuration of `n` spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfig {
    bits: u32,
    n: u8,
}

impl SpinConfig {
    pub fn new(bits: u32, n: usize) -> Result<Self> {
        if n == 0 || n > MAX_SITES {
            return Err(Error::Capacity(format!("n = {n} outside 1..={MAX_SITES}")));
        }
        if bits >> n != 0 {
            return Err(Error::invalid(format!("mask {bits:#b} has bits beyond n = {n}")));
        }
        Ok(SpinConfig { bits, n: n as u8 })
    }

    /// Build from explicit spins; any positive value counts as `+1`.
    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        let mut bits = 0u32;
        for (l, &s) in spins.iter().enumerate() {
            if s > 0 {
                bits |= 1 << l;
            }
        }
        SpinConfig::new(bits, spins.len())
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn n(self) -> usize {
        self.n as usize
    }

    /// Spin at site `l` (0-based).
    pub fn spin(self, l: usize) -> i8 {
        assert!(l < self.n(), "site {l} out of range");
        if self.bits >> l & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// `S_l(self, a)`: set site `l` to `a`.
    pub fn with_spin(self, l: usize, a: i8) -> Self {
        assert!(l < self.n(), "site {l} out of range");
        let bits = if a > 0 { self.bits | 1 << l } else { self.bits & !(1 << l) };
        SpinConfig { bits, n: self.n }
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in 0..self.n() {
            f.write_str(if self.spin(l) > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

/// Symmetric interaction matrix with cached spectral data.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n: usize,
    data: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl InteractionMatrix {
    /// Row-major entries; symmetry must hold exactly.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_SITES {
            return Err(Error::Capacity(format!("n = {n} outside 1..={MAX_SITES}")));
        }
        if data.len() != n * n {
            return Err(Error::invalid(format!("J needs {} entries, got {}", n * n, data.len())));
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("J has non-finite entry {x}")));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::invalid(format!(
                        "J is not symmetric at (i,j) = ({},{}): {} vs {}",
                        i + 1,
                        j + 1,
                        data[i * n + j],
                        data[j * n + i]
                    )));
                }
            }
        }
        let eigenvalues = linalg::jacobi_eigen(&data, n).values;
        Ok(InteractionMatrix { n, data, eigenvalues })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest eigenvalue `lambda(J)`.
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[self.n - 1]
    }

    /// Eigenvalues in decreasing order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `max_i sum_j |J_ij|`.
    pub fn jbar(&self) -> f64 {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Nonnegative definite up to the Jacobi tolerance.
    pub fn is_psd(&self) -> bool {
        let scale = self.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.lambda_min() >= -1e-12 * scale.max(1.0)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }
}

/// Partition of the sites into disjoint nonempty blocks.
///
/// Blocks are kept in canonical order: sorted internally and ordered by
/// their smallest site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SitePartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl SitePartition {
    pub fn new(n: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut block_of = vec![usize::MAX; n];
        for b in blocks.iter_mut() {
            if b.is_empty() {
                return Err(Error::invalid("partition has an empty block"));
            }
            b.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        for (bi, b) in blocks.iter().enumerate() {
            for &s in b {
                if s >= n {
                    return Err(Error::invalid(format!("site {} out of range 1..={n}", s + 1)));
                }
                if block_of[s] != usize::MAX {
                    return Err(Error::invalid(format!("site {} appears in two blocks", s + 1)));
                }
                block_of[s] = bi;
            }
        }
        if let Some(s) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::invalid(format!("site {} is not covered by the partition", s + 1)));
        }
        Ok(SitePartition { n, blocks, block_of })
    }

    pub fn single_block(n: usize) -> Self {
        SitePartition { n, blocks: vec![(0..n).collect()], block_of: vec![0; n] }
    }

    pub fn singletons(n: usize) -> Self {
        SitePartition { n, blocks: (0..n).map(|i| vec![i]).collect(), block_of: (0..n).collect() }
    }

    /// Partition from a block label per site.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map: Vec<(usize, Vec<usize>)> = Vec::new();
        for (s, &l) in labels.iter().enumerate() {
            match map.iter_mut().find(|(k, _)| *k == l) {
                Some((_, v)) => v.push(s),
                None => map.push((l, vec![s])),
            }
        }
        SitePartition::new(labels.len(), map.into_iter().map(|(_, v)| v).collect())
            .expect("labels always define a partition")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    pub fn block_of(&self, site: usize) -> usize {
        self.block_of[site]
    }

    /// Bit mask of the sites of block `b`.
    pub fn mask(&self, b: usize) -> u32 {
        self.blocks[b].iter().fold(0, |m, &s| m | 1 << s)
    }

    pub fn masks(&self) -> Vec<u32> {
        (0..self.len()).map(|b| self.mask(b)).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }
}

/// External field vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector(pub Vec<f64>);

impl FieldVector {
    pub fn zeros(n: usize) -> Self {
        FieldVector(vec![0.0; n])
    }

    /// Field taking value `values[b]` on block `b`.
    pub fn block_constant(partition: &SitePartition, values: &[f64]) -> Self {
        assert_eq!(values.len(), partition.len());
        FieldVector((0..partition.n()).map(|s| values[partition.block_of(s)]).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `max_i |h_i|`.
    pub fn hbar(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Checks that the field is constant on every block (membership in
    /// `Gamma_A`). The error names the offending pair of sites.
    pub fn check_admissible(&self, partition: &SitePartition) -> Result<()> {
        if self.0.len() != partition.n() {
            return Err(Error::invalid("field length does not match the partition"));
        }
        for b in partition.blocks() {
            let h0 = self.0[b[0]];
            if let Some(&s) = b.iter().find(|&&s| self.0[s] != h0) {
                return Err(Error::precondition(format!(
                    "field is not constant on a block: h_{} = {} but h_{} = {}",
                    b[0] + 1,
                    h0,
                    s + 1,
                    self.0[s]
                )));
            }
        }
        Ok(())
    }
}

/// Extended real: a finite value or `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Finite value, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::PosInfinity => None,
        }
    }

    /// Lossy view for printing and plotting only.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::PosInfinity => f.write_str("inf"),
        }
    }
}

/// Probability vector over `{-1,+1}^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVec {
    n: usize,
    w: Vec<f64>,
}

impl ProbVec {
    /// Validating constructor: entries nonnegative, mass within [`MASS_TOL`].
    pub fn new(n: usize, w: Vec<f64>) -> Result<Self> {
        check_len(n, w.len())?;
        if let Some(x) = w.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid(format!("probability entry {x} is negative or not finite")));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("probability vector has mass {s}")));
        }
        Ok(ProbVec { n, w })
    }

    /// Normalise nonnegative weights with positive total.
    pub fn from_weights(n: usize, mut w: Vec<f64>) -> Result<Self> {
        check_len(n, w.len())?;
        if let Some(x) = w.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid(format!("weight {x} is negative or not finite")));
        }
        let s: f64 = w.iter().sum();
        if !(s > 0.0) {
            return Err(Error::invalid("weights have zero total mass"));
        }
        w.iter_mut().for_each(|x| *x /= s);
        Ok(ProbVec { n, w })
    }

    /// Unchecked constructor for internal hot paths.
    pub(crate) fn from_raw(n: usize, w: Vec<f64>) -> Self {
        debug_assert_eq!(w.len(), 1 << n);
        ProbVec { n, w }
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_len(n, 1 << n.min(31))?;
        let m = 1usize << n;
        Ok(ProbVec { n, w: vec![1.0 / m as f64; m] })
    }

    pub fn delta(n: usize, bits: u32) -> Result<Self> {
        check_len(n, 1 << n.min(31))?;
        if bits >> n != 0 {
            return Err(Error::invalid(format!("mask {bits} out of range for n = {n}")));
        }
        let mut w = vec![0.0; 1 << n];
        w[bits as usize] = 1.0;
        Ok(ProbVec { n, w })
    }

    /// Product of independent spins with `P(sigma_l = +1) = probs[l]`.
    pub fn product(probs: &[f64]) -> Result<Self> {
        let n = probs.len();
        check_len(n, 1 << n.min(31))?;
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("Bernoulli parameters must lie in [0,1]"));
        }
        let w = (0..1u32 << n)
            .map(|s| (0..n).map(|l| if s >> l & 1 == 1 { probs[l] } else { 1.0 - probs[l] }).product())
            .collect();
        Ok(ProbVec { n, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    pub fn get(&self, bits: u32) -> f64 {
        self.w[bits as usize]
    }

    pub fn mass(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn is_positive(&self) -> bool {
        self.w.iter().all(|&x| x > 0.0)
    }

    /// Max-norm distance.
    pub fn max_diff(&self, other: &ProbVec) -> f64 {
        self.w.iter().zip(&other.w).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Marginal law of site `l`: `(P(-1), P(+1))`.
    pub fn site_marginal(&self, l: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (s, &x) in self.w.iter().enumerate() {
            out[s >> l & 1] += x;
        }
        out
    }

    /// Marginal on the sites in `mask`, as a dense vector indexed by the full
    /// mask restricted to `mask` (other bits zero).
    pub fn marginal_on(&self, mask: u32) -> Vec<f64> {
        let mut out = vec![0.0; self.w.len()];
        for (s, &x) in self.w.iter().enumerate() {
            out[s & mask as usize] += x;
        }
        out
    }
}

fn check_len(n: usize, len: usize) -> Result<()> {
    if n == 0 || n > MAX_SITES {
        return Err(Error::Capacity(format!("n = {n} outside 1..={MAX_SITES}")));
    }
    if len != 1 << n {
        return Err(Error::invalid(format!("expected {} entries for n = {n}, got {len}", 1usize << n)));
    }
    Ok(())
}

/// Unnormalised log-weights `1/2 s^T J s + h^T s` for every configuration.
///
/// The sites are split into a low part (at most 12 bits) and a high part;
/// per high pattern the cross term is a subset sum over the low bits, so the
/// total cost is `O(2^n)` plus small tables, with no accumulated drift.
pub fn log_weights(j: &InteractionMatrix, h: &FieldVector) -> Result<Vec<f64>> {
    let n = j.n();
    if h.len() != n {
        return Err(Error::invalid("field length does not match J"));
    }
    check_len(n, 1 << n.min(31))?;
    let lo = n.min(12);
    let hi = n - lo;
    let diag_const: f64 = 0.5 * (0..n).map(|i| j.get(i, i)).sum::<f64>();
    let part_energy = |bits: u32, sites: std::ops::Range<usize>| -> f64 {
        let mut e = 0.0;
        for i in sites.clone() {
            let si = spin(bits, i - sites.start);
            e += h.0[i] * si;
            for k in (i + 1)..sites.end {
                e += j.get(i, k) * si * spin(bits, k - sites.start);
            }
        }
        e
    };
    let e_lo: Vec<f64> = (0..1u32 << lo).map(|b| part_energy(b, 0..lo)).collect();
    let e_hi: Vec<f64> = (0..1u32 << hi).map(|b| part_energy(b, lo..n)).collect();
    let mut out = vec![0.0; 1 << n];
    let mut g = vec![0.0; lo];
    let mut cross = vec![0.0; 1 << lo];
    for hb in 0..(1u32 << hi) {
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = (lo..n).map(|k| j.get(i, k) * spin(hb, k - lo)).sum();
        }
        // sum_i s_i g_i = 2 * sum_{i set} g_i - sum_i g_i
        let gsum: f64 = g.iter().sum();
        cross[0] = 0.0;
        for b in 1..(1usize << lo) {
            let low = b.trailing_zeros() as usize;
            cross[b] = cross[b & (b - 1)] + g[low];
        }
        let base = (hb as usize) << lo;
        for b in 0..(1usize << lo) {
            out[base + b] = diag_const + e_lo[b] + e_hi[hb as usize] + 2.0 * cross[b] - gsum;
        }
    }
    Ok(out)
}

/// Normalise log-weights into a probability vector.
pub fn normalize_log_weights(lw: &[f64]) -> Vec<f64> {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = lw.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Gibbs measure `mu_{J,h}`.
pub fn gibbs_measure(j: &InteractionMatrix, h: &FieldVector) -> Result<ProbVec> {
    let lw = log_weights(j, h)?;
    Ok(ProbVec::from_raw(j.n(), normalize_log_weights(&lw)))
}

/// Block magnetisations `m(p, A) = |A|^{-1} sum_{l in A} E_p[sigma_l]`.
pub fn magnetization_profile(p: &ProbVec, a: &SitePartition) -> Vec<f64> {
    magnetization_of(p.as_slice(), a)
}

/// Same as [`magnetization_profile`] on a raw weight slice.
pub fn magnetization_of(w: &[f64], a: &SitePartition) -> Vec<f64> {
    let masks = a.masks();
    let sizes = a.sizes();
    let mut out = vec![0.0; a.len()];
    for (s, &x) in w.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (b, &m) in masks.iter().enumerate() {
            let pc = (s as u32 & m).count_ones() as f64;
            out[b] += x * (2.0 * pc - sizes[b] as f64);
        }
    }
    for (o, &sz) in out.iter_mut().zip(&sizes) {
        *o /= sz as f64;
    }
    out
}

/// `H(p|q) = sum p log(p/q)`, `+inf` without absolute continuity.
pub fn relative_entropy(p: &ProbVec, q: &ProbVec) -> ExtReal {
    relative_entropy_raw(p.as_slice(), q.as_slice())
}

pub fn relative_entropy_raw(p: &[f64], q: &[f64]) -> ExtReal {
    let mut h = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return ExtReal::PosInfinity;
            }
            h += a * (a / b).ln();
        }
    }
    ExtReal::Finite(h.max(0.0))
}

/// Total variation distance `1/2 sum |p - q|`.
pub fn tv_distance(p: &ProbVec, q: &ProbVec) -> f64 {
    tv_raw(p.as_slice(), q.as_slice())
}

pub fn tv_raw(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_log_weight(j: &InteractionMatrix, h: &FieldVector, s: u32) -> f64 {
        let n = j.n();
        let mut e = 0.0;
        for i in 0..n {
            e += h.0[i] * spin(s, i);
            for k in 0..n {
                e += 0.5 * j.get(i, k) * spin(s, i) * spin(s, k);
            }
        }
        e
    }

    fn random_j(n: usize, seed: u64, scale: f64) -> InteractionMatrix {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..=i {
                let v = scale * next();
                d[i * n + k] = v;
                d[k * n + i] = v;
            }
        }
        InteractionMatrix::new(n, d).unwrap()
    }

    #[test]
    fn gibbs_single_site_uniform() {
        let mu = gibbs_measure(&InteractionMatrix::zeros(1).unwrap(), &FieldVector::zeros(1)).unwrap();
        assert_eq!(mu.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn gibbs_two_sites_enumerated() {
        let j = InteractionMatrix::new(2, vec![0.0, 0.3, 0.3, 0.0]).unwrap();
        let mu = gibbs_measure(&j, &FieldVector::zeros(2)).unwrap();
        let expect = 0.3f64.exp() / (2.0 * 0.3f64.exp() + 2.0 * (-0.3f64).exp());
        assert!((mu.get(0b11) - expect).abs() < 1e-15);
        assert!((mu.get(0b00) - expect).abs() < 1e-15);
    }

    #[test]
    fn gibbs_flip_symmetry_at_zero_field() {
        let n = 5;
        let j = random_j(n, 3, 0.7);
        let mu = gibbs_measure(&j, &FieldVector::zeros(n)).unwrap();
        let full = (1u32 << n) - 1;
        for s in 0..=full {
            assert!((mu.get(s) - mu.get(!s & full)).abs() < 1e-15);
        }
    }

    #[test]
    fn log_weights_match_brute_force_across_split() {
        for n in [1, 3, 12, 14] {
            let j = random_j(n, n as u64, 0.4);
            let h = FieldVector((0..n).map(|i| 0.1 * i as f64 - 0.3).collect());
            let lw = log_weights(&j, &h).unwrap();
            for s in (0..1u32 << n).step_by(37) {
                assert!((lw[s as usize] - brute_log_weight(&j, &h, s)).abs() < 1e-12, "n={n} s={s}");
            }
        }
    }

    #[test]
    fn capacity_error_beyond_24() {
        assert!(matches!(InteractionMatrix::zeros(25), Err(Error::Capacity(_))));
    }

    #[test]
    fn asymmetric_j_names_pair() {
        let err = InteractionMatrix::new(3, vec![0.0, 0.1, 0.0, 0.1, 0.0, 0.2, 0.0, 0.3, 0.0]).unwrap_err();
        assert!(err.to_string().contains("(2,3)"), "{err}");
    }

    #[test]
    fn jbar_and_lambda() {
        let j = InteractionMatrix::new(2, vec![0.0, 0.25, 0.25, 0.0]).unwrap();
        assert!((j.lambda_max() - 0.25).abs() < 1e-15);
        assert_eq!(j.jbar(), 0.25);
    }

    #[test]
    fn magnetization_examples() {
        let a = SitePartition::new(3, vec![vec![0, 2], vec![1]]).unwrap();
        assert_eq!(magnetization_profile(&ProbVec::uniform(3).unwrap(), &a), vec![0.0, 0.0]);
        assert_eq!(magnetization_profile(&ProbVec::delta(3, 0b111).unwrap(), &a), vec![1.0, 1.0]);
        let probs = [0.9, 0.2, 0.6];
        let m = magnetization_profile(&ProbVec::product(&probs).unwrap(), &a);
        let oracle = [((2.0 * 0.9 - 1.0) + (2.0 * 0.6 - 1.0)) / 2.0, 2.0 * 0.2 - 1.0];
        assert!((m[0] - oracle[0]).abs() < 1e-15 && (m[1] - oracle[1]).abs() < 1e-15);
    }

    #[test]
    fn relative_entropy_examples() {
        let p = ProbVec::new(1, vec![1.0, 0.0]).unwrap();
        let q = ProbVec::uniform(1).unwrap();
        assert_eq!(relative_entropy(&q, &q), ExtReal::Finite(0.0));
        assert!((relative_entropy(&p, &q).finite().unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(relative_entropy(&q, &p), ExtReal::PosInfinity);
    }

    #[test]
    fn tv_examples() {
        let a = ProbVec::delta(2, 0).unwrap();
        let b = ProbVec::delta(2, 3).unwrap();
        assert_eq!(tv_distance(&a, &a), 0.0);
        assert_eq!(tv_distance(&a, &b), 1.0);
    }

    #[test]
    fn partition_validation() {
        assert!(SitePartition::new(3, vec![vec![0, 1]]).is_err());
        assert!(SitePartition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        let p = SitePartition::new(3, vec![vec![2], vec![1, 0]]).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1], vec![2]]);
        assert_eq!(p.mask(0), 0b011);
    }

    #[test]
    fn admissibility_names_sites() {
        let a = SitePartition::single_block(2);
        let e = FieldVector(vec![0.1, 0.2]).check_admissible(&a).unwrap_err();
        assert!(e.to_string().contains("h_2"));
        FieldVector(vec![0.1, 0.1]).check_admissible(&a).unwrap();
    }

    fn arb_prob(n: usize) -> impl Strategy<Value = ProbVec> {
        prop::collection::vec(0.0f64..1.0, 1 << n)
            .prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-3)
            .prop_map(move |w| ProbVec::from_weights(n, w).unwrap())
    }

    proptest! {
        #[test]
        fn gibbs_normalised_positive(seed in 0u64..1000, n in 1usize..7, scale in 0.0f64..2.0) {
            let j = random_j(n, seed, scale);
            let h = FieldVector((0..n).map(|i| ((seed + i as u64) % 7) as f64 / 7.0 - 0.5).collect());
            let mu = gibbs_measure(&j, &h).unwrap();
            prop_assert!((mu.mass() - 1.0).abs() < 1e-12);
            prop_assert!(mu.is_positive());
        }

        #[test]
        fn pinsker(p in arb_prob(3), q in arb_prob(3)) {
            let tv = tv_distance(&p, &q);
            match relative_entropy(&p, &q) {
                ExtReal::Finite(h) => prop_assert!(h + 1e-12 >= 2.0 * tv * tv),
                ExtReal::PosInfinity => {}
            }
        }

        #[test]
        fn tv_triangle(p in arb_prob(2), q in arb_prob(2), r in arb_prob(2)) {
            prop_assert!(tv_distance(&p, &r) <= tv_distance(&p, &q) + tv_distance(&q, &r) + 1e-15);
            prop_assert!((tv_distance(&p, &q) - tv_distance(&q, &p)).abs() < 1e-15);
        }

        #[test]
        fn magnetization_affine(p in arb_prob(3), q in arb_prob(3), a in 0.0f64..1.0) {
            let part = SitePartition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
            let mix: Vec<f64> = p.as_slice().iter().zip(q.as_slice()).map(|(x, y)| a * x + (1.0 - a) * y).collect();
            let lhs = magnetization_of(&mix, &part);
            let mp = magnetization_profile(&p, &part);
            let mq = magnetization_profile(&q, &part);
            for b in 0..2 {
                prop_assert!((lhs[b] - (a * mp[b] + (1.0 - a) * mq[b])).abs() < 1e-12);
                prop_assert!(lhs[b].abs() <= 1.0 + 1e-12);
            }
        }
    }
}
