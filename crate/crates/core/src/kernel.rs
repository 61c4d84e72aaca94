//! Exchange moves, acceptance probabilities, transport kernels and the
//! collision product.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spin::{self, FieldVector, InteractionMatrix, ProbVec, SitePartition, SpinConfig};

/// Largest `n` for the exact collision product.
pub const MAX_EXACT_SITES: usize = 12;
/// Upper bound on cached rate-table entries (8 bytes each).
const RATE_TABLE_LIMIT: usize = 1 << 24;

/// How a transport kernel is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    SingleSite,
    MeanField,
    Blocks(SitePartition),
    Matrix(Vec<f64>),
}

/// Symmetric stochastic matrix choosing the exchanged pair of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportKernel {
    n: usize,
    k: Vec<f64>,
    components: SitePartition,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let nx = self.0[y];
            self.0[y] = r;
            y = nx;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Build a transport kernel; explicit matrices are validated.
pub fn build_transport_kernel(n: usize, spec: &KernelSpec) -> Result<TransportKernel> {
    if n == 0 || n > spin::MAX_SITES {
        return Err(Error::Capacity(format!("n = {n} outside 1..={}", spin::MAX_SITES)));
    }
    let mut k = vec![0.0; n * n];
    match spec {
        KernelSpec::SingleSite => (0..n).for_each(|i| k[i * n + i] = 1.0),
        KernelSpec::MeanField => k.iter_mut().for_each(|x| *x = 1.0 / n as f64),
        KernelSpec::Blocks(a) => {
            if a.n() != n {
                return Err(Error::invalid("block partition has the wrong site count"));
            }
            for b in a.blocks() {
                let w = 1.0 / b.len() as f64;
                for &i in b {
                    for &j in b {
                        k[i * n + j] = w;
                    }
                }
            }
        }
        KernelSpec::Matrix(m) => {
            if m.len() != n * n {
                return Err(Error::invalid(format!("kernel matrix needs {} entries, got {}", n * n, m.len())));
            }
            for i in 0..n {
                for j in 0..n {
                    let x = m[i * n + j];
                    if !(x >= 0.0) || !x.is_finite() {
                        return Err(Error::invalid(format!("kernel entry ({},{}) = {x} is not a probability", i + 1, j + 1)));
                    }
                    if x != m[j * n + i] {
                        return Err(Error::invalid(format!("kernel is not symmetric at (i,j) = ({},{})", i + 1, j + 1)));
                    }
                }
                let row: f64 = m[i * n..(i + 1) * n].iter().sum();
                if (row - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("kernel row {} sums to {row}", i + 1)));
                }
            }
            k.copy_from_slice(m);
        }
    }
    let mut uf = UnionFind((0..n).collect());
    for i in 0..n {
        for j in (i + 1)..n {
            if k[i * n + j] > 0.0 {
                uf.union(i, j);
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    Ok(TransportKernel { n, k, components: SitePartition::from_labels(&labels) })
}

impl TransportKernel {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.k[l * self.n + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.k
    }

    /// Irreducible components `A(K)`.
    pub fn components(&self) -> &SitePartition {
        &self.components
    }

    /// Whether the kernel equals `K_A` for its own components.
    pub fn is_block_kernel(&self) -> bool {
        let a = build_transport_kernel(self.n, &KernelSpec::Blocks(self.components.clone())).unwrap();
        a.k.iter().zip(&self.k).all(|(x, y)| (x - y).abs() < 1e-15)
    }
}

/// `(S_l(s, s'_k), S_k(s', s_l))`.
pub fn exchange(s: SpinConfig, sp: SpinConfig, l: usize, k: usize) -> Result<(SpinConfig, SpinConfig)> {
    if l >= s.n() || k >= sp.n() {
        return Err(Error::invalid(format!("site pair ({},{}) out of range", l + 1, k + 1)));
    }
    Ok((s.with_spin(l, sp.spin(k)), sp.with_spin(k, s.spin(l))))
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Which implementation of the collision product to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionMode {
    /// Literal quadruple sum with scatter, `O(4^n n^2)`.
    Reference,
    /// Flow form over cached (or on-the-fly) per-site rates.
    Optimized,
}

/// Interaction and transport kernel with cached acceptance data.
#[derive(Debug, Clone)]
pub struct CollisionContext {
    j: InteractionMatrix,
    kernel: TransportKernel,
    /// zero-field log weights
    lw: Vec<f64>,
    /// `delta[s * n + l] = lw(s ^ (1 << l)) - lw(s)`
    delta: Vec<f64>,
    /// `rates[(s * n + l) << n | s']`: probability mass of an accepted flip of
    /// site `l` of `s` against partner `s'` (already weighted by `K / n`)
    rates: Option<Vec<f64>>,
}

impl CollisionContext {
    pub fn new(j: InteractionMatrix, kernel: TransportKernel) -> Result<Self> {
        let n = j.n();
        if kernel.n() != n {
            return Err(Error::invalid("kernel and J have different site counts"));
        }
        let lw = spin::log_weights(&j, &FieldVector::zeros(n))?;
        let mut delta = vec![0.0; (1 << n) * n];
        for s in 0..(1usize << n) {
            for l in 0..n {
                delta[s * n + l] = lw[s ^ (1 << l)] - lw[s];
            }
        }
        let mut ctx = CollisionContext { j, kernel, lw, delta, rates: None };
        let entries = n.checked_mul(1usize << (2 * n).min(60)).unwrap_or(usize::MAX);
        if n <= MAX_EXACT_SITES && entries <= RATE_TABLE_LIMIT {
            let m = 1usize << n;
            let mut rates = vec![0.0; entries];
            rates.par_chunks_mut(m).enumerate().for_each(|(row, out)| {
                let (s, l) = (row / n, row % n);
                ctx.fill_rate_row(s, l, out);
            });
            ctx.rates = Some(rates);
        }
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.j.n()
    }

    pub fn interaction(&self) -> &InteractionMatrix {
        &self.j
    }

    pub fn kernel(&self) -> &TransportKernel {
        &self.kernel
    }

    pub fn components(&self) -> &SitePartition {
        self.kernel.components()
    }

    /// Zero-field log weight of a mask.
    #[inline]
    pub fn log_weight(&self, s: u32) -> f64 {
        self.lw[s as usize]
    }

    /// `lw(s ^ (1 << l)) - lw(s)`.
    #[inline]
    pub fn flip_delta(&self, s: u32, l: usize) -> f64 {
        self.delta[s as usize * self.n() + l]
    }

    fn fill_rate_row(&self, s: usize, l: usize, out: &mut [f64]) {
        let n = self.n();
        let bit_l = s >> l & 1;
        let dl = self.delta[s * n + l];
        for (sp, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..n {
                let w = self.kernel.get(l, k);
                if w > 0.0 && sp >> k & 1 != bit_l {
                    acc += w * logistic(dl + self.delta[sp * n + k]);
                }
            }
            *o = acc / n as f64;
        }
    }

    /// `p_J(l,k | s, s')` from zero-field weights, in log space.
    pub fn acceptance_prob(&self, l: usize, k: usize, s: SpinConfig, sp: SpinConfig) -> Result<f64> {
        let (t, tp) = exchange(s, sp, l, k)?;
        let x = self.log_weight(t.bits()) + self.log_weight(tp.bits())
            - self.log_weight(s.bits())
            - self.log_weight(sp.bits());
        Ok(logistic(x))
    }

    /// Self-collision acceptance `w(s^{lk}) / (w(s) + w(s^{lk}))`.
    pub fn diagonal_acceptance(&self, l: usize, k: usize, s: SpinConfig) -> Result<f64> {
        if l >= s.n() || k >= s.n() {
            return Err(Error::invalid(format!("site pair ({},{}) out of range", l + 1, k + 1)));
        }
        let t = s.with_spin(l, s.spin(k)).with_spin(k, s.spin(l));
        Ok(logistic(self.log_weight(t.bits()) - self.log_weight(s.bits())))
    }

    fn check_capacity(&self) -> Result<()> {
        if self.n() > MAX_EXACT_SITES {
            return Err(Error::Capacity(format!(
                "exact collision product needs n <= {MAX_EXACT_SITES}, got {}",
                self.n()
            )));
        }
        Ok(())
    }

    /// Per-site accepted-flip mass `G(s, l)` of `s` against partners drawn
    /// from `q`.
    fn flip_mass(&self, q: &[f64]) -> Vec<f64> {
        let n = self.n();
        let m = 1usize << n;
        let mut g = vec![0.0; m * n];
        match &self.rates {
            Some(rates) => {
                g.par_iter_mut().enumerate().with_min_len(64).for_each(|(row, gv)| {
                    let r = &rates[row * m..(row + 1) * m];
                    *gv = r.iter().zip(q).map(|(a, b)| a * b).sum();
                });
            }
            None => {
                g.par_iter_mut().enumerate().with_min_len(8).for_each(|(row, gv)| {
                    let (s, l) = (row / n, row % n);
                    let bit_l = s >> l & 1;
                    let dl = self.delta[s * n + l];
                    let mut acc = 0.0;
                    for k in 0..n {
                        let w = self.kernel.get(l, k);
                        if w == 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for (sp, &qv) in q.iter().enumerate() {
                            if qv != 0.0 && sp >> k & 1 != bit_l {
                                inner += qv * logistic(dl + self.delta[sp * n + k]);
                            }
                        }
                        acc += w * inner;
                    }
                    *gv = acc / n as f64;
                });
            }
        }
        g
    }

    /// Law of the first output when the first input is drawn from `p` and the
    /// second from `q`.
    fn first_output_law(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let n = self.n();
        let g = self.flip_mass(q);
        let qm: f64 = q.iter().sum();
        let mut out = vec![0.0; p.len()];
        for (t, o) in out.iter_mut().enumerate() {
            let mut stay = qm;
            let mut inflow = 0.0;
            for l in 0..n {
                stay -= g[t * n + l];
                let src = t ^ (1 << l);
                inflow += p[src] * g[src * n + l];
            }
            *o = p[t] * stay + inflow;
        }
        out
    }

    fn first_output_law_reference(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; p.len()];
        for (s, &ps) in p.iter().enumerate() {
            let sc = SpinConfig::new(s as u32, n).unwrap();
            for (sp, &qs) in q.iter().enumerate() {
                let spc = SpinConfig::new(sp as u32, n).unwrap();
                let w = ps * qs;
                for l in 0..n {
                    for k in 0..n {
                        let kk = self.kernel.get(l, k);
                        if kk == 0.0 {
                            continue;
                        }
                        let (t, _) = exchange(sc, spc, l, k).unwrap();
                        let a = self.acceptance_prob(l, k, sc, spc).unwrap();
                        let c = w * kk / n as f64;
                        out[t.bits() as usize] += c * a;
                        out[s] += c * (1.0 - a);
                    }
                }
            }
        }
        out
    }

    /// Commutative collision product `p o q`.
    pub fn collision_product(&self, p: &ProbVec, q: &ProbVec) -> Result<ProbVec> {
        self.collision_product_mode(p, q, CollisionMode::Optimized)
    }

    pub fn collision_product_mode(&self, p: &ProbVec, q: &ProbVec, mode: CollisionMode) -> Result<ProbVec> {
        self.check_capacity()?;
        if p.n() != self.n() || q.n() != self.n() {
            return Err(Error::invalid("measure dimension does not match the model"));
        }
        let out = self.product_raw(p.as_slice(), q.as_slice(), mode);
        Ok(ProbVec::from_raw(self.n(), out))
    }

    /// Collision product on raw vectors, bilinear in its arguments.
    pub(crate) fn product_raw(&self, p: &[f64], q: &[f64], mode: CollisionMode) -> Vec<f64> {
        let law = |a: &[f64], b: &[f64]| match mode {
            CollisionMode::Reference => self.first_output_law_reference(a, b),
            CollisionMode::Optimized => self.first_output_law(a, b),
        };
        if std::ptr::eq(p, q) {
            return law(p, p);
        }
        let a = law(p, q);
        let b = law(q, p);
        a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect()
    }

    /// `p o p`.
    pub(crate) fn square_raw(&self, p: &[f64]) -> Vec<f64> {
        self.first_output_law(p, p)
    }

    /// Full pair kernel from `(s, s')`: list of (target pair index, prob),
    /// pair index `t << n | t'`.
    pub fn pair_kernel(&self, s: u32, sp: u32) -> Vec<(usize, f64)> {
        let n = self.n();
        let sc = SpinConfig::new(s, n).unwrap();
        let spc = SpinConfig::new(sp, n).unwrap();
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(n * n + 1);
        let mut stay = 0.0;
        for l in 0..n {
            for k in 0..n {
                let kk = self.kernel.get(l, k) / n as f64;
                if kk == 0.0 {
                    continue;
                }
                let (t, tp) = exchange(sc, spc, l, k).unwrap();
                if t == sc {
                    stay += kk;
                    continue;
                }
                let a = self.acceptance_prob(l, k, sc, spc).unwrap();
                stay += kk * (1.0 - a);
                let idx = (t.bits() as usize) << n | tp.bits() as usize;
                match out.iter_mut().find(|(i, _)| *i == idx) {
                    Some(e) => e.1 += kk * a,
                    None => out.push((idx, kk * a)),
                }
            }
        }
        out.push(((s as usize) << n | sp as usize, stay));
        out
    }

    /// Max detailed-balance residual of the pair kernel with respect to
    /// `mu_{J,h} x mu_{J,h}`.
    pub fn check_detailed_balance(&self, h: &FieldVector) -> Result<f64> {
        let n = self.n();
        if n > 8 {
            return Err(Error::Capacity(format!("detailed-balance check needs n <= 8, got {n}")));
        }
        h.check_admissible(self.components())?;
        let mu = spin::gibbs_measure(&self.j, h)?;
        let m = 1usize << n;
        let rows: Vec<Vec<(usize, f64)>> = (0..m * m)
            .into_par_iter()
            .map(|pair| self.pair_kernel((pair >> n) as u32, (pair & (m - 1)) as u32))
            .collect();
        let w = |pair: usize| mu.as_slice()[pair >> n] * mu.as_slice()[pair & (m - 1)];
        let res = (0..m * m)
            .into_par_iter()
            .map(|src| {
                let mut r: f64 = 0.0;
                for &(dst, q) in &rows[src] {
                    let back = rows[dst].iter().find(|(i, _)| *i == src).map_or(0.0, |e| e.1);
                    r = r.max((w(src) * q - w(dst) * back).abs());
                }
                r
            })
            .reduce(|| 0.0, f64::max);
        Ok(res)
    }
}
