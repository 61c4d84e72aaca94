//! Integration of `dp/dt = p o p - p`, entropy dissipation, decay-rate
//! certificates and the nonlinear MLSI scan.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field;
use crate::kernel::{CollisionContext, CollisionMode};
use crate::linalg;
use crate::rng;
use crate::spin::{self, ExtReal, FieldVector, InteractionMatrix, ProbVec};

pub const MAX_DT: f64 = 0.1;
/// Allowed per-step drift of the total mass before renormalisation.
pub const DRIFT_TOL: f64 = 1e-10;
const MAX_HALVINGS: u32 = 20;
/// Entropies below this are treated as zero when fitting rates.
pub const ENTROPY_FLOOR: f64 = 1e-12;

/// Integrator settings.
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Store every `store_every`-th step (the final state is always stored).
    pub store_every: usize,
}

impl EvolveOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        EvolveOptions { t_end, dt, store_every: 1 }
    }
}

/// Stored solution of the nonlinear equation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ProbVec>,
    /// Field of the limiting Gibbs measure.
    pub field: FieldVector,
    pub equilibrium: ProbVec,
    /// Conserved block magnetisations of the initial state.
    pub m0: Vec<f64>,
    /// Steps that had to be split after a failed renormalisation guard.
    pub rejected_steps: usize,
}

/// Reject initial states with a block of fully aligned spins.
pub fn check_regular(p: &ProbVec, ctx: &CollisionContext) -> Result<Vec<f64>> {
    let a = ctx.components();
    let m = spin::magnetization_profile(p, a);
    for (b, &x) in m.iter().enumerate() {
        if x.abs() >= 1.0 - 1e-15 {
            let sites: Vec<String> = a.block(b).iter().map(|s| (s + 1).to_string()).collect();
            return Err(Error::precondition(format!(
                "initial state is degenerate on block {} (sites {{{}}}): magnetisation {x}",
                b + 1,
                sites.join(",")
            )));
        }
    }
    Ok(m)
}

fn vector_field(ctx: &CollisionContext, p: &[f64]) -> Vec<f64> {
    let mut f = ctx.square_raw(p);
    f.iter_mut().zip(p).for_each(|(x, y)| *x -= y);
    f
}

fn axpy(p: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    p.iter().zip(k).map(|(x, y)| x + a * y).collect()
}

fn rk4_raw(ctx: &CollisionContext, p: &[f64], dt: f64) -> Vec<f64> {
    let k1 = vector_field(ctx, p);
    let k2 = vector_field(ctx, &axpy(p, 0.5 * dt, &k1));
    let k3 = vector_field(ctx, &axpy(p, 0.5 * dt, &k2));
    let k4 = vector_field(ctx, &axpy(p, dt, &k3));
    p.iter()
        .enumerate()
        .map(|(i, x)| x + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// One guarded step: renormalise, or split into two half steps when the
/// mass drifts by more than [`DRIFT_TOL`] or an entry turns negative.
fn guarded_step(ctx: &CollisionContext, p: &[f64], dt: f64, depth: u32, rejected: &mut usize) -> Result<Vec<f64>> {
    let mut q = rk4_raw(ctx, p, dt);
    let mass: f64 = q.iter().sum();
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    if (mass - 1.0).abs() > DRIFT_TOL || min < -1e-13 {
        if depth >= MAX_HALVINGS {
            return Err(Error::Numeric(format!("step size underflow at dt = {dt:e}")));
        }
        *rejected += 1;
        let half = guarded_step(ctx, p, 0.5 * dt, depth + 1, rejected)?;
        return guarded_step(ctx, &half, 0.5 * dt, depth + 1, rejected);
    }
    for x in q.iter_mut() {
        *x = x.max(0.0) / mass;
    }
    Ok(q)
}

/// Classical RK4 on `p o p - p` with a renormalisation guard.
pub fn evolve(ctx: &CollisionContext, p0: &ProbVec, opts: EvolveOptions) -> Result<Trajectory> {
    if !(opts.dt > 0.0 && opts.dt <= MAX_DT) {
        return Err(Error::invalid(format!("dt = {} must lie in (0, {MAX_DT}]", opts.dt)));
    }
    if !(opts.t_end >= 0.0) || !opts.t_end.is_finite() {
        return Err(Error::invalid(format!("t_end = {} must be finite and >= 0", opts.t_end)));
    }
    if p0.n() != ctx.n() {
        return Err(Error::invalid("initial state has the wrong dimension"));
    }
    if ctx.n() > crate::kernel::MAX_EXACT_SITES {
        return Err(Error::Capacity(format!("exact evolution needs n <= {}", crate::kernel::MAX_EXACT_SITES)));
    }
    let m0 = check_regular(p0, ctx)?;
    let field = field::solve_field(ctx.interaction(), ctx.components(), &m0)?;
    let equilibrium = spin::gibbs_measure(ctx.interaction(), &field)?;
    let steps = ((opts.t_end / opts.dt) - 1e-9).ceil().max(0.0) as usize;
    let every = opts.store_every.max(1);
    let mut times = vec![0.0];
    let mut states = vec![p0.clone()];
    let mut p = p0.as_slice().to_vec();
    let mut rejected = 0;
    for i in 1..=steps {
        let t_prev = (i - 1) as f64 * opts.dt;
        let t = if i == steps { opts.t_end } else { i as f64 * opts.dt };
        p = guarded_step(ctx, &p, t - t_prev, 0, &mut rejected)?;
        if i % every == 0 || i == steps {
            times.push(t);
            states.push(ProbVec::from_raw(ctx.n(), p.clone()));
        }
    }
    Ok(Trajectory { times, states, field, equilibrium, m0, rejected_steps: rejected })
}

impl Trajectory {
    pub fn final_state(&self) -> &ProbVec {
        self.states.last().expect("trajectory is never empty")
    }

    /// `H(p_t | mu)` at every stored time.
    pub fn entropies(&self) -> Vec<ExtReal> {
        self.states.iter().map(|p| spin::relative_entropy(p, &self.equilibrium)).collect()
    }

    /// Largest deviation of any block magnetisation from its initial value.
    pub fn max_conservation_error(&self, ctx: &CollisionContext) -> f64 {
        self.states
            .iter()
            .map(|p| {
                let m = spin::magnetization_profile(p, ctx.components());
                m.iter().zip(&self.m0).fold(0.0, |a, (x, y)| f64::max(a, (x - y).abs()))
            })
            .fold(0.0, f64::max)
    }

    pub fn max_mass_error(&self) -> f64 {
        self.states.iter().map(|p| (p.mass() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Entropy dissipation `D_mu(f)` of a density `f` with respect to `mu`.
///
/// A pair where exactly one of the products `f(t)f(t')`, `f(s)f(s')`
/// vanishes contributes `+inf`; pairs where both vanish contribute 0.
pub fn dissipation(ctx: &CollisionContext, f: &[f64], mu: &ProbVec) -> Result<ExtReal> {
    let n = ctx.n();
    if n > 10 {
        return Err(Error::Capacity(format!("dissipation needs n <= 10, got {n}")));
    }
    if f.len() != mu.len() || mu.n() != n {
        return Err(Error::invalid("density and measure dimensions differ"));
    }
    let mw = mu.as_slice();
    let k = ctx.kernel();
    let m = 1usize << n;
    let terms: Vec<Option<f64>> = (0..m)
        .into_par_iter()
        .map(|t| {
            let mut acc = 0.0;
            for tp in 0..m {
                let x = f[t] * f[tp];
                let w0 = mw[t] * mw[tp];
                for l in 0..n {
                    let bl = t >> l & 1;
                    for kk in 0..n {
                        let kw = k.get(l, kk);
                        if kw == 0.0 || tp >> kk & 1 == bl {
                            continue;
                        }
                        let (s, sp) = (t ^ (1 << l), tp ^ (1 << kk));
                        let y = f[s] * f[sp];
                        if x == 0.0 && y == 0.0 {
                            continue;
                        }
                        if x == 0.0 || y == 0.0 {
                            return None;
                        }
                        let a = crate::kernel::logistic(ctx.flip_delta(t as u32, l) + ctx.flip_delta(tp as u32, kk));
                        acc += w0 * kw * a * (x - y) * (x / y).ln();
                    }
                }
            }
            Some(acc)
        })
        .collect();
    let mut total = 0.0;
    for t in terms {
        match t {
            Some(v) => total += v,
            None => return Ok(ExtReal::PosInfinity),
        }
    }
    Ok(ExtReal::Finite((total / (4.0 * n as f64)).max(0.0)))
}

/// Dissipation of a measure `p` relative to `mu`; densities below 1e-300
/// are clipped, for diagnostics.
pub fn dissipation_of(ctx: &CollisionContext, p: &ProbVec, mu: &ProbVec) -> Result<ExtReal> {
    let f: Vec<f64> = p.as_slice().iter().zip(mu.as_slice()).map(|(a, b)| (a / b).max(1e-300)).collect();
    dissipation(ctx, &f, mu)
}

/// Closed-form rate `(1/4n)(1 - 2 lambda)^2 e^{-16 Jbar}` or the reason it
/// does not apply.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaBound {
    Applicable(f64),
    Inapplicable(String),
}

impl AlphaBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            AlphaBound::Applicable(a) => Some(*a),
            AlphaBound::Inapplicable(_) => None,
        }
    }
}

pub fn alpha_bound(j: &InteractionMatrix) -> AlphaBound {
    let lam = j.lambda_max();
    if !j.is_psd() {
        return AlphaBound::Inapplicable(format!("J is not nonnegative definite (min eigenvalue {})", j.lambda_min()));
    }
    if lam >= 0.5 {
        return AlphaBound::Inapplicable(format!("largest eigenvalue {lam} is not below 1/2"));
    }
    let n = j.n() as f64;
    AlphaBound::Applicable((1.0 - 2.0 * lam).powi(2) * (-16.0 * j.jbar()).exp() / (4.0 * n))
}

/// Outcome of fitting `log H` against time.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFit {
    /// Least-squares decay rate.
    Rate(f64),
    /// The relative entropy is identically zero: the start is stationary.
    Stationary,
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub entropies: Vec<f64>,
    pub dissipations: Vec<ExtReal>,
    pub alpha_fit: RateFit,
    pub alpha_bound: AlphaBound,
    /// Pinsker-derived bound `sqrt(C n / 2) e^{-alpha t / 2}` on the TV
    /// distance, when the rate bound applies.
    pub tv_bound: Option<Vec<f64>>,
    /// Whether the entropy never increased by more than 1e-12.
    pub monotone: bool,
}

/// Fit the entropy decay rate of a trajectory.
pub fn decay_report(ctx: &CollisionContext, traj: &Trajectory) -> Result<DecayReport> {
    let entropies: Vec<f64> = traj.entropies().into_iter().map(ExtReal::to_f64).collect();
    let dissipations =
        traj.states.iter().map(|p| dissipation_of(ctx, p, &traj.equilibrium)).collect::<Result<Vec<_>>>()?;
    let monotone = entropies.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let alpha_bound = alpha_bound(ctx.interaction());
    let tv_bound = alpha_bound.value().map(|a| {
        let c = ctx.interaction().lambda_max() + 2.0 * traj.field.hbar() + 2f64.ln();
        let pre = (c * ctx.n() as f64 / 2.0).sqrt();
        traj.times.iter().map(|t| pre * (-a * t / 2.0).exp()).collect()
    });
    let alpha_fit = if entropies.iter().all(|&h| h <= ENTROPY_FLOOR) {
        RateFit::Stationary
    } else {
        let skip = traj.times.len() / 10;
        let (xs, ys): (Vec<f64>, Vec<f64>) = traj
            .times
            .iter()
            .zip(&entropies)
            .skip(skip)
            .filter(|(_, &h)| h > ENTROPY_FLOOR && h.is_finite())
            .map(|(t, h)| (*t, h.ln()))
            .unzip();
        if xs.len() < 5 {
            return Err(Error::Numeric(format!(
                "only {} samples above the entropy floor; trajectory too short to fit",
                xs.len()
            )));
        }
        RateFit::Rate(-linalg::linear_fit(&xs, &ys).0)
    };
    Ok(DecayReport { times: traj.times.clone(), entropies, dissipations, alpha_fit, alpha_bound, tv_bound, monotone })
}

/// `max |p o p - p|`.
pub fn stationarity_residual(ctx: &CollisionContext, p: &ProbVec) -> Result<f64> {
    let pp = ctx.collision_product_mode(p, p, CollisionMode::Optimized)?;
    Ok(pp.max_diff(p))
}

/// Summary of a nonlinear MLSI scan.
#[derive(Debug, Clone)]
pub struct MlsiScan {
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub samples: usize,
    pub discarded: usize,
    pub alpha_bound: f64,
}

/// Families of random positive test densities.
pub(crate) fn sample_density<R: Rng>(rng: &mut R, m: usize, family: usize) -> Vec<f64> {
    match family % 4 {
        0 => {
            let s: f64 = rng.random_range(0.1..3.0);
            (0..m).map(|_| (s * rng.sample::<f64, _>(StandardNormal)).exp()).collect()
        }
        1 => {
            let eps = 10f64.powf(rng.random_range(-3.0..0.0));
            let hot = rng.random_range(0..m);
            (0..m).map(|s| if s == hot { 1.0 } else { eps }).collect()
        }
        2 => {
            let eps: f64 = rng.random_range(1e-3..0.2);
            (0..m).map(|_| 1.0 + eps * rng.sample::<f64, _>(StandardNormal)).map(|x: f64| x.max(1e-3)).collect()
        }
        _ => {
            let n = m.trailing_zeros() as usize;
            let c: Vec<f64> = (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            (0..m)
                .map(|s| {
                    let mut e = 0.0;
                    for i in 0..n {
                        for k in 0..n {
                            e += c[i * n + k] * spin::spin(s as u32, i) * spin::spin(s as u32, k);
                        }
                    }
                    (0.5 * e).exp()
                })
                .collect()
        }
    }
}

/// Minimum of `D_mu(f) / mu[f log f]` over random densities projected onto
/// the constraint set `m_A(f mu) = m_A(mu)`.
pub fn nonlinear_mlsi_scan(ctx: &CollisionContext, h: &FieldVector, trials: usize, seed: u64) -> Result<MlsiScan> {
    let alpha = match alpha_bound(ctx.interaction()) {
        AlphaBound::Applicable(a) => a,
        AlphaBound::Inapplicable(why) => return Err(Error::precondition(why)),
    };
    if !ctx.kernel().is_block_kernel() {
        return Err(Error::precondition("the nonlinear MLSI scan requires a block kernel K_A"));
    }
    h.check_admissible(ctx.components())?;
    let mu = spin::gibbs_measure(ctx.interaction(), h)?;
    let target = spin::magnetization_profile(&mu, ctx.components());
    let m = mu.len();
    let results: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream_rng(seed, i as u64);
            let f = sample_density(&mut r, m, i);
            let log_base: Vec<f64> = f.iter().zip(mu.as_slice()).map(|(a, b)| (a * b).ln()).collect();
            let sol = field::solve_tilt(&log_base, ctx.components(), &target).ok()?;
            let fp: Vec<f64> = sol.measure.iter().zip(mu.as_slice()).map(|(a, b)| a / b).collect();
            let ent = spin::relative_entropy_raw(&sol.measure, mu.as_slice()).finite()?;
            if ent < 1e-14 {
                return None;
            }
            let d = dissipation(ctx, &fp, &mu).ok()?.finite()?;
            Some(d / ent)
        })
        .collect();
    let mut ratios: Vec<f64> = results.iter().flatten().copied().collect();
    let discarded = trials - ratios.len();
    if ratios.is_empty() {
        return Err(Error::Numeric("every scan sample was discarded".into()));
    }
    ratios.sort_by(f64::total_cmp);
    Ok(MlsiScan {
        min_ratio: ratios[0],
        median_ratio: ratios[ratios.len() / 2],
        samples: ratios.len(),
        discarded,
        alpha_bound: alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_transport_kernel, KernelSpec};
    use crate::spin::SitePartition;

    fn ctx(j: InteractionMatrix, spec: KernelSpec) -> CollisionContext {
        let k = build_transport_kernel(j.n(), &spec).unwrap();
        CollisionContext::new(j, k).unwrap()
    }

    fn small_j(n: usize, seed: u64, scale: f64) -> InteractionMatrix {
        let mut x = seed.wrapping_add(17);
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..i {
                let v = scale * next();
                d[i * n + k] = v;
                d[k * n + i] = v;
            }
        }
        InteractionMatrix::new(n, d).unwrap()
    }

    #[test]
    fn gibbs_start_is_constant() {
        let j = small_j(3, 1, 0.3);
        let a = SitePartition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let c = ctx(j.clone(), KernelSpec::Blocks(a.clone()));
        let h = FieldVector::block_constant(&a, &[0.4, -0.2]);
        let mu = spin::gibbs_measure(&j, &h).unwrap();
        let tr = evolve(&c, &mu, EvolveOptions::new(2.0, 0.05)).unwrap();
        for p in &tr.states {
            assert!(p.max_diff(&mu) < 1e-10);
        }
        assert!(tr.equilibrium.max_diff(&mu) < 1e-10);
    }

    #[test]
    fn single_site_marginals_frozen() {
        let c = ctx(InteractionMatrix::zeros(3).unwrap(), KernelSpec::SingleSite);
        let p0 = ProbVec::product(&[0.2, 0.7, 0.55]).unwrap();
        let tr = evolve(&c, &p0, EvolveOptions::new(3.0, 0.05)).unwrap();
        for p in &tr.states {
            for l in 0..3 {
                let a = p.site_marginal(l);
                let b = p0.site_marginal(l);
                assert!((a[1] - b[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_start_rejected() {
        let a = SitePartition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let c = ctx(InteractionMatrix::zeros(3).unwrap(), KernelSpec::Blocks(a));
        let e = evolve(&c, &ProbVec::delta(3, 0b011).unwrap(), EvolveOptions::new(1.0, 0.1)).unwrap_err();
        assert!(e.to_string().contains("block 1"), "{e}");
    }

    #[test]
    fn dt_limits() {
        let c = ctx(InteractionMatrix::zeros(2).unwrap(), KernelSpec::MeanField);
        let p = ProbVec::uniform(2).unwrap();
        assert!(evolve(&c, &p, EvolveOptions::new(1.0, 0.2)).is_err());
        assert!(evolve(&c, &p, EvolveOptions::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn entropy_monotone_and_mass_conserved() {
        let j = small_j(3, 5, 0.4);
        let c = ctx(j, KernelSpec::MeanField);
        let p0 = ProbVec::from_weights(3, vec![5.0, 1.0, 0.5, 2.0, 0.1, 3.0, 1.0, 0.2]).unwrap();
        let tr = evolve(&c, &p0, EvolveOptions::new(5.0, 0.01)).unwrap();
        let hs: Vec<f64> = tr.entropies().into_iter().map(|h| h.finite().unwrap()).collect();
        for w in hs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(tr.max_mass_error() < 1e-10);
        assert!(tr.max_conservation_error(&c) < 1e-10);
    }

    #[test]
    fn dissipation_trivial_cases() {
        let j = small_j(3, 2, 0.5);
        let a = SitePartition::new(3, vec![vec![0], vec![1, 2]]).unwrap();
        let c = ctx(j.clone(), KernelSpec::Blocks(a.clone()));
        let mu = spin::gibbs_measure(&j, &FieldVector::block_constant(&a, &[0.3, -0.1])).unwrap();
        assert_eq!(dissipation(&c, &[1.0; 8], &mu).unwrap(), ExtReal::Finite(0.0));
        let mu2 = spin::gibbs_measure(&j, &FieldVector::block_constant(&a, &[-0.5, 0.7])).unwrap();
        let f: Vec<f64> = mu2.as_slice().iter().zip(mu.as_slice()).map(|(x, y)| x / y).collect();
        assert!(dissipation(&c, &f, &mu).unwrap().finite().unwrap() < 1e-14);
        let mut g = vec![1.0; 8];
        g[0] = 0.0;
        assert_eq!(dissipation(&c, &g, &mu).unwrap(), ExtReal::PosInfinity);
    }

    #[test]
    fn alpha_bound_examples() {
        assert_eq!(alpha_bound(&InteractionMatrix::zeros(1).unwrap()), AlphaBound::Applicable(0.25));
        assert_eq!(alpha_bound(&InteractionMatrix::zeros(4).unwrap()), AlphaBound::Applicable(1.0 / 16.0));
        // lambda = 0.25 and Jbar = 0.25 with a nonnegative definite matrix
        let j = InteractionMatrix::new(2, vec![0.125, 0.125, 0.125, 0.125]).unwrap();
        let want = 0.125 * 0.25 * (-4.0f64).exp();
        let got = alpha_bound(&j).value().unwrap();
        assert!((got - want).abs() < 1e-15);
        let indefinite = InteractionMatrix::new(2, vec![0.0, 0.25, 0.25, 0.0]).unwrap();
        assert!(matches!(alpha_bound(&indefinite), AlphaBound::Inapplicable(_)));
        let strong = InteractionMatrix::new(1, vec![0.6]).unwrap();
        assert!(matches!(alpha_bound(&strong), AlphaBound::Inapplicable(_)));
    }

    #[test]
    fn stationary_start_flagged() {
        let c = ctx(InteractionMatrix::zeros(2).unwrap(), KernelSpec::MeanField);
        let p = ProbVec::uniform(2).unwrap();
        let tr = evolve(&c, &p, EvolveOptions::new(1.0, 0.1)).unwrap();
        assert_eq!(decay_report(&c, &tr).unwrap().alpha_fit, RateFit::Stationary);
    }

    #[test]
    fn stationarity_residual_cases() {
        let j = small_j(3, 8, 0.5);
        let c = ctx(j.clone(), KernelSpec::MeanField);
        let mu = spin::gibbs_measure(&j, &FieldVector(vec![0.2; 3])).unwrap();
        assert!(stationarity_residual(&c, &mu).unwrap() < 1e-12);
        let mut w = mu.as_slice().to_vec();
        w[1] += 0.01;
        assert!(stationarity_residual(&c, &ProbVec::from_weights(3, w).unwrap()).unwrap() > 1e-6);
        let a = SitePartition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let c = ctx(InteractionMatrix::zeros(3).unwrap(), KernelSpec::Blocks(a));
        let prod = ProbVec::product(&[0.3, 0.3, 0.8]).unwrap();
        assert!(stationarity_residual(&c, &prod).unwrap() < 1e-12);
    }

    #[test]
    fn mlsi_scan_single_site_is_vacuous() {
        // with one site the constraint pins f = 1, so every sample is 0/0
        let c = ctx(InteractionMatrix::zeros(1).unwrap(), KernelSpec::SingleSite);
        assert!(nonlinear_mlsi_scan(&c, &FieldVector::zeros(1), 50, 3).is_err());
    }

    #[test]
    fn mlsi_scan_two_sites() {
        let c = ctx(InteractionMatrix::zeros(2).unwrap(), KernelSpec::MeanField);
        let scan = nonlinear_mlsi_scan(&c, &FieldVector::zeros(2), 200, 3).unwrap();
        assert!(scan.min_ratio >= scan.alpha_bound);
        assert_eq!(scan.samples + scan.discarded, 200);
    }

    #[test]
    fn rk4_fourth_order() {
        let j = small_j(3, 12, 0.5);
        let c = ctx(j, KernelSpec::MeanField);
        let p0 = ProbVec::from_weights(3, vec![4.0, 1.0, 0.5, 2.0, 0.3, 3.0, 1.0, 0.2]).unwrap();
        let end = |dt: f64| evolve(&c, &p0, EvolveOptions::new(1.0, dt)).unwrap().final_state().clone();
        let reference = end(0.1 / 8.0);
        let e1 = end(0.1).max_diff(&reference);
        let e2 = end(0.05).max_diff(&reference);
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }
}
