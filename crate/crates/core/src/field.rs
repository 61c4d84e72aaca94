//! Block-field solver: find `h` constant on blocks with prescribed block
//! magnetisations.
//!
//! Both the Gibbs field solver and the constraint projection of the
//! nonlinear MLSI scan reduce to the same problem: tilt a positive base
//! measure by `exp(sum_A theta_A s_A)`, `s_A` the block-average spin, so that
//! the block magnetisations hit a target. The log-partition function is
//! strictly convex in `theta`; damped Newton is used.

use crate::error::{Error, Result};
use crate::linalg;
use crate::spin::{self, FieldVector, InteractionMatrix, SitePartition};

pub const NEWTON_TOL: f64 = 1e-13;
pub const NEWTON_ACCEPT: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 200;

/// Result of [`solve_tilt`].
#[derive(Debug, Clone)]
pub struct TiltSolution {
    /// Block multipliers `theta_A`.
    pub theta: Vec<f64>,
    /// Normalised tilted measure.
    pub measure: Vec<f64>,
    /// Final max-norm residual of the block magnetisations.
    pub residual: f64,
    pub iterations: usize,
}

struct Moments {
    measure: Vec<f64>,
    mean: Vec<f64>,
    cov: Vec<f64>,
}

fn moments(log_base: &[f64], masks: &[u32], sizes: &[usize], theta: &[f64]) -> Moments {
    let k = masks.len();
    let block_avg = |s: usize, b: usize| -> f64 {
        let pc = (s as u32 & masks[b]).count_ones() as f64;
        (2.0 * pc - sizes[b] as f64) / sizes[b] as f64
    };
    let lw: Vec<f64> = log_base
        .iter()
        .enumerate()
        .map(|(s, &lb)| {
            if lb == f64::NEG_INFINITY {
                lb
            } else {
                lb + (0..k).map(|b| theta[b] * block_avg(s, b)).sum::<f64>()
            }
        })
        .collect();
    let measure = spin::normalize_log_weights(&lw);
    let mut mean = vec![0.0; k];
    let mut second = vec![0.0; k * k];
    let mut sa = vec![0.0; k];
    for (s, &p) in measure.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (b, x) in sa.iter_mut().enumerate() {
            *x = block_avg(s, b);
        }
        for b in 0..k {
            mean[b] += p * sa[b];
            for c in 0..=b {
                second[b * k + c] += p * sa[b] * sa[c];
            }
        }
    }
    let mut cov = vec![0.0; k * k];
    for b in 0..k {
        for c in 0..=b {
            let v = second[b * k + c] - mean[b] * mean[c];
            cov[b * k + c] = v;
            cov[c * k + b] = v;
        }
    }
    Moments { measure, mean, cov }
}

fn residual_norm(mean: &[f64], target: &[f64]) -> f64 {
    mean.iter().zip(target).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Tilt `exp(log_base)` by block multipliers so its block magnetisations
/// equal `target`. `log_base` may contain `-inf` (zero weight).
pub fn solve_tilt(log_base: &[f64], partition: &SitePartition, target: &[f64]) -> Result<TiltSolution> {
    let k = partition.len();
    if target.len() != k {
        return Err(Error::invalid(format!("target has {} entries, partition has {k} blocks", target.len())));
    }
    if log_base.len() != 1 << partition.n() {
        return Err(Error::invalid("base measure length does not match the partition"));
    }
    for (b, &m) in target.iter().enumerate() {
        if !(m > -1.0 && m < 1.0) {
            return Err(Error::Domain(format!(
                "target magnetisation {m} of block {} is not inside (-1,1)",
                b + 1
            )));
        }
    }
    let masks = partition.masks();
    let sizes = partition.sizes();
    // independent-spin initial guess: theta_A = |A| atanh(m_A)
    let mut theta: Vec<f64> = target.iter().zip(&sizes).map(|(m, &s)| s as f64 * m.atanh()).collect();
    let mut mom = moments(log_base, &masks, &sizes, &theta);
    let mut res = residual_norm(&mom.mean, target);
    let mut it = 0;
    while res > NEWTON_TOL && it < NEWTON_MAX_ITER {
        it += 1;
        let g: Vec<f64> = mom.mean.iter().zip(target).map(|(a, b)| a - b).collect();
        let step = linalg::solve_spd(&mom.cov, &g)?;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(th, d)| th - t * d).collect();
            let m2 = moments(log_base, &masks, &sizes, &cand);
            let r2 = residual_norm(&m2.mean, target);
            if r2 < res {
                theta = cand;
                mom = m2;
                res = r2;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res > NEWTON_ACCEPT {
        return Err(Error::Numeric(format!("Newton did not converge: residual {res:.3e} after {it} iterations")));
    }
    Ok(TiltSolution { theta, measure: mom.measure, residual: res, iterations: it })
}

/// The unique `h` in `Gamma_A` with `m_A(mu_{J,h}) = target`.
pub fn solve_field(j: &InteractionMatrix, partition: &SitePartition, target: &[f64]) -> Result<FieldVector> {
    if partition.n() != j.n() {
        return Err(Error::invalid("partition and J have different site counts"));
    }
    let lw = spin::log_weights(j, &FieldVector::zeros(j.n()))?;
    let sol = solve_tilt(&lw, partition, target)?;
    let per_block: Vec<f64> = sol.theta.iter().zip(partition.sizes()).map(|(t, s)| t / s as f64).collect();
    Ok(FieldVector::block_constant(partition, &per_block))
}
