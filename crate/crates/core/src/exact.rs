//! Brute-force enumeration over `{0,1}^p`.
//!
//! Everything here is ground truth for the sampler and the bounds: the
//! partition function, exact moments and gradients, the exact one-sweep Gibbs
//! transition operator and total-variation distances after `tau` sweeps.
//!
//! States are encoded little-endian (bit `i` of the code is site `i`). Sums
//! over states are split into fixed blocks, compensated within a block and
//! reduced pairwise across blocks, so results do not depend on threading.

use nalgebra::DMatrix;

use crate::error::{MrfError, Result};
use crate::model::{l1_norm, Assignment, Dataset, FeatureIndexer, ModelParams};
use crate::numeric::{pairwise_sum, pairwise_sum_vectors, sigmoid, CompensatedSum};
use crate::par;

/// Largest `p` for state enumeration.
pub const ENUMERATION_CAP: usize = 20;
/// Largest `p` for sweep-kernel operations.
pub const KERNEL_CAP: usize = 12;
/// Largest `p` for which the dense kernel matrix is materialized.
pub const DENSE_KERNEL_CAP: usize = 8;

const BLOCK: usize = 4096;

fn check_cap(op: &'static str, p: usize, cap: usize) -> Result<()> {
    if p > cap {
        Err(MrfError::Capacity { op, p, cap })
    } else {
        Ok(())
    }
}

fn block_ranges(states: usize) -> usize {
    states.div_ceil(BLOCK)
}

/// The normalized Gibbs distribution `P_theta` over all `2^p` states.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    p: usize,
    probs: Vec<f64>,
    log_partition: f64,
}

impl ExactDistribution {
    pub fn new(theta: &ModelParams) -> Result<Self> {
        let p = theta.p();
        check_cap("exact enumeration", p, ENUMERATION_CAP)?;
        let states = 1usize << p;
        let energies: Vec<f64> = par::map_range(block_ranges(states), |b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(states);
            (lo..hi).map(|s| theta.energy_words(&[s as u64])).collect::<Vec<_>>()
        })
        .concat();
        let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let block_sums = par::map_range(block_ranges(states), |b| {
            let mut acc = CompensatedSum::new();
            for e in energies.iter().skip(b * BLOCK).take(BLOCK) {
                acc.add((e - max).exp());
            }
            acc.value()
        });
        let log_partition = max + pairwise_sum(&block_sums).ln();
        let probs = energies.iter().map(|e| (e - log_partition).exp()).collect();
        Ok(Self {
            p,
            probs,
            log_partition,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn prob(&self, x: &Assignment) -> f64 {
        self.probs[x.to_index() as usize]
    }

    pub fn moments(&self) -> Vec<f64> {
        moments_of_distribution(self.p, &self.probs)
    }
}

/// `sum_x dist(x) psi(x)` for an arbitrary distribution over the states.
pub fn moments_of_distribution(p: usize, dist: &[f64]) -> Vec<f64> {
    let idx = FeatureIndexer::new(p).expect("p > 0");
    let m = idx.m();
    let parts = par::map_range(block_ranges(dist.len()), |b| {
        let mut acc = vec![CompensatedSum::new(); m];
        let lo = b * BLOCK;
        for (off, &w) in dist.iter().skip(lo).take(BLOCK).enumerate() {
            if w == 0.0 {
                continue;
            }
            let s = (lo + off) as u64;
            let mut rest_i = s;
            while rest_i != 0 {
                let i = rest_i.trailing_zeros() as usize;
                rest_i &= rest_i - 1;
                let mut rest_j = s >> i;
                while rest_j != 0 {
                    let d = rest_j.trailing_zeros() as usize;
                    rest_j &= rest_j - 1;
                    acc[idx.index(i, i + d)].add(w);
                }
            }
        }
        acc.into_iter().map(|a| a.value()).collect::<Vec<_>>()
    });
    pairwise_sum_vectors(&parts, m)
}

pub fn log_partition(theta: &ModelParams) -> Result<f64> {
    Ok(ExactDistribution::new(theta)?.log_partition())
}

/// `E_theta psi(x)`, the gradient of the log-partition function.
pub fn exact_moments(theta: &ModelParams) -> Result<Vec<f64>> {
    Ok(ExactDistribution::new(theta)?.moments())
}

/// `grad f(theta) = E_theta psi - E_X psi`.
pub fn exact_gradient(theta: &ModelParams, data: &Dataset) -> Result<Vec<f64>> {
    MrfError::check_dim(theta.p(), data.p())?;
    let model = exact_moments(theta)?;
    Ok(model.iter().zip(data.empirical_moments()).map(|(a, b)| a - b).collect())
}

/// Smooth part `f(theta) = -<theta, E_X psi> + A(theta)`.
pub fn exact_smooth_objective(theta: &ModelParams, data: &Dataset) -> Result<f64> {
    let linear = crate::model::unpenalized_objective_terms(theta, data)?;
    Ok(linear + log_partition(theta)?)
}

/// Full penalized objective `f(theta) + lambda ||theta||_1`.
pub fn exact_objective(theta: &ModelParams, data: &Dataset, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(MrfError::invalid("lambda must be non-negative"));
    }
    Ok(exact_smooth_objective(theta, data)? + lambda * l1_norm(theta))
}

/// Exact one-sweep systematic-scan Gibbs operator, stored as the site
/// conditionals and applied one site at a time.
#[derive(Debug, Clone)]
pub struct SweepKernel {
    p: usize,
    /// `cond[i * 2^p + s] = P(X_i = 1 | s_{-i})` for states `s` with bit `i` clear.
    cond: Vec<f64>,
}

/// Builds the sweep operator for sites updated in ascending order.
pub fn gibbs_sweep_kernel(theta: &ModelParams) -> Result<SweepKernel> {
    let p = theta.p();
    check_cap("sweep kernel", p, KERNEL_CAP)?;
    let states = 1usize << p;
    let mut cond = vec![0.0; p * states];
    for i in 0..p {
        let bit = 1u64 << i;
        for s in (0..states as u64).filter(|s| s & bit == 0) {
            // ratio of unnormalized probabilities with site i on vs. off
            let gap = theta.energy_words(&[s | bit]) - theta.energy_words(&[s]);
            cond[i * states + s as usize] = sigmoid(gap);
        }
    }
    Ok(SweepKernel { p, cond })
}

impl SweepKernel {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn states(&self) -> usize {
        1 << self.p
    }

    /// Pushes a distribution (as a row vector) through one full sweep.
    pub fn apply(&self, dist: &mut [f64]) {
        let states = self.states();
        assert_eq!(dist.len(), states);
        for i in 0..self.p {
            self.apply_site(i, dist);
        }
    }

    fn apply_site(&self, i: usize, dist: &mut [f64]) {
        let states = self.states();
        let bit = 1usize << i;
        let cond = &self.cond[i * states..(i + 1) * states];
        for s0 in (0..states).filter(|s| s & bit == 0) {
            let s1 = s0 | bit;
            let mass = dist[s0] + dist[s1];
            let on = cond[s0];
            dist[s1] = mass * on;
            dist[s0] = mass * (1.0 - on);
        }
    }

    /// Dense `2^p x 2^p` row-stochastic matrix; row `s` is the law after one
    /// sweep from state `s`.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        check_cap("dense sweep kernel", self.p, DENSE_KERNEL_CAP)?;
        let n = self.states();
        let mut k = DMatrix::zeros(n, n);
        let mut row = vec![0.0; n];
        for s in 0..n {
            row.iter_mut().for_each(|x| *x = 0.0);
            row[s] = 1.0;
            self.apply(&mut row);
            for (t, &v) in row.iter().enumerate() {
                k[(s, t)] = v;
            }
        }
        Ok(k)
    }
}

pub fn total_variation(u: &[f64], v: &[f64]) -> f64 {
    let diffs: Vec<f64> = u.iter().zip(v).map(|(a, b)| (a - b).abs()).collect();
    0.5 * pairwise_sum(&diffs)
}

/// Law of the chain after `tau` sweeps from an initial law.
pub fn distribution_after(theta: &ModelParams, init: &[f64], tau: usize) -> Result<Vec<f64>> {
    let kernel = gibbs_sweep_kernel(theta)?;
    MrfError::check_dim(kernel.states(), init.len())?;
    let mut dist = init.to_vec();
    for _ in 0..tau {
        kernel.apply(&mut dist);
    }
    Ok(dist)
}

fn point_mass(p: usize, x0: &Assignment) -> Result<Vec<f64>> {
    MrfError::check_dim(p, x0.len())?;
    let mut d = vec![0.0; 1 << p];
    d[x0.to_index() as usize] = 1.0;
    Ok(d)
}

/// `|| P_tau(. | x0) - P_theta ||_TV` for a chain started at `x0`.
/// `tau = 0` gives `1 - P_theta(x0)`.
pub fn exact_tv_after_tau(theta: &ModelParams, x0: &Assignment, tau: usize) -> Result<f64> {
    check_cap("exact tv", theta.p(), KERNEL_CAP)?;
    let target = ExactDistribution::new(theta)?;
    let dist = distribution_after(theta, &point_mass(theta.p(), x0)?, tau)?;
    Ok(total_variation(&dist, target.probs()))
}

/// TV distances for `tau = 1..=tau_max` from one start, sharing the kernel.
pub fn exact_tv_trajectory(theta: &ModelParams, x0: &Assignment, tau_max: usize) -> Result<Vec<f64>> {
    let kernel = gibbs_sweep_kernel(theta)?;
    let target = ExactDistribution::new(theta)?;
    let mut dist = point_mass(theta.p(), x0)?;
    Ok((0..tau_max)
        .map(|_| {
            kernel.apply(&mut dist);
            total_variation(&dist, target.probs())
        })
        .collect())
}

/// Exact conditional mean of the gradient error, `E[delta | init] =
/// E_{P_tau} psi - E_theta psi`, for chains started from the law `init`.
pub fn expected_gradient_error(theta: &ModelParams, init: &[f64], tau: usize) -> Result<Vec<f64>> {
    let after = distribution_after(theta, init, tau)?;
    let sampled = moments_of_distribution(theta.p(), &after);
    let truth = exact_moments(theta)?;
    Ok(sampled.iter().zip(&truth).map(|(a, b)| a - b).collect())
}

/// Same as [`expected_gradient_error`] started from a single state.
pub fn expected_gradient_error_from(theta: &ModelParams, x0: &Assignment, tau: usize) -> Result<Vec<f64>> {
    expected_gradient_error(theta, &point_mass(theta.p(), x0)?, tau)
}

/// Uniform law over all states.
pub fn uniform_distribution(p: usize) -> Vec<f64> {
    let n = 1usize << p;
    vec![1.0 / n as f64; n]
}

/// Exhaustive Dobrushin influence matrix, row-major `p x p`:
/// `C[i][j] = max |P(X_i=1 | x) - P(X_i=1 | y)|` over states `x, y` that
/// differ only at site `j`. The diagonal is zero.
pub fn dobrushin_influence(theta: &ModelParams) -> Result<Vec<f64>> {
    let p = theta.p();
    check_cap("exhaustive influence", p, ENUMERATION_CAP)?;
    let mut c = vec![0.0; p * p];
    let states = 1u64 << p;
    for i in 0..p {
        let bi = 1u64 << i;
        for j in (0..p).filter(|&j| j != i) {
            let bj = 1u64 << j;
            let mut worst: f64 = 0.0;
            for s in (0..states).filter(|s| s & (bi | bj) == 0) {
                let cond = |ctx: u64| sigmoid(theta.energy_words(&[ctx | bi]) - theta.energy_words(&[ctx]));
                worst = worst.max((cond(s | bj) - cond(s)).abs());
            }
            c[i * p + j] = worst;
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: usize, theta: &[f64]) -> ModelParams {
        ModelParams::new(p, theta.to_vec()).unwrap()
    }

    #[test]
    fn log_partition_closed_forms() {
        let zero = ModelParams::zeros(3).unwrap();
        assert!((log_partition(&zero).unwrap() - 8f64.ln()).abs() < 1e-14);
        let c = 1.7;
        let one = params(1, &[c]);
        assert!((log_partition(&one).unwrap() - (1.0 + c.exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn log_partition_four_term_sum() {
        let (a, b, c) = (0.3, -1.2, 0.8);
        let t = params(2, &[a, b, c]);
        let direct = (1.0 + a.exp() + c.exp() + (a + b + c).exp()).ln();
        assert!((log_partition(&t).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn moments_at_zero_and_strong_coupling() {
        let m = exact_moments(&ModelParams::zeros(2).unwrap()).unwrap();
        assert_eq!(m, vec![0.5, 0.25, 0.5]);
        // theta_12 = 20: states (1,0) and (0,1) weigh 1, (1,1) weighs e^20
        let t = params(2, &[0.0, 20.0, 0.0]);
        let z = 3.0 + 20f64.exp();
        let pair = 20f64.exp() / z;
        let single = (1.0 + 20f64.exp()) / z;
        let m = exact_moments(&t).unwrap();
        assert!((m[0] - single).abs() < 1e-14);
        assert!((m[1] - pair).abs() < 1e-14);
        assert!((m[2] - single).abs() < 1e-14);
    }

    #[test]
    fn capacity_errors() {
        let big = ModelParams::zeros(ENUMERATION_CAP + 1).unwrap();
        assert!(matches!(log_partition(&big), Err(MrfError::Capacity { .. })));
        let mid = ModelParams::zeros(KERNEL_CAP + 1).unwrap();
        assert!(matches!(gibbs_sweep_kernel(&mid), Err(MrfError::Capacity { .. })));
        let k = gibbs_sweep_kernel(&ModelParams::zeros(9).unwrap()).unwrap();
        assert!(matches!(k.to_dense(), Err(MrfError::Capacity { .. })));
    }

    #[test]
    fn zero_theta_sweep_is_uniform_after_one_step() {
        let k = gibbs_sweep_kernel(&ModelParams::zeros(3).unwrap())
            .unwrap()
            .to_dense()
            .unwrap();
        for v in k.iter() {
            assert!((v - 0.125).abs() < 1e-15);
        }
        let x0 = Assignment::from_bits(&[1, 0, 1]).unwrap();
        let zero = ModelParams::zeros(3).unwrap();
        assert!(exact_tv_after_tau(&zero, &x0, 1).unwrap() < 1e-15);
        assert!((exact_tv_after_tau(&zero, &x0, 0).unwrap() - 0.875).abs() < 1e-15);
    }

    #[test]
    fn single_site_kernel_closed_form() {
        let c: f64 = 0.9;
        let k = gibbs_sweep_kernel(&params(1, &[c])).unwrap().to_dense().unwrap();
        let on = c.exp() / (1.0 + c.exp());
        for r in 0..2 {
            assert!((k[(r, 0)] - (1.0 - on)).abs() < 1e-15);
            assert!((k[(r, 1)] - on).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_rows_sum_to_one_and_preserve_target() {
        let t = params(3, &[0.4, -1.1, 0.7, -0.2, 1.3, 0.5]);
        let k = gibbs_sweep_kernel(&t).unwrap().to_dense().unwrap();
        for r in 0..8 {
            let s: f64 = k.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let target = ExactDistribution::new(&t).unwrap();
        let pi = nalgebra::RowDVector::from_row_slice(target.probs());
        let moved = &pi * &k;
        for (a, b) in moved.iter().zip(target.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dobrushin_influence_zero_theta() {
        let c = dobrushin_influence(&ModelParams::zeros(4).unwrap()).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn expected_error_from_stationarity_is_zero() {
        let t = params(3, &[0.4, -1.1, 0.7, -0.2, 1.3, 0.5]);
        let target = ExactDistribution::new(&t).unwrap();
        let err = expected_gradient_error(&t, target.probs(), 3).unwrap();
        assert!(err.iter().all(|e| e.abs() < 1e-12));
    }
}
