//! Stochastic proximal gradient (SPG) for the L1-penalized likelihood.
//!
//! Each iteration estimates the gradient with Gibbs chains and applies the
//! soft-thresholding prox. The number of sweeps per iteration comes from a
//! [`TauStrategy`]; the adaptive strategy [`TauStrategy::Tay`] keeps sweeping
//! until the gradient-error bound `2 sqrt(m) G(B^tau)` drops below half the
//! norm of the generalized gradient.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundReport};
use crate::error::{MrfError, Result};
use crate::exact;
use crate::gibbs::{init_ensemble, ChainEnsemble, Couplings, GradEstimate, InitMode};
use crate::model::{soft_threshold_scalar, Dataset, ModelParams};
use crate::numeric::{dot, l2_norm, mix_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauStrategy {
    Fixed(usize),
    /// `tau = k` at the k-th iteration (1-based).
    Increasing,
    Tay,
}

impl FromStr for TauStrategy {
    type Err = MrfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tay" => Ok(TauStrategy::Tay),
            "increasing" | "inc" => Ok(TauStrategy::Increasing),
            _ => {
                let tau = s
                    .strip_prefix("fixed:")
                    .and_then(|t| t.parse::<usize>().ok())
                    .filter(|&t| t >= 1)
                    .ok_or_else(|| {
                        MrfError::invalid(format!(
                            "unknown strategy `{s}` (expected fixed:<tau>, increasing or tay)"
                        ))
                    })?;
                Ok(TauStrategy::Fixed(tau))
            }
        }
    }
}

impl fmt::Display for TauStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauStrategy::Fixed(t) => write!(f, "fixed:{t}"),
            TauStrategy::Increasing => f.write_str("increasing"),
            TauStrategy::Tay => f.write_str("tay"),
        }
    }
}

impl Serialize for TauStrategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TauStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Starting point of the iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaInit {
    Zero,
    /// i.i.d. uniform on `[-scale, scale]`.
    Random {
        scale: f64,
    },
}

impl FromStr for ThetaInit {
    type Err = MrfError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "zero" {
            return Ok(ThetaInit::Zero);
        }
        let scale = s
            .strip_prefix("random:")
            .or_else(|| s.strip_prefix("random(").and_then(|r| r.strip_suffix(')')))
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| MrfError::invalid(format!("unknown init `{s}` (expected zero or random:<scale>)")))?;
        Ok(ThetaInit::Random { scale })
    }
}

impl fmt::Display for ThetaInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaInit::Zero => f.write_str("zero"),
            ThetaInit::Random { scale } => write!(f, "random:{scale}"),
        }
    }
}

impl Serialize for ThetaInit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ThetaInit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpgConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub q: usize,
    pub strategy: TauStrategy,
    pub tau_max: usize,
    pub max_iters: usize,
    /// Stop once `||theta_{k+1} - theta_k|| / max(1, ||theta_k||)` falls below
    /// this; `0` disables the test.
    pub stop_tol: f64,
    pub init_mode: InitMode,
    pub theta_init: ThetaInit,
    pub master_seed: u64,
    pub beta_total: f64,
    /// Evaluate the non-asymptotic criterion for TAY steps (logged only).
    pub conservative_check: bool,
    /// Record exact objective and gradient error (small `p` only).
    pub instrument_exact: bool,
}

impl Default for SpgConfig {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            lambda: 0.025,
            q: 2000,
            strategy: TauStrategy::Tay,
            tau_max: 500,
            max_iters: 100,
            stop_tol: 0.0,
            init_mode: InitMode::Uniform,
            theta_init: ThetaInit::Zero,
            master_seed: 0,
            beta_total: bounds::DEFAULT_BETA_TOTAL,
            conservative_check: false,
            instrument_exact: false,
        }
    }
}

impl SpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(MrfError::invalid("alpha must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(MrfError::invalid("lambda must be non-negative"));
        }
        if self.q < 2 {
            return Err(MrfError::invalid("q must be at least 2"));
        }
        if self.tau_max < 1 {
            return Err(MrfError::invalid("tau_max must be at least 1"));
        }
        if let TauStrategy::Fixed(0) = self.strategy {
            return Err(MrfError::invalid("fixed tau must be at least 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(MrfError::invalid("stop_tol must be non-negative"));
        }
        if !(self.beta_total > 0.0 && self.beta_total < 1.0) {
            return Err(MrfError::invalid("beta_total must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// `G_alpha = (theta - S_{alpha lambda}(theta - alpha Delta f)) / alpha`.
pub fn generalized_gradient(theta: &[f64], delta_f: &[f64], alpha: f64, lambda: f64) -> Result<Vec<f64>> {
    MrfError::check_dim(theta.len(), delta_f.len())?;
    if !(alpha > 0.0) {
        return Err(MrfError::invalid("alpha must be positive"));
    }
    let t = alpha * lambda;
    Ok(theta
        .iter()
        .zip(delta_f)
        .map(|(&th, &g)| (th - soft_threshold_scalar(th - alpha * g, t)) / alpha)
        .collect())
}

fn prox_step(theta: &[f64], delta_f: &[f64], alpha: f64, lambda: f64) -> Vec<f64> {
    let t = alpha * lambda;
    theta
        .iter()
        .zip(delta_f)
        .map(|(&th, &g)| soft_threshold_scalar(th - alpha * g, t))
        .collect()
}

/// `theta_{k+1} = S_{alpha lambda}(theta_k - alpha Delta f)`.
pub fn spg_step(theta: &ModelParams, grad: &GradEstimate, cfg: &SpgConfig) -> Result<ModelParams> {
    MrfError::check_dim(theta.m(), grad.delta_f.len())?;
    ModelParams::new(
        theta.p(),
        prox_step(theta.theta(), &grad.delta_f, cfg.alpha, cfg.lambda),
    )
}

/// Outcome of the non-asymptotic step criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConservativeVerdict {
    pub passed: bool,
    pub reason: Option<&'static str>,
}

/// `0 < 2 sqrt(m) (G(B^tau) + sqrt(sum eps_j^2 / 4m)) <= ||G_alpha|| / 2`.
pub fn conservative_q_check(report: &BoundReport, g_norm: f64) -> ConservativeVerdict {
    let lhs = report.nonasym_bound;
    let fail = |reason| ConservativeVerdict {
        passed: false,
        reason: Some(reason),
    };
    if !(g_norm > 0.0) {
        fail("generalized gradient is zero")
    } else if !(lhs > 0.0) {
        fail("bound is not strictly positive")
    } else if lhs > 0.5 * g_norm {
        fail("bound exceeds half the generalized gradient norm")
    } else {
        ConservativeVerdict {
            passed: true,
            reason: None,
        }
    }
}

/// What the adaptive strategy settled on for one iteration.
#[derive(Debug, Clone)]
pub struct TaySelection {
    pub estimate: GradEstimate,
    pub tau: usize,
    pub g_norm: f64,
    pub report: BoundReport,
    pub criterion_unmet: bool,
    pub conservative: Option<ConservativeVerdict>,
}

/// Sweeps the ensemble one step at a time from its current state until
/// `2 sqrt(m) G(B^tau) < ||G_alpha||_2 / 2`, with `G_alpha` recomputed from
/// the estimate at each `tau`. Stops at `cfg.tau_max` with
/// `criterion_unmet` if the bound never gets there; when the bound cannot
/// decay at all the chains are swept straight to `tau_max`.
pub fn tay_select_tau(
    theta: &ModelParams,
    data_moments: &[f64],
    cfg: &SpgConfig,
    ensemble: &mut ChainEnsemble,
) -> Result<TaySelection> {
    MrfError::check_dim(theta.m(), data_moments.len())?;
    MrfError::check_dim(theta.p(), ensemble.p())?;
    let m = theta.m();
    let scale = 2.0 * (m as f64).sqrt();
    let couplings = Couplings::new(theta);
    let influence = bounds::influence_matrix(theta);
    let divergent = influence.bound_divergent();
    let mut sums = influence.grand_sums();

    let mut tau = 0;
    let (estimate, g_norm, grand_sum, unmet) = loop {
        ensemble.sweep(&couplings);
        tau += 1;
        let grand_sum = sums.next().expect("infinite iterator");
        if divergent && tau < cfg.tau_max {
            continue;
        }
        let est = ensemble.estimate(data_moments, tau)?;
        let g = generalized_gradient(theta.theta(), &est.delta_f, cfg.alpha, cfg.lambda)?;
        let g_norm = l2_norm(&g);
        if scale * grand_sum < 0.5 * g_norm {
            break (est, g_norm, grand_sum, false);
        }
        if tau >= cfg.tau_max {
            break (est, g_norm, grand_sum, true);
        }
    };

    let betas = bounds::uniform_betas(m, cfg.beta_total);
    let report = bounds::report_from_grand_sum(m, tau, grand_sum, divergent, &estimate, &betas)?;
    let conservative = cfg.conservative_check.then(|| {
        let verdict = conservative_q_check(&report, g_norm);
        if !verdict.passed {
            log::debug!(
                "conservative criterion not met at tau={tau}: {}",
                verdict.reason.unwrap_or("")
            );
        }
        verdict
    });
    Ok(TaySelection {
        estimate,
        tau,
        g_norm,
        report,
        criterion_unmet: unmet,
        conservative,
    })
}

/// Exact quantities recorded for small models.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTrace {
    /// `g(theta_k)`.
    pub objective: f64,
    /// `||delta(theta_k)||_2` of the realized estimate.
    pub delta_norm: f64,
    /// `delta^T G_alpha`.
    pub delta_dot_g: f64,
    /// `||E[delta | init]||_2` when the chain start law is known.
    pub expected_delta_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    /// 0-based iteration index; the record describes the step from `theta`.
    pub iter: usize,
    pub theta: Vec<f64>,
    pub tau: usize,
    pub g_norm: f64,
    pub asym_bound: f64,
    /// Cumulative compute time in milliseconds, instrumentation excluded.
    pub time_ms: f64,
    pub criterion_unmet: bool,
    pub conservative_ok: Option<bool>,
    pub exact: Option<ExactTrace>,
}

#[derive(Debug, Clone)]
pub struct SpgRun {
    pub theta: ModelParams,
    pub records: Vec<IterateRecord>,
    /// Mean of `theta_1 .. theta_kappa`; dense, not used for structure.
    pub averaged_theta: Vec<f64>,
    pub final_exact_objective: Option<f64>,
}

fn initial_theta(p: usize, init: ThetaInit, seed: u64) -> Result<ModelParams> {
    match init {
        ThetaInit::Zero => ModelParams::zeros(p),
        ThetaInit::Random { scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x0074_6865_7461));
            let m = p * (p + 1) / 2;
            let theta = (0..m).map(|_| rng.random_range(-1.0..=1.0) * scale).collect();
            ModelParams::new(p, theta)
        }
    }
}

fn tau_for(strategy: TauStrategy, k: usize, tau_max: usize) -> usize {
    match strategy {
        TauStrategy::Fixed(t) => t,
        TauStrategy::Increasing => (k + 1).min(tau_max),
        TauStrategy::Tay => unreachable!("adaptive tau is selected by the bound"),
    }
}

/// Runs SPG from `cfg.theta_init` until `max_iters` or the relative-change
/// stopping rule fires.
pub fn run_spg(data: &Dataset, cfg: &SpgConfig) -> Result<SpgRun> {
    cfg.validate()?;
    let p = data.p();
    let m = data.indexer().m();
    let data_moments = data.empirical_moments();
    let instrument = cfg.instrument_exact && p <= exact::ENUMERATION_CAP;
    if cfg.instrument_exact && !instrument {
        log::warn!("exact instrumentation skipped: p = {p} exceeds the enumeration cap");
    }
    let mut theta = initial_theta(p, cfg.theta_init, cfg.master_seed)?;
    let mut records = Vec::with_capacity(cfg.max_iters);
    let mut previous: Option<ChainEnsemble> = None;
    let mut avg = vec![0.0; m];
    let mut elapsed = 0.0;

    for k in 0..cfg.max_iters {
        let started = Instant::now();
        let seed = mix_seed(cfg.master_seed, k as u64 + 1);
        let mut ensemble = init_ensemble(cfg.q, p, cfg.init_mode, seed, Some(data), previous.take())?;

        let (estimate, tau, g, asym, unmet, conservative_ok) = match cfg.strategy {
            TauStrategy::Tay => {
                let sel = tay_select_tau(&theta, data_moments, cfg, &mut ensemble)?;
                let g = generalized_gradient(theta.theta(), &sel.estimate.delta_f, cfg.alpha, cfg.lambda)?;
                (
                    sel.estimate,
                    sel.tau,
                    g,
                    sel.report.asym_bound,
                    sel.criterion_unmet,
                    sel.conservative.map(|v| v.passed),
                )
            }
            strategy => {
                let tau = tau_for(strategy, k, cfg.tau_max);
                let est = crate::gibbs::grad_estimate(&theta, data_moments, &mut ensemble, tau)?;
                let g = generalized_gradient(theta.theta(), &est.delta_f, cfg.alpha, cfg.lambda)?;
                let asym = bounds::asym_bound(&theta, tau)?;
                (est, tau, g, asym, false, None)
            }
        };
        let next = ModelParams::new(p, prox_step(theta.theta(), &estimate.delta_f, cfg.alpha, cfg.lambda))?;
        elapsed += started.elapsed().as_secs_f64() * 1e3;

        let exact_trace = if instrument {
            Some(exact_trace(&theta, data, &estimate, &g, cfg, tau)?)
        } else {
            None
        };
        let g_norm = l2_norm(&g);
        records.push(IterateRecord {
            iter: k,
            theta: theta.theta().to_vec(),
            tau,
            g_norm,
            asym_bound: asym,
            time_ms: elapsed,
            criterion_unmet: unmet,
            conservative_ok,
            exact: exact_trace,
        });

        let change: Vec<f64> = next.theta().iter().zip(theta.theta()).map(|(a, b)| a - b).collect();
        let rel = l2_norm(&change) / l2_norm(theta.theta()).max(1.0);
        avg.iter_mut().zip(next.theta()).for_each(|(a, t)| *a += t);
        theta = next;
        if cfg.init_mode == InitMode::Persistent {
            previous = Some(ensemble);
        }
        if cfg.stop_tol > 0.0 && rel < cfg.stop_tol {
            break;
        }
    }

    let iters = records.len().max(1) as f64;
    avg.iter_mut().for_each(|a| *a /= iters);
    let final_exact_objective = if instrument {
        Some(exact::exact_objective(&theta, data, cfg.lambda)?)
    } else {
        None
    };
    Ok(SpgRun {
        theta,
        records,
        averaged_theta: avg,
        final_exact_objective,
    })
}

fn exact_trace(
    theta: &ModelParams,
    data: &Dataset,
    estimate: &GradEstimate,
    g: &[f64],
    cfg: &SpgConfig,
    tau: usize,
) -> Result<ExactTrace> {
    let objective = exact::exact_objective(theta, data, cfg.lambda)?;
    let grad = exact::exact_gradient(theta, data)?;
    let delta: Vec<f64> = estimate.delta_f.iter().zip(&grad).map(|(a, b)| a - b).collect();
    let expected_delta_norm = if cfg.init_mode == InitMode::Uniform && theta.p() <= exact::KERNEL_CAP {
        let init = exact::uniform_distribution(theta.p());
        Some(l2_norm(&exact::expected_gradient_error(theta, &init, tau)?))
    } else {
        None
    };
    Ok(ExactTrace {
        objective,
        delta_norm: l2_norm(&delta),
        delta_dot_g: dot(&delta, g),
        expected_delta_norm,
    })
}

/// Deterministic proximal gradient with the exact gradient; used as a
/// reference minimizer for small models.
pub fn exact_proximal_gradient(
    data: &Dataset,
    alpha: f64,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<ModelParams> {
    let mut theta = ModelParams::zeros(data.p())?;
    for _ in 0..max_iters {
        let grad = exact::exact_gradient(&theta, data)?;
        let next = ModelParams::new(data.p(), prox_step(theta.theta(), &grad, alpha, lambda))?;
        let step: f64 = next
            .theta()
            .iter()
            .zip(theta.theta())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        theta = next;
        if step < tol {
            break;
        }
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Assignment;

    #[test]
    fn strategy_parsing_roundtrips() {
        for s in ["fixed:30", "increasing", "tay"] {
            let parsed: TauStrategy = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
        assert!("fixed:0".parse::<TauStrategy>().is_err());
        assert!("fixed".parse::<TauStrategy>().is_err());
        assert!("adaptive".parse::<TauStrategy>().is_err());
        assert_eq!(
            "random(0.5)".parse::<ThetaInit>().unwrap(),
            ThetaInit::Random { scale: 0.5 }
        );
        assert_eq!("zero".parse::<ThetaInit>().unwrap(), ThetaInit::Zero);
    }

    #[test]
    fn generalized_gradient_examples() {
        let df = [0.3, -1.2, 0.0];
        assert_eq!(
            generalized_gradient(&[0.5, 1.0, -2.0], &df, 0.4, 0.0).unwrap(),
            df.to_vec()
        );
        assert_eq!(
            generalized_gradient(&[0.0; 3], &[0.0; 3], 0.4, 7.0).unwrap(),
            vec![0.0; 3]
        );
        // inner = 1 - 0.5 * 0.6 = 0.7, S_0.2(0.7) = 0.5, G = (1 - 0.5) / 0.5
        let g = generalized_gradient(&[1.0], &[0.6], 0.5, 0.4).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!(generalized_gradient(&[1.0], &[0.6], 0.0, 0.4).is_err());
    }

    fn fake_estimate(delta_f: Vec<f64>) -> GradEstimate {
        let m = delta_f.len();
        GradEstimate {
            delta_f,
            sample_moments: vec![0.0; m],
            variances: vec![0.0; m],
            tau: 1,
            q: 2,
        }
    }

    #[test]
    fn spg_step_shrinks_to_exact_zero() {
        let cfg = SpgConfig {
            alpha: 0.5,
            lambda: 1.0,
            ..SpgConfig::default()
        };
        let mut theta = ModelParams::new(2, vec![1.2, -0.7, 0.3]).unwrap();
        let zero = fake_estimate(vec![0.0; 3]);
        for _ in 0..3 {
            theta = spg_step(&theta, &zero, &cfg).unwrap();
        }
        assert_eq!(theta.theta(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn spg_step_without_penalty_is_gradient_step() {
        let cfg = SpgConfig {
            alpha: 0.25,
            lambda: 0.0,
            ..SpgConfig::default()
        };
        let theta = ModelParams::new(2, vec![1.0, -0.5, 0.25]).unwrap();
        let next = spg_step(&theta, &fake_estimate(vec![0.4, 0.8, -1.2]), &cfg).unwrap();
        assert_eq!(next.theta(), &[0.9, -0.7, 0.55]);
    }

    #[test]
    fn conservative_check_boundaries() {
        let report = |nonasym: f64| BoundReport {
            tau: 1,
            grand_sum: 0.0,
            asym_bound: 0.0,
            eps: vec![],
            nonasym_bound: nonasym,
            confidence: 0.99,
            low_confidence: false,
            overflow: false,
            bound_divergent: false,
        };
        assert!(!conservative_q_check(&report(0.0), 1.0).passed);
        assert!(!conservative_q_check(&report(0.1), 0.0).passed);
        assert!(conservative_q_check(&report(0.1), 1.0).passed);
        assert!(conservative_q_check(&report(0.5), 1.0).passed);
        assert!(!conservative_q_check(&report(0.6), 1.0).passed);
    }

    #[test]
    fn tay_accepts_first_sweep_at_zero() {
        let data = Dataset::new(vec![Assignment::ones(3); 4]).unwrap();
        let theta = ModelParams::zeros(3).unwrap();
        let cfg = SpgConfig {
            q: 100,
            ..SpgConfig::default()
        };
        let mut e = init_ensemble(100, 3, InitMode::Uniform, 1, None, None).unwrap();
        let sel = tay_select_tau(&theta, data.empirical_moments(), &cfg, &mut e).unwrap();
        assert_eq!(sel.tau, 1);
        assert!(!sel.criterion_unmet);
        assert!(sel.g_norm > 0.0);
        assert_eq!(sel.report.asym_bound, 0.0);
    }

    #[test]
    fn tay_runs_to_cap_when_bound_cannot_decay() {
        // strong ferromagnetic couplings: U has entries near 1
        let p = 4;
        let mut theta = ModelParams::zeros(p).unwrap();
        for i in 0..p {
            theta.set(i, i, -9.0).unwrap();
            for j in i + 1..p {
                theta.set(i, j, 6.0).unwrap();
            }
        }
        let inf = bounds::influence_matrix(&theta);
        assert!(inf.bound_divergent(), "radius {}", inf.b_spectral_radius);
        let data = Dataset::new(vec![Assignment::ones(p); 2]).unwrap();
        let cfg = SpgConfig {
            q: 20,
            tau_max: 15,
            ..SpgConfig::default()
        };
        let mut e = init_ensemble(20, p, InitMode::Uniform, 3, None, None).unwrap();
        let sel = tay_select_tau(&theta, data.empirical_moments(), &cfg, &mut e).unwrap();
        assert_eq!(sel.tau, 15);
        assert!(sel.criterion_unmet);
        assert!(sel.report.bound_divergent);
        assert_eq!(e.sweeps_done(), 15);
    }

    #[test]
    fn heavy_penalty_drives_theta_to_zero() {
        let rows = vec![
            Assignment::from_bits(&[1, 0, 1]).unwrap(),
            Assignment::from_bits(&[0, 1, 1]).unwrap(),
        ];
        let data = Dataset::new(rows).unwrap();
        let cfg = SpgConfig {
            lambda: 10.0,
            q: 50,
            strategy: TauStrategy::Fixed(2),
            max_iters: 10,
            theta_init: ThetaInit::Random { scale: 1.0 },
            master_seed: 4,
            ..SpgConfig::default()
        };
        let run = run_spg(&data, &cfg).unwrap();
        assert!(run.theta.theta().iter().all(|&t| t == 0.0));
        assert_eq!(run.records.len(), 10);
    }

    #[test]
    fn increasing_schedule_uses_iteration_number() {
        let data = Dataset::new(vec![
            Assignment::from_bits(&[1, 0]).unwrap(),
            Assignment::from_bits(&[1, 1]).unwrap(),
        ])
        .unwrap();
        let cfg = SpgConfig {
            q: 10,
            strategy: TauStrategy::Increasing,
            max_iters: 5,
            ..SpgConfig::default()
        };
        let run = run_spg(&data, &cfg).unwrap();
        let taus: Vec<usize> = run.records.iter().map(|r| r.tau).collect();
        assert_eq!(taus, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn stop_tolerance_ends_run_early() {
        let data = Dataset::new(vec![
            Assignment::from_bits(&[1, 0]).unwrap(),
            Assignment::from_bits(&[0, 1]).unwrap(),
        ])
        .unwrap();
        let cfg = SpgConfig {
            q: 10,
            lambda: 5.0,
            strategy: TauStrategy::Fixed(1),
            max_iters: 50,
            stop_tol: 1e-9,
            ..SpgConfig::default()
        };
        let run = run_spg(&data, &cfg).unwrap();
        assert_eq!(run.records.len(), 1);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            SpgConfig {
                alpha: 0.0,
                ..SpgConfig::default()
            },
            SpgConfig {
                lambda: -1.0,
                ..SpgConfig::default()
            },
            SpgConfig {
                q: 1,
                ..SpgConfig::default()
            },
            SpgConfig {
                tau_max: 0,
                ..SpgConfig::default()
            },
            SpgConfig {
                beta_total: 1.5,
                ..SpgConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
