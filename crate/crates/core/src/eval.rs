//! Synthetic ground truth, structure-recovery scoring and the bound
//! tightness table.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{MrfError, Result};
use crate::gibbs::sample_states;
use crate::model::{Dataset, ModelParams};
use crate::numeric::mix_seed;
use crate::optimizer::{run_spg, IterateRecord, SpgConfig, SpgRun, TauStrategy};

/// Magnitude band `[low, high]` for nonzero ground-truth weights; the sign is
/// a fair coin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightBand {
    pub low: f64,
    pub high: f64,
}

impl Default for WeightBand {
    fn default() -> Self {
        Self { low: 1.0, high: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub theta: ModelParams,
    /// Pairs `(i, j)`, `i < j`, with nonzero coupling.
    pub edges: BTreeSet<(usize, usize)>,
}

impl GroundTruth {
    /// Derives the edge set from the nonzero off-diagonal entries.
    pub fn from_params(theta: ModelParams) -> Self {
        let edges = theta
            .indexer()
            .pairs()
            .filter(|&(k, i, j)| i != j && theta.theta()[k] != 0.0)
            .map(|(_, i, j)| (i, j))
            .collect();
        Self { theta, edges }
    }
}

/// Random sparse model: each pair is an edge with probability `edge_prob`,
/// edge weights are uniform on `[-high, -low] U [low, high]`, node
/// potentials are zero.
pub fn generate_ground_truth(p: usize, edge_prob: f64, band: WeightBand, seed: u64) -> Result<GroundTruth> {
    if p < 2 {
        return Err(MrfError::invalid("ground truth needs p >= 2"));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(MrfError::invalid("edge probability must lie in [0, 1]"));
    }
    if !(band.low >= 0.0 && band.high >= band.low && band.high.is_finite()) {
        return Err(MrfError::invalid("weight band must satisfy 0 <= low <= high"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x0074_7275_7468));
    let mut theta = ModelParams::zeros(p)?;
    for i in 0..p {
        for j in i + 1..p {
            if rng.random::<f64>() < edge_prob {
                let magnitude = band.low + (band.high - band.low) * rng.random::<f64>();
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                theta.set(i, j, sign * magnitude)?;
            }
        }
    }
    Ok(GroundTruth::from_params(theta))
}

/// `n` independent chains, each run `burn_in` sweeps from uniform bits; the
/// final states form the dataset.
pub fn sample_dataset(truth: &GroundTruth, n: usize, burn_in: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(MrfError::invalid("dataset size must be at least 1"));
    }
    Dataset::new(sample_states(&truth.theta, n, burn_in, mix_seed(seed, 0x64617461)))
}

/// Area under the ROC curve of `scores` against binary `labels`, with tied
/// scores counted as half (equivalently, the trapezoidal ROC area).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    MrfError::check_dim(scores.len(), labels.len())?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MrfError::UndefinedAuc(format!(
            "{positives} positives and {negatives} negatives"
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MrfError::invalid("scores contain NaN"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mann-Whitney: sum of midranks of the positives
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        rank_sum += midrank * order[start..end].iter().filter(|&&i| labels[i]).count() as f64;
        start = end;
    }
    let (np, nn) = (positives as f64, negatives as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Scores each off-diagonal pair by `|theta_hat_ij|` against the true edges.
pub fn structure_auc(theta_hat: &ModelParams, truth: &GroundTruth) -> Result<f64> {
    MrfError::check_dim(truth.theta.p(), theta_hat.p())?;
    let (scores, labels): (Vec<f64>, Vec<bool>) = theta_hat
        .indexer()
        .pairs()
        .filter(|&(_, i, j)| i != j)
        .map(|(k, i, j)| (theta_hat.theta()[k].abs(), truth.edges.contains(&(i, j))))
        .unzip();
    roc_auc(&scores, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasuredError {
    /// `||E[delta | init]||_2` from exact enumeration.
    ExpectedExact,
    /// `||delta||_2` of the single realized estimate.
    Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessRow {
    pub iter: usize,
    pub measured: f64,
    pub asym_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessTable {
    pub kind: MeasuredError,
    pub rows: Vec<TightnessRow>,
    /// Fraction of iterations with `asym_bound >= measured`.
    pub covered_fraction: f64,
}

impl TightnessTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,measured,asym_bound\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.iter, r.measured, r.asym_bound));
        }
        out
    }
}

/// Pairs each iteration's measured gradient error with its bound. Uses the
/// exact expected error when every record has it, the realized error
/// otherwise.
pub fn bound_tightness_trace(records: &[IterateRecord]) -> Result<TightnessTable> {
    let exact: Vec<_> = records
        .iter()
        .map(|r| r.exact.as_ref())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| MrfError::invalid("run was not instrumented with exact gradient errors"))?;
    if records.is_empty() {
        return Err(MrfError::invalid("empty run trace"));
    }
    let use_expected = exact.iter().all(|e| e.expected_delta_norm.is_some());
    let kind = if use_expected {
        MeasuredError::ExpectedExact
    } else {
        MeasuredError::Realized
    };
    let rows: Vec<TightnessRow> = records
        .iter()
        .zip(&exact)
        .map(|(r, e)| TightnessRow {
            iter: r.iter,
            measured: if use_expected {
                e.expected_delta_norm.expect("checked above")
            } else {
                e.delta_norm
            },
            asym_bound: r.asym_bound,
        })
        .collect();
    let covered = rows.iter().filter(|r| r.asym_bound >= r.measured).count();
    Ok(TightnessTable {
        kind,
        covered_fraction: covered as f64 / rows.len() as f64,
        rows,
    })
}

/// The four methods compared on synthetic data: fixed `tau = 1`, fixed
/// `tau = 30`, `tau = k` at iteration `k`, and the adaptive strategy.
pub const SYNTHETIC_STRATEGIES: [(&str, TauStrategy); 4] = [
    ("spg-1", TauStrategy::Fixed(1)),
    ("spg-30", TauStrategy::Fixed(30)),
    ("spg-inc", TauStrategy::Increasing),
    ("tay", TauStrategy::Tay),
];

/// One learning run scored against the ground truth after every step.
#[derive(Debug, Clone)]
pub struct ScoredRun {
    pub label: String,
    pub run: SpgRun,
    /// `aucs[k]` scores the iterate produced by step `k`.
    pub aucs: Vec<f64>,
}

impl ScoredRun {
    pub fn final_auc(&self) -> f64 {
        self.aucs.last().copied().unwrap_or(f64::NAN)
    }

    /// Compute time until the AUC first comes within `tol` of its final
    /// value.
    pub fn time_to_final_auc(&self, tol: f64) -> f64 {
        let last = self.final_auc();
        self.aucs
            .iter()
            .zip(&self.run.records)
            .find(|(a, _)| (*a - last).abs() <= tol)
            .map(|(_, r)| r.time_ms)
            .unwrap_or(f64::NAN)
    }

    pub fn median_tau(&self) -> f64 {
        let mut taus: Vec<usize> = self.run.records.iter().map(|r| r.tau).collect();
        taus.sort_unstable();
        match taus.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => taus[n / 2] as f64,
            n => (taus[n / 2 - 1] + taus[n / 2]) as f64 / 2.0,
        }
    }
}

/// Runs SPG on `data` and scores each iterate's structure against `truth`.
pub fn scored_run(label: &str, data: &Dataset, truth: &GroundTruth, cfg: &SpgConfig) -> Result<ScoredRun> {
    let run = run_spg(data, cfg)?;
    let p = truth.theta.p();
    let mut aucs = Vec::with_capacity(run.records.len());
    for r in run.records.iter().skip(1) {
        aucs.push(structure_auc(&ModelParams::new(p, r.theta.clone())?, truth)?);
    }
    if !run.records.is_empty() {
        aucs.push(structure_auc(&run.theta, truth)?);
    }
    Ok(ScoredRun {
        label: label.to_string(),
        run,
        aucs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::ExactTrace;

    #[test]
    fn edge_probability_extremes() {
        let empty = generate_ground_truth(6, 0.0, WeightBand::default(), 1).unwrap();
        assert!(empty.edges.is_empty());
        assert!(empty.theta.theta().iter().all(|&t| t == 0.0));
        let full = generate_ground_truth(3, 1.0, WeightBand::default(), 1).unwrap();
        assert_eq!(full.edges.len(), 3);
        for &(i, j) in &full.edges {
            let w = full.theta.xi(i, j).abs();
            assert!((1.0..=2.0).contains(&w));
        }
        for i in 0..3 {
            assert_eq!(full.theta.xi(i, i), 0.0);
        }
        assert!(generate_ground_truth(1, 0.3, WeightBand::default(), 1).is_err());
        assert!(generate_ground_truth(4, 1.3, WeightBand::default(), 1).is_err());
    }

    #[test]
    fn auc_examples() {
        let truth = generate_ground_truth(5, 0.5, WeightBand::default(), 3).unwrap();
        assert!(!truth.edges.is_empty() && truth.edges.len() < 10);
        assert_eq!(structure_auc(&truth.theta, &truth).unwrap(), 1.0);
        let zero = ModelParams::zeros(5).unwrap();
        assert_eq!(structure_auc(&zero, &truth).unwrap(), 0.5);
        let none = GroundTruth::from_params(ModelParams::zeros(4).unwrap());
        assert!(matches!(
            structure_auc(&ModelParams::zeros(4).unwrap(), &none),
            Err(MrfError::UndefinedAuc(_))
        ));
    }

    #[test]
    fn auc_matches_pair_counting() {
        let scores = [0.9, 0.1, 0.4, 0.4, 0.7, 0.2, 0.4];
        let labels = [true, false, true, false, false, true, true];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((roc_auc(&scores, &labels).unwrap() - wins / pairs).abs() < 1e-15);
    }

    #[test]
    fn scored_run_tracks_every_iterate() {
        let truth = generate_ground_truth(4, 0.5, WeightBand::default(), 6).unwrap();
        let data = sample_dataset(&truth, 200, 20, 6).unwrap();
        let cfg = SpgConfig {
            q: 50,
            strategy: TauStrategy::Fixed(2),
            max_iters: 5,
            ..SpgConfig::default()
        };
        let s = scored_run("x", &data, &truth, &cfg).unwrap();
        assert_eq!(s.aucs.len(), 5);
        assert_eq!(s.final_auc(), structure_auc(&s.run.theta, &truth).unwrap());
        assert_eq!(s.median_tau(), 2.0);
        assert!(s.time_to_final_auc(0.0) <= s.run.records[4].time_ms);
    }

    #[test]
    fn sampled_dataset_is_seeded() {
        let truth = generate_ground_truth(4, 0.5, WeightBand::default(), 2).unwrap();
        let a = sample_dataset(&truth, 20, 10, 5).unwrap();
        let b = sample_dataset(&truth, 20, 10, 5).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_eq!(a.n(), 20);
        assert!(sample_dataset(&truth, 0, 10, 5).is_err());
    }

    fn record(iter: usize, bound: f64, exact: Option<ExactTrace>) -> IterateRecord {
        IterateRecord {
            iter,
            theta: vec![0.0; 3],
            tau: 1,
            g_norm: 0.0,
            asym_bound: bound,
            time_ms: 0.0,
            criterion_unmet: false,
            conservative_ok: None,
            exact,
        }
    }

    #[test]
    fn tightness_trace_prefers_expected_error() {
        let e = |expected| ExactTrace {
            objective: 0.0,
            delta_norm: 0.3,
            delta_dot_g: 0.0,
            expected_delta_norm: expected,
        };
        let t =
            bound_tightness_trace(&[record(0, 0.0, Some(e(Some(0.0)))), record(1, 0.2, Some(e(Some(0.1))))]).unwrap();
        assert_eq!(t.kind, MeasuredError::ExpectedExact);
        assert_eq!(t.covered_fraction, 1.0);
        assert_eq!(t.rows[0].measured, 0.0);
        assert!(t.to_csv().starts_with("iter,measured,asym_bound\n0,0,0\n"));

        let t = bound_tightness_trace(&[record(0, 0.2, Some(e(None)))]).unwrap();
        assert_eq!(t.kind, MeasuredError::Realized);
        assert_eq!(t.covered_fraction, 0.0);

        assert!(bound_tightness_trace(&[record(0, 0.2, None)]).is_err());
    }
}
