//! Multi-chain systematic-scan Gibbs sampling and the stochastic gradient
//! oracle built on it.
//!
//! Every chain owns a ChaCha8 stream (`stream = chain index`) keyed from a
//! seed, so an ensemble's trajectory is a pure function of its seed no matter
//! how chains are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MrfError, Result};
use crate::model::{accumulate_statistics, set_bits, words_for, Assignment, Dataset, FeatureIndexer, ModelParams};
use crate::numeric::{mix_seed, sigmoid};
use crate::par;

pub type ChainRng = ChaCha8Rng;

/// Recorded in run metadata so traces can be replayed.
pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64+stream=chain";

const STAT_BLOCK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// i.i.d. fair bits.
    Uniform,
    /// Rows of the dataset drawn with replacement.
    Data,
    /// Final states of the previous ensemble.
    Persistent,
}

impl std::str::FromStr for InitMode {
    type Err = MrfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(InitMode::Uniform),
            "data" => Ok(InitMode::Data),
            "persistent" => Ok(InitMode::Persistent),
            other => Err(MrfError::invalid(format!("unknown init mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainSeed {
    pub key: u64,
    pub stream: u64,
}

/// Dense symmetric coupling matrix with node potentials on the diagonal.
#[derive(Debug, Clone)]
pub struct Couplings {
    p: usize,
    w: Vec<f64>,
}

impl Couplings {
    pub fn new(theta: &ModelParams) -> Self {
        Self {
            p: theta.p(),
            w: theta.coupling_matrix(),
        }
    }

    /// Local field `theta_ii + sum_{k != i} xi_ik x_k`.
    #[inline]
    fn field(&self, i: usize, words: &[u64]) -> f64 {
        let row = &self.w[i * self.p..(i + 1) * self.p];
        let mut f = row[i];
        for k in set_bits(words) {
            if k != i {
                f += row[k];
            }
        }
        f
    }

    #[inline]
    fn sweep_chain(&self, words: &mut [u64], rng: &mut ChainRng) {
        for i in 0..self.p {
            let on = sigmoid(self.field(i, words));
            let mask = 1u64 << (i % 64);
            if rng.random::<f64>() < on {
                words[i / 64] |= mask;
            } else {
                words[i / 64] &= !mask;
            }
        }
    }
}

/// `P(X_i = 1 | x_{-i}) = 1 / (1 + exp(-theta_ii - sum_{k != i} xi_ik x_k))`.
pub fn conditional_prob(theta: &ModelParams, x: &Assignment, i: usize) -> Result<f64> {
    MrfError::check_dim(theta.p(), x.len())?;
    if i >= theta.p() {
        return Err(MrfError::invalid(format!(
            "site {i} out of range for p = {}",
            theta.p()
        )));
    }
    Ok(sigmoid(Couplings::new(theta).field(i, x.words())))
}

/// `q` independent Gibbs chains over `p` binary sites.
#[derive(Debug, Clone)]
pub struct ChainEnsemble {
    p: usize,
    q: usize,
    words: usize,
    states: Vec<u64>,
    rngs: Vec<ChainRng>,
    seeds: Vec<ChainSeed>,
    sweeps_done: usize,
    theta_ref: Option<ModelParams>,
}

impl ChainEnsemble {
    fn seeded(q: usize, p: usize, seed: u64) -> Self {
        let key = mix_seed(seed, 0x0067_6962_6273);
        let seeds: Vec<ChainSeed> = (0..q as u64).map(|stream| ChainSeed { key, stream }).collect();
        let rngs = seeds
            .iter()
            .map(|s| {
                let mut rng = ChainRng::seed_from_u64(s.key);
                rng.set_stream(s.stream);
                rng
            })
            .collect();
        let words = words_for(p);
        Self {
            p,
            q,
            words,
            states: vec![0; q * words],
            rngs,
            seeds,
            sweeps_done: 0,
            theta_ref: None,
        }
    }

    /// Chains started from i.i.d. fair bits; allows a single chain.
    pub(crate) fn uniform(q: usize, p: usize, seed: u64) -> Self {
        let mut e = Self::seeded(q, p, seed);
        let words = e.words;
        par::for_each_chunk_with(&mut e.states, words, &mut e.rngs, |_, chain, rng| {
            for i in 0..p {
                if rng.random::<bool>() {
                    chain[i / 64] |= 1u64 << (i % 64);
                }
            }
        });
        e
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    pub fn seeds(&self) -> &[ChainSeed] {
        &self.seeds
    }

    pub fn theta_ref(&self) -> Option<&ModelParams> {
        self.theta_ref.as_ref()
    }

    pub fn state(&self, c: usize) -> Assignment {
        Assignment::from_words(self.p, &self.states[c * self.words..(c + 1) * self.words])
    }

    pub fn states(&self) -> Vec<Assignment> {
        (0..self.q).map(|c| self.state(c)).collect()
    }

    /// One ascending-order sweep of every chain.
    pub fn sweep(&mut self, couplings: &Couplings) {
        let words = self.words;
        par::for_each_chunk_with(&mut self.states, words, &mut self.rngs, |_, chain, rng| {
            couplings.sweep_chain(chain, rng)
        });
        self.sweeps_done += 1;
    }

    /// Per-feature counts of `psi = 1` across chains.
    pub(crate) fn feature_counts(&self) -> Vec<u64> {
        let idx = FeatureIndexer::new(self.p).expect("p > 0");
        let blocks = self.q.div_ceil(STAT_BLOCK);
        let words = self.words;
        let parts = par::map_range(blocks, |b| {
            let mut counts = vec![0u64; idx.m()];
            let lo = b * STAT_BLOCK;
            let hi = (lo + STAT_BLOCK).min(self.q);
            for c in lo..hi {
                accumulate_statistics(idx, &self.states[c * words..(c + 1) * words], &mut counts);
            }
            counts
        });
        let mut total = vec![0u64; idx.m()];
        for part in parts {
            total.iter_mut().zip(part).for_each(|(t, c)| *t += c);
        }
        total
    }

    /// Moments, unbiased variances and `Delta f` of the current states.
    pub fn estimate(&self, data_moments: &[f64], tau: usize) -> Result<GradEstimate> {
        if self.q < 2 {
            return Err(MrfError::invalid("gradient estimate needs q >= 2 chains"));
        }
        let m = self.p * (self.p + 1) / 2;
        MrfError::check_dim(m, data_moments.len())?;
        let q = self.q as f64;
        let counts = self.feature_counts();
        let sample_moments: Vec<f64> = counts.iter().map(|&c| c as f64 / q).collect();
        // for 0/1 data: sum (x - mean)^2 = c (q - c) / q
        let variances = counts
            .iter()
            .map(|&c| {
                let c = c as f64;
                c * (q - c) / (q * (q - 1.0))
            })
            .collect();
        let delta_f = sample_moments.iter().zip(data_moments).map(|(s, d)| s - d).collect();
        Ok(GradEstimate {
            delta_f,
            sample_moments,
            variances,
            tau,
            q: self.q,
        })
    }
}

/// Stochastic gradient `Delta f = E_S psi - E_X psi` with per-feature sample
/// variances across chains.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub delta_f: Vec<f64>,
    pub sample_moments: Vec<f64>,
    pub variances: Vec<f64>,
    pub tau: usize,
    pub q: usize,
}

/// Starts `q >= 2` chains. `previous` is only consulted in persistent mode;
/// persistent mode without a previous ensemble falls back to uniform.
pub fn init_ensemble(
    q: usize,
    p: usize,
    mode: InitMode,
    master_seed: u64,
    data: Option<&Dataset>,
    previous: Option<ChainEnsemble>,
) -> Result<ChainEnsemble> {
    if q < 2 {
        return Err(MrfError::invalid(format!("need q >= 2 chains, got {q}")));
    }
    FeatureIndexer::new(p)?;
    match mode {
        InitMode::Uniform => Ok(ChainEnsemble::uniform(q, p, master_seed)),
        InitMode::Data => {
            let data = data.ok_or_else(|| MrfError::invalid("`data` init mode needs a dataset"))?;
            MrfError::check_dim(p, data.p())?;
            let mut e = ChainEnsemble::seeded(q, p, master_seed);
            let words = e.words;
            let rows = data.samples();
            par::for_each_chunk_with(&mut e.states, words, &mut e.rngs, |_, chain, rng| {
                let row = &rows[rng.random_range(0..rows.len())];
                chain.copy_from_slice(row.words());
            });
            Ok(e)
        }
        InitMode::Persistent => match previous {
            Some(prev) if prev.q == q && prev.p == p => {
                let mut e = ChainEnsemble::seeded(q, p, master_seed);
                e.states = prev.states;
                e.sweeps_done = prev.sweeps_done;
                e.theta_ref = prev.theta_ref;
                Ok(e)
            }
            Some(prev) => Err(MrfError::invalid(format!(
                "persistent ensemble has shape (q={}, p={}), expected (q={q}, p={p})",
                prev.q, prev.p
            ))),
            None => {
                log::info!("persistent init without previous chains; starting from uniform");
                Ok(ChainEnsemble::uniform(q, p, master_seed))
            }
        },
    }
}

/// Advances every chain by one sweep under `theta`.
pub fn gibbs_one_sweep(ensemble: &mut ChainEnsemble, theta: &ModelParams) -> Result<()> {
    MrfError::check_dim(ensemble.p, theta.p())?;
    ensemble.sweep(&Couplings::new(theta));
    ensemble.theta_ref = Some(theta.clone());
    Ok(())
}

/// Runs `sweeps` sweeps and returns the resulting gradient estimate.
pub fn grad_estimate(
    theta: &ModelParams,
    data_moments: &[f64],
    ensemble: &mut ChainEnsemble,
    sweeps: usize,
) -> Result<GradEstimate> {
    if sweeps == 0 {
        return Err(MrfError::invalid("grad_estimate needs at least one sweep"));
    }
    MrfError::check_dim(ensemble.p, theta.p())?;
    MrfError::check_dim(theta.m(), data_moments.len())?;
    if ensemble.q < 2 {
        return Err(MrfError::invalid("gradient estimate needs q >= 2 chains"));
    }
    let couplings = Couplings::new(theta);
    for _ in 0..sweeps {
        ensemble.sweep(&couplings);
    }
    ensemble.theta_ref = Some(theta.clone());
    ensemble.estimate(data_moments, sweeps)
}

/// Draws `n` states, each the endpoint of an independent chain run for
/// `sweeps` sweeps from uniform bits.
pub fn sample_states(theta: &ModelParams, n: usize, sweeps: usize, seed: u64) -> Vec<Assignment> {
    let mut e = ChainEnsemble::uniform(n, theta.p(), seed);
    let couplings = Couplings::new(theta);
    for _ in 0..sweeps {
        e.sweep(&couplings);
    }
    e.states()
}
