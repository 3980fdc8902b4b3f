//! Binary pairwise Markov random fields: feature layout, parameters,
//! assignments, datasets and the inference-free pieces of the objective.
//!
//! Sites are 0-based throughout the API. Features are laid out row-major over
//! the upper triangle including the diagonal:
//! `(0,0), (0,1), ..., (0,p-1), (1,1), ..., (p-1,p-1)`.

use serde::{Deserialize, Serialize};

use crate::error::{MrfError, Result};

/// Bijection between feature indices `0..m` and site pairs `i <= j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureIndexer {
    p: usize,
}

impl FeatureIndexer {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(MrfError::invalid("node count must be positive"));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of features, `p(p+1)/2`.
    pub fn m(&self) -> usize {
        self.p * (self.p + 1) / 2
    }

    #[inline]
    fn row_offset(&self, i: usize) -> usize {
        // sum_{r < i} (p - r)
        i * self.p - i * i.saturating_sub(1) / 2
    }

    /// Linear index of the unordered pair `{i, j}`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        debug_assert!(b < self.p);
        self.row_offset(a) + (b - a)
    }

    pub fn checked_index(&self, i: usize, j: usize) -> Result<usize> {
        if i >= self.p || j >= self.p {
            return Err(MrfError::invalid(format!(
                "pair ({i}, {j}) out of range for p = {}",
                self.p
            )));
        }
        Ok(self.index(i, j))
    }

    /// Inverse of [`index`](Self::index); always returns `i <= j`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.m());
        let mut i = 0;
        let mut rest = k;
        while rest >= self.p - i {
            rest -= self.p - i;
            i += 1;
        }
        (i, i + rest)
    }

    /// All `(k, i, j)` triples in canonical order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let p = self.p;
        (0..p)
            .flat_map(move |i| (i..p).map(move |j| (i, j)))
            .enumerate()
            .map(|(k, (i, j))| (k, i, j))
    }
}

/// Parameter vector of a binary pairwise MRF. Diagonal entries are node
/// potentials, off-diagonal entries pairwise couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    indexer: FeatureIndexer,
    theta: Vec<f64>,
}

impl ModelParams {
    pub fn new(p: usize, theta: Vec<f64>) -> Result<Self> {
        let indexer = FeatureIndexer::new(p)?;
        MrfError::check_dim(indexer.m(), theta.len())?;
        if let Some(k) = theta.iter().position(|t| !t.is_finite()) {
            return Err(MrfError::invalid(format!("theta[{k}] is not finite")));
        }
        Ok(Self { indexer, theta })
    }

    pub fn zeros(p: usize) -> Result<Self> {
        let indexer = FeatureIndexer::new(p)?;
        Ok(Self {
            theta: vec![0.0; indexer.m()],
            indexer,
        })
    }

    pub fn p(&self) -> usize {
        self.indexer.p
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    pub fn indexer(&self) -> FeatureIndexer {
        self.indexer
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_theta(self) -> Vec<f64> {
        self.theta
    }

    /// Symmetric access, `xi(i, j) = theta[min(i,j), max(i,j)]`.
    #[inline]
    pub fn xi(&self, i: usize, j: usize) -> f64 {
        self.theta[self.indexer.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(MrfError::invalid("parameter must be finite"));
        }
        let k = self.indexer.checked_index(i, j)?;
        self.theta[k] = value;
        Ok(())
    }

    /// Dense symmetric `p x p` matrix with node potentials on the diagonal.
    pub fn coupling_matrix(&self) -> Vec<f64> {
        let p = self.p();
        let mut w = vec![0.0; p * p];
        for (k, i, j) in self.indexer.pairs() {
            w[i * p + j] = self.theta[k];
            w[j * p + i] = self.theta[k];
        }
        w
    }

    /// `theta^T psi(x)`.
    pub fn energy(&self, x: &Assignment) -> f64 {
        self.energy_words(x.words())
    }

    #[inline]
    pub(crate) fn energy_words(&self, words: &[u64]) -> f64 {
        let mut e = 0.0;
        for i in set_bits(words) {
            let row = self.indexer.row_offset(i);
            for j in set_bits(words).filter(|&j| j >= i) {
                e += self.theta[row + (j - i)];
            }
        }
        e
    }
}

/// A point of `{0,1}^p`, packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    p: usize,
    words: Vec<u64>,
}

pub(crate) fn words_for(p: usize) -> usize {
    p.div_ceil(64)
}

impl Assignment {
    pub fn zeros(p: usize) -> Self {
        Self {
            p,
            words: vec![0; words_for(p)],
        }
    }

    pub fn ones(p: usize) -> Self {
        let mut a = Self::zeros(p);
        for i in 0..p {
            a.set(i, true);
        }
        a
    }

    /// Builds an assignment from 0/1 values; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut a = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => a.set(i, true),
                other => return Err(MrfError::invalid(format!("bit {i} has value {other}, expected 0 or 1"))),
            }
        }
        Ok(a)
    }

    pub(crate) fn from_words(p: usize, words: &[u64]) -> Self {
        Self {
            p,
            words: words.to_vec(),
        }
    }

    /// Little-endian decoding: bit `i` of `code` is site `i`.
    pub fn from_index(p: usize, code: u64) -> Self {
        assert!(p <= 64, "integer encoding needs p <= 64");
        let mut a = Self::zeros(p);
        if p > 0 {
            a.words[0] = if p == 64 { code } else { code & ((1u64 << p) - 1) };
        }
        a
    }

    pub fn to_index(&self) -> u64 {
        assert!(self.p <= 64, "integer encoding needs p <= 64");
        self.words.first().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.p == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.p).map(|i| self.get(i) as u8).collect()
    }

    /// Indices of the sites set to 1, ascending.
    pub fn active_sites(&self) -> impl Iterator<Item = usize> + '_ {
        set_bits(&self.words)
    }
}

/// Ascending indices of set bits across a word slice.
#[inline]
pub(crate) fn set_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &word)| {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + b)
            }
        })
    })
}

/// Adds `psi(x)` (as 0/1 counts) for the packed state `words` into `counts`.
#[inline]
pub(crate) fn accumulate_statistics(idx: FeatureIndexer, words: &[u64], counts: &mut [u64]) {
    for i in set_bits(words) {
        let row = idx.row_offset(i);
        for j in set_bits(words).filter(|&j| j >= i) {
            counts[row + (j - i)] += 1;
        }
    }
}

/// `psi(x)`: `psi_(i,i) = x_i`, `psi_(i,j) = x_i x_j`.
pub fn sufficient_statistics(x: &Assignment, idx: FeatureIndexer) -> Result<Vec<f64>> {
    MrfError::check_dim(idx.p(), x.len())?;
    let mut counts = vec![0u64; idx.m()];
    accumulate_statistics(idx, x.words(), &mut counts);
    Ok(counts.into_iter().map(|c| c as f64).collect())
}

/// Component-wise mean of `psi` over the samples.
pub fn empirical_moments(samples: &[Assignment], idx: FeatureIndexer) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(MrfError::invalid("empirical moments need at least one sample"));
    }
    let mut counts = vec![0u64; idx.m()];
    for x in samples {
        MrfError::check_dim(idx.p(), x.len())?;
        accumulate_statistics(idx, x.words(), &mut counts);
    }
    let n = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// A set of observed assignments with its cached empirical moments.
#[derive(Debug, Clone)]
pub struct Dataset {
    indexer: FeatureIndexer,
    samples: Vec<Assignment>,
    empirical_moments: Vec<f64>,
}

impl Dataset {
    pub fn new(samples: Vec<Assignment>) -> Result<Self> {
        let p = samples
            .first()
            .map(Assignment::len)
            .ok_or_else(|| MrfError::invalid("dataset needs at least one sample"))?;
        let indexer = FeatureIndexer::new(p)?;
        let empirical_moments = empirical_moments(&samples, indexer)?;
        Ok(Self {
            indexer,
            samples,
            empirical_moments,
        })
    }

    pub fn p(&self) -> usize {
        self.indexer.p()
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn indexer(&self) -> FeatureIndexer {
        self.indexer
    }

    pub fn samples(&self) -> &[Assignment] {
        &self.samples
    }

    pub fn empirical_moments(&self) -> &[f64] {
        &self.empirical_moments
    }
}

pub fn l1_norm(theta: &ModelParams) -> f64 {
    theta.theta().iter().map(|t| t.abs()).sum()
}

/// Soft-thresholding `S_t(a)_i = sgn(a_i) max(0, |a_i| - t)`.
pub fn soft_threshold(a: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(MrfError::invalid(format!("threshold must be non-negative, got {t}")));
    }
    Ok(a.iter().map(|&x| soft_threshold_scalar(x, t)).collect())
}

#[inline]
pub(crate) fn soft_threshold_scalar(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// The linear part of the smooth objective, `-<theta, E_X psi>`. The
/// log-partition term comes from [`crate::exact`].
pub fn unpenalized_objective_terms(theta: &ModelParams, data: &Dataset) -> Result<f64> {
    MrfError::check_dim(theta.m(), data.empirical_moments().len())?;
    Ok(-crate::numeric::dot(theta.theta(), data.empirical_moments()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(b: &[u8]) -> Assignment {
        Assignment::from_bits(b).unwrap()
    }

    #[test]
    fn indexer_is_a_bijection_up_to_64_nodes() {
        for p in 1..=64 {
            let idx = FeatureIndexer::new(p).unwrap();
            let mut seen = vec![false; idx.m()];
            for i in 0..p {
                for j in i..p {
                    let k = idx.index(i, j);
                    assert!(!seen[k], "p={p}: duplicate index {k}");
                    seen[k] = true;
                    assert_eq!(idx.pair(k), (i, j));
                    assert_eq!(idx.index(j, i), k);
                }
            }
            assert!(seen.into_iter().all(|s| s));
            assert!(idx.pairs().all(|(k, i, j)| idx.index(i, j) == k));
        }
    }

    #[test]
    fn canonical_order_for_three_nodes() {
        let idx = FeatureIndexer::new(3).unwrap();
        let order: Vec<_> = (0..idx.m()).map(|k| idx.pair(k)).collect();
        assert_eq!(order, vec![(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(FeatureIndexer::new(0).is_err());
    }

    #[test]
    fn sufficient_statistics_examples() {
        let idx2 = FeatureIndexer::new(2).unwrap();
        assert_eq!(sufficient_statistics(&bits(&[0, 0]), idx2).unwrap(), vec![0.0; 3]);
        assert_eq!(sufficient_statistics(&bits(&[1, 1]), idx2).unwrap(), vec![1.0; 3]);
        let idx3 = FeatureIndexer::new(3).unwrap();
        assert_eq!(
            sufficient_statistics(&bits(&[1, 0, 1]), idx3).unwrap(),
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]
        );
        assert!(matches!(
            sufficient_statistics(&bits(&[1, 0]), idx3),
            Err(MrfError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sufficient_statistics_beyond_one_word() {
        let p = 70;
        let idx = FeatureIndexer::new(p).unwrap();
        let mut x = Assignment::zeros(p);
        x.set(3, true);
        x.set(66, true);
        let psi = sufficient_statistics(&x, idx).unwrap();
        assert_eq!(psi.iter().sum::<f64>(), 3.0);
        assert_eq!(psi[idx.index(3, 66)], 1.0);
        assert_eq!(psi[idx.index(66, 66)], 1.0);
    }

    #[test]
    fn empirical_moments_examples() {
        let idx = FeatureIndexer::new(2).unwrap();
        assert_eq!(empirical_moments(&[bits(&[1, 1])], idx).unwrap(), vec![1.0; 3]);
        assert_eq!(
            empirical_moments(&[bits(&[0, 0]), bits(&[1, 1])], idx).unwrap(),
            vec![0.5; 3]
        );
        // hand count: x1 on in 2 of 3, x1x2 in 1 of 3, x2 in 2 of 3
        let m = empirical_moments(&[bits(&[1, 0]), bits(&[1, 1]), bits(&[0, 1])], idx).unwrap();
        assert_eq!(m, vec![2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]);
        assert!(empirical_moments(&[], idx).is_err());
    }

    #[test]
    fn constant_samples_give_constant_moments() {
        let p = 5;
        let idx = FeatureIndexer::new(p).unwrap();
        let zeros = vec![Assignment::zeros(p); 4];
        let ones = vec![Assignment::ones(p); 4];
        assert!(empirical_moments(&zeros, idx).unwrap().iter().all(|&v| v == 0.0));
        assert!(empirical_moments(&ones, idx).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[0.0, 0.0], 0.5).unwrap(), vec![0.0, 0.0]);
        assert_eq!(soft_threshold(&[1.0, -0.3], 0.5).unwrap(), vec![0.5, 0.0]);
        let a = [0.3, -2.0, 7.5];
        assert_eq!(soft_threshold(&a, 0.0).unwrap(), a.to_vec());
        assert!(soft_threshold(&a, -0.1).is_err());
        assert!(soft_threshold(&a, f64::NAN).is_err());
    }

    #[test]
    fn linear_objective_term() {
        let data = Dataset::new(vec![bits(&[1, 0]), bits(&[0, 0])]).unwrap();
        let zero = ModelParams::zeros(2).unwrap();
        assert_eq!(unpenalized_objective_terms(&zero, &data).unwrap(), 0.0);
        // theta_11 = 2 with E_X x_1 = 0.5
        let theta = ModelParams::new(2, vec![2.0, 0.0, 0.0]).unwrap();
        assert_eq!(unpenalized_objective_terms(&theta, &data).unwrap(), -1.0);
        let wrong = ModelParams::zeros(3).unwrap();
        assert!(unpenalized_objective_terms(&wrong, &data).is_err());
    }

    #[test]
    fn model_params_validation_and_symmetry() {
        assert!(ModelParams::new(2, vec![0.0; 2]).is_err());
        assert!(ModelParams::new(2, vec![0.0, f64::NAN, 0.0]).is_err());
        let mut t = ModelParams::zeros(3).unwrap();
        t.set(2, 0, 1.5).unwrap();
        assert_eq!(t.xi(0, 2), 1.5);
        assert_eq!(t.xi(2, 0), 1.5);
        assert!(t.set(3, 0, 1.0).is_err());
        assert_eq!(l1_norm(&t), 1.5);
    }

    #[test]
    fn integer_encoding_is_little_endian() {
        let x = Assignment::from_index(3, 0b101);
        assert_eq!(x.to_bits(), vec![1, 0, 1]);
        assert_eq!(x.to_index(), 5);
        assert!(Assignment::from_bits(&[0, 2]).is_err());
    }

    proptest! {
        #[test]
        fn soft_threshold_is_nonexpansive(
            a in prop::collection::vec(-5.0f64..5.0, 8),
            b in prop::collection::vec(-5.0f64..5.0, 8),
            t in 0.0f64..3.0,
        ) {
            let sa = soft_threshold(&a, t).unwrap();
            let sb = soft_threshold(&b, t).unwrap();
            let d_out: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let d_in: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d_out <= d_in + 1e-12);
            for (o, x) in sa.iter().zip(&a) {
                prop_assert!((o.abs() - (x.abs() - t).max(0.0)).abs() < 1e-12);
                prop_assert!(*o == 0.0 || o.signum() == x.signum());
            }
        }

        #[test]
        fn energy_matches_dot_with_statistics(
            raw in prop::collection::vec(-2.0f64..2.0, 10),
            code in 0u64..16,
        ) {
            let theta = ModelParams::new(4, raw).unwrap();
            let x = Assignment::from_index(4, code);
            let psi = sufficient_statistics(&x, theta.indexer()).unwrap();
            let direct = crate::numeric::dot(theta.theta(), &psi);
            prop_assert!((theta.energy(&x) - direct).abs() < 1e-12);
        }
    }
}
