//! Computable bounds on the Gibbs gradient-approximation error.
//!
//! The chain of reasoning is: an entry-wise upper bound `U` on the Dobrushin
//! influence matrix of a binary pairwise MRF, the systematic-scan product
//! `B = B_p ... B_1` (where `B_i` is the identity with row `i` replaced by row
//! `i` of `U`), and the grand sum `G(B^tau)`, which bounds the total-variation
//! distance of a `tau`-sweep chain from stationarity. Scaled by `2 sqrt(m)` it
//! bounds the conditional mean of the gradient error; adding an empirical
//! Bernstein term gives a high-probability bound on the error itself.

use nalgebra::{DMatrix, DVector};

use crate::error::{MrfError, Result};
use crate::gibbs::GradEstimate;
use crate::model::ModelParams;

/// Default total failure budget `beta_total`; each feature gets `beta_total / (2m)`.
pub const DEFAULT_BETA_TOTAL: f64 = 0.01;

/// Influence bound `U`, its scan product `B`, and spectral diagnostics.
#[derive(Debug, Clone)]
pub struct InfluenceBound {
    pub u: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Power-iteration estimate of the operator 2-norm of `U`.
    pub spectral_proxy: f64,
    /// Spectral radius of `B`; `G(B^tau)` decays to zero iff it is below one.
    pub b_spectral_radius: f64,
}

impl InfluenceBound {
    /// `G(B^tau)` does not shrink with `tau`.
    pub fn bound_divergent(&self) -> bool {
        self.b_spectral_radius >= 1.0
    }

    pub fn grand_sums(&self) -> GrandSums<'_> {
        GrandSums::new(&self.b)
    }
}

/// Upper bound on the Dobrushin influence of site `j` on site `i`:
///
/// ```text
/// U_ij = |e^{-xi_ij} - 1| b* / ((1 + b* e^{-xi_ij}) (1 + b*)),
/// b*   = max(r, min(s, e^{xi_ij / 2})),
/// r    = exp(-theta_ii - sum_{k != i,j, xi_ik > 0} xi_ik),
/// s    = exp(-theta_ii - sum_{k != i,j, xi_ik < 0} xi_ik).
/// ```
///
/// `[r, s]` is the range of `exp(-field)` over the other neighbours' states,
/// and `e^{xi/2}` maximizes the expression over unconstrained `b`.
pub fn influence_upper_bound(theta: &ModelParams) -> DMatrix<f64> {
    let p = theta.p();
    let mut u = DMatrix::zeros(p, p);
    for i in 0..p {
        let node = theta.xi(i, i);
        for j in (0..p).filter(|&j| j != i) {
            let xij = theta.xi(i, j);
            if xij == 0.0 {
                continue;
            }
            let (mut pos, mut neg) = (0.0, 0.0);
            for k in (0..p).filter(|&k| k != i && k != j) {
                let x = theta.xi(i, k);
                if x > 0.0 {
                    pos += x;
                } else {
                    neg += x;
                }
            }
            let log_r = -node - pos;
            let log_s = -node - neg;
            let log_b = log_r.max(log_s.min(xij / 2.0));
            u[(i, j)] = influence_at(xij, log_b);
        }
    }
    u
}

/// `|e^{-xi} - 1| b / ((1 + b e^{-xi})(1 + b))` with `b = e^{log_b}`,
/// evaluated in a form that stays finite for large `|log_b|`.
fn influence_at(xi: f64, log_b: f64) -> f64 {
    // equals |sigmoid(-log_b + xi) - sigmoid(-log_b)|
    let a = -log_b;
    (crate::numeric::sigmoid(a + xi) - crate::numeric::sigmoid(a)).abs()
}

/// `B = B_p B_{p-1} ... B_1`.
pub fn b_product(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !u.is_square() {
        return Err(MrfError::invalid(format!(
            "U must be square, got {}x{}",
            u.nrows(),
            u.ncols()
        )));
    }
    let p = u.nrows();
    let mut acc = DMatrix::<f64>::identity(p, p);
    for i in 0..p {
        // B_i * acc only changes row i, which becomes U[i, :] * acc
        let new_row = u.row(i) * &acc;
        acc.set_row(i, &new_row);
    }
    Ok(acc)
}

/// Iterator over `G(B^tau)` for `tau = 1, 2, ...` using matrix-vector
/// products with the all-ones vector.
#[derive(Debug, Clone)]
pub struct GrandSums<'a> {
    b: &'a DMatrix<f64>,
    v: DVector<f64>,
}

impl<'a> GrandSums<'a> {
    pub fn new(b: &'a DMatrix<f64>) -> Self {
        Self {
            b,
            v: DVector::from_element(b.ncols(), 1.0),
        }
    }
}

impl Iterator for GrandSums<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        self.v = self.b * &self.v;
        Some(self.v.sum())
    }
}

/// `G(B^tau)`, the sum of all entries of `B^tau`. May be `+inf` on overflow.
pub fn grand_sum_pow(b: &DMatrix<f64>, tau: usize) -> Result<f64> {
    if tau == 0 {
        return Err(MrfError::invalid("tau must be at least 1"));
    }
    if !b.is_square() {
        return Err(MrfError::invalid("B must be square"));
    }
    Ok(GrandSums::new(b).nth(tau - 1).expect("infinite iterator"))
}

fn operator_norm(u: &DMatrix<f64>) -> f64 {
    let gram = u.transpose() * u;
    let mut v = DVector::from_element(u.ncols(), 1.0 / (u.ncols() as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w / norm;
        if (next - lambda).abs() <= 1e-14 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}

fn spectral_radius(b: &DMatrix<f64>) -> f64 {
    b.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Builds `U`, `B` and the spectral diagnostics for `theta`.
pub fn influence_matrix(theta: &ModelParams) -> InfluenceBound {
    let u = influence_upper_bound(theta);
    let b = b_product(&u).expect("U is square");
    let spectral_proxy = operator_norm(&u);
    let b_spectral_radius = spectral_radius(&b);
    InfluenceBound {
        u,
        b,
        spectral_proxy,
        b_spectral_radius,
    }
}

/// `2 sqrt(m) G(B^tau)`, the bound on `||E[delta | x0]||_2`.
pub fn asym_bound(theta: &ModelParams, tau: usize) -> Result<f64> {
    let inf = influence_matrix(theta);
    Ok(2.0 * (theta.m() as f64).sqrt() * grand_sum_pow(&inf.b, tau)?)
}

/// Empirical Bernstein radius for one feature:
/// `2 (sqrt(V ln(2/beta) / (2q)) + 7 ln(2/beta) / (3 (q - 1)))`.
pub fn epsilon_j(variance: f64, q: usize, beta: f64) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(MrfError::invalid("variance must be non-negative"));
    }
    if q < 2 {
        return Err(MrfError::invalid("epsilon_j needs q >= 2"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(MrfError::invalid(format!("beta must lie in (0, 1), got {beta}")));
    }
    let log_term = (2.0 / beta).ln();
    let q = q as f64;
    Ok(2.0 * ((variance * log_term / (2.0 * q)).sqrt() + 7.0 * log_term / (3.0 * (q - 1.0))))
}

/// `beta_j = beta_total / (2m)` for every feature.
pub fn uniform_betas(m: usize, beta_total: f64) -> Vec<f64> {
    vec![beta_total / (2.0 * m as f64); m]
}

/// Everything the optimizer needs to know about the bound at one `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub tau: usize,
    pub grand_sum: f64,
    pub asym_bound: f64,
    pub eps: Vec<f64>,
    pub nonasym_bound: f64,
    /// `1 - 2 sum beta_j`; reported as-is even when non-positive.
    pub confidence: f64,
    pub low_confidence: bool,
    pub overflow: bool,
    pub bound_divergent: bool,
}

/// Assembles the high-probability bound on `||delta||_2` from a precomputed
/// grand sum.
pub fn report_from_grand_sum(
    m: usize,
    tau: usize,
    grand_sum: f64,
    bound_divergent: bool,
    grad: &GradEstimate,
    betas: &[f64],
) -> Result<BoundReport> {
    MrfError::check_dim(m, betas.len())?;
    MrfError::check_dim(m, grad.variances.len())?;
    let eps = grad
        .variances
        .iter()
        .zip(betas)
        .map(|(&v, &b)| epsilon_j(v, grad.q, b))
        .collect::<Result<Vec<_>>>()?;
    let scale = 2.0 * (m as f64).sqrt();
    let eps_sq: f64 = eps.iter().map(|e| e * e).sum();
    let asym = scale * grand_sum;
    let nonasym = scale * (grand_sum + (eps_sq / (4.0 * m as f64)).sqrt());
    let confidence = 1.0 - 2.0 * betas.iter().sum::<f64>();
    if confidence <= 0.0 {
        log::warn!("bound confidence {confidence} is not positive; betas are too large");
    }
    Ok(BoundReport {
        tau,
        grand_sum,
        asym_bound: asym,
        eps,
        nonasym_bound: nonasym,
        confidence,
        low_confidence: confidence <= 0.0,
        overflow: !grand_sum.is_finite(),
        bound_divergent,
    })
}

/// High-probability bound on `||delta||_2` for an estimate taken after
/// `tau` sweeps.
pub fn nonasym_bound(theta: &ModelParams, tau: usize, grad: &GradEstimate, betas: &[f64]) -> Result<BoundReport> {
    if grad.q < 2 {
        return Err(MrfError::invalid("bound needs q >= 2"));
    }
    let inf = influence_matrix(theta);
    let g = grand_sum_pow(&inf.b, tau)?;
    report_from_grand_sum(theta.m(), tau, g, inf.bound_divergent(), grad, betas)
}
