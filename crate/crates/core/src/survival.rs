//! Piecewise-constant proportional-hazards likelihood and per-region
//! Laplace approximation.
//!
//! Parameters are handled on the unconstrained scale `θ = (β, η)` with
//! `η_j = log λ_j`. Within a region the log-likelihood is
//!
//! ```text
//! ℓ(β, η) = Σ_j d_j η_j + Σ_ℓ δ_ℓ x_ℓᵀβ − Σ_j e^{η_j} Σ_ℓ Δ_j(T_ℓ) e^{x_ℓᵀβ}
//! ```
//!
//! which is concave in `θ`, so Newton's method with step-halving is enough
//! for the MLE. Piece indices are zero-based throughout the API.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Linear predictors are clamped to `±LINPRED_CLAMP` before exponentiation.
pub const LINPRED_CLAMP: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    /// `true` when the event was observed, `false` when censored.
    pub event: bool,
    pub covariates: Vec<f64>,
    /// Index into the dataset's region list.
    pub region: usize,
}

/// Cutpoints `0 < a_1 < … < a_{J−1}` of the baseline-hazard partition of
/// `[0, ∞)`. The pieces are the half-open intervals `[a_{j−1}, a_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HazardPartition {
    cutpoints: Vec<f64>,
}

impl HazardPartition {
    pub fn new(cutpoints: Vec<f64>) -> Result<Self> {
        if cutpoints.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return Err(Error::Usage(format!(
                "cutpoints must be finite and positive, got {cutpoints:?}"
            )));
        }
        if cutpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Usage(format!(
                "cutpoints must be strictly increasing, got {cutpoints:?}"
            )));
        }
        Ok(Self { cutpoints })
    }

    /// Single piece, i.e. an exponential baseline.
    pub fn single() -> Self {
        Self { cutpoints: Vec::new() }
    }

    pub fn cutpoints(&self) -> &[f64] {
        &self.cutpoints
    }

    pub fn pieces(&self) -> usize {
        self.cutpoints.len() + 1
    }

    pub fn lower(&self, piece: usize) -> f64 {
        if piece == 0 {
            0.0
        } else {
            self.cutpoints[piece - 1]
        }
    }

    pub fn upper(&self, piece: usize) -> f64 {
        self.cutpoints.get(piece).copied().unwrap_or(f64::INFINITY)
    }

    /// Piece containing `t`; a time equal to a cutpoint belongs to the later piece.
    pub fn piece_of(&self, t: f64) -> usize {
        self.cutpoints.partition_point(|&c| c <= t)
    }
}

impl TryFrom<Vec<f64>> for HazardPartition {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<HazardPartition> for Vec<f64> {
    fn from(p: HazardPartition) -> Self {
        p.cutpoints
    }
}

/// Region parameters `θ = (β, η)`, `η = log λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub beta: Vec<f64>,
    pub log_lambda: Vec<f64>,
}

impl ParamVector {
    pub fn new(beta: Vec<f64>, log_lambda: Vec<f64>) -> Self {
        Self { beta, log_lambda }
    }

    pub fn from_lambda(beta: Vec<f64>, lambda: &[f64]) -> Self {
        Self {
            beta,
            log_lambda: lambda.iter().map(|l| l.ln()).collect(),
        }
    }

    /// Split a stacked `(β, η)` slice with `p` regression coefficients.
    pub fn from_slice(theta: &[f64], p: usize) -> Self {
        Self {
            beta: theta[..p].to_vec(),
            log_lambda: theta[p..].to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + self.log_lambda.len()
    }

    pub fn lambda(&self) -> Vec<f64> {
        self.log_lambda.iter().map(|e| e.exp()).collect()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend_from_slice(&self.log_lambda);
        v
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_vec(self.to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().chain(&self.log_lambda).all(|v| v.is_finite())
    }
}

/// Per-region sufficient statistics and Laplace approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub event_counts: Vec<usize>,
    pub theta_hat: ParamVector,
    /// `(−H)^{-1}` at `theta_hat`.
    pub sigma_hat: DMatrix<f64>,
    pub subject_count: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Convergence threshold on the gradient max-norm.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            max_halvings: 30,
        }
    }
}

/// Exposure of a subject followed up to `t` within piece `piece`.
pub fn exposure(t: f64, piece: usize, partition: &HazardPartition) -> Result<f64> {
    if piece >= partition.pieces() {
        return Err(Error::Usage(format!(
            "piece index {piece} out of range for {} pieces",
            partition.pieces()
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::Usage(format!("follow-up time must be >= 0, got {t}")));
    }
    Ok(exposure_unchecked(t, partition.lower(piece), partition.upper(piece)))
}

#[inline]
fn exposure_unchecked(t: f64, lo: f64, hi: f64) -> f64 {
    if t < lo {
        0.0
    } else if t < hi {
        t - lo
    } else {
        hi - lo
    }
}

/// Number of observed events per piece.
pub fn event_counts(records: &[SurvivalRecord], partition: &HazardPartition) -> Vec<usize> {
    let mut counts = vec![0; partition.pieces()];
    for r in records.iter().filter(|r| r.event) {
        counts[partition.piece_of(r.time)] += 1;
    }
    counts
}

fn check_params(theta: &ParamVector, p: usize, partition: &HazardPartition) -> Result<()> {
    if theta.beta.len() != p || theta.log_lambda.len() != partition.pieces() {
        return Err(Error::Usage(format!(
            "parameter shape (p={}, J={}) does not match data (p={p}, J={})",
            theta.beta.len(),
            theta.log_lambda.len(),
            partition.pieces()
        )));
    }
    if !theta.is_finite() {
        return Err(Error::Numeric(format!("non-finite parameters {theta:?}")));
    }
    Ok(())
}

fn covariate_dim<'a>(records: impl IntoIterator<Item = &'a SurvivalRecord>) -> Result<Option<usize>> {
    let mut dim = None;
    for r in records {
        match dim {
            None => dim = Some(r.covariates.len()),
            Some(p) if p != r.covariates.len() => {
                return Err(Error::Usage(format!(
                    "inconsistent covariate length: {p} vs {}",
                    r.covariates.len()
                )))
            }
            _ => {}
        }
    }
    Ok(dim)
}

#[inline]
fn linpred(x: &[f64], beta: &[f64]) -> f64 {
    let v: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    v.clamp(-LINPRED_CLAMP, LINPRED_CLAMP)
}

/// Log-likelihood of one region, evaluated term by term in record order.
pub fn region_log_likelihood(
    records: &[SurvivalRecord],
    theta: &ParamVector,
    partition: &HazardPartition,
) -> Result<f64> {
    let p = covariate_dim(records)?.unwrap_or(theta.beta.len());
    check_params(theta, p, partition)?;
    let counts = event_counts(records, partition);
    let mut ll = 0.0;
    for (j, &d) in counts.iter().enumerate() {
        ll += d as f64 * theta.log_lambda[j];
    }
    for r in records {
        let xb = linpred(&r.covariates, &theta.beta);
        if r.event {
            ll += xb;
        }
        let risk = xb.exp();
        for j in 0..partition.pieces() {
            let dt = exposure_unchecked(r.time, partition.lower(j), partition.upper(j));
            ll -= theta.log_lambda[j].exp() * dt * risk;
        }
    }
    Ok(ll)
}

/// Total log-likelihood over regions, one parameter vector per region.
pub fn log_likelihood<R: AsRef<[SurvivalRecord]>>(
    regions: &[R],
    params: &[ParamVector],
    partition: &HazardPartition,
) -> Result<f64> {
    if regions.len() != params.len() {
        return Err(Error::Usage(format!(
            "{} regions but {} parameter vectors",
            regions.len(),
            params.len()
        )));
    }
    regions
        .iter()
        .zip(params)
        .map(|(r, t)| region_log_likelihood(r.as_ref(), t, partition))
        .sum()
}

/// Cached design of a single region for repeated likelihood evaluation.
///
/// Records are sorted by `(time, event, covariates)` on construction, so every
/// sum runs in that canonical order regardless of input order.
#[derive(Debug, Clone)]
pub struct RegionLikelihood {
    p: usize,
    pieces: usize,
    n: usize,
    event_counts: Vec<usize>,
    event_x_sum: Vec<f64>,
    /// n × p, row-major.
    covariates: Vec<f64>,
    /// n × J, row-major.
    exposures: Vec<f64>,
    total_exposure: f64,
}

impl RegionLikelihood {
    pub fn new(records: &[SurvivalRecord], partition: &HazardPartition) -> Result<Self> {
        let p = covariate_dim(records)?.unwrap_or(0);
        Self::with_dim(records, partition, p)
    }

    pub fn with_dim(records: &[SurvivalRecord], partition: &HazardPartition, p: usize) -> Result<Self> {
        if let Some(q) = covariate_dim(records)? {
            if q != p {
                return Err(Error::Usage(format!("expected {p} covariates, records have {q}")));
            }
        }
        if let Some(r) = records.iter().find(|r| !(r.time >= 0.0) || !r.time.is_finite()) {
            return Err(Error::Data(format!("invalid follow-up time {}", r.time)));
        }
        let mut sorted: Vec<&SurvivalRecord> = records.iter().collect();
        sorted.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then(a.event.cmp(&b.event))
                .then_with(|| {
                    a.covariates
                        .iter()
                        .zip(&b.covariates)
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
        });
        let pieces = partition.pieces();
        let n = sorted.len();
        let mut covariates = Vec::with_capacity(n * p);
        let mut exposures = Vec::with_capacity(n * pieces);
        let mut event_x_sum = vec![0.0; p];
        let mut event_counts = vec![0; pieces];
        let mut total_exposure = 0.0;
        for r in &sorted {
            covariates.extend_from_slice(&r.covariates);
            for j in 0..pieces {
                exposures.push(exposure_unchecked(r.time, partition.lower(j), partition.upper(j)));
            }
            total_exposure += r.time;
            if r.event {
                event_counts[partition.piece_of(r.time)] += 1;
                for (s, x) in event_x_sum.iter_mut().zip(&r.covariates) {
                    *s += x;
                }
            }
        }
        Ok(Self {
            p,
            pieces,
            n,
            event_counts,
            event_x_sum,
            covariates,
            exposures,
            total_exposure,
        })
    }

    pub fn covariate_dim(&self) -> usize {
        self.p
    }

    pub fn pieces(&self) -> usize {
        self.pieces
    }

    pub fn dim(&self) -> usize {
        self.p + self.pieces
    }

    pub fn subject_count(&self) -> usize {
        self.n
    }

    pub fn event_counts(&self) -> &[usize] {
        &self.event_counts
    }

    pub fn total_events(&self) -> usize {
        self.event_counts.iter().sum()
    }

    pub fn total_exposure(&self) -> f64 {
        self.total_exposure
    }

    fn row(&self, l: usize) -> (&[f64], &[f64]) {
        (
            &self.covariates[l * self.p..(l + 1) * self.p],
            &self.exposures[l * self.pieces..(l + 1) * self.pieces],
        )
    }

    /// Log-likelihood at stacked `θ = (β, η)`.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let (beta, eta) = theta.split_at(self.p);
        let mut ll = 0.0;
        for j in 0..self.pieces {
            ll += self.event_counts[j] as f64 * eta[j];
        }
        for k in 0..self.p {
            ll += self.event_x_sum[k] * beta[k];
        }
        let lam: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        for l in 0..self.n {
            let (x, dt) = self.row(l);
            let cum: f64 = dt.iter().zip(&lam).map(|(a, b)| a * b).sum();
            if cum > 0.0 {
                ll -= cum * linpred(x, beta).exp();
            }
        }
        ll
    }

    /// True when some subject's linear predictor reaches the clamp at `β`.
    pub fn touches_clamp(&self, beta: &[f64]) -> bool {
        (0..self.n).any(|l| {
            let x = &self.covariates[l * self.p..(l + 1) * self.p];
            let v: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            v.abs() >= LINPRED_CLAMP
        })
    }

    /// Log-likelihood, gradient and Hessian at stacked `θ`.
    pub fn derivatives(&self, theta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = self.p;
        let d = self.dim();
        let (beta, eta) = theta.split_at(p);
        let lam: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let mut ll = 0.0;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for j in 0..self.pieces {
            ll += self.event_counts[j] as f64 * eta[j];
            grad[p + j] = self.event_counts[j] as f64;
        }
        for k in 0..p {
            ll += self.event_x_sum[k] * beta[k];
            grad[k] = self.event_x_sum[k];
        }
        for l in 0..self.n {
            let (x, dt) = self.row(l);
            let risk = linpred(x, beta).exp();
            let mut cum = 0.0;
            for j in 0..self.pieces {
                // e^{η_j} Δ_j e^{xβ}
                let c = lam[j] * dt[j] * risk;
                if c == 0.0 {
                    continue;
                }
                cum += c;
                grad[p + j] -= c;
                hess[(p + j, p + j)] -= c;
                for k in 0..p {
                    hess[(p + j, k)] -= c * x[k];
                }
            }
            if cum == 0.0 {
                continue;
            }
            ll -= cum;
            for k in 0..p {
                grad[k] -= cum * x[k];
                for m in 0..=k {
                    hess[(k, m)] -= cum * x[k] * x[m];
                }
            }
        }
        // Fill the upper triangle from the lower one.
        for r in 0..d {
            for c in (r + 1)..d {
                hess[(r, c)] = hess[(c, r)];
            }
        }
        (ll, grad, hess)
    }
}

/// Gradient and Hessian of a single region's log-likelihood in `(β, η)`.
pub fn score_and_hessian(
    records: &[SurvivalRecord],
    theta: &ParamVector,
    partition: &HazardPartition,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let lik = RegionLikelihood::with_dim(records, partition, theta.beta.len())?;
    check_params(theta, lik.covariate_dim(), partition)?;
    let (_, g, h) = lik.derivatives(&theta.to_vec());
    Ok((g, h))
}

/// Newton fit of one region's `θ̂` and `Σ̂ = (−H)^{-1}`.
///
/// `region` only labels diagnostics. Without `init`, the start is `β = 0`
/// and `η_j = log(events / exposure)` pooled over pieces.
pub fn fit_region_mle(
    region: &str,
    records: &[SurvivalRecord],
    partition: &HazardPartition,
    init: Option<&ParamVector>,
    opts: &NewtonOptions,
) -> Result<RegionSummary> {
    let lik = RegionLikelihood::new(records, partition)?;
    fit_cached(region, &lik, init, opts)
}

pub(crate) fn fit_cached(
    region: &str,
    lik: &RegionLikelihood,
    init: Option<&ParamVector>,
    opts: &NewtonOptions,
) -> Result<RegionSummary> {
    let p = lik.covariate_dim();
    if let Some(piece) = lik.event_counts().iter().position(|&c| c == 0) {
        return Err(Error::EmptyPiece {
            region: region.to_string(),
            piece,
        });
    }
    let mut theta: Vec<f64> = match init {
        Some(t) => {
            if t.beta.len() != p || t.log_lambda.len() != lik.pieces() {
                return Err(Error::Usage("initial value has wrong shape".into()));
            }
            t.to_vec()
        }
        None => {
            let rate = (lik.total_events() as f64 / lik.total_exposure()).ln();
            let mut v = vec![0.0; p];
            v.extend(std::iter::repeat_n(rate, lik.pieces()));
            v
        }
    };
    let no_conv = |reason: String| Error::NoConvergence {
        region: region.to_string(),
        reason,
    };

    let (mut ll, mut grad, mut hess) = lik.derivatives(&theta);
    let mut iterations = 0;
    loop {
        if !ll.is_finite() {
            return Err(no_conv("log-likelihood is not finite".into()));
        }
        if grad.amax() < opts.tol {
            // One more full step: near the optimum it lands at machine precision.
            if let Some(chol) = (-&hess).cholesky() {
                let step = chol.solve(&grad);
                let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
                let cand_ll = lik.log_likelihood(&cand);
                if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                    theta = cand;
                    hess = lik.derivatives(&theta).2;
                }
            }
            break;
        }
        if iterations >= opts.max_iter {
            return Err(no_conv(format!(
                "gradient max-norm {:.3e} after {} iterations",
                grad.amax(),
                iterations
            )));
        }
        iterations += 1;
        let chol = (-&hess).cholesky().ok_or_else(|| Error::RankDeficient {
            region: region.to_string(),
        })?;
        let step = chol.solve(&grad);
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            let cand_ll = lik.log_likelihood(&cand);
            if cand_ll.is_finite() && cand_ll >= ll - slack {
                accepted = Some(cand);
                break;
            }
            scale *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(no_conv("step-halving exhausted".into()));
        };
        theta = next;
        (ll, grad, hess) = lik.derivatives(&theta);
    }

    if lik.touches_clamp(&theta[..p]) {
        return Err(no_conv("linear predictor reached the overflow clamp".into()));
    }
    let neg_h = -hess;
    let chol = neg_h.cholesky().ok_or_else(|| Error::RankDeficient {
        region: region.to_string(),
    })?;
    let sigma_hat = linalg::symmetrize(chol.inverse());
    Ok(RegionSummary {
        event_counts: lik.event_counts().to_vec(),
        theta_hat: ParamVector::from_slice(&theta, p),
        sigma_hat,
        subject_count: lik.subject_count(),
        iterations,
    })
}

/// `log MVN(θ̂ | θ, Σ̂)`, the Laplace approximation of a region's likelihood.
pub fn normal_approx_loglik(theta_hat: &ParamVector, sigma_hat: &DMatrix<f64>, theta: &ParamVector) -> Result<f64> {
    if theta_hat.dim() != theta.dim() {
        return Err(Error::Usage("theta and theta_hat differ in dimension".into()));
    }
    linalg::mvn_log_density(&theta_hat.to_dvector(), &theta.to_dvector(), sigma_hat)
}

/// Split records by region index.
pub fn group_by_region(records: &[SurvivalRecord], n_regions: usize) -> Result<Vec<Vec<SurvivalRecord>>> {
    let mut out = vec![Vec::new(); n_regions];
    for r in records {
        out.get_mut(r.region)
            .ok_or_else(|| Error::Data(format!("record region index {} out of range", r.region)))?
            .push(r.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: f64, event: bool, covariates: Vec<f64>) -> SurvivalRecord {
        SurvivalRecord {
            time,
            event,
            covariates,
            region: 0,
        }
    }

    fn part() -> HazardPartition {
        HazardPartition::new(vec![1.5, 6.0]).unwrap()
    }

    #[test]
    fn exposure_branches() {
        let p = part();
        assert_eq!(exposure(1.5, 1, &p).unwrap(), 0.0);
        assert_eq!(exposure(4.0, 0, &p).unwrap(), 1.5);
        assert_eq!(exposure(4.0, 1, &p).unwrap(), 2.5);
        assert_eq!(exposure(4.0, 2, &p).unwrap(), 0.0);
        assert_eq!(exposure(10.0, 2, &p).unwrap(), 4.0);
        assert!(matches!(exposure(1.0, 3, &p), Err(Error::Usage(_))));
        assert!(exposure(-1.0, 0, &p).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(HazardPartition::new(vec![2.0, 1.0]).is_err());
        assert!(HazardPartition::new(vec![0.0, 1.0]).is_err());
        assert!(HazardPartition::new(vec![1.0, 1.0]).is_err());
        let p = part();
        assert_eq!(p.pieces(), 3);
        assert_eq!(p.piece_of(1.5), 1);
        assert_eq!(p.piece_of(6.0), 2);
        assert_eq!(p.piece_of(0.0), 0);
    }

    #[test]
    fn counts_by_hand() {
        let p = part();
        assert_eq!(event_counts(&[rec(2.0, true, vec![])], &p), vec![0, 1, 0]);
        assert_eq!(
            event_counts(&[rec(0.5, true, vec![]), rec(7.0, true, vec![])], &p),
            vec![1, 0, 1]
        );
        assert_eq!(
            event_counts(&[rec(0.5, false, vec![]), rec(7.0, false, vec![])], &p),
            vec![0, 0, 0]
        );
        assert_eq!(event_counts(&[], &p), vec![0, 0, 0]);
    }

    #[test]
    fn one_piece_exponential_loglik() {
        let t = 2.7;
        let theta = ParamVector::new(vec![0.0], vec![0.0]);
        let ll = region_log_likelihood(&[rec(t, true, vec![0.4])], &theta, &HazardPartition::single()).unwrap();
        assert!((ll + t).abs() < 1e-15);
    }

    #[test]
    fn zero_time_censored_subject_is_neutral() {
        let p = part();
        let theta = ParamVector::new(vec![0.3, -0.2], vec![-1.0, -2.0, -1.5]);
        let mut recs = vec![rec(0.7, true, vec![1.0, 0.5]), rec(8.0, false, vec![-0.3, 0.1])];
        let a = region_log_likelihood(&recs, &theta, &p).unwrap();
        recs.push(rec(0.0, false, vec![2.0, 2.0]));
        let b = region_log_likelihood(&recs, &theta, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exponential_score_by_hand() {
        let t = 3.0;
        let eta = -0.4_f64;
        let theta = ParamVector::new(vec![], vec![eta]);
        let (g, h) = score_and_hessian(&[rec(t, true, vec![])], &theta, &HazardPartition::single()).unwrap();
        assert!((g[0] - (1.0 - eta.exp() * t)).abs() < 1e-14);
        assert!((h[(0, 0)] + eta.exp() * t).abs() < 1e-14);
    }

    #[test]
    fn exponential_closed_form_mle() {
        let recs = vec![
            rec(1.0, true, vec![]),
            rec(2.5, false, vec![]),
            rec(0.4, true, vec![]),
            rec(3.3, true, vec![]),
        ];
        let fit = fit_region_mle("r", &recs, &HazardPartition::single(), None, &NewtonOptions::default()).unwrap();
        let exposure_total: f64 = recs.iter().map(|r| r.time).sum();
        let lam = fit.theta_hat.lambda()[0];
        assert!((lam / (3.0 / exposure_total) - 1.0).abs() < 1e-12);
        assert!((fit.sigma_hat[(0, 0)] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_piece_is_reported() {
        let recs = vec![rec(0.5, true, vec![]), rec(8.0, true, vec![])];
        let err = fit_region_mle("north", &recs, &part(), None, &NewtonOptions::default()).unwrap_err();
        match err {
            Error::EmptyPiece { region, piece } => {
                assert_eq!(region, "north");
                assert_eq!(piece, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_covariate_is_rank_deficient() {
        // A covariate that is identically zero leaves β unidentified.
        let recs: Vec<_> = (0..10).map(|i| rec(0.5 + i as f64, true, vec![0.0])).collect();
        let err = fit_region_mle("r", &recs, &HazardPartition::single(), None, &NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err:?}");
    }

    #[test]
    fn normal_approx_standard_values() {
        let a = ParamVector::new(vec![0.2], vec![-1.0]);
        let v = normal_approx_loglik(&a, &DMatrix::identity(2, 2), &a).unwrap();
        assert!((v + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(normal_approx_loglik(&a, &bad, &a).is_err());
    }

    #[test]
    fn non_finite_parameters_rejected() {
        let theta = ParamVector::new(vec![f64::NAN], vec![0.0]);
        let r = region_log_likelihood(&[rec(1.0, true, vec![1.0])], &theta, &HazardPartition::single());
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn cached_matches_direct() {
        let p = part();
        let recs = vec![
            rec(0.7, true, vec![1.0, 0.5]),
            rec(8.0, false, vec![-0.3, 0.1]),
            rec(3.1, true, vec![0.2, -1.1]),
            rec(6.0, true, vec![0.0, 0.9]),
        ];
        let theta = ParamVector::new(vec![0.3, -0.2], vec![-1.0, -2.0, -1.5]);
        let direct = region_log_likelihood(&recs, &theta, &p).unwrap();
        let cached = RegionLikelihood::new(&recs, &p).unwrap().log_likelihood(&theta.to_vec());
        assert!((direct - cached).abs() < 1e-12);
    }
}
