//! Gibbs sampler for cluster labels and cluster parameters under the
//! geographically weighted CRP prior.
//!
//! Each region enters only through its Laplace summary `(θ̂_i, Σ̂_i)`. A sweep
//! visits regions in index order; region `i` is taken out of its cluster (the
//! cluster is dropped if it empties) and its label is redrawn from
//!
//! ```text
//! existing c : (Σ_{j≠i} w_ij 1[z_j = c]) · N(θ̂_i; θ_c, Σ̂_i)
//! new        : α · N(θ̂_i; 0, Σ̂_i + Σ0)
//! ```
//!
//! after which every cluster parameter is refreshed from its Gaussian
//! conditional. Random draws happen in this order: one uniform per region
//! visit, `d` standard normals when a region opens a cluster, then `d`
//! standard normals per cluster (in label order) for the refresh.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LN_2PI};
use crate::spatial::WeightMatrix;
use crate::survival::{ParamVector, RegionLikelihood, RegionSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwcrpConfig {
    /// CRP concentration `α > 0`.
    pub alpha: f64,
    /// `v0` in the base measure `θ_r ~ N(0, v0·I)`.
    pub prior_variance: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: ChainInit,
}

/// Starting partition of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainInit {
    /// Every region in one cluster at the precision-weighted mean of `θ̂`.
    OneCluster,
    /// Every region in its own cluster, drawn from its one-member posterior.
    #[default]
    Singletons,
}

impl Default for GwcrpConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            prior_variance: 100.0,
            iterations: 2000,
            burn_in: 500,
            seed: 0,
            init: ChainInit::default(),
        }
    }
}

impl GwcrpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Usage(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.prior_variance > 0.0) || !self.prior_variance.is_finite() {
            return Err(Error::Usage(format!(
                "prior variance must be > 0, got {}",
                self.prior_variance
            )));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Usage(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }
}

/// One region's Laplace summary, pre-factorized for the sampler.
#[derive(Debug, Clone)]
pub struct RegionModel {
    dim: usize,
    theta_hat: Vec<f64>,
    /// `Σ̂^{-1}`, row-major.
    precision: Vec<f64>,
    precision_theta: Vec<f64>,
    /// `−d/2·log 2π − ½·log|Σ̂|`.
    log_norm: f64,
    /// `log N(θ̂; 0, Σ̂ + Σ0)`.
    log_new_cluster: f64,
}

impl RegionModel {
    pub fn new(theta_hat: &[f64], sigma_hat: &DMatrix<f64>, prior_variance: f64) -> Result<Self> {
        let d = theta_hat.len();
        if sigma_hat.nrows() != d || sigma_hat.ncols() != d {
            return Err(Error::Usage("covariance does not match parameter dimension".into()));
        }
        let chol = linalg::cholesky(sigma_hat)?;
        let precision = linalg::symmetrize(chol.inverse());
        let th = DVector::from_column_slice(theta_hat);
        let precision_theta = (&precision * &th).as_slice().to_vec();
        let log_norm = -0.5 * (d as f64 * LN_2PI + linalg::log_det(&chol));
        let marginal = sigma_hat + DMatrix::identity(d, d) * prior_variance;
        let log_new_cluster = linalg::mvn_log_density(&th, &DVector::zeros(d), &marginal)?;
        Ok(Self {
            dim: d,
            theta_hat: theta_hat.to_vec(),
            precision: precision.transpose().as_slice().to_vec(),
            precision_theta,
            log_norm,
            log_new_cluster,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    /// `log N(θ̂; θ, Σ̂)`.
    pub fn log_density_at(&self, theta: &[f64]) -> f64 {
        let mut diff = [0.0f64; 32];
        let diff = if self.dim <= 32 {
            &mut diff[..self.dim]
        } else {
            return self.log_density_at_slow(theta);
        };
        for (o, (a, b)) in diff.iter_mut().zip(self.theta_hat.iter().zip(theta)) {
            *o = a - b;
        }
        self.log_norm - 0.5 * linalg::quad_form(&self.precision, diff)
    }

    fn log_density_at_slow(&self, theta: &[f64]) -> f64 {
        let diff: Vec<f64> = self.theta_hat.iter().zip(theta).map(|(a, b)| a - b).collect();
        self.log_norm - 0.5 * linalg::quad_form(&self.precision, &diff)
    }

    /// Log marginal density of `θ̂` with `θ ~ N(0, Σ0)` integrated out.
    pub fn log_new_cluster(&self) -> f64 {
        self.log_new_cluster
    }
}

/// Laplace summaries of every region, ready for sampling.
#[derive(Debug, Clone)]
pub struct SamplerModel {
    regions: Vec<RegionModel>,
    dim: usize,
    prior_variance: f64,
}

impl SamplerModel {
    pub fn new(summaries: &[RegionSummary], prior_variance: f64) -> Result<Self> {
        let pairs: Vec<_> = summaries
            .iter()
            .map(|s| (s.theta_hat.to_vec(), s.sigma_hat.clone()))
            .collect();
        Self::from_parts(&pairs, prior_variance)
    }

    /// Build from raw `(θ̂_i, Σ̂_i)` pairs.
    pub fn from_parts(parts: &[(Vec<f64>, DMatrix<f64>)], prior_variance: f64) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Usage("at least one region is required".into()));
        }
        if !(prior_variance > 0.0) {
            return Err(Error::Usage("prior variance must be > 0".into()));
        }
        let dim = parts[0].0.len();
        let regions = parts
            .iter()
            .enumerate()
            .map(|(i, (t, s))| {
                if t.len() != dim {
                    return Err(Error::Usage(format!("region {i} has dimension {} != {dim}", t.len())));
                }
                RegionModel::new(t, s, prior_variance).map_err(|e| e.with_context(format!("region {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            regions,
            dim,
            prior_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn region(&self, i: usize) -> &RegionModel {
        &self.regions[i]
    }

    /// Gaussian conditional `N(V m, V)` of a cluster parameter given its
    /// members, with `V = (Σ0^{-1} + Σ Σ̂_i^{-1})^{-1}` and `m = Σ Σ̂_i^{-1} θ̂_i`.
    pub fn cluster_posterior(&self, members: &[usize]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (chol, mean) = self.cluster_precision(members)?;
        Ok((mean, linalg::symmetrize(chol.inverse())))
    }

    fn cluster_precision(&self, members: &[usize]) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, DVector<f64>)> {
        let d = self.dim;
        let mut prec = DMatrix::<f64>::identity(d, d) / self.prior_variance;
        let mut lin = DVector::<f64>::zeros(d);
        for &i in members {
            let r = &self.regions[i];
            for a in 0..d {
                lin[a] += r.precision_theta[a];
                for b in 0..d {
                    prec[(a, b)] += r.precision[a * d + b];
                }
            }
        }
        let chol = linalg::cholesky(&prec)?;
        let mean = chol.solve(&lin);
        Ok((chol, mean))
    }

    /// `(Σ Σ̂_i^{-1})^{-1} Σ Σ̂_i^{-1} θ̂_i` over all regions.
    pub fn precision_weighted_mean(&self) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut prec = DMatrix::<f64>::zeros(d, d);
        let mut lin = DVector::<f64>::zeros(d);
        for r in &self.regions {
            for a in 0..d {
                lin[a] += r.precision_theta[a];
                for b in 0..d {
                    prec[(a, b)] += r.precision[a * d + b];
                }
            }
        }
        Ok(linalg::cholesky(&prec)?.solve(&lin).as_slice().to_vec())
    }

    fn draw_cluster<R: Rng>(&self, members: &[usize], rng: &mut R) -> Result<Vec<f64>> {
        let (chol, mean) = self.cluster_precision(members)?;
        let z = DVector::<f64>::from_iterator(self.dim, (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // Precision A = L Lᵀ, so L^{-T} z ~ N(0, A^{-1}).
        let offset = chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
        Ok((mean + offset).as_slice().to_vec())
    }
}

/// Current partition and cluster parameters. Labels are zero-based and
/// cover `0..k` with no empty cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub labels: Vec<usize>,
    pub cluster_params: Vec<Vec<f64>>,
}

impl ChainState {
    pub fn k(&self) -> usize {
        self.cluster_params.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let mut used = vec![false; k];
        for &z in &self.labels {
            if z >= k {
                return Err(Error::Usage(format!("label {z} out of range for {k} clusters")));
            }
            used[z] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(Error::Usage("state has an empty cluster".into()));
        }
        Ok(())
    }

    /// Renumber clusters in order of first appearance in `labels`.
    pub fn canonicalize(&mut self) {
        let mut map = vec![usize::MAX; self.k()];
        let mut next = 0;
        for z in self.labels.iter_mut() {
            if map[*z] == usize::MAX {
                map[*z] = next;
                next += 1;
            }
            *z = map[*z];
        }
        let mut params = vec![Vec::new(); next];
        for (old, new) in map.iter().enumerate() {
            if *new != usize::MAX {
                params[*new] = std::mem::take(&mut self.cluster_params[old]);
            }
        }
        self.cluster_params = params;
    }

    fn members(&self, c: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == c).collect()
    }
}

const UNASSIGNED: usize = usize::MAX;

/// Unnormalized log masses for region `i` over clusters `0..k` and, last, a
/// new cluster. `labels[i]` is ignored.
fn label_log_masses(
    i: usize,
    labels: &[usize],
    params: &[Vec<f64>],
    model: &SamplerModel,
    weights: &WeightMatrix,
    alpha: f64,
    out: &mut Vec<f64>,
) {
    let k = params.len();
    out.clear();
    out.resize(k + 1, 0.0);
    let row = weights.row(i);
    for (j, &z) in labels.iter().enumerate() {
        if j != i && z != UNASSIGNED {
            out[z] += row[j];
        }
    }
    let region = model.region(i);
    for c in 0..k {
        out[c] = if out[c] > 0.0 {
            out[c].ln() + region.log_density_at(&params[c])
        } else {
            f64::NEG_INFINITY
        };
    }
    out[k] = alpha.ln() + region.log_new_cluster();
}

fn normalize_log(masses: &mut [f64]) -> Result<()> {
    let max = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric(format!("label masses have no finite maximum: {masses:?}")));
    }
    let mut total = 0.0;
    for m in masses.iter_mut() {
        *m = (*m - max).exp();
        total += *m;
    }
    for m in masses.iter_mut() {
        *m /= total;
    }
    Ok(())
}

/// Full conditional of region `i`'s label given every other label and the
/// cluster parameters. Entry `c < k` is cluster `c`, entry `k` a new cluster.
pub fn label_full_conditional(
    i: usize,
    state: &ChainState,
    model: &SamplerModel,
    weights: &WeightMatrix,
    alpha: f64,
) -> Result<Vec<f64>> {
    if i >= state.labels.len() || state.labels.len() != model.len() || weights.len() != model.len() {
        return Err(Error::Usage("region index or sizes inconsistent".into()));
    }
    let mut out = Vec::new();
    label_log_masses(i, &state.labels, &state.cluster_params, model, weights, alpha, &mut out);
    normalize_log(&mut out)?;
    Ok(out)
}

/// Redraw every cluster parameter from its Gaussian conditional.
pub fn update_cluster_params<R: Rng>(state: &mut ChainState, model: &SamplerModel, rng: &mut R) -> Result<()> {
    for c in 0..state.k() {
        let members = state.members(c);
        state.cluster_params[c] = model.draw_cluster(&members, rng)?;
    }
    Ok(())
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    // Rounding left `acc` just below 1; take the last option with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Post-burn-in draws of one chain, aligned by draw index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    /// Iteration number (1-based) of each retained draw.
    pub iterations: Vec<usize>,
    pub label_draws: Vec<Vec<usize>>,
    pub param_draws: Vec<Vec<Vec<f64>>>,
    /// `log f(D_i | θ_{z_i})` per draw and region.
    pub per_region_loglik: Vec<Vec<f64>>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.label_draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label_draws.is_empty()
    }

    pub fn k_draws(&self) -> Vec<usize> {
        self.param_draws.iter().map(Vec::len).collect()
    }

    /// Parameter vector of region `i` in draw `b`.
    pub fn region_param(&self, b: usize, i: usize) -> &[f64] {
        &self.param_draws[b][self.label_draws[b][i]]
    }
}

/// One sweep over regions followed by a parameter refresh.
pub fn gibbs_sweep<R: Rng>(
    state: &mut ChainState,
    model: &SamplerModel,
    weights: &WeightMatrix,
    alpha: f64,
    rng: &mut R,
    scratch: &mut Vec<f64>,
) -> Result<()> {
    let n = state.labels.len();
    for i in 0..n {
        let old = state.labels[i];
        state.labels[i] = UNASSIGNED;
        if !state.labels.contains(&old) {
            state.cluster_params.remove(old);
            for z in state.labels.iter_mut() {
                if *z != UNASSIGNED && *z > old {
                    *z -= 1;
                }
            }
        }
        label_log_masses(i, &state.labels, &state.cluster_params, model, weights, alpha, scratch);
        normalize_log(scratch).map_err(|e| e.with_context(format!("region {i}")))?;
        let choice = sample_index(scratch, rng);
        if choice == state.k() {
            let theta = model
                .draw_cluster(&[i], rng)
                .map_err(|e| e.with_context(format!("region {i}")))?;
            state.cluster_params.push(theta);
        }
        state.labels[i] = choice;
    }
    state.canonicalize();
    update_cluster_params(state, model, rng)
}

/// Run one chain from the single-cluster start and keep post-burn-in draws.
///
/// With `exact` the per-region log-likelihoods are the exact survival
/// likelihoods; without it they fall back to the normal approximation.
pub fn run_chain(
    model: &SamplerModel,
    weights: &WeightMatrix,
    config: &GwcrpConfig,
    exact: Option<&[RegionLikelihood]>,
) -> Result<ChainTrace> {
    config.validate()?;
    let n = model.len();
    if weights.len() != n {
        return Err(Error::Usage(format!(
            "weight matrix has {} regions, model has {n}",
            weights.len()
        )));
    }
    if let Some(ex) = exact {
        if ex.len() != n || ex.iter().any(|l| l.dim() != model.dim()) {
            return Err(Error::Usage("exact likelihoods do not match the model".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = initial_state(model, config.init, &mut rng)?;
    let kept = config.iterations - config.burn_in;
    let mut trace = ChainTrace {
        iterations: Vec::with_capacity(kept),
        label_draws: Vec::with_capacity(kept),
        param_draws: Vec::with_capacity(kept),
        per_region_loglik: Vec::with_capacity(kept),
    };
    let mut scratch = Vec::new();
    for iter in 1..=config.iterations {
        gibbs_sweep(&mut state, model, weights, config.alpha, &mut rng, &mut scratch)
            .map_err(|e| e.with_context(format!("iteration {iter}")))?;
        if iter > config.burn_in {
            let ll: Vec<f64> = (0..n)
                .map(|i| {
                    let theta = &state.cluster_params[state.labels[i]];
                    match exact {
                        Some(ex) => ex[i].log_likelihood(theta),
                        None => model.region(i).log_density_at(theta),
                    }
                })
                .collect();
            trace.iterations.push(iter);
            trace.label_draws.push(state.labels.clone());
            trace.param_draws.push(state.cluster_params.clone());
            trace.per_region_loglik.push(ll);
        }
    }
    Ok(trace)
}

pub fn initial_state<R: Rng>(model: &SamplerModel, init: ChainInit, rng: &mut R) -> Result<ChainState> {
    let n = model.len();
    Ok(match init {
        ChainInit::OneCluster => ChainState {
            labels: vec![0; n],
            cluster_params: vec![model.precision_weighted_mean()?],
        },
        ChainInit::Singletons => ChainState {
            labels: (0..n).collect(),
            cluster_params: (0..n).map(|i| model.draw_cluster(&[i], rng)).collect::<Result<_>>()?,
        },
    })
}

/// Stack per-cluster vectors of a draw into per-region parameter vectors.
pub fn region_params(labels: &[usize], cluster_params: &[Vec<f64>], p: usize) -> Vec<ParamVector> {
    labels
        .iter()
        .map(|&z| ParamVector::from_slice(&cluster_params[z], p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{Kernel, SpatialGraph};

    fn scalar_model(theta_hats: &[f64], var: f64, v0: f64) -> SamplerModel {
        let parts: Vec<_> = theta_hats
            .iter()
            .map(|&t| (vec![t], DMatrix::from_element(1, 1, var)))
            .collect();
        SamplerModel::from_parts(&parts, v0).unwrap()
    }

    #[test]
    fn new_cluster_marginal_scalar() {
        let m = scalar_model(&[0.0], 1.0, 100.0);
        let expect = -0.5 * (2.0 * std::f64::consts::PI * 101.0).ln();
        assert!((m.region(0).log_new_cluster() - expect).abs() < 1e-14);
    }

    #[test]
    fn lone_region_opens_new_cluster_with_certainty() {
        let m = scalar_model(&[0.0], 1.0, 100.0);
        let w = WeightMatrix::from_rows(&[vec![1.0]]).unwrap();
        let state = ChainState {
            labels: vec![0],
            cluster_params: vec![vec![0.0]],
        };
        let p = label_full_conditional(0, &state, &m, &w, 1.0).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn weighted_urn_ratio() {
        // Region 0 adjacent to region 1 (cluster 0), two steps from region 2 (cluster 1).
        let h = 0.7;
        let g = SpatialGraph::new(vec!["a".into(), "b".into(), "c".into()], &[(0, 1), (1, 2)]).unwrap();
        let w = g.weights(h, Kernel::Exp).unwrap();
        let m = scalar_model(&[0.0, 0.0, 0.0], 1.0, 100.0);
        let state = ChainState {
            labels: vec![0, 0, 1],
            cluster_params: vec![vec![0.3], vec![-0.3]],
        };
        let p = label_full_conditional(0, &state, &m, &w, 1.0).unwrap();
        assert!((p[1] / p[0] - (-2.0 * h).exp()).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_update_single_region() {
        let parts = vec![(vec![2.0, -1.0], DMatrix::identity(2, 2))];
        let m = SamplerModel::from_parts(&parts, 100.0).unwrap();
        let (mean, cov) = m.cluster_posterior(&[0]).unwrap();
        let s = 100.0 / 101.0;
        assert!((mean[0] - 2.0 * s).abs() < 1e-12);
        assert!((mean[1] + s).abs() < 1e-12);
        assert!((cov[(0, 0)] - s).abs() < 1e-12);
        assert!(cov[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn conjugate_update_two_regions() {
        let parts = vec![(vec![1.5], DMatrix::identity(1, 1)), (vec![1.5], DMatrix::identity(1, 1))];
        let m = SamplerModel::from_parts(&parts, 100.0).unwrap();
        let (mean, _) = m.cluster_posterior(&[0, 1]).unwrap();
        assert!((mean[0] - 1.5 * 200.0 / 201.0).abs() < 1e-12);
    }

    #[test]
    fn flat_prior_limit() {
        let parts = vec![(vec![0.8, -3.0], DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]))];
        let m = SamplerModel::from_parts(&parts, 1e12).unwrap();
        let (mean, _) = m.cluster_posterior(&[0]).unwrap();
        assert!((mean[0] / 0.8 - 1.0).abs() < 1e-6);
        assert!((mean[1] / -3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn canonicalize_orders_by_first_appearance() {
        let mut s = ChainState {
            labels: vec![2, 0, 2, 1],
            cluster_params: vec![vec![0.0], vec![1.0], vec![2.0]],
        };
        s.canonicalize();
        assert_eq!(s.labels, vec![0, 1, 0, 2]);
        assert_eq!(s.cluster_params, vec![vec![2.0], vec![0.0], vec![1.0]]);
    }

    #[test]
    fn single_region_chain() {
        let m = scalar_model(&[0.4], 0.2, 100.0);
        let w = WeightMatrix::from_rows(&[vec![1.0]]).unwrap();
        let cfg = GwcrpConfig {
            iterations: 50,
            burn_in: 10,
            seed: 3,
            ..Default::default()
        };
        let t = run_chain(&m, &w, &cfg, None).unwrap();
        assert_eq!(t.len(), 40);
        assert!(t.label_draws.iter().all(|l| l == &vec![0]));
        assert!(t.k_draws().iter().all(|&k| k == 1));
    }

    #[test]
    fn config_validation() {
        let bad = GwcrpConfig {
            burn_in: 10,
            iterations: 10,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GwcrpConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
