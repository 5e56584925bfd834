//! Synthetic spatial survival data and clustering/estimation metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::SpatialGraph;
use crate::survival::{HazardPartition, ParamVector, SurvivalRecord};

/// True `(β, λ)` of one cluster, `λ` on the natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl ClusterParams {
    pub fn theta(&self) -> ParamVector {
        ParamVector::from_lambda(self.beta.clone(), &self.lambda)
    }
}

/// The three `(β, λ)` sets of the reference simulation study.
pub fn reference_cluster_params() -> Vec<ClusterParams> {
    vec![
        ClusterParams {
            beta: vec![1.0, 0.5, 1.0],
            lambda: vec![0.045, 0.036, 0.045],
        },
        ClusterParams {
            beta: vec![1.5, 1.0, 1.0],
            lambda: vec![0.045, 0.036, 0.036],
        },
        ClusterParams {
            beta: vec![2.0, 0.5, 1.5],
            lambda: vec![0.036, 0.045, 0.0495],
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationDesign {
    pub graph: SpatialGraph,
    /// Zero-based true cluster of each region, in graph order.
    pub true_labels: Vec<usize>,
    pub cluster_params: Vec<ClusterParams>,
    pub subjects_per_region: usize,
    pub partition: HazardPartition,
    pub censor_cap: f64,
    /// Rate of the exponential censoring distribution.
    pub censor_rate: f64,
}

/// Spatial layouts of the bundled 8×8 lattice designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticePattern {
    /// Three contiguous clusters.
    I,
    /// Two clusters, one made of two disjoint areas.
    II,
    /// Three clusters, one made of two disjoint areas.
    III,
    /// Two clusters, both made of two disjoint areas.
    IV,
}

impl std::str::FromStr for LatticePattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            "IV" | "4" => Ok(Self::IV),
            _ => Err(Error::Usage(format!("unknown lattice design {s:?}"))),
        }
    }
}

impl LatticePattern {
    pub fn labels(self) -> Vec<usize> {
        let mut out = Vec::with_capacity(64);
        for r in 0..8 {
            for c in 0..8 {
                let top = r < 4;
                out.push(match self {
                    LatticePattern::I => {
                        if c < 3 {
                            0
                        } else if top {
                            1
                        } else {
                            2
                        }
                    }
                    LatticePattern::II => usize::from((2..6).contains(&c)),
                    LatticePattern::III => {
                        if (top && c < 3) || (!top && c >= 5) {
                            0
                        } else if top {
                            1
                        } else {
                            2
                        }
                    }
                    LatticePattern::IV => usize::from(top != (c < 4)),
                });
            }
        }
        out
    }

    pub fn clusters(self) -> usize {
        match self {
            LatticePattern::I | LatticePattern::III => 3,
            LatticePattern::II | LatticePattern::IV => 2,
        }
    }
}

impl SimulationDesign {
    /// Reference settings on the 8×8 rook lattice: 60 subjects per region,
    /// three N(0,1) covariates, cutpoints (1.5, 6), censoring at
    /// `min(150, Exp(0.01))`.
    pub fn lattice(pattern: LatticePattern) -> Self {
        let params = reference_cluster_params();
        Self {
            graph: SpatialGraph::lattice(8, 8),
            true_labels: pattern.labels(),
            cluster_params: params[..pattern.clusters()].to_vec(),
            subjects_per_region: 60,
            partition: HazardPartition::new(vec![1.5, 6.0]).expect("valid cutpoints"),
            censor_cap: 150.0,
            censor_rate: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_labels.len() != self.graph.len() {
            return Err(Error::Usage(format!(
                "{} labels for {} regions",
                self.true_labels.len(),
                self.graph.len()
            )));
        }
        if self.cluster_params.is_empty() {
            return Err(Error::Usage("design has no clusters".into()));
        }
        if let Some(z) = self.true_labels.iter().find(|&&z| z >= self.cluster_params.len()) {
            return Err(Error::Usage(format!("label {} has no cluster parameters", z + 1)));
        }
        let p = self.cluster_params[0].beta.len();
        for c in &self.cluster_params {
            if c.beta.len() != p || c.lambda.len() != self.partition.pieces() {
                return Err(Error::Usage("cluster parameter shapes are inconsistent".into()));
            }
            if c.lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                return Err(Error::Usage("baseline hazards must be positive".into()));
            }
        }
        if !(self.censor_cap > 0.0) || !(self.censor_rate > 0.0) {
            return Err(Error::Usage("censoring cap and rate must be positive".into()));
        }
        Ok(())
    }

    pub fn covariate_dim(&self) -> usize {
        self.cluster_params[0].beta.len()
    }

    pub fn true_clusters(&self) -> usize {
        let mut seen = vec![false; self.cluster_params.len()];
        for &z in &self.true_labels {
            seen[z] = true;
        }
        seen.iter().filter(|s| **s).count()
    }
}

/// Survival function of the piecewise-exponential model at `t`.
pub fn piecewise_survival(t: f64, lambda: &[f64], linpred: f64, partition: &HazardPartition) -> f64 {
    let mut cum = 0.0;
    for (j, lam) in lambda.iter().enumerate() {
        let lo = partition.lower(j);
        if t <= lo {
            break;
        }
        cum += lam * (t.min(partition.upper(j)) - lo);
    }
    (-cum * linpred.exp()).exp()
}

/// Event time `t` with `S(t) = u`, by inverting the piecewise-linear
/// cumulative hazard piece by piece.
pub fn inverse_piecewise_survival(u: f64, lambda: &[f64], linpred: f64, partition: &HazardPartition) -> f64 {
    debug_assert!(u > 0.0 && u <= 1.0);
    let target = -u.ln() * (-linpred).exp();
    let mut cum = 0.0;
    for (j, &lam) in lambda.iter().enumerate() {
        let lo = partition.lower(j);
        let hi = partition.upper(j);
        let width = hi - lo;
        if !width.is_finite() || cum + lam * width > target {
            return lo + (target - cum) / lam;
        }
        cum += lam * width;
    }
    unreachable!("the last piece is unbounded")
}

/// Draw one dataset. Per subject, in order: `p` covariates, the event-time
/// uniform, the censoring exponential.
pub fn generate_dataset(design: &SimulationDesign, seed: u64) -> Result<Vec<SurvivalRecord>> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let censor = Exp::new(design.censor_rate).map_err(|e| Error::Usage(e.to_string()))?;
    let p = design.covariate_dim();
    let mut out = Vec::with_capacity(design.graph.len() * design.subjects_per_region);
    for (region, &z) in design.true_labels.iter().enumerate() {
        let params = &design.cluster_params[z];
        for _ in 0..design.subjects_per_region {
            let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let eta: f64 = x.iter().zip(&params.beta).map(|(a, b)| a * b).sum();
            let u = loop {
                let v: f64 = rng.random();
                if v > 0.0 {
                    break v;
                }
            };
            let latent = inverse_piecewise_survival(u, &params.lambda, eta, &design.partition);
            let c = rng.sample(censor).min(design.censor_cap);
            out.push(SurvivalRecord {
                time: latent.min(c),
                event: latent <= c,
                covariates: x,
                region,
            });
        }
    }
    Ok(out)
}

/// First `(region, piece)` without events, if any.
pub fn first_empty_piece(
    records: &[SurvivalRecord],
    n_regions: usize,
    partition: &HazardPartition,
) -> Option<(usize, usize)> {
    let mut counts = vec![vec![0usize; partition.pieces()]; n_regions];
    for r in records.iter().filter(|r| r.event) {
        counts[r.region][partition.piece_of(r.time)] += 1;
    }
    counts.iter().enumerate().find_map(|(i, row)| row.iter().position(|&c| c == 0).map(|j| (i, j)))
}

pub fn censoring_rate(records: &[SurvivalRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| !r.event).count() as f64 / records.len() as f64
}

/// Fraction of unordered pairs on which two partitions agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!("label vectors differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut agree = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

/// Cluster-then-average bias and MSE per parameter coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub p: usize,
    /// Per coordinate of `(β, log λ)`.
    pub ab: Vec<f64>,
    pub amse: Vec<f64>,
    /// Per piece, `λ` on the natural scale.
    pub ab_lambda: Vec<f64>,
    pub amse_lambda: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl BiasReport {
    pub fn beta_ab(&self) -> f64 {
        mean(&self.ab[..self.p])
    }
    pub fn beta_amse(&self) -> f64 {
        mean(&self.amse[..self.p])
    }
    pub fn log_lambda_ab(&self) -> f64 {
        mean(&self.ab[self.p..])
    }
    pub fn log_lambda_amse(&self) -> f64 {
        mean(&self.amse[self.p..])
    }
    pub fn lambda_ab(&self) -> f64 {
        mean(&self.ab_lambda)
    }
    pub fn lambda_amse(&self) -> f64 {
        mean(&self.amse_lambda)
    }
}

/// AB and AMSE over replicates: average within each true cluster over its
/// regions and replicates, then across clusters.
///
/// `estimates[t][i]` is the estimate of region `i` in replicate `t`.
pub fn ab_amse(
    estimates: &[Vec<ParamVector>],
    true_labels: &[usize],
    truth: &[ClusterParams],
) -> Result<BiasReport> {
    if estimates.is_empty() {
        return Err(Error::Usage("no replicates".into()));
    }
    let n = true_labels.len();
    if estimates.iter().any(|e| e.len() != n) {
        return Err(Error::Usage("estimates and true labels differ in region count".into()));
    }
    let p = truth[0].beta.len();
    let pieces = truth[0].lambda.len();
    let d = p + pieces;
    if estimates.iter().flatten().any(|e| e.beta.len() != p || e.log_lambda.len() != pieces) {
        return Err(Error::Usage("estimate shape does not match truth".into()));
    }
    if true_labels.iter().any(|&z| z >= truth.len()) {
        return Err(Error::Usage("true label without parameters".into()));
    }
    let t_count = estimates.len() as f64;
    let mut ab = vec![0.0; d];
    let mut amse = vec![0.0; d];
    let mut ab_l = vec![0.0; pieces];
    let mut amse_l = vec![0.0; pieces];
    let mut k = 0usize;
    for (r, params) in truth.iter().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| true_labels[i] == r).collect();
        if members.is_empty() {
            continue;
        }
        k += 1;
        let kappa = members.len() as f64;
        let th = params.theta().to_vec();
        let mut cb = vec![0.0; d];
        let mut cm = vec![0.0; d];
        let mut cbl = vec![0.0; pieces];
        let mut cml = vec![0.0; pieces];
        for &i in &members {
            for rep in estimates {
                let e = rep[i].to_vec();
                for a in 0..d {
                    let diff = e[a] - th[a];
                    cb[a] += diff;
                    cm[a] += diff * diff;
                }
                for j in 0..pieces {
                    let diff = e[p + j].exp() - params.lambda[j];
                    cbl[j] += diff;
                    cml[j] += diff * diff;
                }
            }
        }
        let scale = kappa * t_count;
        for a in 0..d {
            ab[a] += cb[a] / scale;
            amse[a] += cm[a] / scale;
        }
        for j in 0..pieces {
            ab_l[j] += cbl[j] / scale;
            amse_l[j] += cml[j] / scale;
        }
    }
    let k = k as f64;
    let div = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x /= k);
    div(&mut ab);
    div(&mut amse);
    div(&mut ab_l);
    div(&mut amse_l);
    Ok(BiasReport {
        p,
        ab,
        amse,
        ab_lambda: ab_l,
        amse_lambda: amse_l,
    })
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut x = master;
    for &p in path {
        x ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}
