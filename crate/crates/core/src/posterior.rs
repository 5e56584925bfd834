//! Post-MCMC summaries: Dahl's representative partition, HPD intervals,
//! conditional predictive ordinates and LPML-based grid selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::ChainTrace;
use crate::survival::ParamVector;

/// `B²` times the squared distance of each draw's co-clustering matrix to the
/// mean, as exact integers `Σ_ij (B·B^{(l)}(i,j) − Σ_m B^{(m)}(i,j))²`.
fn scaled_dahl_distances(label_draws: &[Vec<usize>]) -> Result<Vec<u128>> {
    let Some(first) = label_draws.first() else {
        return Err(Error::Usage("Dahl's method needs at least one draw".into()));
    };
    let n = first.len();
    if label_draws.iter().any(|l| l.len() != n) {
        return Err(Error::Usage("label draws differ in length".into()));
    }
    let mut counts = vec![0i128; n * n];
    for labels in label_draws {
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    counts[i * n + j] += 1;
                }
            }
        }
    }
    let b = label_draws.len() as i128;
    Ok(label_draws
        .iter()
        .map(|labels| {
            let mut s: u128 = 0;
            for i in 0..n {
                for j in 0..n {
                    let e = if labels[i] == labels[j] { b } else { 0 } - counts[i * n + j];
                    s += (e * e) as u128;
                }
            }
            s
        })
        .collect())
}

/// Squared distances `Σ_ij (B^{(l)}(i,j) − B̄(i,j))²` of each draw's
/// co-clustering matrix to the mean co-clustering matrix.
pub fn dahl_distances(label_draws: &[Vec<usize>]) -> Result<Vec<f64>> {
    let scaled = scaled_dahl_distances(label_draws)?;
    let b2 = (label_draws.len() as f64).powi(2);
    Ok(scaled.into_iter().map(|s| s as f64 / b2).collect())
}

/// Index of the draw closest to the mean co-clustering matrix, and its labels.
/// Distances are compared exactly; ties go to the earliest draw.
pub fn dahl_partition(label_draws: &[Vec<usize>]) -> Result<(usize, Vec<usize>)> {
    let dist = scaled_dahl_distances(label_draws)?;
    let mut best = 0;
    for (l, &d) in dist.iter().enumerate() {
        if d < dist[best] {
            best = l;
        }
    }
    Ok((best, label_draws[best].clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpo {
    pub log_cpo: Vec<f64>,
    pub lpml: f64,
}

/// Harmonic-mean CPO estimates from a `B × n` matrix of per-region
/// log-likelihoods, computed in log space.
pub fn cpo_lpml(per_region_loglik: &[Vec<f64>]) -> Result<Cpo> {
    let Some(first) = per_region_loglik.first() else {
        return Err(Error::Usage("CPO needs at least one draw".into()));
    };
    let n = first.len();
    if per_region_loglik.iter().any(|r| r.len() != n) {
        return Err(Error::Usage("log-likelihood rows differ in length".into()));
    }
    if per_region_loglik.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite log-likelihood in trace".into()));
    }
    let b = per_region_loglik.len() as f64;
    let log_cpo: Vec<f64> = (0..n)
        .map(|i| {
            // log CPO_i = log B − logsumexp_b(−ℓ_ib)
            let m = per_region_loglik
                .iter()
                .map(|r| -r[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = per_region_loglik.iter().map(|r| (-r[i] - m).exp()).sum();
            b.ln() - (m + s.ln())
        })
        .collect();
    let lpml = log_cpo.iter().sum();
    Ok(Cpo { log_cpo, lpml })
}

/// One cell of an `(h, J)` tuning grid. `lpml` is `None` when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub h: f64,
    pub pieces: usize,
    pub lpml: Option<f64>,
}

/// Index of the cell with the largest LPML; ties go to the smaller `h`, then
/// the smaller `J`. `None` if every cell failed.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (idx, cell) in cells.iter().enumerate() {
        let Some(v) = cell.lpml else { continue };
        best = match best {
            None => Some(idx),
            Some(b) => {
                let cur = &cells[b];
                let bv = cur.lpml.expect("best has a value");
                let better = v > bv
                    || (v == bv && (cell.h < cur.h || (cell.h == cur.h && cell.pieces < cur.pieces)));
                Some(if better { idx } else { b })
            }
        };
    }
    best
}

/// `h` with the largest LPML from `(h, LPML)` pairs.
pub fn select_h(table: &[(f64, f64)]) -> Result<f64> {
    let cells: Vec<GridCell> = table
        .iter()
        .map(|&(h, lpml)| GridCell {
            h,
            pieces: 0,
            lpml: Some(lpml),
        })
        .collect();
    select_best(&cells)
        .map(|i| cells[i].h)
        .ok_or_else(|| Error::Usage("empty h grid".into()))
}

/// Shortest interval containing `⌈level·B⌉` of the sorted samples; the
/// leftmost window wins ties.
pub fn hpd_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.len() < 20 {
        return Err(Error::Usage(format!(
            "HPD interval needs at least 20 samples, got {}",
            samples.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Usage(format!("level must be in (0, 1), got {level}")));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = ((level * s.len() as f64 - 1e-9).ceil() as usize).clamp(1, s.len());
    let mut best = 0;
    for start in 1..=(s.len() - m) {
        if s[start + m - 1] - s[start] < s[best + m - 1] - s[best] {
            best = start;
        }
    }
    Ok((s[best], s[best + m - 1]))
}

/// Per-cluster report: the member whose posterior mean lies closest to the
/// cluster's estimate supplies the cluster's credible intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub label: usize,
    pub members: Vec<usize>,
    pub estimate: ParamVector,
    pub representative: usize,
    pub hpd: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub draw_index: usize,
    pub dahl_labels: Vec<usize>,
    pub k_hat: usize,
    /// Per-region parameters of the Dahl draw.
    pub estimates: Vec<ParamVector>,
    /// Per-region posterior means of `θ_{z_i}`.
    pub posterior_means: Vec<ParamVector>,
    /// Per-region, per-coordinate HPD intervals on the `(β, log λ)` scale.
    pub hpd: Vec<Vec<(f64, f64)>>,
    /// Per-region HPD intervals for `λ` on its natural scale.
    pub hpd_lambda: Vec<Vec<(f64, f64)>>,
    pub clusters: Vec<ClusterReport>,
    pub log_cpo: Vec<f64>,
    pub lpml: f64,
}

/// Summarize a trace with `p` regression coefficients per parameter vector.
pub fn summarize(trace: &ChainTrace, p: usize, level: f64) -> Result<PosteriorSummary> {
    let (draw_index, dahl_labels) = dahl_partition(&trace.label_draws)?;
    let cpo = cpo_lpml(&trace.per_region_loglik)?;
    let n = dahl_labels.len();
    let d = trace.param_draws[draw_index][0].len();
    let b = trace.len();

    let estimates: Vec<ParamVector> = (0..n)
        .map(|i| ParamVector::from_slice(trace.region_param(draw_index, i), p))
        .collect();

    let mut posterior_means = Vec::with_capacity(n);
    let mut hpd = Vec::with_capacity(n);
    let mut hpd_lambda = Vec::with_capacity(n);
    let mut column = vec![0.0; b];
    for i in 0..n {
        let mut mean = vec![0.0; d];
        let mut intervals = Vec::with_capacity(d);
        let mut lam_intervals = Vec::with_capacity(d - p);
        for a in 0..d {
            for (bi, v) in column.iter_mut().enumerate() {
                *v = trace.region_param(bi, i)[a];
            }
            mean[a] = column.iter().sum::<f64>() / b as f64;
            if b >= 20 {
                intervals.push(hpd_interval(&column, level)?);
                if a >= p {
                    let lam: Vec<f64> = column.iter().map(|v| v.exp()).collect();
                    lam_intervals.push(hpd_interval(&lam, level)?);
                }
            }
        }
        posterior_means.push(ParamVector::from_slice(&mean, p));
        hpd.push(intervals);
        hpd_lambda.push(lam_intervals);
    }

    let k_hat = dahl_labels.iter().max().map_or(0, |m| m + 1);
    let clusters = (0..k_hat)
        .map(|c| {
            let members: Vec<usize> = (0..n).filter(|&i| dahl_labels[i] == c).collect();
            let estimate = ParamVector::from_slice(&trace.param_draws[draw_index][c], p);
            let target = estimate.to_vec();
            let representative = *members
                .iter()
                .min_by(|&&x, &&y| {
                    let dx = sq_dist(&posterior_means[x].to_vec(), &target);
                    let dy = sq_dist(&posterior_means[y].to_vec(), &target);
                    dx.total_cmp(&dy)
                })
                .expect("Dahl clusters are non-empty");
            ClusterReport {
                label: c,
                hpd: hpd[representative].clone(),
                members,
                estimate,
                representative,
            }
        })
        .collect();

    Ok(PosteriorSummary {
        draw_index,
        dahl_labels,
        k_hat,
        estimates,
        posterior_means,
        hpd,
        hpd_lambda,
        clusters,
        log_cpo: cpo.log_cpo,
        lpml: cpo.lpml,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dahl_identical_draws() {
        let draws = vec![vec![0, 0, 1]; 4];
        let d = dahl_distances(&draws).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        assert_eq!(dahl_partition(&draws).unwrap(), (0, vec![0, 0, 1]));
    }

    #[test]
    fn dahl_relabeled_copies_coincide() {
        let draws = vec![vec![0, 0, 1], vec![1, 1, 0]];
        assert_eq!(dahl_distances(&draws).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dahl_empty_is_usage_error() {
        assert!(matches!(dahl_partition(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn cpo_constant_and_harmonic() {
        let c = cpo_lpml(&[vec![-1.5], vec![-1.5], vec![-1.5]]).unwrap();
        assert!((c.log_cpo[0] + 1.5).abs() < 1e-14);
        let c = cpo_lpml(&[vec![2f64.ln()], vec![4f64.ln()]]).unwrap();
        assert!((c.log_cpo[0].exp() - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_draw_lpml_is_loglik_sum() {
        let c = cpo_lpml(&[vec![-1.0, -2.5, -0.25]]).unwrap();
        assert!((c.lpml + 3.75).abs() < 1e-14);
    }

    #[test]
    fn select_ties_prefer_small_h() {
        assert_eq!(select_h(&[(0.4, -10.0)]).unwrap(), 0.4);
        assert_eq!(select_h(&[(1.0, -5.0), (0.2, -5.0), (3.0, -6.0)]).unwrap(), 0.2);
        assert!(select_h(&[]).is_err());
        let cells = vec![
            GridCell { h: 0.0, pieces: 3, lpml: None },
            GridCell { h: 1.0, pieces: 3, lpml: Some(-3.0) },
        ];
        assert_eq!(select_best(&cells), Some(1));
    }

    #[test]
    fn hpd_cases() {
        let s: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(hpd_interval(&s, 0.95).unwrap(), (1.0, 95.0));
        assert_eq!(hpd_interval(&[2.5; 30], 0.9).unwrap(), (2.5, 2.5));
        assert!(hpd_interval(&[1.0; 19], 0.9).is_err());
        assert!(hpd_interval(&s, 1.0).is_err());
    }
}
