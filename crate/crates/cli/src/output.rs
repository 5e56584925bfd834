//! File layouts written by the subcommands.

use std::path::Path;

use gwcrp::io::write_atomic;
use gwcrp::{
    BiasReport, ChainTrace, Error, HazardPartition, Kernel, Method, ParamVector, PosteriorSummary, RegionSummary,
    Result, StudyReport, CRP,
};
use serde::Serialize;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| e.with_context(path.display().to_string()))
}

pub fn write_csv<F>(path: &Path, header: &[&str], fill: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
    }
    write_atomic(path, &buf).map_err(|e| e.with_context(path.display().to_string()))
}

pub fn write_trace_file(path: &Path, trace: &ChainTrace) -> Result<()> {
    let mut buf = Vec::new();
    gwcrp::io::write_trace(&mut buf, trace)?;
    write_atomic(path, &buf).map_err(|e| e.with_context(path.display().to_string()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).with_context(dir.display().to_string()))
}

/// `(β, λ)` with `λ` on its natural scale.
#[derive(Debug, Serialize)]
pub struct Params {
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl From<&ParamVector> for Params {
    fn from(p: &ParamVector) -> Self {
        Self {
            beta: p.beta.clone(),
            lambda: p.log_lambda.iter().map(|v| v.exp()).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RegionOut {
    pub id: String,
    pub label: usize,
    pub subjects: usize,
    pub events: Vec<usize>,
    pub mle: Params,
    pub estimate: Params,
    pub posterior_mean: Params,
    pub hpd_beta: Vec<(f64, f64)>,
    pub hpd_lambda: Vec<(f64, f64)>,
    pub log_cpo: f64,
}

#[derive(Debug, Serialize)]
pub struct ClusterOut {
    pub label: usize,
    pub size: usize,
    pub members: Vec<String>,
    pub representative: String,
    pub estimate: Params,
    pub hpd_beta: Vec<(f64, f64)>,
    pub hpd_log_lambda: Vec<(f64, f64)>,
}

/// Contents of `summary.json`.
#[derive(Debug, Serialize)]
pub struct SummaryOut {
    pub h: f64,
    pub kernel: Kernel,
    pub pieces: usize,
    pub cutpoints: Vec<f64>,
    pub k_hat: usize,
    pub lpml: f64,
    pub dahl_iteration: usize,
    pub regions: Vec<RegionOut>,
    pub clusters: Vec<ClusterOut>,
}

impl SummaryOut {
    pub fn new(
        ids: &[String],
        h: f64,
        kernel: Kernel,
        partition: &HazardPartition,
        fits: &[RegionSummary],
        trace: &ChainTrace,
        summary: &PosteriorSummary,
    ) -> Self {
        let p = summary.estimates.first().map_or(0, |e| e.beta.len());
        let regions = ids
            .iter()
            .enumerate()
            .map(|(i, id)| RegionOut {
                id: id.clone(),
                label: summary.dahl_labels[i] + 1,
                subjects: fits[i].subject_count,
                events: fits[i].event_counts.clone(),
                mle: (&fits[i].theta_hat).into(),
                estimate: (&summary.estimates[i]).into(),
                posterior_mean: (&summary.posterior_means[i]).into(),
                hpd_beta: summary.hpd[i][..p].to_vec(),
                hpd_lambda: summary.hpd_lambda[i].clone(),
                log_cpo: summary.log_cpo[i],
            })
            .collect();
        let clusters = summary
            .clusters
            .iter()
            .map(|c| ClusterOut {
                label: c.label + 1,
                size: c.members.len(),
                members: c.members.iter().map(|&m| ids[m].clone()).collect(),
                representative: ids[c.representative].clone(),
                estimate: (&c.estimate).into(),
                hpd_beta: c.hpd[..p].to_vec(),
                hpd_log_lambda: c.hpd[p..].to_vec(),
            })
            .collect();
        Self {
            h,
            kernel,
            pieces: partition.pieces(),
            cutpoints: partition.cutpoints().to_vec(),
            k_hat: summary.k_hat,
            lpml: summary.lpml,
            dahl_iteration: trace.iterations[summary.draw_index],
            regions,
            clusters,
        }
    }
}

pub fn write_clusters(path: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    write_csv(path, &["region", "label"], |w| {
        for (id, z) in ids.iter().zip(labels) {
            w.write_record([id.as_str(), &(z + 1).to_string()])?;
        }
        Ok(())
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

#[derive(Debug, Serialize)]
pub struct MethodOut {
    pub method: String,
    pub completed: usize,
    pub p_true_k: f64,
    pub mean_rand_index: f64,
    pub beta_ab: Option<f64>,
    pub beta_amse: Option<f64>,
    pub log_lambda_ab: Option<f64>,
    pub log_lambda_amse: Option<f64>,
    pub lambda_ab: Option<f64>,
    pub lambda_amse: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct FailureOut {
    pub replicate: usize,
    pub reason: String,
}

/// Contents of `evaluation.json`.
#[derive(Debug, Serialize)]
pub struct EvaluationOut {
    pub design: String,
    pub true_clusters: usize,
    pub replicates_requested: usize,
    pub replicates_completed: usize,
    pub redraws: usize,
    pub mean_censoring_rate: f64,
    pub methods: Vec<MethodOut>,
    pub failures: Vec<FailureOut>,
}

/// Methods reported by `evaluate`: the selected decay, and the plain CRP
/// when `h = 0` is on the grid.
pub fn methods(report: &StudyReport) -> Vec<(String, Method)> {
    let mut out = vec![("selected".to_string(), Method::Selected)];
    if report.h_values().contains(&0.0) {
        out.push(("crp".to_string(), CRP));
    }
    out
}

pub fn method_summary(name: &str, report: &StudyReport, method: Method, k_true: usize, bias: Option<&BiasReport>) -> MethodOut {
    MethodOut {
        method: name.to_string(),
        completed: report.completed(method),
        p_true_k: report.fraction_k(method, k_true),
        mean_rand_index: report.mean_rand_index(method),
        beta_ab: bias.map(|b| b.beta_ab()),
        beta_amse: bias.map(|b| b.beta_amse()),
        log_lambda_ab: bias.map(|b| b.log_lambda_ab()),
        log_lambda_amse: bias.map(|b| b.log_lambda_amse()),
        lambda_ab: bias.map(|b| b.lambda_ab()),
        lambda_amse: bias.map(|b| b.lambda_amse()),
    }
}

pub fn write_k_histogram(path: &Path, report: &StudyReport) -> Result<()> {
    write_csv(path, &["method", "k_hat", "count"], |w| {
        for (name, m) in methods(report) {
            for (k, n) in report.k_histogram(m) {
                w.write_record([name.as_str(), &k.to_string(), &n.to_string()])?;
            }
        }
        Ok(())
    })
}

pub fn write_bias(path: &Path, rows: &[(String, BiasReport)]) -> Result<()> {
    write_csv(path, &["method", "parameter", "ab", "amse"], |w| {
        for (name, b) in rows {
            for (j, (ab, amse)) in b.ab.iter().zip(&b.amse).enumerate() {
                let param = if j < b.p {
                    format!("beta{}", j + 1)
                } else {
                    format!("log_lambda{}", j - b.p + 1)
                };
                w.write_record([name.as_str(), &param, &ab.to_string(), &amse.to_string()])?;
            }
            for (j, (ab, amse)) in b.ab_lambda.iter().zip(&b.amse_lambda).enumerate() {
                w.write_record([name.as_str(), &format!("lambda{}", j + 1), &ab.to_string(), &amse.to_string()])?;
            }
        }
        Ok(())
    })
}

pub fn write_per_h(path: &Path, report: &StudyReport, k_true: usize) -> Result<()> {
    let selected = report.selected_h();
    write_csv(
        path,
        &["h", "completed", "p_true_k", "mean_rand_index", "mean_lpml", "times_selected"],
        |w| {
            for h in report.h_values() {
                let m = Method::Fixed(h);
                let lpmls: Vec<f64> = report.replicates.iter().filter_map(|r| r.cell(m)).filter_map(|c| c.lpml).collect();
                let mean_lpml = (!lpmls.is_empty()).then(|| lpmls.iter().sum::<f64>() / lpmls.len() as f64);
                w.write_record([
                    h.to_string(),
                    report.completed(m).to_string(),
                    report.fraction_k(m, k_true).to_string(),
                    report.mean_rand_index(m).to_string(),
                    opt(mean_lpml),
                    selected.iter().filter(|&&s| s == h).count().to_string(),
                ])?;
            }
            Ok(())
        },
    )
}

pub fn write_replicates(path: &Path, report: &StudyReport) -> Result<()> {
    write_csv(
        path,
        &[
            "replicate",
            "attempts",
            "data_seed",
            "censoring_rate",
            "selected_h",
            "k_hat",
            "rand_index",
            "k_hat_crp",
            "rand_index_crp",
        ],
        |w| {
            for r in &report.replicates {
                let sel = r.cell(Method::Selected);
                let crp = r.cell(CRP);
                w.write_record([
                    (r.index + 1).to_string(),
                    r.attempts.to_string(),
                    r.data_seed.to_string(),
                    r.censoring_rate.to_string(),
                    opt(sel.map(|c| c.h)),
                    sel.and_then(|c| c.k_hat).map_or_else(String::new, |k| k.to_string()),
                    opt(sel.and_then(|c| c.rand_index)),
                    crp.and_then(|c| c.k_hat).map_or_else(String::new, |k| k.to_string()),
                    opt(crp.and_then(|c| c.rand_index)),
                ])?;
            }
            Ok(())
        },
    )
}
