use std::path::Path;

use gwcrp::io::{read_adjacency_file, read_design_file, read_survival_file, write_adjacency, write_atomic, write_survival_csv};
use gwcrp::study::replicate_dataset;
use gwcrp::{
    censoring_rate, grid_search, quantile_cutpoints, run_study, DesignFile, Error, FitSettings, HazardPartition,
    LatticePattern, PreparedData, Result, SimulationDesign, SpatialGraph, StudyOptions, SurvivalData,
};
use serde::Serialize;

use crate::config::{PartitionRule, RunConfig};
use crate::output::{self, SummaryOut};

const MAX_ATTEMPTS: usize = 50;

fn settings(cfg: &RunConfig) -> FitSettings {
    FitSettings {
        mcmc: cfg.mcmc,
        kernel: cfg.kernel,
        hpd_level: cfg.hpd_level,
        ..FitSettings::default()
    }
}

fn load_inputs(cfg: &RunConfig) -> Result<(SpatialGraph, SurvivalData)> {
    let (data, graph) = cfg.require_data()?;
    let graph = read_adjacency_file(graph)?;
    let data = read_survival_file(data)?.align_to(&graph)?;
    Ok((graph, data))
}

/// Candidate partitions; a quantile rule that fails for some `J` yields
/// `(J, error)` in that slot.
fn partitions_for(
    rule: &PartitionRule,
    data: &SurvivalData,
    graph: &SpatialGraph,
) -> Result<Vec<(usize, Result<HazardPartition>)>> {
    Ok(match rule {
        PartitionRule::Cutpoints(c) => {
            let p = HazardPartition::new(c.clone())?;
            vec![(p.pieces(), Ok(p))]
        }
        PartitionRule::Auto(js) => js
            .iter()
            .map(|&j| (j, quantile_cutpoints(&data.records, j, graph.region_ids())))
            .collect(),
    })
}

fn write_fit_outputs(
    cfg: &RunConfig,
    graph: &SpatialGraph,
    prepared: &PreparedData,
    h: f64,
    settings: &FitSettings,
) -> Result<usize> {
    let fit = prepared.fit(graph, h, settings)?;
    let out = &cfg.out;
    let summary = SummaryOut::new(
        graph.region_ids(),
        h,
        cfg.kernel,
        &prepared.partition,
        &prepared.summaries,
        &fit.trace,
        &fit.summary,
    );
    output::write_json(&out.join("summary.json"), &summary)?;
    output::write_trace_file(&out.join("trace.ndjson"), &fit.trace)?;
    output::write_clusters(&out.join("clusters.csv"), graph.region_ids(), &fit.summary.dahl_labels)?;
    Ok(fit.summary.k_hat)
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let h = cfg.h.ok_or_else(|| Error::Usage("fit needs --h".into()))?;
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::Usage(format!("--h must be finite and >= 0, got {h}")));
    }
    if matches!(&cfg.partition, PartitionRule::Auto(js) if js.len() > 1) {
        return Err(Error::Usage("fit takes a single piece count; use select for a J grid".into()));
    }
    let (graph, data) = load_inputs(cfg)?;
    let partition = partitions_for(&cfg.partition, &data, &graph)?.remove(0).1?;
    let settings = settings(cfg);
    let prepared = PreparedData::new(&graph, &data.records, data.covariate_dim, partition, &settings)?;
    output::ensure_dir(&cfg.out)?;
    output::write_json(&cfg.out.join("config.json"), cfg)?;
    let k = write_fit_outputs(cfg, &graph, &prepared, h, &settings)?;
    eprintln!("fit: h = {h}, k_hat = {k}, outputs in {}", cfg.out.display());
    Ok(())
}

pub fn select(cfg: &RunConfig) -> Result<()> {
    let (graph, data) = load_inputs(cfg)?;
    let partitions: Vec<_> = partitions_for(&cfg.partition, &data, &graph)?
        .into_iter()
        .map(|(j, p)| p.map_err(|e| (j, e.to_string())))
        .collect();
    let settings = settings(cfg);
    let grid = grid_search(&graph, &data.records, data.covariate_dim, &partitions, &cfg.h_grid, &settings)?;
    output::ensure_dir(&cfg.out)?;
    output::write_json(&cfg.out.join("config.json"), cfg)?;
    output::write_csv(&cfg.out.join("lpml_grid.csv"), &["h", "J", "lpml", "k_hat", "status"], |w| {
        for c in &grid.cells {
            let (lpml, k, status) = match &c.summary {
                Some(s) => (s.lpml.to_string(), s.k_hat.to_string(), "ok".to_string()),
                None => (String::new(), String::new(), c.error.clone().unwrap_or_default()),
            };
            w.write_record([c.h.to_string(), c.pieces.to_string(), lpml, k, status])?;
        }
        Ok(())
    })?;
    let best = grid.best_cell().ok_or_else(|| {
        let first = grid.cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        Error::Data(format!("no grid cell could be fitted; first failure: {first}"))
    })?;
    let partition = HazardPartition::new(best.cutpoints.clone())?;
    let prepared = PreparedData::new(&graph, &data.records, data.covariate_dim, partition, &settings)?;
    let k = write_fit_outputs(cfg, &graph, &prepared, best.h, &settings)?;
    eprintln!(
        "select: best h = {}, J = {}, LPML = {:.4}, k_hat = {k}, outputs in {}",
        best.h,
        best.pieces,
        best.lpml().unwrap_or(f64::NAN),
        cfg.out.display()
    );
    Ok(())
}

/// A design given as `lattice-I` .. `lattice-IV` or as a JSON file path.
pub fn load_design(spec: &str) -> Result<SimulationDesign> {
    if let Some(name) = spec.strip_prefix("lattice-") {
        let pattern: LatticePattern = name.parse()?;
        return Ok(SimulationDesign::lattice(pattern));
    }
    read_design_file(Path::new(spec))
}

#[derive(Serialize)]
struct ManifestEntry {
    replicate: usize,
    file: String,
    data_seed: u64,
    attempts: usize,
    censoring_rate: f64,
}

#[derive(Serialize)]
struct Manifest {
    design: String,
    master_seed: u64,
    replicates: Vec<ManifestEntry>,
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let name = cfg.require_design()?;
    let design = load_design(name)?;
    design.validate()?;
    if cfg.replicates == 0 {
        return Err(Error::Usage("--replicates must be positive".into()));
    }
    let out = &cfg.out;
    output::ensure_dir(out)?;
    output::write_json(&out.join("config.json"), cfg)?;
    output::write_json(&out.join("design.json"), &DesignFile::from_design(&design))?;
    let mut adj = Vec::new();
    write_adjacency(&mut adj, &design.graph)?;
    write_atomic(&out.join("graph.txt"), &adj)?;
    output::write_clusters(&out.join("truth.csv"), design.graph.region_ids(), &design.true_labels)?;

    let width = cfg.replicates.to_string().len().max(3);
    let mut entries = Vec::with_capacity(cfg.replicates);
    for t in 0..cfg.replicates {
        let (records, attempts, data_seed) = replicate_dataset(&design, cfg.mcmc.seed, t, MAX_ATTEMPTS)?;
        let file = format!("replicate_{:0width$}.csv", t + 1);
        let data = SurvivalData {
            region_ids: design.graph.region_ids().to_vec(),
            covariate_dim: design.covariate_dim(),
            records,
        };
        let mut buf = Vec::new();
        write_survival_csv(&mut buf, &data)?;
        write_atomic(&out.join(&file), &buf)?;
        entries.push(ManifestEntry {
            replicate: t + 1,
            file,
            data_seed,
            attempts,
            censoring_rate: censoring_rate(&data.records),
        });
    }
    output::write_json(
        &out.join("manifest.json"),
        &Manifest {
            design: name.to_string(),
            master_seed: cfg.mcmc.seed,
            replicates: entries,
        },
    )?;
    eprintln!("simulate: {} replicates in {}", cfg.replicates, out.display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let name = cfg.require_design()?;
    let design = load_design(name)?;
    let opts = StudyOptions {
        replicates: cfg.replicates,
        master_seed: cfg.mcmc.seed,
        h_grid: cfg.h_grid.clone(),
        settings: settings(cfg),
        max_attempts: MAX_ATTEMPTS,
    };
    let report = run_study(&design, &opts)?;
    if report.replicates.is_empty() {
        let first = report.failures.first().map(|f| f.1.clone()).unwrap_or_default();
        return Err(Error::Data(format!("no replicate completed; first failure: {first}")));
    }
    let out = &cfg.out;
    output::ensure_dir(out)?;
    output::write_json(&out.join("config.json"), cfg)?;

    let k_true = design.true_clusters();
    let mut bias_rows = Vec::new();
    let mut methods = Vec::new();
    for (label, m) in output::methods(&report) {
        let bias = report.bias(m, &design).ok();
        methods.push(output::method_summary(&label, &report, m, k_true, bias.as_ref()));
        if let Some(b) = bias {
            bias_rows.push((label, b));
        }
    }
    output::write_k_histogram(&out.join("k_hat.csv"), &report)?;
    output::write_csv(&out.join("rand_index.csv"), &["replicate", "method", "rand_index"], |w| {
        for (label, m) in output::methods(&report) {
            for r in &report.replicates {
                if let Some(ri) = r.cell(m).and_then(|c| c.rand_index) {
                    w.write_record([(r.index + 1).to_string(), label.clone(), ri.to_string()])?;
                }
            }
        }
        Ok(())
    })?;
    output::write_bias(&out.join("bias.csv"), &bias_rows)?;
    output::write_per_h(&out.join("per_h.csv"), &report, k_true)?;
    output::write_replicates(&out.join("replicates.csv"), &report)?;
    let summary = output::EvaluationOut {
        design: name.to_string(),
        true_clusters: k_true,
        replicates_requested: cfg.replicates,
        replicates_completed: report.replicates.len(),
        redraws: report.replicates.iter().map(|r| r.attempts - 1).sum(),
        mean_censoring_rate: report.mean_censoring_rate(),
        methods,
        failures: report
            .failures
            .iter()
            .map(|(t, reason)| output::FailureOut {
                replicate: t + 1,
                reason: reason.clone(),
            })
            .collect(),
    };
    output::write_json(&out.join("evaluation.json"), &summary)?;
    for m in &summary.methods {
        eprintln!(
            "evaluate [{}]: P(k_hat = {k_true}) = {:.2}, mean Rand = {:.3}, completed {}",
            m.method, m.p_true_k, m.mean_rand_index, m.completed
        );
    }
    Ok(())
}
