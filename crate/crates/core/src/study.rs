//! End-to-end pipeline: per-region fits, chains over an `(h, J)` grid,
//! LPML selection, and replicated simulation studies.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{select_best, summarize, GridCell, PosteriorSummary};
use crate::sampler::{run_chain, ChainTrace, GwcrpConfig, SamplerModel};
use crate::simulation::{
    ab_amse, censoring_rate, derive_seed, first_empty_piece, generate_dataset, rand_index, BiasReport,
    SimulationDesign,
};
use crate::spatial::{Kernel, SpatialGraph};
use crate::survival::{
    fit_cached, group_by_region, HazardPartition, NewtonOptions, ParamVector, RegionLikelihood, RegionSummary,
    SurvivalRecord,
};

/// The default decay grid: 0 to 2 by 0.2, then 3 to 10 by 1.
pub fn default_h_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=10).map(|k| k as f64 / 5.0).collect();
    grid.extend((3..=10).map(f64::from));
    grid
}

/// Sort ascending and drop repeated values.
pub fn dedup_grid(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub mcmc: GwcrpConfig,
    pub kernel: Kernel,
    pub newton: NewtonOptions,
    pub hpd_level: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            mcmc: GwcrpConfig::default(),
            kernel: Kernel::Exp,
            newton: NewtonOptions::default(),
            hpd_level: 0.95,
        }
    }
}

/// Kaplan-Meier median of pooled follow-up, or the median event time when
/// the survival curve never reaches one half.
pub fn median_survival(records: &[SurvivalRecord]) -> Result<f64> {
    let mut sorted: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.event)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut at_risk = sorted.len() as f64;
    let mut surv = 1.0;
    let mut k = 0;
    while k < sorted.len() {
        let t = sorted[k].0;
        let mut deaths = 0.0;
        let mut leaving = 0.0;
        while k < sorted.len() && sorted[k].0 == t {
            deaths += f64::from(u8::from(sorted[k].1));
            leaving += 1.0;
            k += 1;
        }
        if deaths > 0.0 {
            surv *= 1.0 - deaths / at_risk;
            if surv <= 0.5 {
                return Ok(t);
            }
        }
        at_risk -= leaving;
    }
    let events: Vec<f64> = sorted.iter().filter(|r| r.1).map(|r| r.0).collect();
    if events.is_empty() {
        return Err(Error::Data("no events to place cutpoints".into()));
    }
    Ok(quantile(&events, 0.5))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `pieces − 1` cutpoints: the last at the median survival time, the rest
/// at even quantiles of the event times below it. Fails if any region is
/// left with an empty piece.
pub fn quantile_cutpoints(records: &[SurvivalRecord], pieces: usize, region_ids: &[String]) -> Result<HazardPartition> {
    if pieces == 0 {
        return Err(Error::Usage("number of pieces must be at least 1".into()));
    }
    if pieces == 1 {
        return Ok(HazardPartition::single());
    }
    let median = median_survival(records)?;
    let mut below: Vec<f64> = records.iter().filter(|r| r.event && r.time > 0.0 && r.time <= median).map(|r| r.time).collect();
    below.sort_by(f64::total_cmp);
    let inner = pieces - 2;
    let mut cuts = Vec::with_capacity(pieces - 1);
    for k in 1..=inner {
        cuts.push(quantile(&below, k as f64 / (inner + 1) as f64));
    }
    cuts.push(median);
    let partition = HazardPartition::new(cuts.clone())
        .map_err(|_| Error::Data(format!("cannot place {pieces} pieces: quantile cutpoints {cuts:?} collapse")))?;
    if let Some((region, piece)) = first_empty_piece(records, region_ids.len(), &partition) {
        return Err(Error::EmptyPiece {
            region: region_ids[region].clone(),
            piece,
        });
    }
    Ok(partition)
}

/// Per-region fits and cached likelihoods for one hazard partition.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub partition: HazardPartition,
    pub summaries: Vec<RegionSummary>,
    pub likelihoods: Vec<RegionLikelihood>,
    pub model: SamplerModel,
}

impl PreparedData {
    /// Fit every region in parallel. On failure the error of the first
    /// failing region in graph order is returned.
    pub fn new(
        graph: &SpatialGraph,
        records: &[SurvivalRecord],
        covariate_dim: usize,
        partition: HazardPartition,
        settings: &FitSettings,
    ) -> Result<Self> {
        let groups = group_by_region(records, graph.len())?;
        let fitted: Vec<Result<(RegionLikelihood, RegionSummary)>> = groups
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                let id = &graph.region_ids()[i];
                let lik = RegionLikelihood::with_dim(g, &partition, covariate_dim)
                    .map_err(|e| e.with_context(format!("region {id}")))?;
                let summary = fit_cached(id, &lik, None, &settings.newton)?;
                Ok((lik, summary))
            })
            .collect();
        let (likelihoods, summaries): (Vec<_>, Vec<_>) = fitted.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let model = SamplerModel::new(&summaries, settings.mcmc.prior_variance)?;
        Ok(Self {
            partition,
            summaries,
            likelihoods,
            model,
        })
    }

    pub fn covariate_dim(&self) -> usize {
        self.model.dim() - self.partition.pieces()
    }

    /// Run one chain at decay `h` and summarize it.
    pub fn fit(&self, graph: &SpatialGraph, h: f64, settings: &FitSettings) -> Result<CellFit> {
        let weights = graph.weights(h, settings.kernel)?;
        let trace = run_chain(&self.model, &weights, &settings.mcmc, Some(&self.likelihoods))?;
        let summary = summarize(&trace, self.covariate_dim(), settings.hpd_level)?;
        Ok(CellFit {
            h,
            pieces: self.partition.pieces(),
            trace,
            summary,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CellFit {
    pub h: f64,
    pub pieces: usize,
    pub trace: ChainTrace,
    pub summary: PosteriorSummary,
}

/// One `(h, J)` cell: its summary on success, the error text otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub h: f64,
    pub pieces: usize,
    pub cutpoints: Vec<f64>,
    pub summary: Option<PosteriorSummary>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn lpml(&self) -> Option<f64> {
        self.summary.as_ref().map(|s| s.lpml)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
    /// Index into `cells` of the LPML-best cell.
    pub best: Option<usize>,
}

impl GridResult {
    pub fn best_cell(&self) -> Option<&CellResult> {
        self.best.map(|b| &self.cells[b])
    }

    /// Cell at decay `h` for the given piece count.
    pub fn cell_at(&self, h: f64, pieces: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.h == h && c.pieces == pieces)
    }
}

/// Run every `(h, partition)` combination. A partition that could not be
/// built is passed as `Err((pieces, message))`. Cells that fail are recorded
/// with their error and skipped during selection; the chain seed is the
/// same in every cell.
pub fn grid_search(
    graph: &SpatialGraph,
    records: &[SurvivalRecord],
    covariate_dim: usize,
    partitions: &[Result<HazardPartition, (usize, String)>],
    h_grid: &[f64],
    settings: &FitSettings,
) -> Result<GridResult> {
    let h_grid = dedup_grid(h_grid);
    if h_grid.is_empty() || partitions.is_empty() {
        return Err(Error::Usage("h and J grids must be non-empty".into()));
    }
    settings.mcmc.validate()?;
    let prepared: Vec<std::result::Result<PreparedData, (usize, String)>> = partitions
        .iter()
        .map(|p| match p {
            Ok(part) => PreparedData::new(graph, records, covariate_dim, part.clone(), settings)
                .map_err(|e| (part.pieces(), e.to_string())),
            Err(e) => Err(e.clone()),
        })
        .collect();
    let tasks: Vec<(usize, f64)> = (0..prepared.len()).flat_map(|j| h_grid.iter().map(move |&h| (j, h))).collect();
    let cells: Vec<CellResult> = tasks
        .par_iter()
        .map(|&(j, h)| match &prepared[j] {
            Ok(prep) => {
                let base = CellResult {
                    h,
                    pieces: prep.partition.pieces(),
                    cutpoints: prep.partition.cutpoints().to_vec(),
                    summary: None,
                    error: None,
                };
                match prep.fit(graph, h, settings) {
                    Ok(fit) => CellResult {
                        summary: Some(fit.summary),
                        ..base
                    },
                    Err(e) => CellResult {
                        error: Some(e.to_string()),
                        ..base
                    },
                }
            }
            Err((pieces, msg)) => CellResult {
                h,
                pieces: *pieces,
                cutpoints: Vec::new(),
                summary: None,
                error: Some(msg.clone()),
            },
        })
        .collect();
    let table: Vec<GridCell> = cells
        .iter()
        .map(|c| GridCell {
            h: c.h,
            pieces: c.pieces,
            lpml: c.lpml(),
        })
        .collect();
    let best = select_best(&table);
    Ok(GridResult { cells, best })
}

/// Settings of a replicated simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub replicates: usize,
    pub master_seed: u64,
    pub h_grid: Vec<f64>,
    pub settings: FitSettings,
    /// Redraws allowed per replicate when a region has an empty piece.
    pub max_attempts: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            replicates: 20,
            master_seed: 0,
            h_grid: default_h_grid(),
            settings: FitSettings::default(),
            max_attempts: 50,
        }
    }
}

/// Per-cell outcome of one replicate, reduced to what the reports use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub h: f64,
    pub lpml: Option<f64>,
    pub k_hat: Option<usize>,
    pub rand_index: Option<f64>,
    pub estimates: Option<Vec<ParamVector>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    /// Number of datasets drawn before one had events in every piece.
    pub attempts: usize,
    pub data_seed: u64,
    pub censoring_rate: f64,
    pub cells: Vec<CellOutcome>,
    pub selected: Option<usize>,
}

impl ReplicateResult {
    pub fn cell(&self, method: Method) -> Option<&CellOutcome> {
        match method {
            Method::Selected => self.selected.map(|s| &self.cells[s]),
            Method::Fixed(h) => self.cells.iter().find(|c| c.h == h),
        }
    }
}

/// Which cell of each replicate a report is based on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// The LPML-selected decay.
    Selected,
    /// A fixed decay; `Fixed(0.0)` is the plain CRP.
    Fixed(f64),
}

pub const CRP: Method = Method::Fixed(0.0);

/// Generate replicate `index`, redrawing until every region has events in
/// every piece.
pub fn replicate_dataset(design: &SimulationDesign, master_seed: u64, index: usize, max_attempts: usize) -> Result<(Vec<SurvivalRecord>, usize, u64)> {
    for attempt in 0..max_attempts.max(1) {
        let seed = derive_seed(master_seed, &[index as u64, attempt as u64]);
        let records = generate_dataset(design, seed)?;
        if first_empty_piece(&records, design.graph.len(), &design.partition).is_none() {
            return Ok((records, attempt + 1, seed));
        }
    }
    Err(Error::Data(format!(
        "replicate {index}: every one of {max_attempts} draws left a region with an empty piece"
    )))
}

pub fn run_replicate(design: &SimulationDesign, index: usize, opts: &StudyOptions) -> Result<ReplicateResult> {
    let (records, attempts, data_seed) = replicate_dataset(design, opts.master_seed, index, opts.max_attempts)?;
    let mut settings = opts.settings;
    settings.mcmc.seed = derive_seed(opts.master_seed, &[index as u64, u64::MAX]);
    let grid = grid_search(
        &design.graph,
        &records,
        design.covariate_dim(),
        &[Ok(design.partition.clone())],
        &opts.h_grid,
        &settings,
    )
    .map_err(|e| e.with_context(format!("replicate {index}")))?;
    let cells = grid
        .cells
        .into_iter()
        .map(|c| {
            let rand = match &c.summary {
                Some(s) => Some(rand_index(&s.dahl_labels, &design.true_labels)?),
                None => None,
            };
            Ok(CellOutcome {
                h: c.h,
                lpml: c.summary.as_ref().map(|s| s.lpml),
                k_hat: c.summary.as_ref().map(|s| s.k_hat),
                rand_index: rand,
                estimates: c.summary.map(|s| s.estimates),
                error: c.error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateResult {
        index,
        attempts,
        data_seed,
        censoring_rate: censoring_rate(&records),
        cells,
        selected: grid.best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub replicates: Vec<ReplicateResult>,
    /// Replicates that could not be completed, with the reason.
    pub failures: Vec<(usize, String)>,
}

/// Run all replicates in parallel; failures are collected, not fatal.
pub fn run_study(design: &SimulationDesign, opts: &StudyOptions) -> Result<StudyReport> {
    design.validate()?;
    if opts.replicates == 0 {
        return Err(Error::Usage("replicate count must be positive".into()));
    }
    let results: Vec<Result<ReplicateResult>> =
        (0..opts.replicates).into_par_iter().map(|t| run_replicate(design, t, opts)).collect();
    let mut report = StudyReport {
        replicates: Vec::new(),
        failures: Vec::new(),
    };
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => report.replicates.push(r),
            Err(e) => report.failures.push((t, e.to_string())),
        }
    }
    Ok(report)
}

impl StudyReport {
    fn outcomes(&self, method: Method) -> impl Iterator<Item = &CellOutcome> {
        self.replicates
            .iter()
            .filter_map(move |r| r.cell(method))
            .filter(|c| c.error.is_none())
    }

    pub fn completed(&self, method: Method) -> usize {
        self.outcomes(method).count()
    }

    pub fn k_histogram(&self, method: Method) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for c in self.outcomes(method) {
            if let Some(k) = c.k_hat {
                *hist.entry(k).or_insert(0) += 1;
            }
        }
        hist
    }

    pub fn fraction_k(&self, method: Method, k: usize) -> f64 {
        let total = self.completed(method);
        if total == 0 {
            return f64::NAN;
        }
        self.k_histogram(method).get(&k).copied().unwrap_or(0) as f64 / total as f64
    }

    pub fn rand_indices(&self, method: Method) -> Vec<f64> {
        self.outcomes(method).filter_map(|c| c.rand_index).collect()
    }

    pub fn mean_rand_index(&self, method: Method) -> f64 {
        let r = self.rand_indices(method);
        r.iter().sum::<f64>() / r.len() as f64
    }

    pub fn mean_censoring_rate(&self) -> f64 {
        let n = self.replicates.len() as f64;
        self.replicates.iter().map(|r| r.censoring_rate).sum::<f64>() / n
    }

    pub fn selected_h(&self) -> Vec<f64> {
        self.outcomes(Method::Selected).map(|c| c.h).collect()
    }

    /// Bias and AMSE over the replicates completed under `method`.
    pub fn bias(&self, method: Method, design: &SimulationDesign) -> Result<BiasReport> {
        let estimates: Vec<Vec<ParamVector>> = self.outcomes(method).filter_map(|c| c.estimates.clone()).collect();
        ab_amse(&estimates, &design.true_labels, &design.cluster_params)
    }

    /// Decay values present in every completed replicate, ascending.
    pub fn h_values(&self) -> Vec<f64> {
        let mut hs: Vec<f64> = self.replicates.iter().flat_map(|r| r.cells.iter().map(|c| c.h)).collect();
        hs.sort_by(f64::total_cmp);
        hs.dedup();
        hs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: f64, event: bool, region: usize) -> SurvivalRecord {
        SurvivalRecord {
            time,
            event,
            covariates: vec![],
            region,
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = default_h_grid();
        assert_eq!(g.len(), 19);
        assert_eq!(g[0], 0.0);
        assert!((g[5] - 1.0).abs() < 1e-15);
        assert_eq!(g[10], 2.0);
        assert_eq!(g[18], 10.0);
    }

    #[test]
    fn dedup_sorts() {
        assert_eq!(dedup_grid(&[1.0, 0.0, 1.0, 0.5, 0.0]), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn km_median_without_censoring() {
        let r: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&t| rec(t, true, 0)).collect();
        assert_eq!(median_survival(&r).unwrap(), 2.0);
    }

    #[test]
    fn km_median_with_censoring() {
        // S drops to 3/4 at t=1, then censoring at 2 leaves 2 at risk, S = 3/8 at t=3.
        let r = vec![rec(1.0, true, 0), rec(2.0, false, 0), rec(3.0, true, 0), rec(4.0, true, 0)];
        assert_eq!(median_survival(&r).unwrap(), 3.0);
    }

    #[test]
    fn quantile_cutpoints_layout() {
        let r: Vec<_> = (1..=20).map(|t| rec(t as f64, true, 0)).collect();
        let ids = vec!["a".to_string()];
        let p = quantile_cutpoints(&r, 3, &ids).unwrap();
        assert_eq!(p.cutpoints(), &[5.5, 10.0]);
        assert_eq!(quantile_cutpoints(&r, 1, &ids).unwrap().pieces(), 1);
        assert_eq!(quantile_cutpoints(&r, 2, &ids).unwrap().cutpoints(), &[10.0]);
    }

    #[test]
    fn quantile_cutpoints_names_empty_region() {
        let mut r: Vec<_> = (1..=20).map(|t| rec(t as f64, true, 0)).collect();
        r.push(rec(30.0, true, 1));
        let ids = vec!["a".to_string(), "b".to_string()];
        match quantile_cutpoints(&r, 2, &ids) {
            Err(Error::EmptyPiece { region, piece }) => {
                assert_eq!(region, "b");
                assert_eq!(piece, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
