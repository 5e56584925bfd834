//! Spatial clustering of survival regression parameters.
//!
//! Regions carry piecewise-exponential proportional-hazards data. Each
//! region is reduced to a Laplace summary `(θ̂_i, Σ̂_i)`, and a Gibbs sampler
//! under a geographically weighted Chinese restaurant process groups regions
//! that share `(β, log λ)`. Posterior partitions are summarized with Dahl's
//! method and the spatial decay `h` is chosen by LPML.
//!
//! ```no_run
//! use gwcrp::{grid_search, default_h_grid, FitSettings, HazardPartition, SpatialGraph};
//! # fn run(records: Vec<gwcrp::SurvivalRecord>) -> gwcrp::Result<()> {
//! let graph = SpatialGraph::lattice(8, 8);
//! let partition = HazardPartition::new(vec![1.5, 6.0])?;
//! let grid = grid_search(&graph, &records, 3, &[Ok(partition)], &default_h_grid(), &FitSettings::default())?;
//! if let Some(best) = grid.best_cell() {
//!     println!("h = {}, LPML = {:?}", best.h, best.lpml());
//! }
//! # Ok(())
//! # }
//! ```

pub mod error;
pub mod io;
pub mod linalg;
pub mod posterior;
pub mod sampler;
pub mod simulation;
pub mod spatial;
pub mod study;
pub mod survival;

pub use error::{Error, Result};
pub use io::{DesignFile, SurvivalData, TraceRecord};
pub use posterior::{
    cpo_lpml, dahl_distances, dahl_partition, hpd_interval, select_best, select_h, summarize, ClusterReport, Cpo,
    GridCell, PosteriorSummary,
};
pub use sampler::{
    gibbs_sweep, initial_state, label_full_conditional, run_chain, update_cluster_params, ChainInit, ChainState, ChainTrace, GwcrpConfig,
    RegionModel, SamplerModel,
};
pub use simulation::{
    ab_amse, censoring_rate, derive_seed, generate_dataset, inverse_piecewise_survival, piecewise_survival,
    rand_index, reference_cluster_params, BiasReport, ClusterParams, LatticePattern, SimulationDesign,
};
pub use spatial::{graph_distances, weight_matrix, Distance, Kernel, SpatialGraph, WeightMatrix};
pub use study::{
    default_h_grid, grid_search, quantile_cutpoints, run_replicate, run_study, CellResult, FitSettings,
    GridResult, Method, PreparedData, ReplicateResult, StudyOptions, StudyReport, CRP,
};
pub use survival::{
    event_counts, exposure, fit_region_mle, log_likelihood, normal_approx_loglik, region_log_likelihood,
    score_and_hessian, HazardPartition, NewtonOptions, ParamVector, RegionLikelihood, RegionSummary,
    SurvivalRecord,
};
