//! Command-line flags, the JSON config file, and their merge into one
//! effective configuration. Flags win over the file, the file over defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gwcrp::{default_h_grid, ChainInit, Error, GwcrpConfig, Kernel, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "gwcrp", version, about = "Spatial clustering of piecewise-exponential survival regressions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one (h, J) combination and write its posterior summary.
    Fit(Flags),
    /// Run an (h, J) grid, pick the LPML-best cell and write its summary.
    Select(Flags),
    /// Generate replicate datasets from a design.
    Simulate(Flags),
    /// Run the simulation study for a design and write evaluation tables.
    Evaluate(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Select(_) => "select",
            Command::Simulate(_) => "simulate",
            Command::Evaluate(_) => "evaluate",
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Command::Fit(f) | Command::Select(f) | Command::Simulate(f) | Command::Evaluate(f) => f,
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    /// Survival CSV with header `region,time,event,x1,...,xp`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Adjacency edge list, one `a b` pair per line.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Design JSON file, or a built-in lattice design `lattice-I` .. `lattice-IV`.
    #[arg(long)]
    pub design: Option<String>,
    /// Comma-separated hazard cutpoints, e.g. `1.5,6`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub cutpoints: Option<Vec<f64>>,
    /// Place J pieces at quantiles of the event times.
    #[arg(long, value_name = "J")]
    pub auto_cutpoints: Option<usize>,
    /// Decay for `fit`.
    #[arg(long)]
    pub h: Option<f64>,
    /// Comma-separated decay grid.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub h_grid: Option<Vec<f64>>,
    /// Comma-separated piece counts; cutpoints for each come from the quantile helper.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub j_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Prior variance `v0` of the base measure `N(0, v0·I)`.
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<Kernel>,
    /// Starting partition of each chain.
    #[arg(long, value_parser = parse_init)]
    pub init: Option<ChainInit>,
    /// Replicate count for `simulate` and `evaluate`.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Use 100 replicates instead of 20.
    #[arg(long)]
    pub full: bool,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_kernel(s: &str) -> std::result::Result<Kernel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_init(s: &str) -> std::result::Result<ChainInit, String> {
    match s {
        "singletons" => Ok(ChainInit::Singletons),
        "one-cluster" => Ok(ChainInit::OneCluster),
        other => Err(format!("unknown init {other:?}, expected singletons or one-cluster")),
    }
}

/// Config file contents. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub design: Option<String>,
    pub cutpoints: Option<Vec<f64>>,
    pub auto_cutpoints: Option<usize>,
    pub h: Option<f64>,
    pub h_grid: Option<Vec<f64>>,
    pub j_grid: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub sigma0: Option<f64>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub kernel: Option<Kernel>,
    pub init: Option<ChainInit>,
    pub replicates: Option<usize>,
    pub full: Option<bool>,
    pub hpd_level: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))
    }
}

/// How the hazard partition is chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionRule {
    Cutpoints(Vec<f64>),
    /// Quantile cutpoints for each listed piece count.
    Auto(Vec<usize>),
}

/// Fully resolved run configuration, echoed to `config.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub data: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub design: Option<String>,
    pub partition: PartitionRule,
    pub h: Option<f64>,
    pub h_grid: Vec<f64>,
    pub mcmc: GwcrpConfig,
    pub kernel: Kernel,
    pub hpd_level: f64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub replicates: usize,
}

impl RunConfig {
    pub fn resolve(command: &Command) -> Result<Self> {
        let flags = command.flags();
        let file = match &flags.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let defaults = GwcrpConfig::default();
        let mcmc = GwcrpConfig {
            alpha: flags.alpha.or(file.alpha).unwrap_or(defaults.alpha),
            prior_variance: flags.sigma0.or(file.sigma0).unwrap_or(defaults.prior_variance),
            iterations: flags.iters.or(file.iters).unwrap_or(defaults.iterations),
            burn_in: flags.burnin.or(file.burnin).unwrap_or(defaults.burn_in),
            seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
            init: flags.init.or(file.init).unwrap_or(defaults.init),
        };
        mcmc.validate()?;

        let cutpoints = flags.cutpoints.clone().or(file.cutpoints);
        let auto = flags.auto_cutpoints.or(file.auto_cutpoints);
        let j_grid = flags.j_grid.clone().or(file.j_grid);
        let partition = match (cutpoints, auto, j_grid) {
            (Some(c), None, None) => PartitionRule::Cutpoints(c),
            (None, Some(j), None) => PartitionRule::Auto(vec![j]),
            (None, None, Some(js)) => PartitionRule::Auto(js),
            (None, None, None) => PartitionRule::Cutpoints(Vec::new()),
            _ => {
                return Err(Error::Usage(
                    "give at most one of --cutpoints, --auto-cutpoints and --j-grid".into(),
                ))
            }
        };
        if let PartitionRule::Auto(js) = &partition {
            if js.is_empty() || js.contains(&0) {
                return Err(Error::Usage("piece counts must be non-empty and at least 1".into()));
            }
        }

        let h_grid = flags.h_grid.clone().or(file.h_grid).unwrap_or_else(default_h_grid);
        if h_grid.is_empty() {
            return Err(Error::Usage("h grid is empty".into()));
        }
        if let Some(bad) = h_grid.iter().find(|h| !(**h >= 0.0) || !h.is_finite()) {
            return Err(Error::Usage(format!("h values must be finite and >= 0, got {bad}")));
        }
        let full = flags.full || file.full.unwrap_or(false);
        let replicates = flags.replicates.or(file.replicates).unwrap_or(if full { 100 } else { 20 });
        let hpd_level = file.hpd_level.unwrap_or(0.95);
        if !(hpd_level > 0.0 && hpd_level < 1.0) {
            return Err(Error::Usage(format!("hpd_level must be in (0, 1), got {hpd_level}")));
        }
        let threads = flags.threads.or(file.threads);
        if threads == Some(0) {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        Ok(Self {
            command: command.name().to_string(),
            data: flags.data.clone().or(file.data),
            graph: flags.graph.clone().or(file.graph),
            design: flags.design.clone().or(file.design),
            partition,
            h: flags.h.or(file.h),
            h_grid,
            mcmc,
            kernel: flags.kernel.or(file.kernel).unwrap_or_default(),
            hpd_level,
            threads,
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("gwcrp-out")),
            replicates,
        })
    }

    pub fn require_data(&self) -> Result<(&Path, &Path)> {
        match (&self.data, &self.graph) {
            (Some(d), Some(g)) => Ok((d, g)),
            _ => Err(Error::Usage(format!("{} needs --data and --graph", self.command))),
        }
    }

    pub fn require_design(&self) -> Result<&str> {
        self.design
            .as_deref()
            .ok_or_else(|| Error::Usage(format!("{} needs --design", self.command)))
    }
}
