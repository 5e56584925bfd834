//! File formats: survival CSV, adjacency edge lists, design JSON and
//! NDJSON chain traces. Cluster labels are written 1-based.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::ChainTrace;
use crate::simulation::{ClusterParams, SimulationDesign};
use crate::spatial::SpatialGraph;
use crate::survival::{HazardPartition, SurvivalRecord};

/// Records plus the region ids their `region` indices refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalData {
    pub region_ids: Vec<String>,
    pub records: Vec<SurvivalRecord>,
    pub covariate_dim: usize,
}

impl SurvivalData {
    /// Re-index regions to the graph's order. Every graph region must have
    /// data and every data region must be in the graph.
    pub fn align_to(&self, graph: &SpatialGraph) -> Result<SurvivalData> {
        let mut map = Vec::with_capacity(self.region_ids.len());
        for id in &self.region_ids {
            map.push(
                graph
                    .index_of(id)
                    .ok_or_else(|| Error::Data(format!("region {id:?} is not in the adjacency graph")))?,
            );
        }
        let mut present = vec![false; graph.len()];
        for &m in &map {
            present[m] = true;
        }
        if let Some(missing) = present.iter().position(|p| !p) {
            return Err(Error::Data(format!(
                "region {:?} has no survival records",
                graph.region_ids()[missing]
            )));
        }
        let records = self
            .records
            .iter()
            .map(|r| SurvivalRecord {
                region: map[r.region],
                ..r.clone()
            })
            .collect();
        Ok(SurvivalData {
            region_ids: graph.region_ids().to_vec(),
            records,
            covariate_dim: self.covariate_dim,
        })
    }
}

/// Parse `region,time,event,x1,…,xp`.
pub fn read_survival_csv<R: Read>(reader: R) -> Result<SurvivalData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 3 || names[0] != "region" || names[1] != "time" || names[2] != "event" {
        return Err(Error::Data(format!(
            "survival CSV header must start with region,time,event; got {names:?}"
        )));
    }
    let p = names.len() - 3;
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let lineno = line + 2;
        let bad = |what: &str| Error::Data(format!("line {lineno}: {what}"));
        if row.len() != names.len() {
            return Err(bad("wrong number of fields"));
        }
        let id = row[0].to_string();
        let region = *index.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            ids.len() - 1
        });
        let time: f64 = row[1].parse().map_err(|_| bad("time is not a number"))?;
        if !(time >= 0.0) || !time.is_finite() {
            return Err(bad("time must be finite and >= 0"));
        }
        let event = match &row[2] {
            "1" => true,
            "0" => false,
            _ => return Err(bad("event must be 0 or 1")),
        };
        let covariates = (3..row.len())
            .map(|k| {
                row[k]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(&format!("covariate {} is not a finite number", names[k])))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(SurvivalRecord {
            time,
            event,
            covariates,
            region,
        });
    }
    Ok(SurvivalData {
        region_ids: ids,
        records,
        covariate_dim: p,
    })
}

pub fn read_survival_file(path: &Path) -> Result<SurvivalData> {
    let f = std::fs::File::open(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
    read_survival_csv(f).map_err(|e| e.with_context(path.display().to_string()))
}

pub fn write_survival_csv<W: Write>(writer: W, data: &SurvivalData) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["region".to_string(), "time".into(), "event".into()];
    header.extend((1..=data.covariate_dim).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for r in &data.records {
        let mut row = vec![
            data.region_ids[r.region].clone(),
            r.time.to_string(),
            if r.event { "1" } else { "0" }.to_string(),
        ];
        row.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse an edge list: one `a b` pair per line, or a lone id for an
/// isolated region. Blank lines and `#` comments are skipped.
pub fn read_adjacency<R: BufRead>(reader: R) -> Result<SpatialGraph> {
    let mut edges = Vec::new();
    let mut isolated = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parts: Vec<&str> = content.split_whitespace().collect();
        match parts.as_slice() {
            [a] => isolated.push(a.to_string()),
            [a, b] => edges.push((a.to_string(), b.to_string())),
            _ => return Err(Error::Data(format!("adjacency line {}: expected 1 or 2 ids", n + 1))),
        }
    }
    SpatialGraph::from_named_edges(&edges, &isolated)
}

pub fn read_adjacency_file(path: &Path) -> Result<SpatialGraph> {
    let f = std::fs::File::open(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
    read_adjacency(std::io::BufReader::new(f)).map_err(|e| e.with_context(path.display().to_string()))
}

pub fn write_adjacency<W: Write>(mut w: W, graph: &SpatialGraph) -> Result<()> {
    let ids = graph.region_ids();
    let mut touched = vec![false; graph.len()];
    for (a, b) in graph.edges() {
        writeln!(w, "{} {}", ids[a], ids[b])?;
        touched[a] = true;
        touched[b] = true;
    }
    for (i, t) in touched.iter().enumerate() {
        if !t {
            writeln!(w, "{}", ids[i])?;
        }
    }
    Ok(())
}

fn default_subjects() -> usize {
    60
}
fn default_cap() -> f64 {
    150.0
}
fn default_rate() -> f64 {
    0.01
}

/// JSON design file. `true_labels` are 1-based and follow `regions` when
/// given, otherwise the order in which ids first appear in `edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub true_labels: Vec<usize>,
    pub cluster_params: Vec<ClusterParams>,
    pub cutpoints: Vec<f64>,
    #[serde(default = "default_subjects")]
    pub subjects_per_region: usize,
    #[serde(default = "default_cap")]
    pub censor_cap: f64,
    #[serde(default = "default_rate")]
    pub censor_rate: f64,
}

impl DesignFile {
    pub fn into_design(self) -> Result<SimulationDesign> {
        let graph = if self.regions.is_empty() {
            SpatialGraph::from_named_edges::<String>(&self.edges, &[])?
        } else {
            let index: HashMap<&str, usize> = self.regions.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
            let edges = self
                .edges
                .iter()
                .map(|(a, b)| match (index.get(a.as_str()), index.get(b.as_str())) {
                    (Some(&x), Some(&y)) => Ok((x, y)),
                    _ => Err(Error::Data(format!("edge ({a}, {b}) references an unknown region"))),
                })
                .collect::<Result<Vec<_>>>()?;
            SpatialGraph::new(self.regions.clone(), &edges)?
        };
        if self.true_labels.contains(&0) {
            return Err(Error::Data("true_labels are 1-based".into()));
        }
        let design = SimulationDesign {
            graph,
            true_labels: self.true_labels.iter().map(|z| z - 1).collect(),
            cluster_params: self.cluster_params,
            subjects_per_region: self.subjects_per_region,
            partition: HazardPartition::new(self.cutpoints)?,
            censor_cap: self.censor_cap,
            censor_rate: self.censor_rate,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn from_design(design: &SimulationDesign) -> Self {
        let ids = design.graph.region_ids();
        Self {
            regions: ids.to_vec(),
            edges: design
                .graph
                .edges()
                .into_iter()
                .map(|(a, b)| (ids[a].clone(), ids[b].clone()))
                .collect(),
            true_labels: design.true_labels.iter().map(|z| z + 1).collect(),
            cluster_params: design.cluster_params.clone(),
            cutpoints: design.partition.cutpoints().to_vec(),
            subjects_per_region: design.subjects_per_region,
            censor_cap: design.censor_cap,
            censor_rate: design.censor_rate,
        }
    }
}

pub fn read_design_file(path: &Path) -> Result<SimulationDesign> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
    let file: DesignFile = serde_json::from_str(&text).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
    file.into_design()
}

/// One NDJSON line of a persisted chain trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub labels: Vec<usize>,
    pub k: usize,
    pub loglik_per_region: Vec<f64>,
}

pub fn trace_records(trace: &ChainTrace) -> impl Iterator<Item = TraceRecord> + '_ {
    (0..trace.len()).map(move |b| TraceRecord {
        iter: trace.iterations[b],
        labels: trace.label_draws[b].iter().map(|z| z + 1).collect(),
        k: trace.param_draws[b].len(),
        loglik_per_region: trace.per_region_loglik[b].clone(),
    })
}

pub fn write_trace<W: Write>(mut w: W, trace: &ChainTrace) -> Result<()> {
    for rec in trace_records(trace) {
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>> {
    reader
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// Write through a temporary sibling file and rename it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
