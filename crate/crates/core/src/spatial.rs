//! Region adjacency graph, graph distances and geographical weights.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Graph distance: edge count of a shortest path, `None` when disconnected.
pub type Distance = Option<u32>;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    region_ids: Vec<String>,
    adjacency: Vec<Vec<bool>>,
    distances: Vec<Vec<Distance>>,
}

impl SpatialGraph {
    /// Build from region ids and undirected edges given as index pairs.
    pub fn new(region_ids: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = region_ids.len();
        let mut seen = HashMap::new();
        for (i, id) in region_ids.iter().enumerate() {
            if seen.insert(id.as_str(), i).is_some() {
                return Err(Error::Data(format!("duplicate region id {id:?}")));
            }
        }
        let mut adjacency = vec![vec![false; n]; n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Usage(format!("edge ({a}, {b}) out of range for {n} regions")));
            }
            if a == b {
                return Err(Error::Data(format!("self-loop on region {:?}", region_ids[a])));
            }
            adjacency[a][b] = true;
            adjacency[b][a] = true;
        }
        let distances = graph_distances(&adjacency)?;
        Ok(Self {
            region_ids,
            adjacency,
            distances,
        })
    }

    /// Build from string-keyed edges; regions are numbered in order of first appearance,
    /// with `isolated` ids appended where not already present.
    pub fn from_named_edges<S: AsRef<str>>(edges: &[(S, S)], isolated: &[S]) -> Result<Self> {
        let mut ids: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |s: &str, ids: &mut Vec<String>| -> usize {
            *index.entry(s.to_string()).or_insert_with(|| {
                ids.push(s.to_string());
                ids.len() - 1
            })
        };
        let mut pairs = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            let ia = intern(a.as_ref(), &mut ids);
            let ib = intern(b.as_ref(), &mut ids);
            pairs.push((ia, ib));
        }
        for s in isolated {
            intern(s.as_ref(), &mut ids);
        }
        Self::new(ids, &pairs)
    }

    /// Rook-adjacency lattice with `rows × cols` cells named `r{row}c{col}`.
    pub fn lattice(rows: usize, cols: usize) -> Self {
        let ids = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| format!("r{r}c{c}")))
            .collect();
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        Self::new(ids, &edges).expect("lattice is well formed")
    }

    pub fn len(&self) -> usize {
        self.region_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region_ids.is_empty()
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.region_ids.iter().position(|r| r == id)
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    pub fn distances(&self) -> &[Vec<Distance>] {
        &self.distances
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                if self.adjacency[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.distances.iter().all(|row| row.iter().all(Option::is_some))
    }

    pub fn weights(&self, decay: f64, kernel: Kernel) -> Result<WeightMatrix> {
        weight_matrix(&self.distances, decay, kernel)
    }
}

/// All-pairs shortest-path edge counts by one breadth-first search per source.
pub fn graph_distances(adjacency: &[Vec<bool>]) -> Result<Vec<Vec<Distance>>> {
    let n = adjacency.len();
    for (i, row) in adjacency.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Usage("adjacency matrix is not square".into()));
        }
        if row[i] {
            return Err(Error::Usage(format!("adjacency has a self-loop at {i}")));
        }
        if (0..n).any(|j| row[j] != adjacency[j][i]) {
            return Err(Error::Usage("adjacency matrix is not symmetric".into()));
        }
    }
    let neighbours: Vec<Vec<usize>> = adjacency
        .iter()
        .map(|row| (0..n).filter(|&j| row[j]).collect())
        .collect();
    let mut out = vec![vec![None; n]; n];
    let mut queue = VecDeque::with_capacity(n);
    for (source, dist) in out.iter_mut().enumerate() {
        dist[source] = Some(0);
        queue.clear();
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued vertices have a distance");
            for &v in &neighbours[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `exp(−d·h)` beyond first neighbours.
    #[default]
    Exp,
    /// `exp(−d²·h²)` beyond first neighbours; decays faster.
    SqExp,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Exp => "exp",
            Kernel::SqExp => "sqexp",
        })
    }
}

impl FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" | "exponential" => Ok(Kernel::Exp),
            "sqexp" | "squared-exponential" => Ok(Kernel::SqExp),
            other => Err(Error::Usage(format!("unknown kernel {other:?}, expected exp or sqexp"))),
        }
    }
}

impl Kernel {
    pub fn weight(self, distance: Distance, decay: f64) -> f64 {
        match distance {
            None => 0.0,
            Some(d) if d <= 1 => 1.0,
            Some(d) => {
                let d = d as f64;
                match self {
                    Kernel::Exp => (-d * decay).exp(),
                    Kernel::SqExp => (-d * d * decay * decay).exp(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    weights: Vec<f64>,
    n: usize,
    decay: f64,
    kernel: Kernel,
}

impl WeightMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    /// Wrap an explicit symmetric matrix, e.g. for hand-built test cases.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut weights = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Usage("weight matrix is not square".into()));
            }
            for (j, &w) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&w) || w != rows[j][i] {
                    return Err(Error::Usage(format!("invalid weight at ({i}, {j})")));
                }
            }
            weights.extend_from_slice(row);
        }
        Ok(Self {
            weights,
            n,
            decay: f64::NAN,
            kernel: Kernel::Exp,
        })
    }
}

/// Geographical weights `w_ij(h)` from graph distances.
pub fn weight_matrix(distances: &[Vec<Distance>], decay: f64, kernel: Kernel) -> Result<WeightMatrix> {
    if !(decay >= 0.0) || !decay.is_finite() {
        return Err(Error::Usage(format!("decay h must be finite and >= 0, got {decay}")));
    }
    let n = distances.len();
    let mut weights = Vec::with_capacity(n * n);
    for row in distances {
        if row.len() != n {
            return Err(Error::Usage("distance matrix is not square".into()));
        }
        weights.extend(row.iter().map(|&d| kernel.weight(d, decay)));
    }
    Ok(WeightMatrix {
        weights,
        n,
        decay,
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> SpatialGraph {
        SpatialGraph::new(vec!["A".into(), "B".into(), "C".into()], &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn path_distances() {
        let g = path3();
        assert_eq!(g.distances()[0][1], Some(1));
        assert_eq!(g.distances()[0][2], Some(2));
        assert_eq!(g.distances()[2][2], Some(0));
    }

    #[test]
    fn disconnected_components() {
        let g = SpatialGraph::from_named_edges(&[("a", "b"), ("c", "d")], &["e"]).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.distances()[0][2], None);
        assert_eq!(g.distances()[4][0], None);
        assert!(!g.is_connected());
        let w = g.weights(0.0, Kernel::Exp).unwrap();
        assert_eq!(w.get(0, 2), 0.0);
        assert_eq!(w.get(0, 1), 1.0);
        assert_eq!(g.weights(1.0, Kernel::SqExp).unwrap().get(1, 3), 0.0);
    }

    #[test]
    fn kernel_values() {
        let d = vec![vec![Some(0), Some(2)], vec![Some(2), Some(0)]];
        let e = weight_matrix(&d, 1.0, Kernel::Exp).unwrap();
        assert!((e.get(0, 1) - (-2.0f64).exp()).abs() < 1e-15);
        let s = weight_matrix(&d, 1.0, Kernel::SqExp).unwrap();
        assert!((s.get(0, 1) - (-4.0f64).exp()).abs() < 1e-15);
        assert_eq!(e.get(0, 0), 1.0);
    }

    #[test]
    fn zero_decay_is_plain_crp() {
        let g = SpatialGraph::lattice(3, 4);
        let w = g.weights(0.0, Kernel::Exp).unwrap();
        for i in 0..g.len() {
            assert!(w.row(i).iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn negative_decay_rejected() {
        assert!(matches!(path3().weights(-0.1, Kernel::Exp), Err(Error::Usage(_))));
    }

    #[test]
    fn bad_adjacency_rejected() {
        assert!(graph_distances(&[vec![false, true], vec![false, false]]).is_err());
        assert!(graph_distances(&[vec![true]]).is_err());
        assert!(SpatialGraph::new(vec!["a".into(), "a".into()], &[]).is_err());
    }

    #[test]
    fn kernel_parse() {
        assert_eq!("sqexp".parse::<Kernel>().unwrap(), Kernel::SqExp);
        assert!("gauss".parse::<Kernel>().is_err());
    }
}
