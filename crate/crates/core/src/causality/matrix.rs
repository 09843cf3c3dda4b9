use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::scalar::Field;
use crate::stats::median;
use crate::telemetry::{NodeSample, Trace};

use super::granger::granger_influence;

/// Pairwise causal influence, `entry(i, j)` from node `i` to node `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalMatrix<T> {
    node_ids: Vec<String>,
    entries: Vec<T>,
    /// Nodes whose row and column could not be estimated.
    undefined: Vec<bool>,
}

impl<T: Field> CausalMatrix<T> {
    /// Builds a matrix from row-major entries. Entries must be non-negative
    /// with a zero diagonal.
    pub fn new(node_ids: Vec<String>, entries: Vec<T>) -> Result<Self> {
        let n = node_ids.len();
        if entries.len() != n * n {
            return Err(MetricsError::arg(format!(
                "{} entries do not form a {n}x{n} matrix",
                entries.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                if !(v >= T::zero()) {
                    return Err(MetricsError::arg(format!("entry ({i},{j}) is negative or NaN")));
                }
                if i == j && v != T::zero() {
                    return Err(MetricsError::arg(format!("diagonal entry ({i},{i}) is not zero")));
                }
            }
        }
        Ok(CausalMatrix {
            node_ids,
            entries,
            undefined: vec![false; n],
        })
    }

    pub fn from_rows(node_ids: Vec<String>, rows: &[Vec<T>]) -> Result<Self> {
        Self::new(node_ids, rows.iter().flatten().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.n() + j]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.entries.chunks(self.n().max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn undefined_nodes(&self) -> Vec<&str> {
        self.node_ids
            .iter()
            .zip(&self.undefined)
            .filter(|(_, &u)| u)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Off-diagonal `(i, j)` pairs, largest entry first; ties keep row-major
    /// order.
    pub fn ranked_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        pairs.sort_by(|a, b| {
            self.get(b.0, b.1)
                .partial_cmp(&self.get(a.0, a.1))
                .expect("entries are ordered")
        });
        pairs
    }

    /// Same matrix with nodes reordered so that new node `k` is old `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let mut entries = Vec::with_capacity(n * n);
        for &i in perm {
            for &j in perm {
                entries.push(self.get(i, j));
            }
        }
        CausalMatrix {
            node_ids: perm.iter().map(|&i| self.node_ids[i].clone()).collect(),
            entries,
            undefined: perm.iter().map(|&i| self.undefined[i]).collect(),
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        CausalMatrix {
            node_ids: self.node_ids.clone(),
            entries: self.entries.iter().map(|&v| v * c).collect(),
            undefined: self.undefined.clone(),
        }
    }
}

/// Node signal used for causal estimation.
#[derive(Debug, Clone, Copy)]
pub enum CausalSignal {
    CpuUtil,
    EnergyJ,
    /// Caller-supplied extraction; samples mapped to `None` are skipped.
    Custom(fn(&NodeSample) -> Option<f64>),
}

impl CausalSignal {
    fn extract(self, s: &NodeSample) -> Option<f64> {
        match self {
            CausalSignal::CpuUtil => Some(s.cpu_util),
            CausalSignal::EnergyJ => Some(s.energy_j),
            CausalSignal::Custom(f) => f(s),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CausalSignal::CpuUtil => "cpu_util",
            CausalSignal::EnergyJ => "energy_j",
            CausalSignal::Custom(_) => "custom",
        }
    }
}

impl std::str::FromStr for CausalSignal {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpu_util" | "cpu" => Ok(CausalSignal::CpuUtil),
            "energy_j" | "energy" => Ok(CausalSignal::EnergyJ),
            other => Err(MetricsError::arg(format!("unknown causal signal `{other}` (cpu_util|energy_j)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalEstimate {
    pub matrix: CausalMatrix<f64>,
    pub lag: usize,
    pub grid_step_s: Option<f64>,
    pub grid_points: usize,
    pub warnings: Vec<String>,
}

/// Resamples `(t, v)` points onto `start + k * step` by linear interpolation.
fn resample(points: &[(f64, f64)], start: f64, step: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut seg = 0;
    for k in 0..len {
        let t = start + step * k as f64;
        while seg + 2 < points.len() && points[seg + 1].0 < t {
            seg += 1;
        }
        let (t0, v0) = points[seg];
        let (t1, v1) = points[(seg + 1).min(points.len() - 1)];
        out.push(if t1 > t0 {
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            v0 + w * (v1 - v0)
        } else {
            v0
        });
    }
    out
}

/// Estimates `C_ij` for every ordered node pair of a trace.
///
/// Node series are resampled to a common uniform grid (step = median
/// inter-sample gap, overlap of all node spans). Nodes that cannot support the
/// estimate are flagged undefined and their entries left at zero.
pub fn build_causal_matrix(trace: &Trace, signal: CausalSignal, lag: usize) -> Result<CausalEstimate> {
    if lag == 0 {
        return Err(MetricsError::arg("lag must be at least 1"));
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = trace
        .node_series()
        .into_iter()
        .map(|(id, samples)| {
            let pts = samples
                .iter()
                .filter_map(|s| signal.extract(s).map(|v| (s.timestamp, v)))
                .collect();
            (id.to_string(), pts)
        })
        .collect();
    let n = series.len();
    if n < 2 {
        return Err(MetricsError::arg(format!("causal matrix needs at least 2 nodes, trace has {n}")));
    }

    let mut warnings = Vec::new();
    let mut undefined = vec![false; n];
    for (i, (id, pts)) in series.iter().enumerate() {
        if pts.len() < 2 {
            undefined[i] = true;
            warnings.push(format!("node {id}: fewer than 2 samples of {}", signal.name()));
        }
    }
    let usable: Vec<&Vec<(f64, f64)>> = series
        .iter()
        .zip(&undefined)
        .filter(|(_, &u)| !u)
        .map(|((_, p), _)| p)
        .collect();
    let gaps: Vec<f64> = usable
        .iter()
        .flat_map(|p| p.windows(2).map(|w| w[1].0 - w[0].0))
        .collect();
    let step = median(&gaps).filter(|&s| s > 0.0);
    let start = usable.iter().map(|p| p[0].0).fold(f64::NEG_INFINITY, f64::max);
    let end = usable.iter().map(|p| p[p.len() - 1].0).fold(f64::INFINITY, f64::min);
    let len = match step {
        Some(s) if end >= start => ((end - start) / s + 1e-9).floor() as usize + 1,
        _ => 0,
    };

    let grid: Vec<Option<Vec<f64>>> = series
        .iter()
        .enumerate()
        .map(|(i, (id, pts))| {
            if undefined[i] {
                return None;
            }
            let values = resample(pts, start, step.unwrap_or(1.0), len);
            if len < 10 * lag {
                warnings.push(format!("node {id}: {len} grid points is fewer than 10 x lag"));
                None
            } else if values.iter().all(|&v| v == values[0]) {
                warnings.push(format!("node {id}: {} has zero variance", signal.name()));
                None
            } else {
                Some(values)
            }
        })
        .collect();
    for (i, g) in grid.iter().enumerate() {
        undefined[i] = g.is_none();
    }

    let results: Vec<(f64, Option<String>)> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            match (&grid[i], &grid[j]) {
                (Some(x), Some(y)) if i != j => match granger_influence(x, y, lag) {
                    Ok(v) => (v, None),
                    Err(e) => (0.0, Some(format!("pair {}->{}: {e}", series[i].0, series[j].0))),
                },
                _ => (0.0, None),
            }
        })
        .collect();
    let mut entries = Vec::with_capacity(n * n);
    for (v, w) in results {
        entries.push(v);
        warnings.extend(w);
    }
    let mut matrix = CausalMatrix::new(series.into_iter().map(|(id, _)| id).collect(), entries)?;
    matrix.undefined = undefined;
    Ok(CausalEstimate {
        matrix,
        lag,
        grid_step_s: step,
        grid_points: len,
        warnings,
    })
}

/// Per-node local explainability scores and weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainabilityVector<T> {
    e_local: Vec<T>,
    weights: Vec<T>,
}

impl<T: Field> ExplainabilityVector<T> {
    pub fn new(e_local: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if e_local.len() != weights.len() {
            return Err(MetricsError::arg("e_local and weights differ in length"));
        }
        if e_local.iter().any(|&e| !(e >= T::zero() && e <= T::one())) {
            return Err(MetricsError::arg("e_local values must lie in [0,1]"));
        }
        if weights.iter().any(|&g| !(g > T::zero())) {
            return Err(MetricsError::arg("weights must be positive"));
        }
        Ok(ExplainabilityVector { e_local, weights })
    }

    /// Every node fully explainable with unit weight.
    pub fn uniform(n: usize) -> Self {
        ExplainabilityVector {
            e_local: vec![T::one(); n],
            weights: vec![T::one(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.e_local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_local.is_empty()
    }

    pub fn e_local(&self) -> &[T] {
        &self.e_local
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        ExplainabilityVector {
            e_local: perm.iter().map(|&i| self.e_local[i]).collect(),
            weights: perm.iter().map(|&i| self.weights[i]).collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainabilityLine {
    node_id: String,
    e_local: f64,
    #[serde(default = "one")]
    gamma: f64,
}

fn one() -> f64 {
    1.0
}

/// Reads `{node_id, e_local, gamma}` lines and aligns them with `node_ids`.
/// Nodes absent from the file default to `e_local = 1`, `gamma = 1`.
pub fn load_explainability(source: impl BufRead, node_ids: &[String]) -> Result<ExplainabilityVector<f64>> {
    let mut e_local = vec![1.0; node_ids.len()];
    let mut weights = vec![1.0; node_ids.len()];
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: ExplainabilityLine = serde_json::from_str(&text).map_err(|e| MetricsError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let pos = node_ids
            .iter()
            .position(|id| *id == rec.node_id)
            .ok_or_else(|| MetricsError::data(format!("explainability line {line_no}: unknown node `{}`", rec.node_id)))?;
        e_local[pos] = rec.e_local;
        weights[pos] = rec.gamma;
    }
    ExplainabilityVector::new(e_local, weights)
}
