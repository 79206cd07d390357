//! Weighted kNN graph construction and normalized propagation operators.

pub mod kdtree;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use kdtree::SpatialIndex;

use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::sparse::{PropagationKind, PropagationMatrix, SparseAdjacency};

/// Gaussian kernel width policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SigmaPolicy {
    /// Per-block mean length of all retained directed kNN edges.
    AutoMeanEdge,
    Fixed(f64),
}

/// How directed kNN edges are folded into a symmetric weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetrization {
    /// Weight = max of the two directions (missing treated as 0).
    Max,
    /// Weight = average of the two directions (missing treated as 0).
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub k: usize,
    /// Distance threshold kappa, meters.
    pub kappa: f64,
    pub sigma: SigmaPolicy,
    pub symmetrization: Symmetrization,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k: 40,
            kappa: 1.0,
            sigma: SigmaPolicy::AutoMeanEdge,
            symmetrization: Symmetrization::Max,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("graph k must be >= 1".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if let SigmaPolicy::Fixed(s) = self.sigma {
            if !(s > 0.0) {
                return Err(Error::Config(format!("sigma must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// Builds the symmetric Gaussian-weighted kNN adjacency over a set of points.
///
/// Returns the adjacency together with the sigma that was actually used.
pub fn build_adjacency_with_sigma(
    points: &[Point3],
    cfg: &GraphConfig,
) -> Result<(SparseAdjacency, f64)> {
    cfg.validate()?;
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateBlock(n));
    }
    let index = SpatialIndex::build(points)?;
    // Retained directed edges: kNN results with d < kappa.
    let mut directed: Vec<(u32, u32, f64)> = Vec::new();
    for i in 0..n {
        for (j, d) in index.knn_of_member(i, cfg.k) {
            if d < cfg.kappa {
                directed.push((i as u32, j as u32, d));
            }
        }
    }
    let sigma = match cfg.sigma {
        SigmaPolicy::Fixed(s) => s,
        SigmaPolicy::AutoMeanEdge => {
            if directed.is_empty() {
                // No edges at all; sigma is irrelevant.
                return Ok((SparseAdjacency::new(n, Vec::new()), 0.0));
            }
            // Summed in sorted order so the result is independent of the
            // input point order.
            let mut ds: Vec<f64> = directed.iter().map(|&(_, _, d)| d).collect();
            ds.sort_by(f64::total_cmp);
            let mean = ds.iter().sum::<f64>() / ds.len() as f64;
            if mean == 0.0 {
                // Every retained edge has zero length (heavily duplicated
                // block); all weights are exp(0) = 1 for any sigma, so the
                // width is immaterial and 1.0 is reported.
                1.0
            } else {
                mean
            }
        }
    };
    // Candidate weight per direction, then fold into unordered pairs.
    let denom = 2.0 * sigma * sigma;
    let mut pairs: BTreeMap<(u32, u32), (f64, u8)> = BTreeMap::new();
    for &(i, j, d) in &directed {
        let w = (-(d * d) / denom).exp();
        let key = if i < j { (i, j) } else { (j, i) };
        let entry = pairs.entry(key).or_insert((0.0, 0));
        entry.0 = entry.0.max(w);
        entry.1 += 1;
    }
    let entries: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .map(|((r, c), (w, dirs))| {
            let w = match cfg.symmetrization {
                Symmetrization::Max => w,
                // Both directions, when present, carry the same weight
                // (same distance), so the mean is w * dirs / 2.
                Symmetrization::Mean => w * dirs as f64 / 2.0,
            };
            (r as usize, c as usize, w)
        })
        .collect();
    Ok((SparseAdjacency::new(n, entries), sigma))
}

pub fn build_adjacency(points: &[Point3], cfg: &GraphConfig) -> Result<SparseAdjacency> {
    build_adjacency_with_sigma(points, cfg).map(|(adj, _)| adj)
}

/// L = I - D^{-1/2} M D^{-1/2}. Isolated nodes get a diagonal 1.
pub fn normalized_laplacian(adj: &SparseAdjacency) -> PropagationMatrix {
    let n = adj.n();
    let deg = adj.degrees();
    let inv_sqrt: Vec<f64> =
        deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let diag = vec![1.0; n];
    let off: Vec<(u32, u32, f64)> = adj
        .entries()
        .iter()
        .map(|&(r, c, w)| (r, c, -w * inv_sqrt[r as usize] * inv_sqrt[c as usize]))
        .collect();
    PropagationMatrix::from_parts(PropagationKind::NormalizedLaplacian, n, diag, off)
}

/// How lambda_max is chosen when rescaling the Laplacian to [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaMax {
    /// Use the universal bound lambda_max = 2 for normalized Laplacians.
    Bound2,
    /// Power-iteration estimate (relative tolerance 1e-6), inflated by 1%.
    PowerIteration,
    Fixed(f64),
}

impl Default for LambdaMax {
    fn default() -> Self {
        LambdaMax::Bound2
    }
}

/// L~ = (2 / lambda_max) L - I.
pub fn rescale_laplacian(lap: &PropagationMatrix, policy: LambdaMax) -> Result<PropagationMatrix> {
    assert_eq!(lap.kind(), PropagationKind::NormalizedLaplacian);
    let lambda_max = match policy {
        LambdaMax::Bound2 => 2.0,
        LambdaMax::Fixed(v) => v,
        LambdaMax::PowerIteration => estimate_lambda_max(lap, 1e-6) * 1.01,
    };
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidLambdaMax(lambda_max));
    }
    let s = 2.0 / lambda_max;
    let diag: Vec<f64> = lap.diag().iter().map(|&d| s * d - 1.0).collect();
    let off: Vec<(u32, u32, f64)> =
        lap.off_entries().iter().map(|&(r, c, w)| (r, c, s * w)).collect();
    Ok(PropagationMatrix::from_parts(PropagationKind::RescaledLaplacian, lap.n(), diag, off))
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
fn estimate_lambda_max(lap: &PropagationMatrix, rel_tol: f64) -> f64 {
    let n = lap.n();
    let csr = lap.csr();
    // Deterministic start vector with energy in all coordinates.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).sin() * 0.5).collect();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(&v);
    v.iter_mut().for_each(|a| *a /= nv);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = csr.matvec(&v);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        v = w.into_iter().map(|a| a / nw).collect();
        if (next - lambda).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// D^^{-1/2} (M + I) D^^{-1/2} with D^ = I + D.
pub fn renormalized_adjacency(adj: &SparseAdjacency) -> PropagationMatrix {
    let n = adj.n();
    let deg = adj.degrees();
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / (1.0 + d).sqrt()).collect();
    let diag: Vec<f64> = inv_sqrt.iter().map(|&s| s * s).collect();
    let off: Vec<(u32, u32, f64)> = adj
        .entries()
        .iter()
        .map(|&(r, c, w)| (r, c, w * inv_sqrt[r as usize] * inv_sqrt[c as usize]))
        .collect();
    PropagationMatrix::from_parts(PropagationKind::RenormalizedAdjacency, n, diag, off)
}

/// Writes a block graph in the exchange format: header `n k kappa sigma`,
/// then one `row col weight` line per edge, ascending (row, col), weights at
/// 17 significant digits.
pub fn write_graph(
    out: &mut impl Write,
    adj: &SparseAdjacency,
    cfg: &GraphConfig,
    sigma: f64,
) -> Result<()> {
    writeln!(out, "{} {} {} {}", adj.n(), cfg.k, cfg.kappa, sigma)?;
    for &(r, c, w) in adj.entries() {
        writeln!(out, "{} {} {:.16e}", r, c, w)?;
    }
    Ok(())
}
