//! Sparse-to-dense label upsampling by hybrid kNN search and majority vote.

use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::graph::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensifyConfig {
    /// Maximum neighbors considered per dense point.
    pub k: usize,
    /// Search radius, meters.
    pub radius: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self { k: 20, radius: 0.2 }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("densify k must be >= 1".into()));
        }
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("densify radius must be > 0, got {}", self.radius)));
        }
        Ok(())
    }
}

/// Majority vote over `(index, distance)` neighbors sorted ascending by
/// (distance, index); ties break to the nearest neighbor holding a tied
/// class.
fn vote(neighbors: &[(usize, f64)], labels: &[usize]) -> usize {
    debug_assert!(!neighbors.is_empty());
    let mut counts: Vec<(usize, usize)> = Vec::new(); // (class, count)
    for &(i, _) in neighbors {
        let class = labels[i];
        match counts.iter_mut().find(|(c, _)| *c == class) {
            Some((_, n)) => *n += 1,
            None => counts.push((class, 1)),
        }
    }
    let best = counts.iter().map(|&(_, n)| n).max().unwrap();
    let tied: Vec<usize> =
        counts.iter().filter(|&&(_, n)| n == best).map(|&(c, _)| c).collect();
    if tied.len() == 1 {
        return tied[0];
    }
    // Nearest neighbor whose class is among the tied ones wins.
    neighbors
        .iter()
        .map(|&(i, _)| labels[i])
        .find(|c| tied.contains(c))
        .expect("tied class present among neighbors")
}

/// Labels every dense point from up to `cfg.k` labeled sparse neighbors
/// within `cfg.radius` (majority vote, ties to the nearest); a point with no
/// neighbor in radius takes the label of its global nearest labeled point.
pub fn densify_labels(
    sparse: &PointCloud,
    dense: &PointCloud,
    cfg: &DensifyConfig,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    let (points, labels) = labeled_subset(sparse)?;
    let index = SpatialIndex::build(&points)?;
    Ok(dense
        .points
        .iter()
        .map(|q| {
            let neighbors = index.knn_within(q, cfg.k, cfg.radius);
            if neighbors.is_empty() {
                let (i, _) = index.nearest(q);
                labels[i]
            } else {
                vote(&neighbors, &labels)
            }
        })
        .collect())
}

/// Reference O(N*M) implementation with identical tie-breaking, used as the
/// test oracle.
pub fn brute_force_densify(
    sparse: &PointCloud,
    dense: &PointCloud,
    cfg: &DensifyConfig,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    let (points, labels) = labeled_subset(sparse)?;
    let r2 = cfg.radius * cfg.radius;
    Ok(dense
        .points
        .iter()
        .map(|q| {
            let mut all: Vec<(f64, usize)> =
                points.iter().enumerate().map(|(i, p)| (q.dist2(p), i)).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let neighbors: Vec<(usize, f64)> = all
                .iter()
                .take_while(|(d2, _)| *d2 <= r2)
                .take(cfg.k)
                .map(|&(d2, i)| (i, d2.sqrt()))
                .collect();
            if neighbors.is_empty() {
                labels[all[0].1]
            } else {
                vote(&neighbors, &labels)
            }
        })
        .collect())
}

/// Extracts the labeled points of a cloud; errors when none are labeled.
fn labeled_subset(sparse: &PointCloud) -> Result<(Vec<Point3>, Vec<usize>)> {
    let src_labels = sparse.labels.as_ref().ok_or(Error::EmptyDataset)?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (p, l) in sparse.points.iter().zip(src_labels) {
        if let Some(class) = l {
            points.push(*p);
            labels.push(*class);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((points, labels))
}
