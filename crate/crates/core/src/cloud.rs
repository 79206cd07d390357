//! Point clouds, blocks and label sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single 3D point, coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dist2(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, other: &Point3) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn coord(&self, dim: usize) -> f64 {
        match dim {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// Per-point label; `None` marks points excluded from loss and metrics
/// (e.g. Semantic3D label 0).
pub type Label = Option<usize>;

/// An ordered set of 3D points with optional per-point attributes and labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Extra per-point channels (intensity, color); not consumed by the model.
    pub attributes: Option<Vec<Vec<f64>>>,
    pub labels: Option<Vec<Label>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3>) -> Self {
        Self { points, attributes: None, labels: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Named semantic classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Config(format!("class name {i} is empty")));
            }
            if names[..i].contains(name) {
                return Err(Error::Config(format!("duplicate class name `{name}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }
}

/// A fixed-size sample of points from one grid cell.
#[derive(Debug, Clone)]
pub struct Block {
    /// Grid cell index (i, j) in the XY plane.
    pub origin: (i64, i64),
    /// Exactly `points_per_block` points, centered by the pipeline.
    pub points: PointCloud,
    /// For each sampled point, its index in the parent cloud.
    pub source_indices: Vec<usize>,
}

/// One invariant violation found by [`validate_cloud`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NanCoordinate { index: usize },
    LabelOutOfRange { index: usize, label: usize },
    AttributeLengthMismatch { points: usize, attributes: usize },
    LabelLengthMismatch { points: usize, labels: usize },
}

/// Result of checking a cloud against its invariants.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every cloud invariant and reports all violations.
pub fn validate_cloud(cloud: &PointCloud, labels: &LabelSet) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (i, p) in cloud.points.iter().enumerate() {
        if !p.is_finite() {
            report.violations.push(Violation::NanCoordinate { index: i });
        }
    }
    if let Some(attrs) = &cloud.attributes {
        if attrs.len() != cloud.points.len() {
            report.violations.push(Violation::AttributeLengthMismatch {
                points: cloud.points.len(),
                attributes: attrs.len(),
            });
        }
    }
    if let Some(lab) = &cloud.labels {
        if lab.len() != cloud.points.len() {
            report.violations.push(Violation::LabelLengthMismatch {
                points: cloud.points.len(),
                labels: lab.len(),
            });
        }
        for (i, l) in lab.iter().enumerate() {
            if let Some(l) = l {
                if *l >= labels.num_classes() {
                    report.violations.push(Violation::LabelOutOfRange { index: i, label: *l });
                }
            }
        }
    }
    report
}
