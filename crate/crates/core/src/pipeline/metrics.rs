//! Pooled confusion matrix and the segmentation metrics derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed by (ground-truth class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        assert!(truth < self.num_classes && predicted < self.num_classes);
        self.counts[truth * self.num_classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    /// Associative merge of partial matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_classes, other.num_classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Builds a matrix from explicit rows (ground truth by row).
    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let c = rows.len();
        assert!(rows.iter().all(|r| r.len() == c));
        Self { num_classes: c, counts: rows.iter().flatten().copied().collect() }
    }

    pub fn report(&self) -> Result<MetricsReport> {
        let c = self.num_classes;
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut per_class_iou = Vec::with_capacity(c);
        let mut per_class_accuracy = Vec::with_capacity(c);
        let mut trace = 0u64;
        for k in 0..c {
            let tp = self.get(k, k);
            trace += tp;
            let fn_: u64 = (0..c).filter(|&j| j != k).map(|j| self.get(k, j)).sum();
            let fp: u64 = (0..c).filter(|&i| i != k).map(|i| self.get(i, k)).sum();
            let union = tp + fp + fn_;
            // A class absent from both prediction and ground truth carries no
            // information and is excluded from the means.
            per_class_iou.push(if union == 0 { None } else { Some(tp as f64 / union as f64) });
            let support = tp + fn_;
            per_class_accuracy
                .push(if support == 0 { None } else { Some(tp as f64 / support as f64) });
        }
        let mean = |v: &[Option<f64>]| {
            let present: Vec<f64> = v.iter().flatten().copied().collect();
            present.iter().sum::<f64>() / present.len() as f64
        };
        Ok(MetricsReport {
            mean_iou: mean(&per_class_iou),
            mean_accuracy: mean(&per_class_accuracy),
            overall_accuracy: trace as f64 / total as f64,
            per_class_iou,
            per_class_accuracy,
            confusion: (0..c).map(|i| self.counts[i * c..(i + 1) * c].to_vec()).collect(),
            total_points: total,
        })
    }
}

/// IoU_c = TP/(TP+FP+FN); accuracy_c = TP/(TP+FN); means are unweighted over
/// classes present in prediction or ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_iou: Vec<Option<f64>>,
    pub mean_iou: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub mean_accuracy: f64,
    pub overall_accuracy: f64,
    /// Row = ground truth, column = prediction.
    pub confusion: Vec<Vec<u64>>,
    pub total_points: u64,
}
