//! Block partitioning: grid cells over the XY extent, sampled to a fixed
//! point count and centered per cell.

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{Block, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::nn::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub points_per_block: usize,
    /// Side length of the square XY grid cells, meters.
    pub block_size_m: f64,
    pub variant: Variant,
    /// Evaluate (and checkpoint) every this many epochs; 0 disables.
    pub eval_every: usize,
    /// Directory receiving periodic and final checkpoints, if set.
    pub checkpoint: Option<PathBuf>,
    /// Worker threads for per-block forward/backward; results are
    /// bitwise-independent of this knob, but 1 is the guaranteed mode.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            epochs: 50,
            seed: 0,
            points_per_block: 4096,
            block_size_m: 1.0,
            variant: Variant::Full,
            eval_every: 10,
            checkpoint: None,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.points_per_block < 2 {
            return Err(Error::Config("points_per_block must be >= 2".into()));
        }
        if !(self.block_size_m > 0.0) {
            return Err(Error::Config(format!(
                "block_size_m must be > 0, got {}",
                self.block_size_m
            )));
        }
        if self.threads < 1 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Splits a cloud into `block_size_m` square XY cells, keeps cells with at
/// least 2 points, and samples each kept cell to exactly `points_per_block`
/// points: uniform without replacement when oversized, all originals plus
/// uniform-with-replacement fill when undersized. Coordinates are centered on
/// the cell's pre-sampling XY centroid and minimum z.
pub fn partition_blocks(
    cloud: &PointCloud,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Block>> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let size = cfg.block_size_m;
    let s = cfg.points_per_block;
    let (mut x_min, mut y_min) = (f64::INFINITY, f64::INFINITY);
    for p in &cloud.points {
        x_min = x_min.min(p.x);
        y_min = y_min.min(p.y);
    }
    // BTreeMap keys give a deterministic cell order independent of point order.
    let mut cells: std::collections::BTreeMap<(i64, i64), Vec<usize>> = Default::default();
    for (i, p) in cloud.points.iter().enumerate() {
        let ix = ((p.x - x_min) / size).floor() as i64;
        let iy = ((p.y - y_min) / size).floor() as i64;
        cells.entry((ix, iy)).or_default().push(i);
    }
    let mut blocks = Vec::new();
    for (origin, members) in cells {
        if members.len() < 2 {
            continue;
        }
        // Center on the cell's centroid before sampling so duplicated points
        // do not shift it.
        let n = members.len() as f64;
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut z_min = f64::INFINITY;
        for &i in &members {
            cx += cloud.points[i].x;
            cy += cloud.points[i].y;
            z_min = z_min.min(cloud.points[i].z);
        }
        cx /= n;
        cy /= n;
        let chosen: Vec<usize> = if members.len() == s {
            members.clone()
        } else if members.len() > s {
            rand::seq::index::sample(rng, members.len(), s)
                .iter()
                .map(|j| members[j])
                .collect()
        } else {
            let mut out = members.clone();
            while out.len() < s {
                out.push(members[rng.random_range(0..members.len())]);
            }
            out
        };
        let points: Vec<Point3> = chosen
            .iter()
            .map(|&i| {
                let p = cloud.points[i];
                Point3::new(p.x - cx, p.y - cy, p.z - z_min)
            })
            .collect();
        blocks.push(Block {
            origin,
            points: PointCloud::from_points(points),
            source_indices: chosen,
        });
    }
    if blocks.is_empty() {
        return Err(Error::NoBlocks);
    }
    Ok(blocks)
}

/// Labels for a block's sampled points, pulled from the parent cloud.
pub fn block_labels(cloud: &PointCloud, block: &Block) -> Option<Vec<Option<usize>>> {
    cloud
        .labels
        .as_ref()
        .map(|labels| block.source_indices.iter().map(|&i| labels[i]).collect())
}
