//! Hybrid spectral-GCN semantic segmentation of raw 3D point clouds.
//!
//! The library covers the full pipeline: kNN graph encoding of block-sampled
//! point clouds, Chebyshev-filtered graph convolutions fused with a per-point
//! MLP feature extractor, a minimal reverse-mode tensor engine, training and
//! evaluation utilities, and dataset I/O including a synthetic scene
//! generator for desk-scale experiments.

pub mod cloud;
pub mod error;
pub mod graph;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod sparse;
pub mod spectral;

pub use cloud::{Block, Label, LabelSet, Point3, PointCloud};
pub use error::{Error, Result};
pub use sparse::{Csr, PropagationKind, PropagationMatrix, SparseAdjacency};
