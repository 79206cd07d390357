//! Minimal dense-tensor engine with reverse-mode differentiation and the
//! network layers built on top of it.
//!
//! Geometry and graph construction always run in f64; the network itself is
//! generic over [`Real`] so training can run in f32 (fast mode) while oracle
//! and gradient-check paths stay in f64.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod tape;

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

use crate::sparse::Csr;

/// Scalar type the network computes in.
pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + std::ops::AddAssign
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Bit width tag used by the checkpoint format.
    const TAG: u8;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f64 {
    const TAG: u8 = 64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    const TAG: u8 = 32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Train/eval switch for dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// CSR copy of a symmetric propagation operator in the network scalar type.
#[derive(Debug, Clone)]
pub struct CsrReal<R: Real> {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<R>,
}

impl<R: Real> CsrReal<R> {
    pub fn from_csr(csr: &Csr) -> Self {
        Self {
            n: csr.n,
            indptr: csr.indptr.clone(),
            indices: csr.indices.clone(),
            data: csr.data.iter().map(|&w| R::from_f64(w)).collect(),
        }
    }

    pub fn matmat(&self, x: &ndarray::Array2<R>) -> ndarray::Array2<R> {
        assert_eq!(self.n, x.nrows());
        let p = x.ncols();
        let mut out = ndarray::Array2::<R>::zeros((self.n, p));
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().unwrap();
        let os = out.as_slice_mut().unwrap();
        for row in 0..self.n {
            let dst = &mut os[row * p..(row + 1) * p];
            for k in self.indptr[row]..self.indptr[row + 1] {
                let col = self.indices[k] as usize;
                let w = self.data[k];
                let src = &xs[col * p..(col + 1) * p];
                for j in 0..p {
                    dst[j] = dst[j] + w * src[j];
                }
            }
        }
        out
    }
}

pub use adam::{AdamConfig, AdamState};
pub use layers::{dropout, global_template, softmax_cross_entropy, ChebGCNLayer, DenseLayer, PerPointMLP};
pub use model::{ModelConfig, SegModel, Variant};
pub use tape::{Tape, TensorId};
