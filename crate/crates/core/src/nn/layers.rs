//! Network layers: shared per-point MLP, Chebyshev GCN layer, dropout and
//! the classification loss.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, TensorId};
use super::{CsrReal, Mode, Real};
use crate::error::{Error, Result};

/// Symmetric uniform init in +-sqrt(6 / (fan_in + fan_out)).
fn glorot<R: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<R> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| {
        R::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound)
    })
}

/// One shared linear layer: weight [in x out], bias [1 x out].
#[derive(Debug, Clone)]
pub struct DenseLayer<R: Real> {
    pub weight: Array2<R>,
    pub bias: Array2<R>,
}

impl<R: Real> DenseLayer<R> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self { weight: glorot(in_dim, out_dim, rng), bias: Array2::zeros((1, out_dim)) }
    }
}

/// Shared per-point MLP: each layer is linear + ReLU applied independently to
/// every point row (weights shared across points).
#[derive(Debug, Clone)]
pub struct PerPointMLP<R: Real> {
    pub layers: Vec<DenseLayer<R>>,
}

impl<R: Real> PerPointMLP<R> {
    pub fn new(in_dim: usize, widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = in_dim;
        for &w in widths {
            layers.push(DenseLayer::new(d, w, rng));
            d = w;
        }
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map(|l| l.weight.nrows()).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.ncols()).unwrap_or(0)
    }

    /// Forward pass on the tape. Dropout (when `rate > 0` and training) is
    /// applied after every layer except the last. Pushed parameter leaf ids
    /// are appended to `param_ids` in canonical order (w0, b0, w1, b1, ...).
    pub fn forward(
        &self,
        tape: &mut Tape<R>,
        x: TensorId,
        rate: f64,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        param_ids: &mut Vec<TensorId>,
    ) -> Result<TensorId> {
        if tape.value(x).ncols() != self.in_dim() {
            return Err(Error::DimMismatch(format!(
                "MLP expects {} input columns, got {}",
                self.in_dim(),
                tape.value(x).ncols()
            )));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let w = tape.leaf(layer.weight.clone());
            let b = tape.leaf(layer.bias.clone());
            param_ids.push(w);
            param_ids.push(b);
            let z = tape.matmul(h, w);
            let z = tape.add_row_bias(z, b);
            h = tape.relu(z);
            if li != last {
                h = dropout(tape, h, rate, mode, rng)?;
            }
        }
        Ok(h)
    }
}

/// Inverted dropout: zero each element with probability `rate`, scale
/// survivors by 1/(1-rate). Identity in eval mode or at rate 0.
pub fn dropout<R: Real>(
    tape: &mut Tape<R>,
    x: TensorId,
    rate: f64,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<TensorId> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidDropoutRate(rate));
    }
    if rate == 0.0 || mode == Mode::Eval {
        return Ok(x);
    }
    let shape = tape.value(x).dim();
    let keep = 1.0 / (1.0 - rate);
    let mask = Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < rate {
            R::zero()
        } else {
            R::from_f64(keep)
        }
    });
    Ok(tape.mul_mask(x, mask))
}

/// Column-wise max over points: the permutation-invariant global template.
pub fn global_template<R: Real>(tape: &mut Tape<R>, features: TensorId) -> Result<TensorId> {
    if tape.value(features).nrows() == 0 {
        return Err(Error::EmptyCloud);
    }
    Ok(tape.row_max(features))
}

/// Graph convolution layer: delta( sum_i T_i(L~) x theta_i + bias ).
#[derive(Debug, Clone)]
pub struct ChebGCNLayer<R: Real> {
    /// theta_0 ... theta_K, each [in x out].
    pub thetas: Vec<Array2<R>>,
    pub bias: Array2<R>,
    /// ReLU for hidden layers, identity for the logits layer.
    pub relu: bool,
}

impl<R: Real> ChebGCNLayer<R> {
    pub fn new(order: usize, in_dim: usize, out_dim: usize, relu: bool, rng: &mut ChaCha8Rng) -> Self {
        let thetas = (0..=order).map(|_| glorot(in_dim, out_dim, rng)).collect();
        Self { thetas, bias: Array2::zeros((1, out_dim)), relu }
    }

    pub fn in_dim(&self) -> usize {
        self.thetas[0].nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.thetas[0].ncols()
    }

    /// Chebyshev basis terms are produced by the three-term recurrence using
    /// sparse products only; T_i(L~) is never materialized.
    pub fn forward(
        &self,
        tape: &mut Tape<R>,
        prop: &Arc<CsrReal<R>>,
        x: TensorId,
        param_ids: &mut Vec<TensorId>,
    ) -> Result<TensorId> {
        let (n, d) = tape.value(x).dim();
        if n != prop.n {
            return Err(Error::DimMismatch(format!(
                "operator is {}x{} but signal has {} rows",
                prop.n, prop.n, n
            )));
        }
        if d != self.in_dim() {
            return Err(Error::DimMismatch(format!(
                "GCN layer expects {} input columns, got {}",
                self.in_dim(),
                d
            )));
        }
        let theta_ids: Vec<TensorId> =
            self.thetas.iter().map(|t| tape.leaf(t.clone())).collect();
        let b = tape.leaf(self.bias.clone());
        param_ids.extend(theta_ids.iter().copied());
        param_ids.push(b);

        // Two algebraically identical evaluation orders:
        //   wide in, narrow out: Clenshaw on c_i = x theta_i keeps every
        //   sparse product in the narrow output dimension;
        //   otherwise: three-term recurrence on x, then project each term.
        let acc = if self.in_dim() > self.out_dim() && theta_ids.len() > 1 {
            let k = theta_ids.len() - 1;
            let coeffs: Vec<TensorId> =
                theta_ids.iter().map(|&t| tape.matmul(x, t)).collect();
            // b_j = c_j + 2 A b_{j+1} - b_{j+2}, then y = c_0 + A b_1 - b_2.
            let mut b_next: Option<TensorId> = None; // b_{j+1}
            let mut b_next2: Option<TensorId> = None; // b_{j+2}
            for j in (1..=k).rev() {
                let mut bj = coeffs[j];
                if let Some(bn) = b_next {
                    let abn = tape.spmv(bn, prop.clone());
                    let two = tape.scale(abn, R::from_f64(2.0));
                    bj = tape.add(bj, two);
                }
                if let Some(bn2) = b_next2 {
                    bj = tape.sub(bj, bn2);
                }
                b_next2 = b_next;
                b_next = Some(bj);
            }
            let b1 = b_next.expect("k >= 1");
            let ab1 = tape.spmv(b1, prop.clone());
            let mut y = tape.add(coeffs[0], ab1);
            if let Some(b2) = b_next2 {
                y = tape.sub(y, b2);
            }
            y
        } else {
            let mut acc = tape.matmul(x, theta_ids[0]);
            if theta_ids.len() > 1 {
                let mut t_prev = x;
                let mut t_cur = tape.spmv(x, prop.clone());
                let term = tape.matmul(t_cur, theta_ids[1]);
                acc = tape.add(acc, term);
                for &theta in &theta_ids[2..] {
                    let lt = tape.spmv(t_cur, prop.clone());
                    let two_lt = tape.scale(lt, R::from_f64(2.0));
                    let t_next = tape.sub(two_lt, t_prev);
                    let term = tape.matmul(t_next, theta);
                    acc = tape.add(acc, term);
                    t_prev = t_cur;
                    t_cur = t_next;
                }
            }
            acc
        };
        let z = tape.add_row_bias(acc, b);
        Ok(if self.relu { tape.relu(z) } else { z })
    }
}

/// Mean per-point softmax cross-entropy; labels are `None` (ignored) or a
/// class index < `num_classes`.
pub fn softmax_cross_entropy<R: Real>(
    tape: &mut Tape<R>,
    logits: TensorId,
    labels: &[Option<usize>],
    num_classes: usize,
) -> Result<TensorId> {
    let (n, c) = tape.value(logits).dim();
    if n != labels.len() {
        return Err(Error::DimMismatch(format!("{n} logit rows vs {} labels", labels.len())));
    }
    if c != num_classes {
        return Err(Error::DimMismatch(format!("{c} logit columns vs {num_classes} classes")));
    }
    let mut raw = Vec::with_capacity(labels.len());
    for l in labels {
        match l {
            Some(y) if *y >= num_classes => {
                return Err(Error::LabelOutOfRange { label: *y, num_classes })
            }
            Some(y) => raw.push(*y as i64),
            None => raw.push(-1),
        }
    }
    Ok(tape.softmax_cross_entropy(logits, Arc::new(raw)))
}

/// Eval-mode argmax per row.
pub fn argmax_rows<R: Real>(logits: &Array2<R>) -> Array1<usize> {
    Array1::from_iter(logits.rows().into_iter().map(|row| {
        let mut best = 0usize;
        for (i, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = i;
            }
        }
        best
    }))
}
