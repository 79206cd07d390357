//! Gradient tape: eager forward evaluation with recorded operations, walked
//! in reverse for backpropagation.

use std::sync::Arc;

use ndarray::{Array2, Axis};

use super::{CsrReal, Real};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

impl TensorId {
    /// Index into the gradient vector returned by [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<R: Real> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, R),
    /// x [n x p] + broadcast bias [1 x p].
    AddRowBias(usize, usize),
    Relu(usize),
    /// Elementwise product with a fixed mask (dropout).
    MulMask(usize, Array2<R>),
    /// Product with a symmetric sparse operator.
    SpMv(usize, Arc<CsrReal<R>>),
    /// Column-wise max over rows; saves the argmax row per column.
    RowMax(usize, Vec<usize>),
    /// Repeat a 1 x p row n times.
    TileRows(usize),
    ConcatCols(usize, usize),
    /// Mean cross-entropy after softmax; labels < 0 are excluded. Saves the
    /// softmax probabilities and the labeled-row count.
    SoftmaxXent { logits: usize, labels: Arc<Vec<i64>>, probs: Array2<R>, count: usize },
}

struct Node<R: Real> {
    value: Array2<R>,
    op: Op<R>,
}

/// Operation record for one forward pass. Nodes are appended in evaluation
/// order, so reverse index order is a reverse topological order.
pub struct Tape<R: Real> {
    nodes: Vec<Node<R>>,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &Array2<R> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Array2<R>, op: Op<R>) -> TensorId {
        self.nodes.push(Node { value, op });
        TensorId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<R>) -> TensorId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(v, Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(v, Op::Sub(a.0, b.0))
    }

    pub fn scale(&mut self, a: TensorId, c: R) -> TensorId {
        let v = &self.nodes[a.0].value * c;
        self.push(v, Op::Scale(a.0, c))
    }

    pub fn add_row_bias(&mut self, x: TensorId, bias: TensorId) -> TensorId {
        let b = &self.nodes[bias.0].value;
        assert_eq!(b.nrows(), 1);
        let v = &self.nodes[x.0].value + &b.row(0);
        self.push(v, Op::AddRowBias(x.0, bias.0))
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let v = self.nodes[x.0].value.mapv(|a| if a > R::zero() { a } else { R::zero() });
        self.push(v, Op::Relu(x.0))
    }

    pub fn mul_mask(&mut self, x: TensorId, mask: Array2<R>) -> TensorId {
        let v = &self.nodes[x.0].value * &mask;
        self.push(v, Op::MulMask(x.0, mask))
    }

    pub fn spmv(&mut self, x: TensorId, op: Arc<CsrReal<R>>) -> TensorId {
        let v = op.matmat(&self.nodes[x.0].value);
        self.push(v, Op::SpMv(x.0, op))
    }

    pub fn row_max(&mut self, x: TensorId) -> TensorId {
        let xv = &self.nodes[x.0].value;
        assert!(xv.nrows() >= 1);
        let p = xv.ncols();
        let mut out = Array2::<R>::zeros((1, p));
        let mut argmax = vec![0usize; p];
        for j in 0..p {
            let mut best = xv[[0, j]];
            let mut best_i = 0usize;
            for i in 1..xv.nrows() {
                if xv[[i, j]] > best {
                    best = xv[[i, j]];
                    best_i = i;
                }
            }
            out[[0, j]] = best;
            argmax[j] = best_i;
        }
        self.push(out, Op::RowMax(x.0, argmax))
    }

    pub fn tile_rows(&mut self, x: TensorId, n: usize) -> TensorId {
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.nrows(), 1);
        let p = xv.ncols();
        let mut out = Array2::<R>::zeros((n, p));
        for mut row in out.rows_mut() {
            row.assign(&xv.row(0));
        }
        self.push(out, Op::TileRows(x.0))
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        assert_eq!(av.nrows(), bv.nrows());
        let v = ndarray::concatenate(Axis(1), &[av.view(), bv.view()]).unwrap();
        self.push(v, Op::ConcatCols(a.0, b.0))
    }

    /// Mean over labeled rows of -log softmax(logits)[label], with
    /// max-subtraction for stability. Rows with label < 0 are excluded.
    pub fn softmax_cross_entropy(&mut self, logits: TensorId, labels: Arc<Vec<i64>>) -> TensorId {
        let lv = &self.nodes[logits.0].value;
        assert_eq!(lv.nrows(), labels.len());
        let mut probs = lv.clone();
        let mut total = R::zero();
        let mut count = 0usize;
        for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
            let m = row.iter().cloned().fold(R::neg_infinity(), R::max);
            row.mapv_inplace(|v| (v - m).exp());
            let sum = row.iter().cloned().fold(R::zero(), |a, b| a + b);
            row.mapv_inplace(|v| v / sum);
            let y = labels[i];
            if y >= 0 {
                let p = row[y as usize];
                total = total - p.ln();
                count += 1;
            }
        }
        let loss = if count > 0 { total / R::from_f64(count as f64) } else { R::zero() };
        let v = Array2::from_elem((1, 1), loss);
        self.push(v, Op::SoftmaxXent { logits: logits.0, labels, probs, count })
    }

    /// Gradients of a scalar node with respect to every tape node.
    ///
    /// Entries for interior nodes are dropped once consumed; leaf gradients
    /// are retained for parameter collection.
    pub fn backward(&self, loss: TensorId) -> Vec<Option<Array2<R>>> {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");
        let mut grads: Vec<Option<Array2<R>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), R::one()));
        for i in (0..=loss.0).rev() {
            let g = match &self.nodes[i].op {
                Op::Leaf => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            match &self.nodes[i].op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.nodes[*b].value.t());
                    let gb = self.nodes[*a].value.t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.mapv(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, *a, g * *c);
                }
                Op::AddRowBias(x, bias) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *bias, gb);
                    accumulate(&mut grads, *x, g);
                }
                Op::Relu(x) => {
                    let mut gx = g;
                    gx.zip_mut_with(&self.nodes[i].value, |gv, &out| {
                        if out <= R::zero() {
                            *gv = R::zero();
                        }
                    });
                    accumulate(&mut grads, *x, gx);
                }
                Op::MulMask(x, mask) => {
                    accumulate(&mut grads, *x, g * mask);
                }
                Op::SpMv(x, opm) => {
                    // The operator is symmetric, so A^T g = A g.
                    accumulate(&mut grads, *x, opm.matmat(&g));
                }
                Op::RowMax(x, argmax) => {
                    let n = self.nodes[*x].value.nrows();
                    let p = argmax.len();
                    let mut gx = Array2::<R>::zeros((n, p));
                    for j in 0..p {
                        gx[[argmax[j], j]] = g[[0, j]];
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::TileRows(x) => {
                    let gx = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(a, b) => {
                    let na = self.nodes[*a].value.ncols();
                    let ga = g.slice(ndarray::s![.., ..na]).to_owned();
                    let gb = g.slice(ndarray::s![.., na..]).to_owned();
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::SoftmaxXent { logits, labels, probs, count } => {
                    let upstream = g[[0, 0]];
                    let mut gl = probs.clone();
                    let scale = if *count > 0 {
                        upstream / R::from_f64(*count as f64)
                    } else {
                        R::zero()
                    };
                    for (r, mut row) in gl.rows_mut().into_iter().enumerate() {
                        let y = labels[r];
                        if y < 0 {
                            row.fill(R::zero());
                        } else {
                            row[y as usize] = row[y as usize] - R::one();
                            row.mapv_inplace(|v| v * scale);
                        }
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        grads
    }
}

fn accumulate<R: Real>(grads: &mut [Option<Array2<R>>], idx: usize, delta: Array2<R>) {
    match &mut grads[idx] {
        Some(g) => *g += &delta,
        slot => *slot = Some(delta),
    }
}
