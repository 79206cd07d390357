//! The segmentation model: per-point MLP feature extractor + Chebyshev GCN
//! stack, with the GCN-only ablation variant.

use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{dropout, global_template, softmax_cross_entropy, ChebGCNLayer, PerPointMLP};
use super::tape::{Tape, TensorId};
use super::{CsrReal, Mode, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// MLP features (optionally with the pooled global template) feed the GCN.
    Full,
    /// Raw xyz coordinates feed the GCN directly.
    GcnOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub num_classes: usize,
    /// Per-point MLP widths.
    pub mlp_widths: Vec<usize>,
    /// Hidden GCN widths; the final layer emits `num_classes` logits.
    pub gcn_hidden: Vec<usize>,
    /// Chebyshev order K.
    pub k: usize,
    pub dropout_cnn: f64,
    pub dropout_gcn: f64,
    /// Concatenate the tiled max-pooled global feature onto per-point
    /// features before the GCN (Full variant only).
    pub global_template: bool,
}

impl ModelConfig {
    pub fn full(num_classes: usize) -> Self {
        Self {
            variant: Variant::Full,
            num_classes,
            mlp_widths: vec![64, 64, 128, 1024],
            gcn_hidden: vec![512, 256],
            k: 3,
            dropout_cnn: 0.4,
            dropout_gcn: 0.8,
            global_template: true,
        }
    }

    pub fn gcn_only(num_classes: usize) -> Self {
        Self { variant: Variant::GcnOnly, global_template: false, ..Self::full(num_classes) }
    }

    /// Input dimension of the first GCN layer.
    pub fn gcn_in_dim(&self) -> usize {
        match self.variant {
            Variant::GcnOnly => 3,
            Variant::Full => {
                let f = *self.mlp_widths.last().expect("mlp_widths non-empty");
                if self.global_template {
                    2 * f
                } else {
                    f
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.variant == Variant::Full && self.mlp_widths.is_empty() {
            return Err(Error::Config("Full variant needs MLP widths".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_cnn) || !(0.0..1.0).contains(&self.dropout_gcn) {
            return Err(Error::Config("dropout rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Full segmentation network over one block graph.
#[derive(Debug, Clone)]
pub struct SegModel<R: Real> {
    pub config: ModelConfig,
    pub mlp: Option<PerPointMLP<R>>,
    pub gcn: Vec<ChebGCNLayer<R>>,
}

impl<R: Real> SegModel<R> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mlp = match config.variant {
            Variant::Full => Some(PerPointMLP::new(3, &config.mlp_widths, &mut rng)),
            Variant::GcnOnly => None,
        };
        let mut gcn = Vec::new();
        let mut d = config.gcn_in_dim();
        for &w in &config.gcn_hidden {
            gcn.push(ChebGCNLayer::new(config.k, d, w, true, &mut rng));
            d = w;
        }
        gcn.push(ChebGCNLayer::new(config.k, d, config.num_classes, false, &mut rng));
        Ok(Self { config, mlp, gcn })
    }

    /// Parameter names in canonical (forward) order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if let Some(mlp) = &self.mlp {
            for i in 0..mlp.layers.len() {
                names.push(format!("mlp.{i}.weight"));
                names.push(format!("mlp.{i}.bias"));
            }
        }
        for (l, layer) in self.gcn.iter().enumerate() {
            for t in 0..layer.thetas.len() {
                names.push(format!("gcn.{l}.theta{t}"));
            }
            names.push(format!("gcn.{l}.bias"));
        }
        names
    }

    pub fn params(&self) -> Vec<&Array2<R>> {
        let mut out: Vec<&Array2<R>> = Vec::new();
        if let Some(mlp) = &self.mlp {
            for layer in &mlp.layers {
                out.push(&layer.weight);
                out.push(&layer.bias);
            }
        }
        for layer in &self.gcn {
            out.extend(layer.thetas.iter());
            out.push(&layer.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<R>> {
        let mut out: Vec<&mut Array2<R>> = Vec::new();
        if let Some(mlp) = &mut self.mlp {
            for layer in &mut mlp.layers {
                out.push(&mut layer.weight);
                out.push(&mut layer.bias);
            }
        }
        for layer in &mut self.gcn {
            out.extend(layer.thetas.iter_mut());
            out.push(&mut layer.bias);
        }
        out
    }

    /// Forward pass over one block. Returns the logits node and the leaf ids
    /// of every parameter, aligned with [`Self::param_names`].
    pub fn forward(
        &self,
        tape: &mut Tape<R>,
        coords: &Array2<R>,
        prop: &Arc<CsrReal<R>>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        if coords.ncols() != 3 {
            return Err(Error::DimMismatch(format!(
                "expected n x 3 coordinates, got {} columns",
                coords.ncols()
            )));
        }
        let n = coords.nrows();
        let mut param_ids = Vec::new();
        let x = tape.leaf(coords.clone());
        let mut h = match &self.mlp {
            Some(mlp) => {
                let feats =
                    mlp.forward(tape, x, self.config.dropout_cnn, mode, rng, &mut param_ids)?;
                if self.config.global_template {
                    let pooled = global_template(tape, feats)?;
                    let tiled = tape.tile_rows(pooled, n);
                    tape.concat_cols(feats, tiled)
                } else {
                    feats
                }
            }
            None => x,
        };
        let last = self.gcn.len() - 1;
        for (li, layer) in self.gcn.iter().enumerate() {
            h = layer.forward(tape, prop, h, &mut param_ids)?;
            if li != last {
                h = dropout(tape, h, self.config.dropout_gcn, mode, rng)?;
            }
        }
        Ok((h, param_ids))
    }

    /// Forward + loss over one labeled block.
    pub fn forward_loss(
        &self,
        tape: &mut Tape<R>,
        coords: &Array2<R>,
        prop: &Arc<CsrReal<R>>,
        labels: &[Option<usize>],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(TensorId, TensorId, Vec<TensorId>)> {
        let (logits, param_ids) = self.forward(tape, coords, prop, mode, rng)?;
        let loss = softmax_cross_entropy(tape, logits, labels, self.config.num_classes)?;
        Ok((loss, logits, param_ids))
    }

    /// Backward pass collecting per-parameter gradients in canonical order.
    pub fn collect_grads(
        &self,
        tape: &Tape<R>,
        loss: TensorId,
        param_ids: &[TensorId],
    ) -> Vec<Array2<R>> {
        let mut grads = tape.backward(loss);
        param_ids
            .iter()
            .map(|id| {
                grads[id.0]
                    .take()
                    .unwrap_or_else(|| Array2::zeros(tape.value(*id).dim()))
            })
            .collect()
    }
}
