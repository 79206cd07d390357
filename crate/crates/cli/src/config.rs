//! Declarative config file plus command-line overrides: flag wins over file
//! wins over default. The effective config is echoed into every run directory.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use graphseg_core::graph::{GraphConfig, SigmaPolicy, Symmetrization};
use graphseg_core::io::{DatasetSpec, DensifyConfig};
use graphseg_core::nn::{ModelConfig, Variant};
use graphseg_core::pipeline::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// The fully resolved configuration a run executes with.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub precision: Precision,
    pub graph: GraphConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub densify: DensifyConfig,
    pub dataset: DatasetSpec,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    precision: Option<String>,
    graph: GraphSection,
    model: ModelSection,
    train: TrainSection,
    densify: DensifySection,
    dataset: DatasetSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GraphSection {
    k: Option<usize>,
    kappa: Option<f64>,
    /// Fixed Gaussian width; omitted = per-block mean edge length.
    sigma: Option<f64>,
    symmetrization: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelSection {
    num_classes: Option<usize>,
    mlp_widths: Option<Vec<usize>>,
    gcn_hidden: Option<Vec<usize>>,
    k: Option<usize>,
    dropout_cnn: Option<f64>,
    dropout_gcn: Option<f64>,
    global_template: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSection {
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    epochs: Option<usize>,
    seed: Option<u64>,
    points_per_block: Option<usize>,
    block_size_m: Option<f64>,
    variant: Option<String>,
    eval_every: Option<usize>,
    threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DensifySection {
    k: Option<usize>,
    radius: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DatasetSection {
    num_scenes: Option<usize>,
    footprint: Option<(f64, f64)>,
    density: Option<f64>,
    seed: Option<u64>,
    buildings_per_scene: Option<usize>,
    trees_per_scene: Option<usize>,
    scatter_per_scene: Option<usize>,
}

fn parse_variant(s: &str) -> Result<Variant> {
    match s {
        "full" => Ok(Variant::Full),
        "gcn-only" => Ok(Variant::GcnOnly),
        other => bail!("unknown variant `{other}` (expected `full` or `gcn-only`)"),
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub variant: Option<Variant>,
    pub epochs: Option<usize>,
}

pub fn load(config_path: Option<&Path>, overrides: &Overrides) -> Result<Effective> {
    let file: FileConfig = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            toml::from_str(&text)
                .with_context(|| format!("parsing config file {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let precision = match file.precision.as_deref() {
        None | Some("f64") => Precision::F64,
        Some("f32") => Precision::F32,
        Some(other) => bail!("unknown precision `{other}` (expected `f32` or `f64`)"),
    };

    let mut graph = GraphConfig::default();
    if let Some(k) = file.graph.k {
        graph.k = k;
    }
    if let Some(kappa) = file.graph.kappa {
        graph.kappa = kappa;
    }
    if let Some(sigma) = file.graph.sigma {
        graph.sigma = SigmaPolicy::Fixed(sigma);
    }
    if let Some(s) = file.graph.symmetrization.as_deref() {
        graph.symmetrization = match s {
            "max" => Symmetrization::Max,
            "mean" => Symmetrization::Mean,
            other => bail!("unknown symmetrization `{other}` (expected `max` or `mean`)"),
        };
    }

    let mut train = TrainConfig::default();
    if let Some(v) = file.train.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = file.train.learning_rate {
        train.learning_rate = v;
    }
    if let Some(v) = file.train.epochs {
        train.epochs = v;
    }
    if let Some(v) = file.train.seed {
        train.seed = v;
    }
    if let Some(v) = file.train.points_per_block {
        train.points_per_block = v;
    }
    if let Some(v) = file.train.block_size_m {
        train.block_size_m = v;
    }
    if let Some(v) = file.train.variant.as_deref() {
        train.variant = parse_variant(v)?;
    }
    if let Some(v) = file.train.eval_every {
        train.eval_every = v;
    }
    if let Some(v) = file.train.threads {
        train.threads = v;
    }
    // Flags win over the file.
    if let Some(v) = overrides.seed {
        train.seed = v;
    }
    if let Some(v) = overrides.threads {
        train.threads = v;
    }
    if let Some(v) = overrides.variant {
        train.variant = v;
    }
    if let Some(v) = overrides.epochs {
        train.epochs = v;
    }

    let mut model = match train.variant {
        Variant::Full => ModelConfig::full(file.model.num_classes.unwrap_or(4)),
        Variant::GcnOnly => ModelConfig::gcn_only(file.model.num_classes.unwrap_or(4)),
    };
    if let Some(v) = file.model.mlp_widths {
        model.mlp_widths = v;
    }
    if let Some(v) = file.model.gcn_hidden {
        model.gcn_hidden = v;
    }
    if let Some(v) = file.model.k {
        model.k = v;
    }
    if let Some(v) = file.model.dropout_cnn {
        model.dropout_cnn = v;
    }
    if let Some(v) = file.model.dropout_gcn {
        model.dropout_gcn = v;
    }
    if let Some(v) = file.model.global_template {
        model.global_template = v;
    }

    let mut densify = DensifyConfig::default();
    if let Some(v) = file.densify.k {
        densify.k = v;
    }
    if let Some(v) = file.densify.radius {
        densify.radius = v;
    }

    let mut dataset = DatasetSpec::default();
    if let Some(v) = file.dataset.num_scenes {
        dataset.num_scenes = v;
    }
    if let Some(v) = file.dataset.footprint {
        dataset.footprint = v;
    }
    if let Some(v) = file.dataset.density {
        dataset.density = v;
    }
    if let Some(v) = file.dataset.seed {
        dataset.seed = v;
    }
    if let Some(v) = file.dataset.buildings_per_scene {
        dataset.buildings_per_scene = v;
    }
    if let Some(v) = file.dataset.trees_per_scene {
        dataset.trees_per_scene = v;
    }
    if let Some(v) = file.dataset.scatter_per_scene {
        dataset.scatter_per_scene = v;
    }
    if let Some(v) = overrides.seed {
        dataset.seed = v;
    }

    Ok(Effective { precision, graph, model, train, densify, dataset })
}

/// Writes the effective config as JSON into the run directory.
pub fn echo(effective: &Effective, out_dir: &Path) -> Result<String> {
    std::fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(effective)?;
    std::fs::write(out_dir.join("config.json"), &json)?;
    Ok(json)
}
