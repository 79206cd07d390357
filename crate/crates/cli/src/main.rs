//! `graphseg`: spectral-GCN point-cloud segmentation pipeline CLI.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::{Effective, Overrides, Precision};
use graphseg_core::cloud::PointCloud;
use graphseg_core::graph::{build_adjacency_with_sigma, write_graph};
use graphseg_core::io::{
    densify_labels, generate_scene, read_xyz_label, scene_spec, write_predictions, CloudFormat,
    DatasetSpec,
};
use graphseg_core::nn::checkpoint::{load as load_checkpoint, peek_precision};
use graphseg_core::nn::{Real, Variant};
use graphseg_core::pipeline::{evaluate, partition_blocks, predict, sweep_cheb_order, train};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Full,
    GcnOnly,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::GcnOnly => Variant::GcnOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Semantic3dLike,
    S3disLike,
    XyzLabel,
}

impl From<FormatArg> for CloudFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Semantic3dLike => CloudFormat::Semantic3dLike,
            FormatArg::S3disLike => CloudFormat::S3disLike,
            FormatArg::XyzLabel => CloudFormat::XyzLabel,
        }
    }
}

#[derive(Parser)]
#[command(name = "graphseg", version, about = "Hybrid spectral-GCN point cloud segmentation")]
struct Cli {
    /// Declarative TOML config; flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override for data sampling, init and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run output directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Worker threads; 1 guarantees bitwise-reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Model variant (Table-1 ablation switch).
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate labeled synthetic scenes (train/test split) into --out.
    GenSynthetic {
        /// TOML dataset spec; defaults come from the config file's [dataset].
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Partition a cloud into blocks and export each block's weighted graph.
    EncodeGraph {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "xyz-label")]
        format: FormatArg,
    },
    /// Train a model on a directory of train_*/test_* scene files.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on the test split of a data directory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Predict per-point classes for one cloud.
    Predict {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "xyz-label")]
        format: FormatArg,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Upsample sparse labels onto a dense cloud by hybrid kNN vote.
    Densify {
        /// Labeled sparse cloud (xyz-label rows; -1 = unlabeled).
        #[arg(long)]
        sparse: PathBuf,
        /// Dense cloud to label.
        #[arg(long)]
        dense: PathBuf,
        #[arg(long, value_enum, default_value = "xyz-label")]
        format: FormatArg,
    },
    /// Train one model per Chebyshev order and tabulate mIoU vs wall time.
    SweepK {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        orders: Vec<usize>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        threads: cli.threads,
        variant: cli.variant.map(Into::into),
        epochs: match &cli.cmd {
            Cmd::Train { epochs, .. } => *epochs,
            _ => None,
        },
    };
    let eff = config::load(cli.config.as_deref(), &overrides)?;
    match cli.cmd {
        Cmd::GenSynthetic { spec } => cmd_gen_synthetic(&eff, spec.as_deref(), &cli.out),
        Cmd::EncodeGraph { input, format } => {
            cmd_encode_graph(&eff, &input, format.into(), &cli.out)
        }
        Cmd::Train { data, .. } => dispatch_train(&eff, &data, &cli.out),
        Cmd::Eval { checkpoint, data } => cmd_eval(&eff, &checkpoint, &data, &cli.out),
        Cmd::Predict { input, format, checkpoint } => {
            cmd_predict(&eff, &checkpoint, &input, format.into(), &cli.out)
        }
        Cmd::Densify { sparse, dense, format } => {
            cmd_densify(&eff, &sparse, &dense, format.into(), &cli.out)
        }
        Cmd::SweepK { data, orders } => dispatch_sweep(&eff, &data, &orders, &cli.out),
    }
}

fn cmd_gen_synthetic(eff: &Effective, spec_path: Option<&Path>, out: &Path) -> Result<()> {
    let dataset: DatasetSpec = match spec_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading dataset spec {}", path.display()))?;
            toml::from_str(&text)
                .with_context(|| format!("parsing dataset spec {}", path.display()))?
        }
        None => eff.dataset.clone(),
    };
    config::echo(eff, out)?;
    let test_count = (dataset.num_scenes / 5).max(1).min(dataset.num_scenes);
    let train_count = dataset.num_scenes - test_count;
    for i in 0..dataset.num_scenes {
        let cloud = generate_scene(&scene_spec(&dataset, i))?;
        let labels = cloud.labels.clone().expect("synthetic scenes are labeled");
        let name = if i < train_count {
            format!("train_{i:03}.txt")
        } else {
            format!("test_{:03}.txt", i - train_count)
        };
        write_predictions(&cloud, &labels, &out.join(name))?;
    }
    println!(
        "wrote {} train and {} test scenes to {}",
        train_count,
        test_count,
        out.display()
    );
    Ok(())
}

fn cmd_encode_graph(eff: &Effective, input: &Path, format: CloudFormat, out: &Path) -> Result<()> {
    let cloud = read_xyz_label(input, format)?;
    config::echo(eff, out)?;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(eff.train.seed);
    let blocks = partition_blocks(&cloud, &eff.train, &mut rng)?;
    let mut zero_edge = 0usize;
    for (serial, block) in blocks.iter().enumerate() {
        let (adj, sigma) = build_adjacency_with_sigma(&block.points.points, &eff.graph)?;
        if adj.entries().is_empty() {
            zero_edge += 1;
        }
        let path = out.join(format!(
            "graph_{serial:04}_{}_{}.txt",
            block.origin.0, block.origin.1
        ));
        let mut w = BufWriter::new(File::create(path)?);
        write_graph(&mut w, &adj, &eff.graph, sigma)?;
        w.flush()?;
    }
    if zero_edge > 0 {
        eprintln!("warning: {zero_edge} of {} blocks have zero edges", blocks.len());
    }
    println!("encoded {} blocks to {}", blocks.len(), out.display());
    Ok(())
}

/// Reads `prefix_*.txt` scene files in lexicographic order.
fn load_split(dir: &Path, prefix: &str) -> Result<Vec<PointCloud>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading data directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "txt")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(prefix))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| read_xyz_label(p, CloudFormat::XyzLabel).map_err(Into::into))
        .collect()
}

fn dispatch_train(eff: &Effective, data: &Path, out: &Path) -> Result<()> {
    match eff.precision {
        Precision::F64 => cmd_train::<f64>(eff, data, out),
        Precision::F32 => cmd_train::<f32>(eff, data, out),
    }
}

fn cmd_train<R: Real>(eff: &Effective, data: &Path, out: &Path) -> Result<()> {
    let train_clouds = load_split(data, "train_")?;
    let test_clouds = load_split(data, "test_")?;
    if train_clouds.is_empty() {
        bail!("no train_*.txt files in {}", data.display());
    }
    let echo = config::echo(eff, out)?;
    let mut tcfg = eff.train.clone();
    tcfg.checkpoint = Some(out.join("checkpoints"));
    let mut loss_log = BufWriter::new(File::create(out.join("loss.log"))?);
    let mut metrics_log = BufWriter::new(File::create(out.join("metrics.jsonl"))?);
    let result = train::<R>(
        &train_clouds,
        &test_clouds,
        &tcfg,
        &eff.model,
        &eff.graph,
        &echo,
        &mut loss_log,
        &mut metrics_log,
    )?;
    loss_log.flush()?;
    metrics_log.flush()?;
    println!(
        "trained {} epochs: loss {} -> {}",
        tcfg.epochs, result.initial_loss, result.final_loss
    );
    if let Some(rec) = result.history.last() {
        println!("test mIoU {} overall accuracy {}", rec.metrics.mean_iou, rec.metrics.overall_accuracy);
    }
    Ok(())
}

fn cmd_eval(eff: &Effective, checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let mut clouds = load_split(data, "test_")?;
    if clouds.is_empty() {
        clouds = load_split(data, "")?;
    }
    if clouds.is_empty() {
        bail!("no scene files in {}", data.display());
    }
    let report = match peek_precision(checkpoint)? {
        64 => {
            let ckpt = load_checkpoint::<f64>(checkpoint)?;
            evaluate::<f64>(&ckpt.model, &clouds, &eff.train, &eff.graph)?.0
        }
        _ => {
            let ckpt = load_checkpoint::<f32>(checkpoint)?;
            evaluate::<f32>(&ckpt.model, &clouds, &eff.train, &eff.graph)?.0
        }
    };
    let json = serde_json::to_string_pretty(&report)?;
    config::echo(eff, out)?;
    std::fs::write(out.join("metrics.json"), &json)?;
    println!("{json}");
    Ok(())
}

fn cmd_predict(
    eff: &Effective,
    checkpoint: &Path,
    input: &Path,
    format: CloudFormat,
    out: &Path,
) -> Result<()> {
    let cloud = read_xyz_label(input, format)?;
    let labels = match peek_precision(checkpoint)? {
        64 => {
            let ckpt = load_checkpoint::<f64>(checkpoint)?;
            predict::<f64>(&ckpt.model, &cloud, &eff.train, &eff.graph)?
        }
        _ => {
            let ckpt = load_checkpoint::<f32>(checkpoint)?;
            predict::<f32>(&ckpt.model, &cloud, &eff.train, &eff.graph)?
        }
    };
    config::echo(eff, out)?;
    let path = out.join("predictions.txt");
    write_predictions(&cloud, &labels, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_densify(
    eff: &Effective,
    sparse: &Path,
    dense: &Path,
    format: CloudFormat,
    out: &Path,
) -> Result<()> {
    let sparse_cloud = read_xyz_label(sparse, CloudFormat::XyzLabel)?;
    let dense_cloud = read_xyz_label(dense, format)?;
    let labels = densify_labels(&sparse_cloud, &dense_cloud, &eff.densify)?;
    config::echo(eff, out)?;
    let path = out.join("densified.txt");
    write_predictions(&dense_cloud, &labels.into_iter().map(Some).collect::<Vec<_>>(), &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch_sweep(eff: &Effective, data: &Path, orders: &[usize], out: &Path) -> Result<()> {
    let train_clouds = load_split(data, "train_")?;
    let test_clouds = load_split(data, "test_")?;
    if train_clouds.is_empty() || test_clouds.is_empty() {
        bail!("sweep needs train_*.txt and test_*.txt files in {}", data.display());
    }
    config::echo(eff, out)?;
    let mut table = BufWriter::new(File::create(out.join("sweep.txt"))?);
    let rows = match eff.precision {
        Precision::F64 => sweep_cheb_order::<f64>(
            orders,
            &train_clouds,
            &test_clouds,
            &eff.train,
            &eff.model,
            &eff.graph,
            &mut table,
        )?,
        Precision::F32 => sweep_cheb_order::<f32>(
            orders,
            &train_clouds,
            &test_clouds,
            &eff.train,
            &eff.model,
            &eff.graph,
            &mut table,
        )?,
    };
    table.flush()?;
    for row in &rows {
        println!("K={} mIoU={} wall={}s", row.k, row.mean_iou, row.wall_time_seconds);
    }
    Ok(())
}
