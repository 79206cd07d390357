//! Training loop, evaluation, inference and the Chebyshev-order sweep.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::blocks::{block_labels, partition_blocks, TrainConfig};
use super::metrics::{ConfusionMatrix, MetricsReport};
use crate::cloud::{Block, PointCloud};
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, normalized_laplacian, rescale_laplacian, GraphConfig, LambdaMax};
use crate::nn::checkpoint::{save as save_checkpoint, Checkpoint};
use crate::nn::layers::argmax_rows;
use crate::nn::{AdamConfig, AdamState, CsrReal, Mode, ModelConfig, Real, SegModel, Tape};

/// One block with its cached propagation operator, ready for the network.
/// The graph is built once per block (preprocessing) and reused every epoch.
pub struct PreparedBlock<R: Real> {
    pub block: Block,
    pub coords: Array2<R>,
    pub labels: Option<Vec<Option<usize>>>,
    pub prop: Arc<CsrReal<R>>,
    /// Index of the parent cloud in the dataset.
    pub cloud_index: usize,
}

/// Builds the rescaled-Laplacian operator for a block's centered points.
pub fn prepare_block<R: Real>(
    block: Block,
    labels: Option<Vec<Option<usize>>>,
    cloud_index: usize,
    gcfg: &GraphConfig,
) -> Result<PreparedBlock<R>> {
    let adj = build_adjacency(&block.points.points, gcfg)?;
    let lap = normalized_laplacian(&adj);
    let resc = rescale_laplacian(&lap, LambdaMax::Bound2)?;
    let n = block.points.len();
    let mut coords = Array2::<R>::zeros((n, 3));
    for (i, p) in block.points.points.iter().enumerate() {
        coords[[i, 0]] = R::from_f64(p.x);
        coords[[i, 1]] = R::from_f64(p.y);
        coords[[i, 2]] = R::from_f64(p.z);
    }
    Ok(PreparedBlock {
        block,
        coords,
        labels,
        prop: Arc::new(CsrReal::from_csr(resc.csr())),
        cloud_index,
    })
}

/// Partitions every cloud and builds each block's graph once.
pub fn prepare_clouds<R: Real>(
    clouds: &[PointCloud],
    tcfg: &TrainConfig,
    gcfg: &GraphConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PreparedBlock<R>>> {
    if clouds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = Vec::new();
    for (ci, cloud) in clouds.iter().enumerate() {
        for block in partition_blocks(cloud, tcfg, rng)? {
            let labels = block_labels(cloud, &block);
            out.push(prepare_block(block, labels, ci, gcfg)?);
        }
    }
    Ok(out)
}

/// splitmix64-style mixing for per-block dropout streams; makes results
/// independent of thread scheduling.
fn mix_seed(seed: u64, epoch: u64, serial: u64) -> u64 {
    let mut z = seed ^ epoch.rotate_left(24) ^ serial.rotate_left(48);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct BlockGrads<R: Real> {
    grads: Vec<Array2<R>>,
    loss_sum: f64,
    count: usize,
}

fn block_forward_backward<R: Real>(
    model: &SegModel<R>,
    pb: &PreparedBlock<R>,
    dropout_seed: u64,
) -> Result<BlockGrads<R>> {
    let labels = pb
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("block has no labels".into()))?;
    let count = labels.iter().filter(|l| l.is_some()).count();
    if count == 0 {
        return Ok(BlockGrads { grads: Vec::new(), loss_sum: 0.0, count: 0 });
    }
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let (loss, _, ids) =
        model.forward_loss(&mut tape, &pb.coords, &pb.prop, labels, Mode::Train, &mut rng)?;
    let loss_val = tape.value(loss)[[0, 0]].to_f64();
    let grads = model.collect_grads(&tape, loss, &ids);
    Ok(BlockGrads { grads, loss_sum: loss_val * count as f64, count })
}

/// Runs `f` over `0..n` on up to `threads` workers, returning results in
/// index order. Per-item work is self-contained, so the output is identical
/// for any thread count.
fn indexed_map<T: Send>(
    n: usize,
    threads: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if threads <= 1 || n <= 1 {
        return (0..n).map(&f).collect();
    }
    let workers = threads.min(n);
    let mut slots: Vec<Option<Result<T>>> = Vec::new();
    slots.resize_with(n, || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots_mutex = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                let mut guard = slots_mutex.lock().unwrap();
                guard[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled every slot")).collect()
}

/// Per-evaluation record appended to the metrics log (JSON lines).
#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub step: u64,
    pub split: String,
    pub loss: f64,
    pub metrics: MetricsReport,
}

pub struct TrainResult<R: Real> {
    pub model: SegModel<R>,
    pub adam: AdamState<R>,
    pub rng: ChaCha8Rng,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub history: Vec<EvalRecord>,
}

/// Trains a model over labeled clouds. One epoch is a shuffled pass over all
/// training blocks in batches; the loss is averaged over all counted points
/// of a batch. Writes `epoch step split loss` lines to `loss_log` and JSON
/// metric records to `metrics_log`.
pub fn train<R: Real>(
    train_clouds: &[PointCloud],
    test_clouds: &[PointCloud],
    tcfg: &TrainConfig,
    mcfg: &ModelConfig,
    gcfg: &GraphConfig,
    config_echo: &str,
    loss_log: &mut dyn Write,
    metrics_log: &mut dyn Write,
) -> Result<TrainResult<R>> {
    tcfg.validate()?;
    mcfg.validate()?;
    gcfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let train_blocks: Vec<PreparedBlock<R>> = prepare_clouds(train_clouds, tcfg, gcfg, &mut rng)?;
    for pb in &train_blocks {
        if pb.labels.is_none() {
            return Err(Error::Config("training clouds must be labeled".into()));
        }
    }
    let mut test_rng = ChaCha8Rng::seed_from_u64(mix_seed(tcfg.seed, u64::MAX, 0));
    let test_blocks: Vec<PreparedBlock<R>> = if test_clouds.is_empty() {
        Vec::new()
    } else {
        prepare_clouds(test_clouds, tcfg, gcfg, &mut test_rng)?
    };

    let mut model = SegModel::<R>::new(mcfg.clone(), tcfg.seed)?;
    let shapes: Vec<_> = model.params().iter().map(|p| p.dim()).collect();
    let names = model.param_names();
    let adam_cfg = AdamConfig { learning_rate: tcfg.learning_rate, ..Default::default() };
    let mut adam = AdamState::<R>::new(adam_cfg, &shapes);

    let mut order: Vec<usize> = (0..train_blocks.len()).collect();
    let mut history = Vec::new();
    let mut step: u64 = 0;
    let mut initial_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    let mut serial: u64 = 0;
    for epoch in 1..=tcfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(tcfg.batch_size) {
            // Per-block dropout seeds fixed before the (possibly parallel) map.
            let jobs: Vec<(usize, u64)> = batch
                .iter()
                .map(|&bi| {
                    serial += 1;
                    (bi, mix_seed(tcfg.seed, epoch as u64, serial))
                })
                .collect();
            let results = indexed_map(jobs.len(), tcfg.threads, |j| {
                block_forward_backward(&model, &train_blocks[jobs[j].0], jobs[j].1)
            })?;
            let total: usize = results.iter().map(|r| r.count).sum();
            if total == 0 {
                continue;
            }
            step += 1;
            // Weighted merge in batch order: grad of the mean loss over all
            // counted points of the batch.
            let mut grads: Vec<Array2<R>> =
                shapes.iter().map(|&s| Array2::zeros(s)).collect();
            let mut loss_sum = 0.0;
            let denom = R::from_f64(total as f64);
            for r in &results {
                if r.count == 0 {
                    continue;
                }
                loss_sum += r.loss_sum;
                let w = R::from_f64(r.count as f64) / denom;
                for (acc, g) in grads.iter_mut().zip(&r.grads) {
                    acc.zip_mut_with(g, |a, &b| *a += w * b);
                }
            }
            let loss = loss_sum / total as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step: step as usize });
            }
            if initial_loss.is_nan() {
                initial_loss = loss;
            }
            final_loss = loss;
            adam.step(model.params_mut(), &grads, &names)?;
            writeln!(loss_log, "{epoch} {step} train {loss}")?;
        }
        let last_epoch = epoch == tcfg.epochs;
        if (tcfg.eval_every > 0 && epoch % tcfg.eval_every == 0) || last_epoch {
            if !test_blocks.is_empty() {
                let (report, test_loss) = evaluate_blocks(&model, &test_blocks, tcfg.threads)?;
                writeln!(loss_log, "{epoch} {step} test {test_loss}")?;
                let rec = EvalRecord {
                    epoch,
                    step,
                    split: "test".into(),
                    loss: test_loss,
                    metrics: report,
                };
                writeln!(
                    metrics_log,
                    "{}",
                    serde_json::to_string(&rec).map_err(|e| Error::Config(e.to_string()))?
                )?;
                history.push(rec);
            }
            if let Some(dir) = &tcfg.checkpoint {
                std::fs::create_dir_all(dir)?;
                let name = if last_epoch {
                    "final.ckpt".to_string()
                } else {
                    format!("epoch_{epoch:04}.ckpt")
                };
                let ckpt = Checkpoint {
                    model: model.clone(),
                    adam: adam.clone(),
                    rng: rng.clone(),
                    config_echo: config_echo.to_string(),
                };
                save_checkpoint(&dir.join(name), &ckpt)?;
            }
        }
    }
    Ok(TrainResult { model, adam, rng, initial_loss, final_loss, history })
}

/// Pooled metrics and mean loss over prepared labeled blocks (Eval mode).
pub fn evaluate_blocks<R: Real>(
    model: &SegModel<R>,
    blocks: &[PreparedBlock<R>],
    threads: usize,
) -> Result<(MetricsReport, f64)> {
    if blocks.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let c = model.config.num_classes;
    let parts = indexed_map(blocks.len(), threads, |i| {
        let pb = &blocks[i];
        let labels = pb
            .labels
            .as_ref()
            .ok_or_else(|| Error::Config("block has no labels".into()))?;
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (loss, logits, _) =
            model.forward_loss(&mut tape, &pb.coords, &pb.prop, labels, Mode::Eval, &mut rng)?;
        let preds = argmax_rows(tape.value(logits));
        let mut cm = ConfusionMatrix::new(c);
        let mut count = 0usize;
        for (row, label) in labels.iter().enumerate() {
            if let Some(y) = label {
                if *y >= c {
                    return Err(Error::LabelOutOfRange { label: *y, num_classes: c });
                }
                cm.record(*y, preds[row]);
                count += 1;
            }
        }
        Ok((cm, tape.value(loss)[[0, 0]].to_f64() * count as f64, count))
    })?;
    let mut cm = ConfusionMatrix::new(c);
    let mut loss_sum = 0.0;
    let mut total = 0usize;
    for (part, l, n) in parts {
        cm.merge(&part);
        loss_sum += l;
        total += n;
    }
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok((cm.report()?, loss_sum / total as f64))
}

/// Partitions labeled clouds and evaluates the model on them.
pub fn evaluate<R: Real>(
    model: &SegModel<R>,
    clouds: &[PointCloud],
    tcfg: &TrainConfig,
    gcfg: &GraphConfig,
) -> Result<(MetricsReport, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let blocks = prepare_clouds(clouds, tcfg, gcfg, &mut rng)?;
    evaluate_blocks(model, &blocks, tcfg.threads)
}

/// Per-point predictions mapped back to the parent cloud. Points sampled
/// more than once take the majority class over their copies (ties break to
/// the lowest class index); unsampled points stay `None`.
pub fn predict<R: Real>(
    model: &SegModel<R>,
    cloud: &PointCloud,
    tcfg: &TrainConfig,
    gcfg: &GraphConfig,
) -> Result<Vec<Option<usize>>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let c = model.config.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let blocks = partition_blocks(cloud, tcfg, &mut rng)?;
    let prepared = indexed_map(blocks.len(), tcfg.threads, |i| {
        prepare_block::<R>(blocks[i].clone(), None, 0, gcfg)
    })?;
    let preds = indexed_map(prepared.len(), tcfg.threads, |i| {
        let pb = &prepared[i];
        let mut tape = Tape::new();
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (logits, _) = model.forward(&mut tape, &pb.coords, &pb.prop, Mode::Eval, &mut drng)?;
        Ok(argmax_rows(tape.value(logits)))
    })?;
    let mut votes = vec![vec![0u32; c]; cloud.len()];
    for (pb, p) in prepared.iter().zip(&preds) {
        for (row, &src) in pb.block.source_indices.iter().enumerate() {
            votes[src][p[row]] += 1;
        }
    }
    Ok(votes
        .into_iter()
        .map(|v| {
            let mut best: Option<usize> = None;
            for (cls, &n) in v.iter().enumerate() {
                if n > 0 && best.map_or(true, |b| n > v[b] as u32) {
                    best = Some(cls);
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub mean_iou: f64,
    pub wall_time_seconds: f64,
}

/// Trains one model per Chebyshev order with a shared seed and budget and
/// reports test mIoU plus wall time. Writes a `K mean_iou wall_time_seconds`
/// table to `out`.
pub fn sweep_cheb_order<R: Real>(
    orders: &[usize],
    train_clouds: &[PointCloud],
    test_clouds: &[PointCloud],
    tcfg: &TrainConfig,
    mcfg: &ModelConfig,
    gcfg: &GraphConfig,
    out: &mut dyn Write,
) -> Result<Vec<SweepRow>> {
    if orders.is_empty() {
        return Err(Error::Config("sweep needs at least one order".into()));
    }
    writeln!(out, "K mean_iou wall_time_seconds")?;
    let mut rows = Vec::new();
    for &k in orders {
        let mut mk = mcfg.clone();
        mk.k = k;
        let start = Instant::now();
        let result = train::<R>(
            train_clouds,
            test_clouds,
            tcfg,
            &mk,
            gcfg,
            "",
            &mut std::io::sink(),
            &mut std::io::sink(),
        )?;
        let (report, _) = evaluate::<R>(&result.model, test_clouds, tcfg, gcfg)?;
        let row = SweepRow {
            k,
            mean_iou: report.mean_iou,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        };
        writeln!(out, "{} {} {}", row.k, row.mean_iou, row.wall_time_seconds)?;
        rows.push(row);
    }
    Ok(rows)
}
