//! Mini-batch training with Adam and a plateau learning-rate schedule.

use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{rng_from_words, rng_to_words, Checkpoint};
use super::config::Config;
use super::corpus::{Dataset, Split};
use super::eval::{evaluate_retrieval, MetricsReport};
use crate::diff::{adam_step, concat_cols, concat_rows, Bound, Graph, Var};
use crate::error::{Error, Result};
use crate::model::{normalize_rows, HlFormer};
use crate::objectives::{
    aggregate_loss, div_loss, pop_loss_euclidean, sim_loss, BatchSimMatrix, LossBreakdown,
    LossWeights,
};

/// RNG stream for batch order and query sampling.
pub const BATCH_STREAM: u64 = 1;

pub fn batch_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BATCH_STREAM);
    rng
}

/// One training example group: a video and the queries drawn for it.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub video: usize,
    pub queries: Vec<usize>,
}

/// Loss terms of a batch as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss<'g> {
    pub sim: Var<'g>,
    pub div: Var<'g>,
    pub pop: Var<'g>,
    pub total: Var<'g>,
}

impl BatchLoss<'_> {
    pub fn breakdown(&self) -> Result<LossBreakdown> {
        Ok(LossBreakdown {
            sim: self.sim.item()?,
            div: self.div.item()?,
            pop: self.pop.item()?,
            total: self.total.item()?,
        })
    }
}

fn term<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Numerical { op, detail } => {
            Error::numerical(name, format!("non-finite value in {op}: {detail}"))
        }
        other => other,
    })
}

/// Builds `L_sim + λ₁ L_div + λ₂ L_pop` for one batch on `p`'s graph.
pub fn batch_objective<'g>(
    model: &HlFormer,
    p: &Bound<'g>,
    dataset: &Dataset,
    items: &[BatchItem],
    weights: &LossWeights,
) -> Result<BatchLoss<'g>> {
    if items.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let g = p.vars()[0].graph();
    let mut frames = Vec::with_capacity(items.len());
    let mut clips = Vec::with_capacity(items.len());
    let mut unified = Vec::with_capacity(items.len());
    let mut queries = Vec::new();
    let mut owner = Vec::new();
    for (local, item) in items.iter().enumerate() {
        let video = dataset
            .videos
            .get(item.video)
            .ok_or_else(|| Error::arg(format!("no video with index {}", item.video)))?;
        let emb = model.encode_video(p, g.constant(video.frames.clone())?)?;
        frames.push(normalize_rows(emb.frames, "frame embeddings")?);
        clips.push(normalize_rows(emb.clips, "clip embeddings")?);
        unified.push(emb.unified);
        for &qi in &item.queries {
            let q = dataset
                .queries
                .get(qi)
                .ok_or_else(|| Error::arg(format!("no query with index {qi}")))?;
            if q.video != item.video {
                return Err(Error::arg(format!("query {} is not about video {}", q.id, video.id)));
            }
            queries.push(model.encode_query(p, g.constant(q.words.clone())?)?.pooled);
            owner.push(local);
        }
    }
    let q = concat_rows(&queries)?;
    let qn = normalize_rows(q, "query")?;
    let columns = |embs: &[Var<'g>]| -> Result<Var<'g>> {
        let cols = embs
            .iter()
            .map(|e| qn.matmul_t(*e)?.row_max())
            .collect::<Result<Vec<_>>>()?;
        if cols.len() == 1 {
            Ok(cols[0])
        } else {
            concat_cols(&cols)
        }
    };
    let frame = columns(&frames)?;
    let clip = columns(&clips)?;
    let batch = BatchSimMatrix::from_video_columns(frame, clip, owner.clone())?;
    let sim = term("L_sim", sim_loss(&batch, weights))?;
    let div = term("L_div", div_loss(q, &owner, weights.margin_div))?;
    let videos = concat_rows(&unified)?.gather_rows(&owner)?;
    let pop = term(
        "L_pop",
        pop_loss_euclidean(videos, q, weights, model.config.max_tangent_norm),
    )?;
    let total = aggregate_loss(sim, div, pop, weights.lambda_div, weights.lambda_pop)?;
    Ok(BatchLoss {
        sim,
        div,
        pop,
        total,
    })
}

/// Shuffles videos with training queries into batches and draws queries
/// per video without replacement.
pub fn epoch_batches(
    dataset: &Dataset,
    config: &Config,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<BatchItem>> {
    let by_video = dataset.train_queries_by_video();
    let mut videos: Vec<usize> = (0..by_video.len()).filter(|&v| !by_video[v].is_empty()).collect();
    videos.shuffle(rng);
    videos
        .chunks(config.train.batch_videos)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&v| {
                    let k = config.train.queries_per_video.min(by_video[v].len());
                    BatchItem {
                        video: v,
                        queries: by_video[v].choose_multiple(rng, k).copied().collect(),
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-epoch log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub lr: f64,
    /// Mean of each loss term over the epoch's steps.
    pub loss: LossBreakdown,
    pub val: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Checkpoint with the best validation SumR; equal to `last` when no
    /// epoch ran.
    pub best: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// Validation metrics of `last`, with the loss trace and wall time.
    pub report: MetricsReport,
}

/// Validation query indices, falling back to training queries when the
/// corpus has no held-out split.
pub fn validation_queries(dataset: &Dataset) -> Vec<usize> {
    let val = dataset.split_indices(Split::Val);
    if val.is_empty() {
        dataset.split_indices(Split::Train)
    } else {
        val
    }
}

fn check_dataset(config: &Config, dataset: &Dataset) -> Result<()> {
    if dataset.videos.is_empty() || dataset.queries.is_empty() {
        return Err(Error::arg("training needs a non-empty corpus"));
    }
    if dataset.video_dim() != Some(config.model.video_dim)
        || dataset.text_dim() != Some(config.model.text_dim)
    {
        return Err(Error::arg(format!(
            "corpus feature widths {:?}/{:?} do not match config {}/{}",
            dataset.video_dim(),
            dataset.text_dim(),
            config.model.video_dim,
            config.model.text_dim
        )));
    }
    Ok(())
}

/// Trains a fresh model for `epochs` epochs.
pub fn train(config: &Config, dataset: &Dataset, epochs: usize) -> Result<TrainOutcome> {
    resume(Checkpoint::initial(config.clone())?, dataset, epochs)
}

/// Continues from `checkpoint` for `epochs` more epochs.
pub fn resume(checkpoint: Checkpoint, dataset: &Dataset, epochs: usize) -> Result<TrainOutcome> {
    train_with_progress(checkpoint, dataset, epochs, |_| {})
}

/// [`resume`] with a callback after every epoch.
pub fn train_with_progress(
    mut ckpt: Checkpoint,
    dataset: &Dataset,
    epochs: usize,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let start = Instant::now();
    ckpt.config.validate()?;
    check_dataset(&ckpt.config, dataset)?;
    let val = validation_queries(dataset);
    let mut rng = rng_from_words(&ckpt.rng_state)?;
    let mut best = ckpt.clone();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let batches = epoch_batches(dataset, &ckpt.config, &mut rng);
        let mut sum = LossBreakdown::default();
        for items in &batches {
            let g = Graph::new();
            let p = ckpt.model.params.bind(&g)?;
            let loss = batch_objective(&ckpt.model, &p, dataset, items, &ckpt.config.loss)?;
            let parts = loss.breakdown()?;
            if !parts.total.is_finite() {
                return Err(Error::numerical("aggregate_loss", format!("{parts:?}")));
            }
            sum.sim += parts.sim;
            sum.div += parts.div;
            sum.pop += parts.pop;
            sum.total += parts.total;
            let grads = p.gradients(&g.backward(loss.total)?);
            adam_step(&mut ckpt.model.params, &grads, &mut ckpt.optimizer)?;
        }
        let n = batches.len().max(1) as f64;
        let mean = LossBreakdown {
            sim: sum.sim / n,
            div: sum.div / n,
            pop: sum.pop / n,
            total: sum.total / n,
        };
        ckpt.epoch += 1;
        let metrics = evaluate_retrieval(&ckpt.model, dataset, &val)?;
        let record = EpochRecord {
            epoch: ckpt.epoch,
            lr: ckpt.optimizer.lr,
            loss: mean,
            val: metrics.clone(),
        };
        let schedule = &mut ckpt.schedule;
        let improved = metrics.sumr > schedule.best_sumr;
        if improved {
            schedule.best_sumr = metrics.sumr;
            schedule.stale_epochs = 0;
        } else {
            schedule.stale_epochs += 1;
            if schedule.stale_epochs >= ckpt.config.train.plateau_epochs as u64 {
                ckpt.optimizer.lr =
                    (ckpt.optimizer.lr * ckpt.config.train.lr_decay).max(ckpt.config.train.lr_floor);
                schedule.stale_epochs = 0;
            }
        }
        ckpt.rng_state = rng_to_words(&rng);
        if improved {
            best = ckpt.clone();
        }
        on_epoch(&record);
        history.push(record);
    }
    let mut report = if history.is_empty() {
        evaluate_retrieval(&ckpt.model, dataset, &val)?
    } else {
        history.last().expect("non-empty").val.clone()
    };
    report.loss_trace = history.iter().map(|h| h.loss.total).collect();
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        last: ckpt,
        best,
        history,
        report,
    })
}
