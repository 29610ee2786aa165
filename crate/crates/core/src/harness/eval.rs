//! Retrieval scoring, ranking and recall metrics.

use std::fmt::Write as _;
use std::time::Instant;

use super::corpus::{Dataset, Split};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::model::{HlFormer, VideoFeatures};

pub const RECALL_KS: [usize; 4] = [1, 5, 10, 100];

/// Recall percentages, their sum, and run bookkeeping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub r100: f64,
    pub sumr: f64,
    /// Mean training loss per epoch, when produced by training.
    pub loss_trace: Vec<f64>,
    pub wall_time_secs: f64,
}

impl MetricsReport {
    /// Recalls from 1-based ranks of the relevant video. A rank counts for
    /// R@K when it is at most K; with fewer than K videos every rank does.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::arg("no queries to evaluate"));
        }
        let recall = |k: usize| {
            let hits = ranks.iter().filter(|&&r| r <= k).count();
            100.0 * hits as f64 / ranks.len() as f64
        };
        let (r1, r5, r10, r100) = (recall(1), recall(5), recall(10), recall(100));
        Ok(Self {
            r1,
            r5,
            r10,
            r100,
            sumr: r1 + r5 + r10 + r100,
            loss_trace: Vec::new(),
            wall_time_secs: 0.0,
        })
    }

    /// `R1 R5 R10 R100 SumR` on one line.
    pub fn machine_line(&self) -> String {
        format!(
            "{:.4} {:.4} {:.4} {:.4} {:.4}",
            self.r1, self.r5, self.r10, self.r100, self.sumr
        )
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "metric   value").unwrap();
        for (name, v) in [
            ("R@1", self.r1),
            ("R@5", self.r5),
            ("R@10", self.r10),
            ("R@100", self.r100),
            ("SumR", self.sumr),
        ] {
            writeln!(out, "{name:<8} {v:>7.2}").unwrap();
        }
        out
    }

    /// Equality of every reported number except wall time.
    pub fn same_results(&self, other: &Self) -> bool {
        let bits = |m: &Self| {
            let mut v: Vec<u64> = [m.r1, m.r5, m.r10, m.r100, m.sumr]
                .iter()
                .map(|x| x.to_bits())
                .collect();
            v.extend(m.loss_trace.iter().map(|x| x.to_bits()));
            v
        };
        bits(self) == bits(other)
    }
}

/// Unit-normalized frame and clip rows of one encoded video.
#[derive(Debug, Clone)]
pub struct VideoIndex {
    frames: Vec<Vec<f64>>,
    clips: Vec<Vec<f64>>,
}

fn unit_rows(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    t.to_rows()
        .into_iter()
        .map(|r| unit(r))
        .collect()
}

fn unit(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        return Err(Error::numerical("cosine", "zero-norm embedding"));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl VideoIndex {
    pub fn new(features: &VideoFeatures) -> Result<Self> {
        Ok(Self {
            frames: unit_rows(&features.frames)?,
            clips: unit_rows(&features.clips)?,
        })
    }

    /// `α_f max cos(q, f_i) + α_c max cos(q, c_i)` for a unit `q`.
    fn score(&self, q: &[f64], alpha_frame: f64, alpha_clip: f64) -> f64 {
        let best = |rows: &[Vec<f64>]| {
            rows.iter()
                .map(|r| dot(q, r))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        alpha_frame * best(&self.frames) + alpha_clip * best(&self.clips)
    }
}

fn check_dims(model: &HlFormer, dataset: &Dataset) -> Result<()> {
    let c = &model.config;
    if let Some(d) = dataset.video_dim() {
        if d != c.video_dim {
            return Err(Error::arg(format!(
                "corpus frames have width {d}, checkpoint expects {}",
                c.video_dim
            )));
        }
    }
    if let Some(d) = dataset.text_dim() {
        if d != c.text_dim {
            return Err(Error::arg(format!(
                "corpus words have width {d}, checkpoint expects {}",
                c.text_dim
            )));
        }
    }
    Ok(())
}

/// Encodes every video of `dataset` once.
pub fn index_videos(model: &HlFormer, dataset: &Dataset) -> Result<Vec<VideoIndex>> {
    check_dims(model, dataset)?;
    dataset
        .videos
        .iter()
        .map(|v| VideoIndex::new(&model.embed_video(&v.frames)?))
        .collect()
}

/// Similarity of one query (`N_q x D_text`) to every indexed video.
pub fn score_query(model: &HlFormer, index: &[VideoIndex], words: &Tensor) -> Result<Vec<f64>> {
    if words.cols() != model.config.text_dim {
        return Err(Error::arg(format!(
            "query words have width {}, checkpoint expects {}",
            words.cols(),
            model.config.text_dim
        )));
    }
    let q = unit(model.embed_query(words)?.into_data())?;
    Ok(index
        .iter()
        .map(|v| v.score(&q, model.config.alpha_frame, model.config.alpha_clip))
        .collect())
}

/// Video indices by descending score; equal scores keep corpus order.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// 1-based rank of `target` under [`rank_order`].
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &o)| o > s || (o == s && j < target))
        .count()
}

/// Query indices of `split`, or of the whole corpus for `None`.
pub fn split_queries(dataset: &Dataset, split: Option<Split>) -> Result<Vec<usize>> {
    let out = match split {
        Some(s) => dataset.split_indices(s),
        None => (0..dataset.queries.len()).collect(),
    };
    if out.is_empty() {
        return Err(Error::arg(format!("no {split:?} queries in the corpus")));
    }
    Ok(out)
}

/// Recalls over the queries at `query_indices`.
pub fn evaluate_retrieval(
    model: &HlFormer,
    dataset: &Dataset,
    query_indices: &[usize],
) -> Result<MetricsReport> {
    let start = Instant::now();
    let index = index_videos(model, dataset)?;
    let ranks = query_indices
        .iter()
        .map(|&qi| {
            let q = dataset
                .queries
                .get(qi)
                .ok_or_else(|| Error::arg(format!("no query with index {qi}")))?;
            Ok(rank_of(&score_query(model, &index, &q.words)?, q.video))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = MetricsReport::from_ranks(&ranks)?;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// `(video id, score)` pairs, best first.
pub fn rank(model: &HlFormer, dataset: &Dataset, words: &Tensor) -> Result<Vec<(String, f64)>> {
    let index = index_videos(model, dataset)?;
    let scores = score_query(model, &index, words)?;
    Ok(rank_order(&scores)
        .into_iter()
        .map(|i| (dataset.videos[i].id.clone(), scores[i]))
        .collect())
}
