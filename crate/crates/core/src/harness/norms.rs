//! Origin-distance histograms of lifted embeddings.

use std::fmt::Write as _;

use super::corpus::Dataset;
use crate::error::{Error, Result};
use crate::manifold::lift_from_tangent_clamped;
use crate::model::HlFormer;

/// Geodesic distance from the origin of `exp_o([0, scale * e])` for each row.
pub fn origin_distances(embeddings: &[Vec<f64>], scale: f64, max_norm: f64) -> Result<Vec<f64>> {
    embeddings
        .iter()
        .map(|e| Ok(lift_from_tangent_clamped(e, scale, max_norm)?.origin_distance()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormGroup {
    pub name: String,
    pub distances: Vec<f64>,
    /// Counts per bin of [`NormReport::edges`].
    pub counts: Vec<usize>,
}

impl NormGroup {
    pub fn mean(&self) -> f64 {
        if self.distances.is_empty() {
            0.0
        } else {
            self.distances.iter().sum::<f64>() / self.distances.len() as f64
        }
    }
}

/// Histograms over shared bin edges for the glance, gaze and query groups.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    /// `bins + 1` increasing edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub groups: Vec<NormGroup>,
}

impl NormReport {
    pub fn from_groups(groups: Vec<(String, Vec<f64>)>, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::arg("need at least one bin"));
        }
        let top = groups
            .iter()
            .flat_map(|(_, d)| d.iter().copied())
            .fold(0.0, f64::max);
        let top = if top > 0.0 { top } else { 1.0 };
        let width = top / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| i as f64 * width).collect();
        let groups = groups
            .into_iter()
            .map(|(name, distances)| {
                let mut counts = vec![0; bins];
                for &d in &distances {
                    let b = ((d / width) as usize).min(bins - 1);
                    counts[b] += 1;
                }
                NormGroup {
                    name,
                    distances,
                    counts,
                }
            })
            .collect();
        Ok(Self { edges, groups })
    }

    pub fn group(&self, name: &str) -> Option<&NormGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Tab-separated histogram rows followed by per-group means.
    pub fn to_table(&self) -> String {
        let mut out = String::from("group\tbin\tlo\thi\tcount\n");
        for g in &self.groups {
            for (b, c) in g.counts.iter().enumerate() {
                writeln!(
                    out,
                    "{}\t{b}\t{:.6}\t{:.6}\t{c}",
                    g.name,
                    self.edges[b],
                    self.edges[b + 1]
                )
                .unwrap();
            }
        }
        out.push_str("group\tcount\tmean\n");
        for g in &self.groups {
            writeln!(out, "{}\t{}\t{:.6}", g.name, g.distances.len(), g.mean()).unwrap();
        }
        out
    }
}

/// Lifts pooled glance and gaze embeddings of every video and every pooled
/// query with the cone-loss lift and bins their distances from the origin.
pub fn inspect_norms(
    model: &HlFormer,
    dataset: &Dataset,
    lift_scale: f64,
    bins: usize,
) -> Result<NormReport> {
    let mut glance = Vec::with_capacity(dataset.videos.len());
    let mut gaze = Vec::with_capacity(dataset.videos.len());
    for v in &dataset.videos {
        let f = model.embed_video(&v.frames)?;
        glance.push(f.clip_pooled.into_data());
        gaze.push(f.frame_pooled.into_data());
    }
    let queries = dataset
        .queries
        .iter()
        .map(|q| Ok(model.embed_query(&q.words)?.into_data()))
        .collect::<Result<Vec<_>>>()?;
    let cap = model.config.max_tangent_norm;
    NormReport::from_groups(
        vec![
            ("glance".into(), origin_distances(&glance, lift_scale, cap)?),
            ("gaze".into(), origin_distances(&gaze, lift_scale, cap)?),
            ("query".into(), origin_distances(&queries, lift_scale, cap)?),
        ],
        bins,
    )
}
