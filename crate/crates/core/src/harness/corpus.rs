use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{parse_entries, parse_value, Key};
use crate::diff::Tensor;
use crate::error::{Error, Result};

/// RNG stream for corpus noise.
pub const DATA_STREAM: u64 = 2;

/// Parameters of the synthetic hierarchical corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub num_videos: usize,
    pub moments_per_video: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub video_dim: usize,
    pub text_dim: usize,
    pub queries_per_video: usize,
    pub words_min: usize,
    pub words_max: usize,
    /// Std of per-frame noise around the moment vector.
    pub frame_jitter: f64,
    /// Std of per-word noise around the projected moment vector.
    pub query_jitter: f64,
    /// Use scaled basis vectors instead of Gaussian moment vectors.
    pub orthogonal_moments: bool,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            num_videos: 200,
            moments_per_video: 4,
            frames_min: 8,
            frames_max: 16,
            video_dim: 64,
            text_dim: 48,
            queries_per_video: 4,
            words_min: 4,
            words_max: 8,
            frame_jitter: 1.0,
            query_jitter: 1.0,
            orthogonal_moments: false,
            seed: 0,
        }
    }
}

macro_rules! spec_key {
    ($name:literal, $field:ident, $doc:literal) => {
        Key::<SyntheticCorpusSpec> {
            name: $name,
            doc: $doc,
            get: |c| c.$field.to_string(),
            set: |c, v| {
                c.$field = parse_value(v)?;
                Ok(())
            },
        }
    };
}

const SPEC_KEYS: &[Key<SyntheticCorpusSpec>] = &[
    spec_key!("num_videos", num_videos, "number of videos"),
    spec_key!("moments_per_video", moments_per_video, "latent moments per video"),
    spec_key!("frames_min", frames_min, "fewest frames per moment"),
    spec_key!("frames_max", frames_max, "most frames per moment"),
    spec_key!("video_dim", video_dim, "frame feature width"),
    spec_key!("text_dim", text_dim, "word feature width"),
    spec_key!("queries_per_video", queries_per_video, "queries per video"),
    spec_key!("words_min", words_min, "fewest words per query"),
    spec_key!("words_max", words_max, "most words per query"),
    spec_key!("frame_jitter", frame_jitter, "frame noise std"),
    spec_key!("query_jitter", query_jitter, "word noise std"),
    spec_key!("orthogonal_moments", orthogonal_moments, "basis-vector moments"),
    spec_key!("seed", seed, "generation seed"),
];

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_videos", self.num_videos),
            ("moments_per_video", self.moments_per_video),
            ("frames_min", self.frames_min),
            ("video_dim", self.video_dim),
            ("text_dim", self.text_dim),
            ("queries_per_video", self.queries_per_video),
            ("words_min", self.words_min),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::arg(format!("{name} must be at least 1")));
            }
        }
        if self.frames_max < self.frames_min || self.words_max < self.words_min {
            return Err(Error::arg("ranges need min <= max"));
        }
        if !(self.frame_jitter >= 0.0) || !(self.query_jitter >= 0.0) {
            return Err(Error::arg("noise levels must be non-negative"));
        }
        if self.orthogonal_moments && self.num_videos * self.moments_per_video > self.video_dim {
            return Err(Error::arg(format!(
                "{} orthogonal moments do not fit in {} dimensions",
                self.num_videos * self.moments_per_video,
                self.video_dim
            )));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for e in parse_entries(text)? {
            let key = SPEC_KEYS
                .iter()
                .find(|k| k.name == e.key)
                .ok_or_else(|| Error::Config {
                    line: e.line,
                    detail: format!("unknown key {:?}", e.key),
                })?;
            (key.set)(&mut spec, &e.value).map_err(|detail| Error::Config {
                line: e.line,
                detail: format!("{}: {detail}", e.key),
            })?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in SPEC_KEYS {
            writeln!(out, "{} = {}", k.name, (k.get)(self)).expect("string write");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    /// `M_f x D_vid`.
    pub frames: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub id: String,
    /// Index of the relevant video.
    pub video: usize,
    /// `N_q x D_text`.
    pub words: Tensor,
    pub split: Split,
}

/// What the model may see: features, query-video relevance and splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub videos: Vec<VideoRecord>,
    pub queries: Vec<QueryRecord>,
    /// Generation parameters, when the data is synthetic.
    pub spec: Option<SyntheticCorpusSpec>,
}

impl Dataset {
    /// Indices of the queries in `split`.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.queries.len())
            .filter(|&i| self.queries[i].split == split)
            .collect()
    }

    /// Training query indices grouped by video.
    pub fn train_queries_by_video(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.videos.len()];
        for (i, q) in self.queries.iter().enumerate() {
            if q.split == Split::Train {
                out[q.video].push(i);
            }
        }
        out
    }

    pub fn video_dim(&self) -> Option<usize> {
        self.videos.first().map(|v| v.frames.cols())
    }

    pub fn text_dim(&self) -> Option<usize> {
        self.queries.first().map(|q| q.words.cols())
    }

    pub fn find_query(&self, id: &str) -> Option<usize> {
        self.queries.iter().position(|q| q.id == id)
    }
}

/// Generation-only record: moment boundaries, the query-to-moment map and the
/// word projection. Never read by training or evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per video, `[start, end)` frame ranges of each moment.
    pub moments: Vec<Vec<(usize, usize)>>,
    /// Moment index of each query.
    pub query_moments: Vec<usize>,
    /// `D_text x D_vid` map from moment vectors to word space, row-major.
    pub projection: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    pub ground_truth: GroundTruth,
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Builds videos of concatenated noisy moments and one query per moment
/// (cycling when there are more queries than moments). The last query of
/// each video is held out, alternating between validation and test.
pub fn gen_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(DATA_STREAM);
    let scale = 1.0 / (spec.video_dim as f64).sqrt();
    let projection: Vec<Vec<f64>> = (0..spec.text_dim)
        .map(|_| (0..spec.video_dim).map(|_| normal(&mut rng) * scale).collect())
        .collect();
    let mut videos = Vec::with_capacity(spec.num_videos);
    let mut queries = Vec::new();
    let mut moments_gt = Vec::with_capacity(spec.num_videos);
    let mut query_moments = Vec::new();
    let basis_len = (spec.video_dim as f64).sqrt();
    for v in 0..spec.num_videos {
        let moments: Vec<Vec<f64>> = (0..spec.moments_per_video)
            .map(|m| {
                if spec.orthogonal_moments {
                    let mut e = vec![0.0; spec.video_dim];
                    e[v * spec.moments_per_video + m] = basis_len;
                    e
                } else {
                    (0..spec.video_dim).map(|_| normal(&mut rng)).collect()
                }
            })
            .collect();
        let mut frames = Vec::new();
        let mut spans = Vec::with_capacity(moments.len());
        for moment in &moments {
            let count = rng.random_range(spec.frames_min..=spec.frames_max);
            let start = frames.len() / spec.video_dim;
            for _ in 0..count {
                frames.extend(
                    moment
                        .iter()
                        .map(|&x| round_f32(x + spec.frame_jitter * normal(&mut rng))),
                );
            }
            spans.push((start, start + count));
        }
        let rows = frames.len() / spec.video_dim;
        videos.push(VideoRecord {
            id: format!("v{v:04}"),
            frames: Tensor::matrix(rows, spec.video_dim, frames)?,
        });
        moments_gt.push(spans);
        for k in 0..spec.queries_per_video {
            let m = k % spec.moments_per_video;
            let centre: Vec<f64> = projection
                .iter()
                .map(|row| row.iter().zip(&moments[m]).map(|(a, b)| a * b).sum())
                .collect();
            let words = rng.random_range(spec.words_min..=spec.words_max);
            let mut data = Vec::with_capacity(words * spec.text_dim);
            for _ in 0..words {
                data.extend(
                    centre
                        .iter()
                        .map(|&x| round_f32(x + spec.query_jitter * normal(&mut rng))),
                );
            }
            let held_out = spec.queries_per_video > 1 && k == spec.queries_per_video - 1;
            let split = match (held_out, v % 2) {
                (false, _) => Split::Train,
                (true, 1) => Split::Val,
                (true, _) => Split::Test,
            };
            queries.push(QueryRecord {
                id: format!("v{v:04}_q{k}"),
                video: v,
                words: Tensor::matrix(words, spec.text_dim, data)?,
                split,
            });
            query_moments.push(m);
        }
    }
    Ok(SyntheticCorpus {
        dataset: Dataset {
            videos,
            queries,
            spec: Some(spec.clone()),
        },
        ground_truth: GroundTruth {
            moments: moments_gt,
            query_moments,
            projection,
        },
    })
}
