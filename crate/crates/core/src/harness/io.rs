//! Dataset directories and little-endian binary helpers.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::{
    Dataset, GroundTruth, QueryRecord, Split, SyntheticCorpus, SyntheticCorpusSpec, VideoRecord,
};
use crate::diff::Tensor;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VIDEO_FEATS_FILE: &str = "video_feats.bin";
pub const QUERY_FEATS_FILE: &str = "query_feats.bin";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Cursor over a byte buffer whose errors carry the failing offset.
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn is_at_end(&self) -> bool {
        self.pos == self.data.len()
    }

    pub fn error(&self, detail: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset(),
            detail: detail.into(),
        }
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(self.error(format!(
                "truncated: need {n} bytes, {} left",
                self.data.len() - self.pos
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.bytes(N)?.try_into().expect("length checked"))
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// `u32` length followed by UTF-8 bytes.
    pub fn string(&mut self) -> Result<String> {
        let at = self.offset();
        let n = self.u32()? as usize;
        let bytes = self.bytes(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format {
            offset: at,
            detail: "invalid UTF-8".into(),
        })
    }
}

pub fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_string(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// One feature record: id, two dims, `f32` payload.
pub fn write_feature_record(out: &mut Vec<u8>, id: &str, t: &Tensor) -> Result<()> {
    let (r, c) = t.dims2()?;
    put_string(out, id);
    put_u32(out, r as u32);
    put_u32(out, c as u32);
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(())
}

pub fn read_feature_record(r: &mut Reader<'_>) -> Result<(String, Tensor)> {
    let id = r.string()?;
    let at = r.offset();
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format {
            offset: at,
            detail: format!("record {id} has shape {rows}x{cols}"),
        });
    }
    let count = rows.saturating_mul(cols);
    if count.saturating_mul(4) > r.remaining() {
        return Err(r.error(format!("truncated payload of record {id}")));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(r.f32()? as f64);
    }
    Ok((id, Tensor::matrix(rows, cols, data)?))
}

/// Reads every record of a feature file.
pub fn read_feature_file(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let mut out = Vec::new();
    while !r.is_at_end() {
        out.push(read_feature_record(&mut r)?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestQuery {
    id: String,
    video: String,
    split: Split,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    videos: Vec<String>,
    frame_counts: Vec<usize>,
    video_dim: usize,
    text_dim: usize,
    queries: Vec<ManifestQuery>,
    spec: Option<SyntheticCorpusSpec>,
}

/// Writes the manifest and both feature files.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        videos: dataset.videos.iter().map(|v| v.id.clone()).collect(),
        frame_counts: dataset.videos.iter().map(|v| v.frames.rows()).collect(),
        video_dim: dataset.video_dim().unwrap_or(0),
        text_dim: dataset.text_dim().unwrap_or(0),
        queries: dataset
            .queries
            .iter()
            .map(|q| ManifestQuery {
                id: q.id.clone(),
                video: dataset.videos[q.video].id.clone(),
                split: q.split,
            })
            .collect(),
        spec: dataset.spec.clone(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    let mut buf = Vec::new();
    for v in &dataset.videos {
        write_feature_record(&mut buf, &v.id, &v.frames)?;
    }
    fs::write(dir.join(VIDEO_FEATS_FILE), &buf)?;
    buf.clear();
    for q in &dataset.queries {
        write_feature_record(&mut buf, &q.id, &q.words)?;
    }
    fs::write(dir.join(QUERY_FEATS_FILE), &buf)?;
    Ok(())
}

/// Writes the dataset plus `ground_truth.json`.
pub fn save_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<()> {
    save_dataset(&corpus.dataset, dir)?;
    fs::write(
        dir.join(GROUND_TRUTH_FILE),
        serde_json::to_string_pretty(&corpus.ground_truth)?,
    )?;
    Ok(())
}

/// Loads features and relevance. Does not touch `ground_truth.json`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let video_feats = read_feature_file(&dir.join(VIDEO_FEATS_FILE))?;
    let query_feats = read_feature_file(&dir.join(QUERY_FEATS_FILE))?;
    if video_feats.len() != manifest.videos.len() || query_feats.len() != manifest.queries.len() {
        return Err(Error::arg("feature files disagree with the manifest"));
    }
    let mut videos = Vec::with_capacity(video_feats.len());
    for ((id, frames), expected) in video_feats.into_iter().zip(&manifest.videos) {
        if &id != expected || frames.cols() != manifest.video_dim {
            return Err(Error::arg(format!("video record {id} disagrees with the manifest")));
        }
        videos.push(VideoRecord { id, frames });
    }
    let mut queries = Vec::with_capacity(query_feats.len());
    for ((id, words), mq) in query_feats.into_iter().zip(&manifest.queries) {
        if id != mq.id || words.cols() != manifest.text_dim {
            return Err(Error::arg(format!("query record {id} disagrees with the manifest")));
        }
        let video = manifest
            .videos
            .iter()
            .position(|v| v == &mq.video)
            .ok_or_else(|| Error::arg(format!("query {id} names unknown video {}", mq.video)))?;
        queries.push(QueryRecord {
            id,
            video,
            words,
            split: mq.split,
        });
    }
    Ok(Dataset {
        videos,
        queries,
        spec: manifest.spec,
    })
}

pub fn load_ground_truth(dir: &Path) -> Result<GroundTruth> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(GROUND_TRUTH_FILE))?)?)
}
