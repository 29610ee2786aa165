use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::ops::{glance_downsample, maim_fuse, simple_attention_pool, Maim};
use crate::attention::{xavier, EuclideanBlock, Linear, LorentzBlock};
use crate::diff::{Bound, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// RNG stream used for parameter initialization.
pub const INIT_STREAM: u64 = 0;

/// `N_L` Lorentz and `N_E` Euclidean blocks run in parallel and fused.
#[derive(Debug, Clone)]
pub struct HlFormerBlock {
    pub lorentz: Vec<LorentzBlock>,
    pub euclidean: Vec<EuclideanBlock>,
    pub fusion: Maim,
    pub tau: f64,
}

impl HlFormerBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        config: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let lorentz = config
            .lorentz_variances()
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                LorentzBlock::new(
                    store,
                    &format!("{name}.lorentz{i}"),
                    config.dim,
                    config.hyper_dim,
                    config.ffn_hidden,
                    Some(v),
                    config.beta_init,
                    config.lambda_init,
                    rng,
                )
                .map(|mut b| {
                    b.max_tangent_norm = config.max_tangent_norm;
                    b
                })
            })
            .collect::<Result<_>>()?;
        let euclidean = config
            .euclidean_variances()
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                EuclideanBlock::new(
                    store,
                    &format!("{name}.euclid{i}"),
                    config.dim,
                    config.heads,
                    config.ffn_hidden,
                    Some(v),
                    rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            lorentz,
            euclidean,
            fusion: Maim::new(store, &format!("{name}.maim"), config.dim, rng)?,
            tau: config.tau,
        })
    }

    /// Outputs of every parallel block, Lorentz blocks first.
    pub fn block_outputs<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Vec<Var<'g>>> {
        let mut out = Vec::with_capacity(self.lorentz.len() + self.euclidean.len());
        for b in &self.lorentz {
            out.push(b.forward(p, x)?);
        }
        for b in &self.euclidean {
            out.push(b.forward(p, x)?);
        }
        Ok(out)
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let outputs = self.block_outputs(p, x)?;
        maim_fuse(p, &outputs, &self.fusion, self.tau)
    }
}

/// Parallel hybrid block followed by MAIM fusion.
pub fn hlformer_block<'g>(p: &Bound<'g>, x: Var<'g>, block: &HlFormerBlock) -> Result<Var<'g>> {
    block.forward(p, x)
}

/// One video branch: input projection, hybrid block, attention pool weight.
#[derive(Debug, Clone)]
pub struct VideoBranch {
    pub input: Linear,
    pub block: HlFormerBlock,
    pub pool: ParamId,
}

impl VideoBranch {
    fn new(
        store: &mut ParamStore,
        name: &str,
        config: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            input: Linear::new(store, &format!("{name}.input"), config.video_dim, config.dim, true, rng)?,
            block: HlFormerBlock::new(store, &format!("{name}.block"), config, rng)?,
            pool: store.add(format!("{name}.pool"), xavier(rng, 1, config.dim))?,
        })
    }
}

/// Projection, one unmasked self-attention block and an attention pool.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub input: Linear,
    pub block: EuclideanBlock,
    pub pool: ParamId,
}

/// Pooled query vector `q` (`1 x d`) and contextual word features (`N_q x d`).
#[derive(Debug, Clone, Copy)]
pub struct QueryEmbedding<'g> {
    pub pooled: Var<'g>,
    pub words: Var<'g>,
}

/// `V_f` (`M_f x d`), `V_c` (`M_c x d`) and the unified `V_v` (`1 x d`).
#[derive(Debug, Clone, Copy)]
pub struct VideoEmbeddings<'g> {
    pub frames: Var<'g>,
    pub clips: Var<'g>,
    /// Attention-pooled `V_f`.
    pub frame_pooled: Var<'g>,
    /// Attention-pooled `V_c`.
    pub clip_pooled: Var<'g>,
    pub unified: Var<'g>,
}

/// Plain-tensor copy of [`VideoEmbeddings`].
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub frames: Tensor,
    pub clips: Tensor,
    pub frame_pooled: Tensor,
    pub clip_pooled: Tensor,
    pub unified: Tensor,
}

impl VideoEmbeddings<'_> {
    pub fn values(&self) -> VideoFeatures {
        VideoFeatures {
            frames: self.frames.value(),
            clips: self.clips.value(),
            frame_pooled: self.frame_pooled.value(),
            clip_pooled: self.clip_pooled.value(),
            unified: self.unified.value(),
        }
    }
}

/// The full retrieval model: text branch, gaze and glance video branches.
#[derive(Debug, Clone)]
pub struct HlFormer {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub text: TextEncoder,
    pub gaze: VideoBranch,
    pub glance: VideoBranch,
}

impl HlFormer {
    /// Fresh parameters drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(INIT_STREAM);
        let mut store = ParamStore::new();
        let text = TextEncoder {
            input: Linear::new(&mut store, "text.input", config.text_dim, config.dim, true, &mut rng)?,
            block: EuclideanBlock::new(
                &mut store,
                "text.block",
                config.dim,
                config.heads,
                config.ffn_hidden,
                None,
                &mut rng,
            )?,
            pool: store.add("text.pool", xavier(&mut rng, 1, config.dim))?,
        };
        let gaze = VideoBranch::new(&mut store, "gaze", &config, &mut rng)?;
        let glance = VideoBranch::new(&mut store, "glance", &config, &mut rng)?;
        Ok(Self {
            config,
            params: store,
            text,
            gaze,
            glance,
        })
    }

    pub fn encode_query<'g>(&self, p: &Bound<'g>, words: Var<'g>) -> Result<QueryEmbedding<'g>> {
        if words.cols() != self.config.text_dim {
            return Err(Error::dim(format!(
                "query features have width {}, model expects {}",
                words.cols(),
                self.config.text_dim
            )));
        }
        let h = self.text.input.forward(p, words)?;
        let words = self.text.block.forward(p, h)?;
        let pooled = simple_attention_pool(words, p[self.text.pool])?;
        Ok(QueryEmbedding { pooled, words })
    }

    pub fn encode_video<'g>(&self, p: &Bound<'g>, frames: Var<'g>) -> Result<VideoEmbeddings<'g>> {
        if frames.cols() != self.config.video_dim {
            return Err(Error::dim(format!(
                "frame features have width {}, model expects {}",
                frames.cols(),
                self.config.video_dim
            )));
        }
        let gaze_in = self.gaze.input.forward(p, frames)?;
        let frames_out = self.gaze.block.forward(p, gaze_in)?;
        let clips_in = glance_downsample(frames, self.config.clip_count)?;
        let glance_in = self.glance.input.forward(p, clips_in)?;
        let clips_out = self.glance.block.forward(p, glance_in)?;
        let frame_pooled = simple_attention_pool(frames_out, p[self.gaze.pool])?;
        let clip_pooled = simple_attention_pool(clips_out, p[self.glance.pool])?;
        let unified = frame_pooled.add(clip_pooled)?.scale(0.5)?;
        Ok(VideoEmbeddings {
            frames: frames_out,
            clips: clips_out,
            frame_pooled,
            clip_pooled,
            unified,
        })
    }

    /// Pooled query vector of `words: N_q x D_text` without recording a tape.
    pub fn embed_query(&self, words: &Tensor) -> Result<Tensor> {
        if words.rows() == 0 {
            return Err(Error::arg("empty query"));
        }
        let g = Graph::inference();
        let p = self.params.bind(&g)?;
        let w = g.constant(words.clone())?;
        Ok(self.encode_query(&p, w)?.pooled.value())
    }

    /// Video embeddings of `frames: M_f x D_vid` without recording a tape.
    pub fn embed_video(&self, frames: &Tensor) -> Result<VideoFeatures> {
        let g = Graph::inference();
        let p = self.params.bind(&g)?;
        let f = g.constant(frames.clone())?;
        Ok(self.encode_video(&p, f)?.values())
    }

    /// Every Lorentz block of both video branches.
    pub fn lorentz_blocks(&self) -> impl Iterator<Item = &LorentzBlock> {
        self.gaze
            .block
            .lorentz
            .iter()
            .chain(self.glance.block.lorentz.iter())
    }

    pub fn lorentz_blocks_mut(&mut self) -> impl Iterator<Item = &mut LorentzBlock> {
        self.gaze
            .block
            .lorentz
            .iter_mut()
            .chain(self.glance.block.lorentz.iter_mut())
    }
}
