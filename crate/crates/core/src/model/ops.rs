use rand::Rng;

use crate::attention::Linear;
use crate::diff::{concat_cols, Bound, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Softmax weights `softmax(w Xᵀ)` of the attention pool, `1 x M`.
pub fn attention_pool_weights<'g>(x: Var<'g>, w: Var<'g>) -> Result<Var<'g>> {
    w.matmul_t(x)?.softmax_rows()
}

/// `Σ a_i X_i` with `a = softmax(w Xᵀ)`; `X: M x d`, `w: 1 x d`, result `1 x d`.
pub fn simple_attention_pool<'g>(x: Var<'g>, w: Var<'g>) -> Result<Var<'g>> {
    attention_pool_weights(x, w)?.matmul(x)
}

/// Sizes of the `clips` contiguous groups covering `max(frames, clips)`
/// positions, larger groups first.
pub fn glance_partition(frames: usize, clips: usize) -> Result<Vec<usize>> {
    if clips == 0 {
        return Err(Error::arg("clip count must be at least 1"));
    }
    if frames == 0 {
        return Err(Error::arg("video has no frames"));
    }
    let len = frames.max(clips);
    let (base, extra) = (len / clips, len % clips);
    Ok((0..clips).map(|g| base + usize::from(g < extra)).collect())
}

/// `clips x frames` averaging matrix of [`glance_downsample`]. Positions past
/// the last frame repeat it.
pub fn glance_matrix(frames: usize, clips: usize) -> Result<Tensor> {
    let sizes = glance_partition(frames, clips)?;
    let mut m = Tensor::zeros(clips, frames);
    let mut pos = 0;
    for (g, &size) in sizes.iter().enumerate() {
        for t in pos..pos + size {
            let f = t.min(frames - 1);
            m.set(g, f, m.get(g, f) + 1.0 / size as f64);
        }
        pos += size;
    }
    Ok(m)
}

/// Mean-pools `frames: M_f x D` into `clips` contiguous groups.
pub fn glance_downsample<'g>(frames: Var<'g>, clips: usize) -> Result<Var<'g>> {
    let m = glance_matrix(frames.rows(), clips)?;
    frames.graph().constant(m)?.matmul(frames)
}

/// Mean-guided fusion of parallel block outputs: a shared single-head
/// cross-attention (query from the block mean, key and value from one block)
/// followed by a scalar projection gives one logit per block and time step.
#[derive(Debug, Clone)]
pub struct Maim {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub score: Linear,
    pub dim: usize,
}

impl Maim {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, false, rng)?,
            key: Linear::new(store, &format!("{name}.k"), dim, dim, false, rng)?,
            value: Linear::new(store, &format!("{name}.v"), dim, dim, false, rng)?,
            score: Linear::new(store, &format!("{name}.score"), dim, 1, true, rng)?,
            dim,
        })
    }
}

fn check_same_shape(outputs: &[Var<'_>]) -> Result<()> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::arg("fusion needs at least one block output"))?;
    if let Some(bad) = outputs.iter().find(|o| o.shape() != first.shape()) {
        return Err(Error::dim(format!(
            "block outputs differ in shape: {:?} vs {:?}",
            first.shape(),
            bad.shape()
        )));
    }
    Ok(())
}

/// Per-time-step fusion weights, `M x N_O`, rows summing to 1.
pub fn maim_weights<'g>(
    p: &Bound<'g>,
    outputs: &[Var<'g>],
    maim: &Maim,
    tau: f64,
) -> Result<Var<'g>> {
    check_same_shape(outputs)?;
    if !(tau > 0.0) {
        return Err(Error::arg("fusion temperature must be positive"));
    }
    let mean = if outputs.len() == 1 {
        outputs[0]
    } else {
        let mut acc = outputs[0];
        for o in &outputs[1..] {
            acc = acc.add(*o)?;
        }
        acc.scale(1.0 / outputs.len() as f64)?
    };
    let q = maim.query.forward(p, mean)?;
    let inv = 1.0 / (maim.dim as f64).sqrt();
    let logits = outputs
        .iter()
        .map(|&o| {
            let k = maim.key.forward(p, o)?;
            let v = maim.value.forward(p, o)?;
            let ca = q.matmul_t(k)?.scale(inv)?.softmax_rows()?.matmul(v)?;
            maim.score.forward(p, ca)
        })
        .collect::<Result<Vec<_>>>()?;
    let logits = if logits.len() == 1 {
        logits[0]
    } else {
        concat_cols(&logits)?
    };
    logits.scale(1.0 / tau)?.softmax_rows()
}

/// Convex per-time-step combination of `outputs` under [`maim_weights`].
pub fn maim_fuse<'g>(
    p: &Bound<'g>,
    outputs: &[Var<'g>],
    maim: &Maim,
    tau: f64,
) -> Result<Var<'g>> {
    let w = maim_weights(p, outputs, maim, tau)?;
    let mut fused = None;
    for (k, &o) in outputs.iter().enumerate() {
        let term = o.mul(w.slice_cols(k, k + 1)?)?;
        fused = Some(match fused {
            None => term,
            Some(acc) => term.add(acc)?,
        });
    }
    Ok(fused.expect("at least one output"))
}

/// Rows scaled to unit length. Zero rows are a numerical error.
pub fn normalize_rows<'g>(x: Var<'g>, what: &str) -> Result<Var<'g>> {
    let norm = x.row_norm()?;
    let smallest = norm.with_value(|t| t.data().iter().cloned().fold(f64::INFINITY, f64::min));
    if smallest < 1e-12 {
        return Err(Error::numerical(
            "cosine",
            format!("{what} has a zero-norm vector"),
        ));
    }
    x.div(norm)
}

/// Frame-level, clip-level and combined text-video similarity, each `1 x 1`.
#[derive(Debug, Clone, Copy)]
pub struct Similarity<'g> {
    pub frame: Var<'g>,
    pub clip: Var<'g>,
    pub total: Var<'g>,
}

/// `S_f = max_i cos(q, f_i)`, `S_c = max_i cos(q, c_i)`, `S = α_f S_f + α_c S_c`.
pub fn similarity<'g>(
    q: Var<'g>,
    frames: Var<'g>,
    clips: Var<'g>,
    alpha_frame: f64,
    alpha_clip: f64,
) -> Result<Similarity<'g>> {
    if (alpha_frame + alpha_clip - 1.0).abs() > 1e-12
        || !(0.0..=1.0).contains(&alpha_frame)
        || !(0.0..=1.0).contains(&alpha_clip)
    {
        return Err(Error::arg("similarity weights must lie in [0,1] and sum to 1"));
    }
    let qn = normalize_rows(q, "query")?;
    let frame = qn
        .matmul_t(normalize_rows(frames, "frame embeddings")?)?
        .row_max()?;
    let clip = qn
        .matmul_t(normalize_rows(clips, "clip embeddings")?)?
        .row_max()?;
    let total = frame.scale(alpha_frame)?.add(clip.scale(alpha_clip)?)?;
    Ok(Similarity { frame, clip, total })
}
