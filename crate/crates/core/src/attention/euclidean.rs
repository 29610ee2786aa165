use rand::Rng;

use super::layers::{BlockWrap, Linear};
use super::mask::GaussianMask;
use crate::diff::{concat_cols, Bound, ParamStore, Var};
use crate::error::{Error, Result};

/// Multi-head attention projections. Heads split the model width evenly.
#[derive(Debug, Clone)]
pub struct EuclideanAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl EuclideanAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::arg(format!("{heads} heads do not divide width {dim}")));
        }
        Ok(Self {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, false, rng)?,
            key: Linear::new(store, &format!("{name}.k"), dim, dim, false, rng)?,
            value: Linear::new(store, &format!("{name}.v"), dim, dim, false, rng)?,
            output: Linear::new(store, &format!("{name}.o"), dim, dim, true, rng)?,
            heads,
            dim,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// A Euclidean attention block: Gaussian attention inside the standard
/// residual/normalization/feed-forward wrapper. `variance = None` disables
/// the mask (vanilla self-attention).
#[derive(Debug, Clone)]
pub struct EuclideanBlock {
    pub attention: EuclideanAttention,
    pub wrap: BlockWrap,
    pub variance: Option<f64>,
}

impl EuclideanBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        hidden: usize,
        variance: Option<f64>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            attention: EuclideanAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            wrap: BlockWrap::new(store, name, dim, hidden, rng)?,
            variance,
        })
    }

    pub fn mask(&self, len: usize) -> Result<Option<GaussianMask>> {
        self.variance.map(|v| GaussianMask::new(len, v)).transpose()
    }
}

fn check_mask(x: Var<'_>, mask: Option<&GaussianMask>) -> Result<()> {
    match mask {
        Some(m) if m.size() != x.rows() => Err(Error::dim(format!(
            "mask of size {} for a sequence of {}",
            m.size(),
            x.rows()
        ))),
        _ => Ok(()),
    }
}

/// Per-head masked, scaled logits `M ⊙ (x Wq_h)(x Wk_h)^T / sqrt(d_h)` and the
/// per-head values `x Wv_h`.
pub fn euclidean_attention_logits<'g>(
    p: &Bound<'g>,
    x: Var<'g>,
    mask: Option<&GaussianMask>,
    attn: &EuclideanAttention,
) -> Result<Vec<(Var<'g>, Var<'g>)>> {
    check_mask(x, mask)?;
    let q = attn.query.forward(p, x)?;
    let k = attn.key.forward(p, x)?;
    let v = attn.value.forward(p, x)?;
    let dh = attn.head_dim();
    let mask = mask.map(|m| x.graph().constant(m.matrix().clone())).transpose()?;
    let inv = 1.0 / (dh as f64).sqrt();
    (0..attn.heads)
        .map(|h| {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let scores = q.slice_cols(lo, hi)?.matmul_t(k.slice_cols(lo, hi)?)?;
            let scores = match mask {
                Some(m) => scores.mul(m)?,
                None => scores,
            };
            Ok((scores.scale(inv)?, v.slice_cols(lo, hi)?))
        })
        .collect()
}

/// Gaussian-masked multi-head attention of `x: M x d`.
pub fn euclidean_gaussian_attention<'g>(
    p: &Bound<'g>,
    x: Var<'g>,
    mask: Option<&GaussianMask>,
    attn: &EuclideanAttention,
) -> Result<Var<'g>> {
    let heads = euclidean_attention_logits(p, x, mask, attn)?
        .into_iter()
        .map(|(logits, v)| logits.softmax_rows()?.matmul(v))
        .collect::<Result<Vec<_>>>()?;
    let joined = if heads.len() == 1 {
        heads[0]
    } else {
        concat_cols(&heads)?
    };
    attn.output.forward(p, joined)
}

pub fn euclidean_attention_block<'g>(
    p: &Bound<'g>,
    x: Var<'g>,
    mask: Option<&GaussianMask>,
    block: &EuclideanBlock,
) -> Result<Var<'g>> {
    let core = euclidean_gaussian_attention(p, x, mask, &block.attention)?;
    block.wrap.forward(p, x, core)
}

impl EuclideanBlock {
    /// Runs the block with its own mask for the sequence length of `x`.
    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let mask = self.mask(x.rows())?;
        euclidean_attention_block(p, x, mask.as_ref(), self)
    }
}
