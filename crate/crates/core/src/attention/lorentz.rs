use rand::Rng;

use super::layers::{xavier, BlockWrap, Linear};
use super::mask::GaussianMask;
use crate::diff::{concat_cols, inverse_softplus, Bound, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::manifold::DEFAULT_MAX_TANGENT_NORM;

/// Below this norm a Lorentz linear direction or a centroid is degenerate.
const DEGENERATE_NORM: f64 = 1e-12;

/// Hyperbolic linear map `L^n -> L^m` with identity activation:
/// spatial output `λ(pᵀx + b′) / ‖xW + b‖ · (xW + b)`, time axis recomputed.
#[derive(Debug, Clone)]
pub struct LorentzLinear {
    /// `(n+1) x m`.
    pub weight: ParamId,
    /// `(n+1) x 1`.
    pub time_weight: ParamId,
    pub bias: ParamId,
    pub time_bias: ParamId,
    /// Raw scale; the layer uses `softplus(raw)`.
    pub scale_raw: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LorentzLinear {
    /// `in_dim`, `out_dim` are hyperbolic dimensions (ambient size minus one).
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        scale_init: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if scale_init <= 0.0 {
            return Err(Error::arg("Lorentz linear scale must be positive"));
        }
        Ok(Self {
            weight: store.add(format!("{name}.weight"), xavier(rng, in_dim + 1, out_dim))?,
            time_weight: store.add(format!("{name}.time_weight"), xavier(rng, in_dim + 1, 1))?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(1, out_dim))?,
            time_bias: store.add(format!("{name}.time_bias"), Tensor::scalar(0.0))?,
            scale_raw: store.add(
                format!("{name}.scale_raw"),
                Tensor::scalar(inverse_softplus(scale_init)),
            )?,
            in_dim,
            out_dim,
        })
    }
}

/// `1 x (n+1)` row `(-1, 1, ..., 1)`.
fn signature<'g>(x: Var<'g>) -> Result<Var<'g>> {
    let mut s = vec![1.0; x.cols()];
    s[0] = -1.0;
    x.graph().constant(Tensor::row_vector(&s))
}

/// Applies [`LorentzLinear`] to every row of `x: M x (n+1)`.
pub fn lorentz_linear<'g>(p: &Bound<'g>, x: Var<'g>, layer: &LorentzLinear) -> Result<Var<'g>> {
    if x.cols() != layer.in_dim + 1 {
        return Err(Error::dim(format!(
            "Lorentz linear expects {} coordinates, got {}",
            layer.in_dim + 1,
            x.cols()
        )));
    }
    let dir = x.matmul(p[layer.weight])?.add(p[layer.bias])?;
    let norm = dir.row_norm()?;
    let smallest = norm.with_value(|t| t.data().iter().cloned().fold(f64::INFINITY, f64::min));
    if smallest < DEGENERATE_NORM {
        return Err(Error::numerical(
            "lorentz_linear",
            format!("direction norm {smallest:e} is degenerate"),
        ));
    }
    let lambda = p[layer.scale_raw].softplus()?;
    let radial = x
        .matmul(p[layer.time_weight])?
        .add(p[layer.time_bias])?
        .mul(lambda)?;
    let spatial = dir.mul(radial.div(norm)?)?;
    let time = radial.square()?.add_scalar(1.0)?.sqrt()?;
    concat_cols(&[time, spatial])
}

/// Query/key/value maps of single-head Lorentz attention in dimension `n`.
#[derive(Debug, Clone)]
pub struct LorentzAttention {
    pub query: LorentzLinear,
    pub key: LorentzLinear,
    pub value: LorentzLinear,
    pub dim: usize,
}

impl LorentzAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        scale_init: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            query: LorentzLinear::new(store, &format!("{name}.q"), dim, dim, scale_init, rng)?,
            key: LorentzLinear::new(store, &format!("{name}.k"), dim, dim, scale_init, rng)?,
            value: LorentzLinear::new(store, &format!("{name}.v"), dim, dim, scale_init, rng)?,
            dim,
        })
    }
}

/// Masked, scaled logits `(-d²_L(q_i, k_j) ⊙ M_ij) / sqrt(n+1)` and the values.
pub fn lorentz_attention_logits<'g>(
    p: &Bound<'g>,
    x: Var<'g>,
    mask: Option<&GaussianMask>,
    attn: &LorentzAttention,
) -> Result<(Var<'g>, Var<'g>)> {
    if let Some(m) = mask {
        if m.size() != x.rows() {
            return Err(Error::dim(format!(
                "mask of size {} for a sequence of {}",
                m.size(),
                x.rows()
            )));
        }
    }
    let q = lorentz_linear(p, x, &attn.query)?;
    let k = lorentz_linear(p, x, &attn.key)?;
    let v = lorentz_linear(p, x, &attn.value)?;
    // -d² = 2 + 2<q, k>_L
    let neg_sq_dist = q.mul(signature(q)?)?.matmul_t(k)?.scale(2.0)?.add_scalar(2.0)?;
    let masked = match mask {
        Some(m) => neg_sq_dist.mul(x.graph().constant(m.matrix().clone())?)?,
        None => neg_sq_dist,
    };
    let logits = masked.scale(1.0 / ((attn.dim + 1) as f64).sqrt())?;
    Ok((logits, v))
}

/// Weighted Lorentzian centroid of the rows of `points` for each row of
/// `weights`: `Σ w_j x_j / sqrt(|<Σ w_j x_j, Σ w_j x_j>_L|)`.
pub fn lorentz_centroid_rows<'g>(weights: Var<'g>, points: Var<'g>) -> Result<Var<'g>> {
    let sum = weights.matmul(points)?;
    let norm = sum
        .square()?
        .mul(signature(sum)?)?
        .row_sums()?
        .abs()?
        .sqrt()?;
    let smallest = norm.with_value(|t| t.data().iter().cloned().fold(f64::INFINITY, f64::min));
    if smallest < DEGENERATE_NORM {
        return Err(Error::numerical(
            "lorentz_centroid",
            format!("Lorentzian norm {smallest:e} is degenerate"),
        ));
    }
    sum.div(norm)
}

/// Single-head Lorentz self-attention over the rows of `x: M x (n+1)`.
pub fn lorentz_self_attention<'g>(
    p: &Bound<'g>,
    x: Var<'g>,
    mask: Option<&GaussianMask>,
    attn: &LorentzAttention,
) -> Result<Var<'g>> {
    let (logits, v) = lorentz_attention_logits(p, x, mask, attn)?;
    lorentz_centroid_rows(logits.softmax_rows()?, v)
}

/// What sits between the lift and the projection back in a Lorentz block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LorentzMixing {
    #[default]
    Attention,
    /// Lifted points pass through unchanged. A test hook for the lift and
    /// projection path.
    Identity,
}

/// Hyperbolic attention block: `x W1` scaled by `β` and lifted with the
/// exponential map at the origin, attended on the manifold, mapped back with
/// the logarithmic map, projected by `W2` and divided by `β`.
#[derive(Debug, Clone)]
pub struct LorentzBlock {
    pub lift: Linear,
    /// Raw lift scale; the block uses `softplus(raw)`.
    pub beta_raw: ParamId,
    pub attention: LorentzAttention,
    pub project: Linear,
    pub wrap: BlockWrap,
    pub variance: Option<f64>,
    pub max_tangent_norm: f64,
    pub mixing: LorentzMixing,
}

impl LorentzBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        hyper_dim: usize,
        hidden: usize,
        variance: Option<f64>,
        beta_init: f64,
        lambda_init: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if beta_init <= 0.0 {
            return Err(Error::arg("lift scale must be positive"));
        }
        Ok(Self {
            lift: Linear::new(store, &format!("{name}.w1"), dim, hyper_dim, false, rng)?,
            beta_raw: store.add(
                format!("{name}.beta_raw"),
                Tensor::scalar(inverse_softplus(beta_init)),
            )?,
            attention: LorentzAttention::new(
                store,
                &format!("{name}.attn"),
                hyper_dim,
                lambda_init,
                rng,
            )?,
            project: Linear::new(store, &format!("{name}.w2"), hyper_dim, dim, false, rng)?,
            wrap: BlockWrap::new(store, name, dim, hidden, rng)?,
            variance,
            max_tangent_norm: DEFAULT_MAX_TANGENT_NORM,
            mixing: LorentzMixing::Attention,
        })
    }

    pub fn mask(&self, len: usize) -> Result<Option<GaussianMask>> {
        self.variance.map(|v| GaussianMask::new(len, v)).transpose()
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let mask = self.mask(x.rows())?;
        lorentz_attention_block(p, x, mask.as_ref(), self)
    }
}

/// Intermediate values of the hyperbolic core of a [`LorentzBlock`].
#[derive(Debug, Clone, Copy)]
pub struct LorentzCore<'g> {
    /// Lifted points, `M x (n+1)`.
    pub lifted: Var<'g>,
    /// Points after mixing, `M x (n+1)`.
    pub attended: Var<'g>,
    /// Euclidean output before the residual wrapper, `M x d`.
    pub output: Var<'g>,
}

/// `exp_o([0, v])` for each row `v`, tangent norms capped at `max_norm`.
pub fn exp_origin_rows<'g>(v: Var<'g>, max_norm: f64) -> Result<Var<'g>> {
    let spatial = v.mul(v.row_norm()?.sinh_ratio(max_norm)?)?;
    let time = spatial.square()?.row_sums()?.add_scalar(1.0)?.sqrt()?;
    concat_cols(&[time, spatial])
}

/// Spatial part of `log_o(y)` for each row `y`.
pub fn log_origin_rows<'g>(y: Var<'g>) -> Result<Var<'g>> {
    let spatial = y.slice_cols(1, y.cols())?;
    spatial.mul(spatial.row_norm()?.asinh_ratio()?)
}

pub fn lorentz_attention_core<'g>(
    p: &Bound<'g>,
    x: Var<'g>,
    mask: Option<&GaussianMask>,
    block: &LorentzBlock,
) -> Result<LorentzCore<'g>> {
    let beta = p[block.beta_raw].softplus()?;
    let tangent = block.lift.forward(p, x)?.mul(beta)?;
    let lifted = exp_origin_rows(tangent, block.max_tangent_norm)?;
    let attended = match block.mixing {
        LorentzMixing::Attention => lorentz_self_attention(p, lifted, mask, &block.attention)?,
        LorentzMixing::Identity => lifted,
    };
    let output = block
        .project
        .forward(p, log_origin_rows(attended)?)?
        .div(beta)?;
    Ok(LorentzCore {
        lifted,
        attended,
        output,
    })
}

pub fn lorentz_attention_block<'g>(
    p: &Bound<'g>,
    x: Var<'g>,
    mask: Option<&GaussianMask>,
    block: &LorentzBlock,
) -> Result<Var<'g>> {
    let core = lorentz_attention_core(p, x, mask, block)?;
    block.wrap.forward(p, x, core.output)
}
