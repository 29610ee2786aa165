//! Retrieval, query-diversity and partial-order (entailment cone) losses.

use std::f64::consts::FRAC_PI_2;

use crate::attention::exp_origin_rows;
use crate::diff::{Tensor, Var, DOMAIN_EPS};
use crate::error::{Error, Result};
use crate::manifold::{lorentz_inner, LorentzPoint};
use crate::model::normalize_rows;

/// Cone boundary constant `c`.
pub const CONE_C: f64 = 0.1;

/// Floor on `<v,t>_L² - 1` inside the exterior angle.
pub const EXTERIOR_SQRT_FLOOR: f64 = 1e-7;

/// Points closer than this (max coordinate difference) count as coincident.
pub const COINCIDENT_TOL: f64 = 1e-9;

/// Additive penalty that removes same-video entries from hardest-negative maxima.
const NEGATIVE_PENALTY: f64 = -4.0;

/// Loss weights and the scalars of each term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    /// `λ₁`, weight of the diversity term.
    pub lambda_div: f64,
    /// `λ₂`, weight of the partial-order term.
    pub lambda_pop: f64,
    /// Triplet margin.
    pub margin: f64,
    /// Contrastive softmax temperature.
    pub temperature: f64,
    /// Cosine margin of the diversity hinge.
    pub margin_div: f64,
    /// Cone constant `c`.
    pub cone_c: f64,
    /// Tangent scale applied to `V_v` and `q` before lifting for the cone loss.
    pub pop_lift_scale: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_div: 0.2,
            lambda_pop: 0.1,
            margin: 0.2,
            temperature: 0.05,
            margin_div: 0.4,
            cone_c: CONE_C,
            pop_lift_scale: 0.2,
        }
    }
}

impl LossWeights {
    /// Only the retrieval term.
    pub fn sim_only() -> Self {
        Self {
            lambda_div: 0.0,
            lambda_pop: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_div >= 0.0) || !(self.lambda_pop >= 0.0) {
            return Err(Error::arg("loss weights must be non-negative"));
        }
        if !(self.temperature > 0.0) || !(self.cone_c > 0.0) || !(self.pop_lift_scale > 0.0) {
            return Err(Error::arg(
                "temperature, cone_c and pop_lift_scale must be positive",
            ));
        }
        if !self.margin.is_finite() || !self.margin_div.is_finite() {
            return Err(Error::arg("margins must be finite"));
        }
        Ok(())
    }
}

/// `arcsin(min(1, 2c / ‖v_s‖))`, `π/2` at the origin.
pub fn half_aperture(v: &LorentzPoint, c: f64) -> f64 {
    let norm = v.spatial().iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return FRAC_PI_2;
    }
    (2.0 * c / norm).min(1.0).asin()
}

/// Angle at `v` between the cone axis and the geodesic towards `t`.
/// Returns 0 when the points coincide.
pub fn exterior_angle(v: &LorentzPoint, t: &LorentzPoint) -> Result<f64> {
    if v.dim() != t.dim() {
        return Err(Error::dim("exterior angle of points of different dimension"));
    }
    let coincident = v
        .coords()
        .iter()
        .zip(t.coords())
        .all(|(a, b)| (a - b).abs() < COINCIDENT_TOL);
    if coincident {
        return Ok(0.0);
    }
    let inner = lorentz_inner(v.coords(), t.coords())?;
    let vs = v.spatial().iter().map(|x| x * x).sum::<f64>().sqrt();
    let num = t.time() + v.time() * inner;
    let den = vs * (inner * inner - 1.0).max(EXTERIOR_SQRT_FLOOR).sqrt();
    if den == 0.0 {
        // Apex at the origin: the angle is measured from the time axis.
        return Ok(FRAC_PI_2);
    }
    Ok((num / den).clamp(-1.0, 1.0).acos())
}

/// `max(0, EA(v,t) - HA(v))`.
pub fn pop_loss(v: &LorentzPoint, t: &LorentzPoint, c: f64) -> Result<f64> {
    Ok((exterior_angle(v, t)? - half_aperture(v, c)).max(0.0))
}

fn signature<'g>(x: Var<'g>) -> Result<Var<'g>> {
    let mut s = vec![1.0; x.cols()];
    s[0] = -1.0;
    x.graph().constant(Tensor::row_vector(&s))
}

#[derive(Clone, Copy)]
enum Arc {
    Sin,
    Cos,
}

/// `arcsin`/`arccos` of a column, saturating to the exact endpoint value
/// (with zero gradient) where `|x| >= 1 - ε`.
fn saturating_arc<'g>(x: Var<'g>, arc: Arc) -> Result<Var<'g>> {
    let lim = 1.0 - DOMAIN_EPS;
    let (inside, edge) = x.with_value(|t| {
        let inside: Vec<f64> = t.data().iter().map(|v| f64::from(u8::from(v.abs() < lim))).collect();
        let edge: Vec<f64> = t
            .data()
            .iter()
            .map(|&v| match (v.abs() < lim, arc) {
                (true, _) => 0.0,
                (false, Arc::Sin) => v.signum() * FRAC_PI_2,
                (false, Arc::Cos) => {
                    if v > 0.0 {
                        0.0
                    } else {
                        std::f64::consts::PI
                    }
                }
            })
            .collect();
        (inside, edge)
    });
    let g = x.graph();
    let (r, c) = x.shape();
    let inside = g.constant(Tensor::matrix(r, c, inside)?)?;
    let edge = g.constant(Tensor::matrix(r, c, edge)?)?;
    // The clamp records the distance to the corner at |x| = 1.
    let arg = x.clamp(-1.0, 1.0)?.mul(inside)?;
    let value = match arc {
        Arc::Sin => arg.arcsin()?,
        Arc::Cos => arg.arccos()?,
    };
    value.mul(inside)?.add(edge)
}

/// Row-wise half-aperture of `v: B x (n+1)`, `B x 1`.
pub fn half_aperture_rows<'g>(v: Var<'g>, c: f64) -> Result<Var<'g>> {
    let norm = v.slice_cols(1, v.cols())?.row_norm()?.clamp(1e-12, f64::INFINITY)?;
    let ratio = norm.graph().constant(Tensor::full(norm.rows(), 1, 2.0 * c))?.div(norm)?;
    saturating_arc(ratio, Arc::Sin)
}

/// Row-wise exterior angle of `t` at `v`, `B x 1`.
pub fn exterior_angle_rows<'g>(v: Var<'g>, t: Var<'g>) -> Result<Var<'g>> {
    if v.shape() != t.shape() {
        return Err(Error::dim("exterior angle of differently shaped batches"));
    }
    let g = v.graph();
    let inner = v.mul(t)?.mul(signature(v)?)?.row_sums()?;
    let num = t.slice_cols(0, 1)?.add(v.slice_cols(0, 1)?.mul(inner)?)?;
    let vs = v.slice_cols(1, v.cols())?.row_norm()?.clamp(1e-12, f64::INFINITY)?;
    let den = vs.mul(
        inner
            .square()?
            .add_scalar(-1.0)?
            .clamp(EXTERIOR_SQRT_FLOOR, f64::INFINITY)?
            .sqrt()?,
    )?;
    let angle = saturating_arc(num.div(den)?, Arc::Cos)?;
    let keep = v.with_value(|vv| {
        t.with_value(|tv| {
            (0..vv.rows())
                .map(|i| {
                    let same = vv
                        .row(i)
                        .iter()
                        .zip(tv.row(i))
                        .all(|(a, b)| (a - b).abs() < COINCIDENT_TOL);
                    if same {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect::<Vec<_>>()
        })
    });
    angle.mul(g.constant(Tensor::matrix(keep.len(), 1, keep)?)?)
}

/// Mean over rows of `max(0, EA - HA)` for lifted pairs `(v_i, t_i)`.
pub fn pop_loss_rows<'g>(v: Var<'g>, t: Var<'g>, c: f64) -> Result<Var<'g>> {
    exterior_angle_rows(v, t)?
        .sub(half_aperture_rows(v, c)?)?
        .relu()?
        .mean_all()
}

/// Lifts Euclidean rows with `exp_o([0, scale * x])` and applies [`pop_loss_rows`].
pub fn pop_loss_euclidean<'g>(
    videos: Var<'g>,
    queries: Var<'g>,
    weights: &LossWeights,
    max_tangent_norm: f64,
) -> Result<Var<'g>> {
    let v = exp_origin_rows(videos.scale(weights.pop_lift_scale)?, max_tangent_norm)?;
    let t = exp_origin_rows(queries.scale(weights.pop_lift_scale)?, max_tangent_norm)?;
    pop_loss_rows(v, t, weights.cone_c)
}

/// Batch similarity matrices. Entry `(i, j)` scores query `i` against the
/// video of query `j`, so the diagonal holds matched pairs.
#[derive(Debug, Clone)]
pub struct BatchSimMatrix<'g> {
    pub frame: Var<'g>,
    pub clip: Var<'g>,
    /// Video index of each query. Queries sharing a video are not negatives.
    pub video_ids: Vec<usize>,
}

impl<'g> BatchSimMatrix<'g> {
    pub fn new(frame: Var<'g>, clip: Var<'g>, video_ids: Vec<usize>) -> Result<Self> {
        let b = video_ids.len();
        for m in [frame, clip] {
            if m.shape() != (b, b) {
                return Err(Error::dim(format!(
                    "similarity matrix {:?} for a batch of {b}",
                    m.shape()
                )));
            }
        }
        Ok(Self {
            frame,
            clip,
            video_ids,
        })
    }

    /// Builds the square matrices from query-by-video matrices (`B x V`).
    pub fn from_video_columns(
        frame: Var<'g>,
        clip: Var<'g>,
        video_ids: Vec<usize>,
    ) -> Result<Self> {
        Self::new(
            frame.gather_cols(&video_ids)?,
            clip.gather_cols(&video_ids)?,
            video_ids,
        )
    }

    pub fn len(&self) -> usize {
        self.video_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.video_ids.is_empty()
    }
}

fn same_video_penalty(ids: &[usize]) -> Tensor {
    let b = ids.len();
    let mut t = Tensor::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            if ids[i] == ids[j] {
                t.set(i, j, NEGATIVE_PENALTY);
            }
        }
    }
    t
}

fn keep_mask(ids: &[usize]) -> Tensor {
    let b = ids.len();
    let mut t = Tensor::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            if i == j || ids[i] != ids[j] {
                t.set(i, j, 1.0);
            }
        }
    }
    t
}

/// Per-query (`B x 1`) and per-video (`1 x B`) hardest-negative hinges
/// `max(0, m - S_ii + S_ij*)`. Columns of queries sharing a video hold the
/// same scores, so the per-query maximum runs over one column per video.
pub fn triplet_hinges<'g>(
    s: Var<'g>,
    video_ids: &[usize],
    margin: f64,
) -> Result<(Var<'g>, Var<'g>)> {
    let g = s.graph();
    let eye = g.constant(Tensor::identity(video_ids.len()))?;
    let diag = s.mul(eye)?;
    let penalized = s.add(g.constant(same_video_penalty(video_ids))?)?;
    let mut seen = Vec::new();
    let distinct: Vec<usize> = (0..video_ids.len())
        .filter(|&j| {
            let new = !seen.contains(&video_ids[j]);
            seen.push(video_ids[j]);
            new
        })
        .collect();
    let q2v = penalized
        .gather_cols(&distinct)?
        .row_max()?
        .sub(diag.row_sums()?)?
        .add_scalar(margin)?
        .relu()?;
    let v2q = penalized
        .col_max()?
        .sub(diag.col_sums()?)?
        .add_scalar(margin)?
        .relu()?;
    Ok((q2v, v2q))
}

/// Symmetric softmax contrastive term: mean of the query-to-video and
/// video-to-query cross-entropies, other queries of the same video excluded.
pub fn contrastive_term<'g>(s: Var<'g>, video_ids: &[usize], temperature: f64) -> Result<Var<'g>> {
    let g = s.graph();
    let eye = g.constant(Tensor::identity(video_ids.len()))?;
    let logits = s.scale(1.0 / temperature)?;
    let diag = logits.mul(eye)?;
    let e = logits.exp()?.mul(g.constant(keep_mask(video_ids))?)?;
    let q2v = e.row_sums()?.ln()?.sub(diag.row_sums()?)?.mean_all()?;
    let v2q = e.col_sums()?.ln()?.sub(diag.col_sums()?)?.mean_all()?;
    q2v.add(v2q)?.scale(0.5)
}

fn scale_loss<'g>(
    s: Var<'g>,
    video_ids: &[usize],
    weights: &LossWeights,
) -> Result<Var<'g>> {
    let (q2v, v2q) = triplet_hinges(s, video_ids, weights.margin)?;
    q2v.mean_all()?
        .add(v2q.mean_all()?)?
        .add(contrastive_term(s, video_ids, weights.temperature)?)
}

/// Frame-scale plus clip-scale retrieval loss.
pub fn sim_loss<'g>(batch: &BatchSimMatrix<'g>, weights: &LossWeights) -> Result<Var<'g>> {
    if batch.len() < 2 {
        return Err(Error::arg("similarity loss needs at least two pairs"));
    }
    scale_loss(batch.frame, &batch.video_ids, weights)?
        .add(scale_loss(batch.clip, &batch.video_ids, weights)?)
}

/// Mean of `max(0, cos(q_i, q_j) - margin)` over distinct queries of the same
/// video; 0 when the batch has no such pair.
pub fn div_loss<'g>(queries: Var<'g>, video_ids: &[usize], margin: f64) -> Result<Var<'g>> {
    if queries.rows() != video_ids.len() {
        return Err(Error::dim(format!(
            "{} query vectors for {} video ids",
            queries.rows(),
            video_ids.len()
        )));
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for i in 0..video_ids.len() {
        for j in i + 1..video_ids.len() {
            if video_ids[i] == video_ids[j] {
                left.push(i);
                right.push(j);
            }
        }
    }
    if left.is_empty() {
        return queries.graph().scalar(0.0);
    }
    let qn = normalize_rows(queries, "query")?;
    qn.gather_rows(&left)?
        .mul(qn.gather_rows(&right)?)?
        .row_sums()?
        .add_scalar(-margin)?
        .relu()?
        .mean_all()
}

/// `L_sim + λ₁ L_div + λ₂ L_pop`.
pub fn aggregate_loss<'g>(
    sim: Var<'g>,
    div: Var<'g>,
    pop: Var<'g>,
    lambda_div: f64,
    lambda_pop: f64,
) -> Result<Var<'g>> {
    let mut total = sim;
    if lambda_div != 0.0 {
        total = total.add(div.scale(lambda_div)?)?;
    }
    if lambda_pop != 0.0 {
        total = total.add(pop.scale(lambda_pop)?)?;
    }
    Ok(total)
}

/// Scalar values of the three terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub sim: f64,
    pub div: f64,
    pub pop: f64,
    pub total: f64,
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn point(spatial: &[f64]) -> LorentzPoint {
        LorentzPoint::from_spatial(spatial)
    }

    #[test]
    fn half_aperture_examples() {
        assert_eq!(half_aperture(&point(&[0.2, 0.0]), 0.1), FRAC_PI_2);
        assert!((half_aperture(&point(&[0.0, 0.4]), 0.1) - PI / 6.0).abs() < 1e-15);
        assert_eq!(half_aperture(&point(&[0.1, 0.0]), 0.1), FRAC_PI_2);
        assert_eq!(half_aperture(&point(&[0.0, 0.0]), 0.1), FRAC_PI_2);
    }

    #[test]
    fn exterior_angle_coincident_is_zero() {
        let v = point(&[0.3, -0.2]);
        assert_eq!(exterior_angle(&v, &v.clone()).unwrap(), 0.0);
    }

    #[test]
    fn defaults_validate() {
        LossWeights::default().validate().unwrap();
        let bad = LossWeights {
            lambda_pop: -1.0,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
    }
}
