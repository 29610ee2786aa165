//! Central-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` over checked coordinates.
    pub max_rel_error: f64,
    /// `(tensor, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    /// Analytic and numeric derivative at `worst`.
    pub worst_values: Option<(f64, f64)>,
    pub coords_checked: usize,
    /// Distance of the base point from the nearest kink of any non-smooth primitive.
    pub min_kink_distance: f64,
    pub loss: f64,
}

/// Denominator floor of [`relative_error`].
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_floored(analytic, numeric, RELATIVE_ERROR_FLOOR)
}

pub fn relative_error_floored(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Step, coordinate sampling and error floor of a check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    pub h: f64,
    /// Check at most this many random coordinates per tensor.
    pub per_tensor: Option<usize>,
    pub seed: u64,
    /// Denominator floor of the relative error, multiplied by `max(1, |f|)`
    /// since difference noise grows with the size of `f`.
    pub floor: f64,
    /// Five-point central stencil instead of the two-point one.
    pub fourth_order: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            per_tensor: None,
            seed: 0,
            floor: RELATIVE_ERROR_FLOOR,
            fourth_order: false,
        }
    }
}

/// Compares reverse-mode gradients of `f` with central differences at every
/// coordinate of every tensor in `params`.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    check_impl(
        f,
        params,
        &FdOptions {
            h,
            ..FdOptions::default()
        },
    )
}

/// Like [`finite_diff_check`] but checks at most `per_tensor` randomly chosen
/// coordinates of each tensor.
pub fn finite_diff_check_sampled<F>(
    f: F,
    params: &[Tensor],
    h: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    check_impl(
        f,
        params,
        &FdOptions {
            h,
            per_tensor: Some(per_tensor),
            seed,
            ..FdOptions::default()
        },
    )
}

/// Forward pass only: the distance of `params` from the nearest kink.
pub fn kink_distance_at<F>(f: F, params: &[Tensor]) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let vars = params
        .iter()
        .map(|t| g.constant(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    f(&g, &vars)?;
    Ok(g.min_kink_distance())
}

/// Fully configurable check.
pub fn finite_diff_check_with<F>(f: F, params: &[Tensor], options: &FdOptions) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    check_impl(f, params, options)
}

fn check_impl<F>(
    f: F,
    params: &[Tensor],
    options: &FdOptions,
) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let h = options.h;
    if !(h > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    let (analytic, loss, kink) = {
        let g = Graph::new();
        let vars = params
            .iter()
            .map(|t| g.param(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&g, &vars)?;
        let grads = g.backward(out)?;
        let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();
        (analytic, out.item()?, g.min_kink_distance())
    };

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let g = Graph::inference();
        let vars = ps
            .iter()
            .map(|t| g.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        f(&g, &vars)?.item()
    };

    let floor = options.floor * loss.abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: None,
        coords_checked: 0,
        min_kink_distance: kink,
        loss,
    };
    for ti in 0..params.len() {
        let n = params[ti].len();
        let coords: Vec<usize> = match options.per_tensor {
            Some(k) if k < n => (0..k).map(|_| rng.random_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        for j in coords {
            let base = params[ti].data()[j];
            let mut at = |x: f64| -> Result<f64> {
                work[ti].data_mut()[j] = x;
                let v = eval(&work);
                work[ti].data_mut()[j] = base;
                v
            };
            let near = at(base + h)? - at(base - h)?;
            let numeric = if options.fourth_order {
                let far = at(base + 2.0 * h)? - at(base - 2.0 * h)?;
                (8.0 * near - far) / (12.0 * h)
            } else {
                near / (2.0 * h)
            };
            let err = relative_error_floored(analytic[ti].data()[j], numeric, floor);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((ti, j));
                report.worst_values = Some((analytic[ti].data()[j], numeric));
            }
        }
    }
    Ok(report)
}
