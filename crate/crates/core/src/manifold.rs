//! Lorentz (hyperboloid) model of hyperbolic space with curvature fixed at -1.
//!
//! A point is stored as `n + 1` coordinates `[x0, x_s]`: the time axis `x0`
//! followed by the `n` spatial axes. Every point satisfies
//! `<x, x>_L = -1` with `x0 = sqrt(|x_s|^2 + 1) > 0`, where
//! `<x, y>_L = -x0 y0 + x_s . y_s` is the Lorentzian inner product.
//!
//! All routines here work in `f64` and are pure; the differentiable
//! counterparts used by the attention layers live in [`crate::attention`]
//! and are checked against these.

use crate::error::{Error, Result};

/// Sectional curvature of the model. Never varied.
pub const CURVATURE: f64 = -1.0;

/// Tangent vectors longer than this are clamped before the exponential map.
pub const DEFAULT_MAX_TANGENT_NORM: f64 = 8.0;

/// Tolerance on `<x, x>_L = -1` when accepting a point from outside.
pub const ON_MANIFOLD_TOL: f64 = 1e-6;

/// Tolerance on `<base, z>_L = 0` when accepting a tangent vector.
pub const TANGENT_TOL: f64 = 1e-8;

const LOG_DOMAIN_TOL: f64 = 1e-9;
const CENTROID_MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldConfig {
    /// Hyperbolic dimension `n` (points have `n + 1` coordinates).
    pub dim: usize,
    pub max_tangent_norm: f64,
}

impl ManifoldConfig {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_max_tangent_norm(dim, DEFAULT_MAX_TANGENT_NORM)
    }

    pub fn with_max_tangent_norm(dim: usize, max_tangent_norm: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("manifold dimension must be positive"));
        }
        if !(max_tangent_norm > 0.0) || !max_tangent_norm.is_finite() {
            return Err(Error::arg("max_tangent_norm must be positive and finite"));
        }
        Ok(Self {
            dim,
            max_tangent_norm,
        })
    }

    pub fn curvature(&self) -> f64 {
        CURVATURE
    }

    pub fn origin(&self) -> LorentzPoint {
        LorentzPoint::origin(self.dim)
    }

    pub fn exp_map(&self, x: &LorentzPoint, z: &TangentVector) -> Result<LorentzPoint> {
        exp_map_clamped(x, z, self.max_tangent_norm)
    }

    pub fn lift(&self, u: &[f64], scale: f64) -> Result<LorentzPoint> {
        if u.len() != self.dim {
            return Err(Error::dim(format!(
                "lift expects {} spatial coordinates, got {}",
                self.dim,
                u.len()
            )));
        }
        lift_from_tangent_clamped(u, scale, self.max_tangent_norm)
    }
}

/// A point on the upper sheet of the hyperboloid.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzPoint {
    coords: Vec<f64>,
}

impl LorentzPoint {
    /// Accepts `coords` if they lie on the manifold within [`ON_MANIFOLD_TOL`].
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::dim("a Lorentz point needs at least 2 coordinates"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("LorentzPoint::new", "non-finite coordinate"));
        }
        let p = Self { coords };
        p.check()?;
        Ok(p)
    }

    /// The point whose spatial axes are `spatial`; the time axis is derived.
    pub fn from_spatial(spatial: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(spatial.len() + 1);
        coords.push((sq_norm(spatial) + 1.0).sqrt());
        coords.extend_from_slice(spatial);
        Self { coords }
    }

    /// `o = (1, 0, ..., 0)` in `L^n`.
    pub fn origin(n: usize) -> Self {
        let mut coords = vec![0.0; n + 1];
        coords[0] = 1.0;
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn time(&self) -> f64 {
        self.coords[0]
    }

    pub fn spatial(&self) -> &[f64] {
        &self.coords[1..]
    }

    /// Hyperbolic dimension `n`.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    /// Geodesic distance to the origin, `arcosh(x0)`.
    pub fn origin_distance(&self) -> f64 {
        self.time().max(1.0).acosh()
    }

    fn check(&self) -> Result<()> {
        let self_inner = dot_lorentz(&self.coords, &self.coords);
        if self.coords[0] <= 0.0 || (self_inner + 1.0).abs() > ON_MANIFOLD_TOL {
            return Err(Error::Domain(format!(
                "point is off the manifold: <x,x>_L = {self_inner}, x0 = {}",
                self.coords[0]
            )));
        }
        Ok(())
    }
}

/// A vector in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: LorentzPoint,
    coords: Vec<f64>,
}

impl TangentVector {
    /// Accepts `coords` if `<base, coords>_L = 0` within [`TANGENT_TOL`] (scaled by magnitude).
    pub fn new(base: LorentzPoint, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != base.coords.len() {
            return Err(Error::dim(format!(
                "tangent has {} coordinates, base has {}",
                coords.len(),
                base.coords.len()
            )));
        }
        let ortho = dot_lorentz(&base.coords, &coords);
        let scale = 1.0f64.max(base.time() * l2(&coords));
        if ortho.abs() > TANGENT_TOL * scale {
            return Err(Error::Domain(format!(
                "vector is not tangent at base: <base,z>_L = {ortho}"
            )));
        }
        Ok(Self { base, coords })
    }

    /// Projects an arbitrary ambient vector onto the tangent space at `base`:
    /// `w + <base, w>_L base`.
    pub fn project(base: LorentzPoint, w: &[f64]) -> Result<Self> {
        if w.len() != base.coords.len() {
            return Err(Error::dim("ambient vector length does not match base"));
        }
        let a = dot_lorentz(&base.coords, w);
        let coords = w
            .iter()
            .zip(&base.coords)
            .map(|(wi, bi)| wi + a * bi)
            .collect();
        Ok(Self { base, coords })
    }

    /// `[0, spatial]` at the origin.
    pub fn at_origin(spatial: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(spatial.len() + 1);
        coords.push(0.0);
        coords.extend_from_slice(spatial);
        Self {
            base: LorentzPoint::origin(spatial.len()),
            coords,
        }
    }

    pub fn zero(base: LorentzPoint) -> Self {
        let coords = vec![0.0; base.coords.len()];
        Self { base, coords }
    }

    pub fn base(&self) -> &LorentzPoint {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `sqrt(<z, z>_L)`; tangent vectors are spacelike so this is real.
    pub fn lorentz_norm(&self) -> f64 {
        dot_lorentz(&self.coords, &self.coords).max(0.0).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            base: self.base.clone(),
            coords: self.coords.iter().map(|c| c * factor).collect(),
        }
    }
}

/// `-x0 y0 + x_s . y_s`.
pub fn lorentz_inner(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim(format!(
            "lorentz_inner on lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::dim("lorentz_inner needs at least 2 coordinates"));
    }
    Ok(dot_lorentz(x, y))
}

/// Squared Lorentzian distance `-2 - 2 <a, b>_L`.
pub fn sq_lorentz_distance(a: &LorentzPoint, b: &LorentzPoint) -> Result<f64> {
    a.check()?;
    b.check()?;
    if a.coords.len() != b.coords.len() {
        return Err(Error::dim("distance between points of different dimension"));
    }
    // On the manifold -2 - 2<a,b>_L = <a-b, a-b>_L; the difference form is
    // exact on the diagonal and avoids cancellation for nearby points.
    let diff: Vec<f64> = a.coords.iter().zip(&b.coords).map(|(x, y)| x - y).collect();
    Ok(dot_lorentz(&diff, &diff).max(0.0))
}

/// Exponential map at `x`, clamping `|z|_L` to [`DEFAULT_MAX_TANGENT_NORM`].
pub fn exp_map(x: &LorentzPoint, z: &TangentVector) -> Result<LorentzPoint> {
    exp_map_clamped(x, z, DEFAULT_MAX_TANGENT_NORM)
}

pub fn exp_map_clamped(
    x: &LorentzPoint,
    z: &TangentVector,
    max_tangent_norm: f64,
) -> Result<LorentzPoint> {
    if z.coords.len() != x.coords.len() {
        return Err(Error::dim("tangent vector and base point differ in length"));
    }
    if z.coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("exp_map", "non-finite tangent vector"));
    }
    let zz = dot_lorentz(&z.coords, &z.coords);
    let scale = 1.0f64.max(sq_norm(&z.coords));
    if zz < -1e-12 * scale {
        return Err(Error::Domain(format!(
            "exp_map needs a spacelike tangent, got <z,z>_L = {zz}"
        )));
    }
    let norm = zz.max(0.0).sqrt();
    if norm == 0.0 {
        return Ok(x.clone());
    }
    let clamped = norm.min(max_tangent_norm);
    let (c, s) = (clamped.cosh(), clamped.sinh() / norm);
    let out: Vec<f64> = x
        .coords
        .iter()
        .zip(&z.coords)
        .map(|(xi, zi)| c * xi + s * zi)
        .collect();
    project_to_manifold(&out)
}

/// Logarithmic map: the tangent vector at `x` pointing at `y`.
pub fn log_map(x: &LorentzPoint, y: &LorentzPoint) -> Result<TangentVector> {
    if x.coords.len() != y.coords.len() {
        return Err(Error::dim("log_map on points of different dimension"));
    }
    let inner = dot_lorentz(&x.coords, &y.coords);
    let alpha = -inner;
    if alpha < 1.0 - LOG_DOMAIN_TOL {
        return Err(Error::Domain(format!(
            "log_map needs -<x,y>_L >= 1, got {alpha}"
        )));
    }
    let s = alpha * alpha - 1.0;
    if s <= 0.0 {
        return Ok(TangentVector::zero(x.clone()));
    }
    let factor = alpha.max(1.0).acosh() / s.sqrt();
    let coords = y
        .coords
        .iter()
        .zip(&x.coords)
        .map(|(yi, xi)| factor * (yi + inner * xi))
        .collect();
    Ok(TangentVector {
        base: x.clone(),
        coords,
    })
}

/// Weighted centroid `sum v_i x_i / | |sum v_i x_i|_L |`, which minimizes
/// `sum v_i d_L^2(x_i, mu)` over the manifold.
pub fn lorentz_centroid(points: &[LorentzPoint], weights: &[f64]) -> Result<LorentzPoint> {
    if points.is_empty() {
        return Err(Error::arg("centroid of an empty point set"));
    }
    if points.len() != weights.len() {
        return Err(Error::dim(format!(
            "{} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::arg("centroid weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::arg("centroid weights are all zero"));
    }
    let len = points[0].coords.len();
    let mut acc = vec![0.0; len];
    for (p, &w) in points.iter().zip(weights) {
        if p.coords.len() != len {
            return Err(Error::dim("centroid points differ in dimension"));
        }
        for (a, c) in acc.iter_mut().zip(&p.coords) {
            *a += w * c;
        }
    }
    let norm = dot_lorentz(&acc, &acc).abs().sqrt();
    if norm < CENTROID_MIN_NORM {
        return Err(Error::numerical(
            "lorentz_centroid",
            format!("degenerate Lorentz norm {norm:e}"),
        ));
    }
    let out: Vec<f64> = acc.iter().map(|a| a / norm).collect();
    project_to_manifold(&out)
}

/// `exp_o([0, scale * u])`.
pub fn lift_from_tangent(u: &[f64], scale: f64) -> Result<LorentzPoint> {
    lift_from_tangent_clamped(u, scale, DEFAULT_MAX_TANGENT_NORM)
}

pub fn lift_from_tangent_clamped(
    u: &[f64],
    scale: f64,
    max_tangent_norm: f64,
) -> Result<LorentzPoint> {
    if u.is_empty() {
        return Err(Error::dim("cannot lift an empty vector"));
    }
    if !scale.is_finite() || u.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("lift_from_tangent", "non-finite input"));
    }
    let spatial: Vec<f64> = u.iter().map(|v| v * scale).collect();
    let z = TangentVector::at_origin(&spatial);
    let o = LorentzPoint::origin(u.len());
    exp_map_clamped(&o, &z, max_tangent_norm)
}

/// Keeps the spatial axes of `v` and recomputes the time axis.
pub fn project_to_manifold(v: &[f64]) -> Result<LorentzPoint> {
    if v.len() < 2 {
        return Err(Error::dim("projection needs at least 2 coordinates"));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::numerical("project_to_manifold", "non-finite input"));
    }
    Ok(LorentzPoint::from_spatial(&v[1..]))
}

fn dot_lorentz(x: &[f64], y: &[f64]) -> f64 {
    let spatial: f64 = x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum();
    spatial - x[0] * y[0]
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn l2(v: &[f64]) -> f64 {
    sq_norm(v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut impl Rng, n: usize, radius: f64) -> LorentzPoint {
        let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = l2(&dir).max(1e-12);
        let r = rng.random_range(0.0..radius);
        let u: Vec<f64> = dir.iter().map(|d| d / len * r).collect();
        lift_from_tangent(&u, 1.0).unwrap()
    }

    fn random_tangent(rng: &mut impl Rng, base: &LorentzPoint, norm: f64) -> TangentVector {
        let w: Vec<f64> = (0..base.coords().len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let t = TangentVector::project(base.clone(), &w).unwrap();
        let len = t.lorentz_norm();
        t.scaled(norm / len)
    }

    fn cosh1_point() -> LorentzPoint {
        LorentzPoint::new(vec![1f64.cosh(), 1f64.sinh(), 0.0]).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let o = [1.0, 0.0, 0.0];
        assert_eq!(lorentz_inner(&o, &o).unwrap(), -1.0);
        let s = 2f64.sqrt();
        let v = lorentz_inner(&[s, 1.0, 0.0], &[s, 0.0, 1.0]).unwrap();
        assert!((v + 2.0).abs() < 1e-15);
        assert!(matches!(
            lorentz_inner(&[1.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn squared_distance_examples() {
        let o = LorentzPoint::origin(2);
        let p = cosh1_point();
        assert_eq!(sq_lorentz_distance(&p, &p).unwrap(), 0.0);
        let d = sq_lorentz_distance(&o, &p).unwrap();
        assert!((d - 2.0 * (1f64.cosh() - 1.0)).abs() < 1e-14);
        assert!((d - 1.0862).abs() < 1e-4);
    }

    #[test]
    fn off_manifold_points_are_rejected() {
        assert!(matches!(
            LorentzPoint::new(vec![2.0, 0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            LorentzPoint::new(vec![-1.0, 0.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exp_map_examples() {
        let o = LorentzPoint::origin(2);
        let zero = TangentVector::zero(o.clone());
        assert_eq!(exp_map(&o, &zero).unwrap(), o);

        let z = TangentVector::at_origin(&[1.0, 0.0]);
        let p = exp_map(&o, &z).unwrap();
        assert!((p.coords()[0] - 1.5431).abs() < 1e-4);
        assert!((p.coords()[1] - 1.1752).abs() < 1e-4);
        assert!((p.coords()[0] - 1f64.cosh()).abs() < 1e-14);
        assert!((p.coords()[1] - 1f64.sinh()).abs() < 1e-14);
        assert_eq!(p.coords()[2], 0.0);
    }

    #[test]
    fn exp_map_rejects_timelike_tangent() {
        let o = LorentzPoint::origin(2);
        // Not tangent at o, and timelike: <z,z>_L = -1.
        let z = TangentVector {
            base: o.clone(),
            coords: vec![1.0, 0.0, 0.0],
        };
        assert!(matches!(exp_map(&o, &z), Err(Error::Domain(_))));
    }

    #[test]
    fn exp_map_clamps_long_tangents() {
        let o = LorentzPoint::origin(1);
        let z = TangentVector::at_origin(&[50.0]);
        let p = exp_map(&o, &z).unwrap();
        assert!((p.origin_distance() - DEFAULT_MAX_TANGENT_NORM).abs() < 1e-9);
    }

    #[test]
    fn log_map_examples() {
        let o = LorentzPoint::origin(2);
        let z = log_map(&o, &o).unwrap();
        assert_eq!(z.coords(), &[0.0, 0.0, 0.0]);

        let z = log_map(&o, &cosh1_point()).unwrap();
        assert!(z.coords()[0].abs() < 1e-12);
        assert!((z.coords()[1] - 1.0).abs() < 1e-12);
        assert!(z.coords()[2].abs() < 1e-12);
    }

    #[test]
    fn log_map_domain_error() {
        let o = LorentzPoint::origin(1);
        // Hand-built point with -<o,y> < 1: not on the manifold, bypassing the check.
        let y = LorentzPoint {
            coords: vec![0.5, 0.0],
        };
        assert!(matches!(log_map(&o, &y), Err(Error::Domain(_))));
    }

    #[test]
    fn centroid_examples() {
        let p = cosh1_point();
        let c = lorentz_centroid(std::slice::from_ref(&p), &[1.0]).unwrap();
        for (a, b) in c.coords().iter().zip(p.coords()) {
            assert!((a - b).abs() < 1e-12);
        }

        let r = 0.7f64;
        let a = LorentzPoint::new(vec![r.cosh(), r.sinh()]).unwrap();
        let b = LorentzPoint::new(vec![r.cosh(), -r.sinh()]).unwrap();
        let c = lorentz_centroid(&[a, b], &[1.0, 1.0]).unwrap();
        assert!((c.coords()[0] - 1.0).abs() < 1e-12);
        assert!(c.coords()[1].abs() < 1e-12);
    }

    #[test]
    fn centroid_errors() {
        let p = LorentzPoint::origin(2);
        assert!(matches!(
            lorentz_centroid(&[p.clone()], &[0.0]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            lorentz_centroid(&[p.clone()], &[-1.0]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            lorentz_centroid(&[p], &[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
    }

    fn objective(points: &[LorentzPoint], weights: &[f64], mu: &LorentzPoint) -> f64 {
        points
            .iter()
            .zip(weights)
            .map(|(p, w)| w * sq_lorentz_distance(p, mu).unwrap())
            .sum()
    }

    #[test]
    fn centroid_beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let weights = [0.2, 0.3, 0.5];
        let points: Vec<_> = (0..3).map(|_| random_point(&mut rng, 4, 2.0)).collect();
        let mu = lorentz_centroid(&points, &weights).unwrap();
        let best = objective(&points, &weights, &mu);
        for _ in 0..1000 {
            let r = rng.random_range(1e-4..0.1);
            let t = random_tangent(&mut rng, &mu, r);
            let nudged = exp_map(&mu, &t).unwrap();
            assert!(objective(&points, &weights, &nudged) >= best - 1e-12);
        }
    }

    #[test]
    fn centroid_is_invariant_to_weight_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<_> = (0..4).map(|_| random_point(&mut rng, 3, 1.5)).collect();
        let w = [0.1, 0.4, 0.2, 0.3];
        let base = lorentz_centroid(&points, &w).unwrap();
        for c in [0.25, 2.0, 1024.0] {
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let other = lorentz_centroid(&points, &scaled).unwrap();
            assert_eq!(base, other, "power-of-two scale {c} must be bit-identical");
        }
        for c in [0.3, 7.1, 1e5] {
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let other = lorentz_centroid(&points, &scaled).unwrap();
            for (a, b) in base.coords().iter().zip(other.coords()) {
                assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lift_examples() {
        assert_eq!(
            lift_from_tangent(&[0.0, 0.0], 3.0).unwrap(),
            LorentzPoint::origin(2)
        );
        let p = lift_from_tangent(&[0.3, 0.4], 2.0).unwrap();
        assert!((p.time() - 1.5431).abs() < 1e-4);
        assert!((p.time() - 1f64.cosh()).abs() < 1e-14);
    }

    #[test]
    fn projection_examples() {
        let p = project_to_manifold(&[999.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.coords(), &[1.0, 0.0, 0.0]);
        let p = project_to_manifold(&[0.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.coords(), &[26f64.sqrt(), 3.0, 4.0]);
        assert!(matches!(
            project_to_manifold(&[f64::NAN, 1.0]),
            Err(Error::Numerical { .. })
        ));
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(v in proptest::collection::vec(-50.0f64..50.0, 2..8)) {
            let p = project_to_manifold(&v).unwrap();
            let q = project_to_manifold(p.coords()).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn exp_log_round_trip(seed in 0u64..10_000, n in 1usize..6, r in 0.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&mut rng, n, 1.0);
            let z = random_tangent(&mut rng, &x, r.max(1e-9));
            let y = exp_map(&x, &z).unwrap();
            prop_assert!((lorentz_inner(y.coords(), y.coords()).unwrap() + 1.0).abs() < 1e-9);
            let back = log_map(&x, &y).unwrap();
            for (a, b) in back.coords().iter().zip(z.coords()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
            let y2 = exp_map(&x, &log_map(&x, &y).unwrap()).unwrap();
            for (a, b) in y2.coords().iter().zip(y.coords()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn distance_symmetric_and_positive(seed in 0u64..10_000, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_point(&mut rng, n, 3.0);
            let b = random_point(&mut rng, n, 3.0);
            let ab = sq_lorentz_distance(&a, &b).unwrap();
            let ba = sq_lorentz_distance(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(sq_lorentz_distance(&a, &a).unwrap(), 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
