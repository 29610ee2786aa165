//! Straight-line reference implementations on nested `Vec`s, written without
//! the tape so the library can be checked against them entry by entry.
#![allow(dead_code)]

pub mod cone_steps;
pub mod equivalence;

use std::f64::consts::PI;

use hlformer::diff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Mat {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

pub fn uniform_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Mat {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

pub fn tensor(m: &Mat) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

pub fn mat(t: &Tensor) -> Mat {
    t.to_rows()
}

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel_err(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len(), "row count");
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len(), "column count");
            x.iter().zip(y).map(|(p, q)| rel_err(*p, *q))
        })
        .fold(0.0, f64::max)
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner);
            (0..cols)
                .map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum())
                .collect()
        })
        .collect()
}

pub fn add_row(a: &Mat, bias: &[f64]) -> Mat {
    a.iter()
        .map(|r| r.iter().zip(bias).map(|(x, b)| x + b).collect())
        .collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

pub fn minkowski(a: &[f64], b: &[f64]) -> f64 {
    -a[0] * b[0] + dot(&a[1..], &b[1..])
}

pub fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

pub fn gaussian_mask(size: usize, variance: f64) -> Mat {
    (0..size)
        .map(|i| {
            (0..size)
                .map(|j| {
                    let d = i as f64 - j as f64;
                    (-d * d / variance).exp() / (2.0 * PI)
                })
                .collect()
        })
        .collect()
}

/// Projections of one multi-head attention layer.
pub struct EuclideanWeights {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub bo: Vec<f64>,
    pub heads: usize,
}

pub fn euclidean_attention(x: &Mat, mask: Option<&Mat>, w: &EuclideanWeights) -> Mat {
    let q = matmul(x, &w.wq);
    let k = matmul(x, &w.wk);
    let v = matmul(x, &w.wv);
    let m = x.len();
    let d = w.wq[0].len();
    let dh = d / w.heads;
    let mut joined = vec![vec![0.0; d]; m];
    for h in 0..w.heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..m {
            let mut scores = vec![0.0; m];
            for (j, s) in scores.iter_mut().enumerate() {
                let mut acc = 0.0;
                for c in cols.clone() {
                    acc += q[i][c] * k[j][c];
                }
                if let Some(mask) = mask {
                    acc *= mask[i][j];
                }
                *s = acc / (dh as f64).sqrt();
            }
            let a = softmax(&scores);
            for c in cols.clone() {
                joined[i][c] = (0..m).map(|j| a[j] * v[j][c]).sum();
            }
        }
    }
    add_row(&matmul(&joined, &w.wo), &w.bo)
}

/// Weights of one hyperbolic linear map.
pub struct LorentzLinearWeights {
    pub weight: Mat,
    pub time_weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub time_bias: f64,
    pub scale_raw: f64,
}

pub fn lorentz_linear(x: &Mat, w: &LorentzLinearWeights) -> Mat {
    x.iter()
        .map(|row| {
            let m = w.weight[0].len();
            let dir: Vec<f64> = (0..m)
                .map(|c| (0..row.len()).map(|k| row[k] * w.weight[k][c]).sum::<f64>() + w.bias[c])
                .collect();
            let radial = softplus(w.scale_raw) * (dot(row, &w.time_weight) + w.time_bias);
            let len = norm(&dir);
            let mut out = vec![(1.0 + radial * radial).sqrt()];
            out.extend(dir.iter().map(|d| radial * d / len));
            out
        })
        .collect()
}

pub fn lorentz_self_attention(
    x: &Mat,
    mask: Option<&Mat>,
    q: &LorentzLinearWeights,
    k: &LorentzLinearWeights,
    v: &LorentzLinearWeights,
) -> Mat {
    let qs = lorentz_linear(x, q);
    let ks = lorentz_linear(x, k);
    let vs = lorentz_linear(x, v);
    let ambient = qs[0].len() as f64;
    let m = x.len();
    (0..m)
        .map(|i| {
            let logits: Vec<f64> = (0..m)
                .map(|j| {
                    let neg_sq = 2.0 + 2.0 * minkowski(&qs[i], &ks[j]);
                    let masked = match mask {
                        Some(mask) => neg_sq * mask[i][j],
                        None => neg_sq,
                    };
                    masked / ambient.sqrt()
                })
                .collect();
            let a = softmax(&logits);
            let sum: Vec<f64> = (0..vs[0].len())
                .map(|c| (0..m).map(|j| a[j] * vs[j][c]).sum())
                .collect();
            let len = minkowski(&sum, &sum).abs().sqrt();
            sum.iter().map(|s| s / len).collect()
        })
        .collect()
}

/// `(S_f, S_c, S)`.
pub fn similarity(q: &[f64], frames: &Mat, clips: &Mat, af: f64, ac: f64) -> (f64, f64, f64) {
    let best = |rows: &Mat| {
        rows.iter()
            .map(|r| cosine(q, r))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (f, c) = (best(frames), best(clips));
    (f, c, af * f + ac * c)
}

fn hardest_hinges(s: &Mat, ids: &[usize], margin: f64) -> (Vec<f64>, Vec<f64>) {
    let b = ids.len();
    let q2v = (0..b)
        .map(|i| {
            let worst = (0..b)
                .filter(|&j| ids[j] != ids[i])
                .map(|j| s[i][j])
                .fold(f64::NEG_INFINITY, f64::max);
            (margin - s[i][i] + worst).max(0.0)
        })
        .collect();
    let v2q = (0..b)
        .map(|j| {
            let worst = (0..b)
                .filter(|&i| ids[i] != ids[j])
                .map(|i| s[i][j])
                .fold(f64::NEG_INFINITY, f64::max);
            (margin - s[j][j] + worst).max(0.0)
        })
        .collect();
    (q2v, v2q)
}

fn contrastive(s: &Mat, ids: &[usize], temperature: f64) -> f64 {
    let b = ids.len();
    let keep = |i: usize, j: usize| i == j || ids[i] != ids[j];
    let mut q2v = 0.0;
    let mut v2q = 0.0;
    for i in 0..b {
        let den: f64 = (0..b)
            .filter(|&j| keep(i, j))
            .map(|j| (s[i][j] / temperature).exp())
            .sum();
        q2v += -((s[i][i] / temperature).exp() / den).ln();
        let den: f64 = (0..b)
            .filter(|&r| keep(r, i))
            .map(|r| (s[r][i] / temperature).exp())
            .sum();
        v2q += -((s[i][i] / temperature).exp() / den).ln();
    }
    0.5 * (q2v / b as f64 + v2q / b as f64)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Hinge plus contrastive terms on one square similarity matrix. The batch
/// must hold at least two videos and scores must lie in `[-1, 1]`.
pub fn scale_loss(s: &Mat, ids: &[usize], margin: f64, temperature: f64) -> f64 {
    let (q2v, v2q) = hardest_hinges(s, ids, margin);
    mean(&q2v) + mean(&v2q) + contrastive(s, ids, temperature)
}

pub fn sim_loss(frame: &Mat, clip: &Mat, ids: &[usize], margin: f64, temperature: f64) -> f64 {
    scale_loss(frame, ids, margin, temperature) + scale_loss(clip, ids, margin, temperature)
}

pub fn div_loss(queries: &Mat, ids: &[usize], margin: f64) -> f64 {
    let mut terms = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if ids[i] == ids[j] {
                terms.push((cosine(&queries[i], &queries[j]) - margin).max(0.0));
            }
        }
    }
    if terms.is_empty() {
        0.0
    } else {
        mean(&terms)
    }
}

/// A cone apex `v` at distance `r` from the origin and a point `t` reached by
/// walking `s` from `v` at angle `theta` to the cone axis. Returns both in
/// ambient coordinates.
pub fn cone_pair(rng: &mut ChaCha8Rng, n: usize, r: f64, theta: f64, s: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let u = unit(&normal_mat(rng, 1, n, 1.0)[0]);
    // A unit spatial direction orthogonal to u.
    let raw = normal_mat(rng, 1, n, 1.0).remove(0);
    let along = dot(&raw, &u);
    let w = unit(&raw.iter().zip(&u).map(|(a, b)| a - along * b).collect::<Vec<_>>());

    let mut v = vec![r.cosh()];
    v.extend(u.iter().map(|x| r.sinh() * x));
    // Unit tangent at v of the geodesic from the origin through v.
    let mut axis = vec![r.sinh()];
    axis.extend(u.iter().map(|x| r.cosh() * x));
    let mut side = vec![0.0];
    side.extend(w);
    let d: Vec<f64> = axis
        .iter()
        .zip(&side)
        .map(|(a, b)| theta.cos() * a + theta.sin() * b)
        .collect();
    let t = v
        .iter()
        .zip(&d)
        .map(|(a, b)| s.cosh() * a + s.sinh() * b)
        .collect();
    (v, t)
}

/// `arcsin(min(1, 2c / sinh r))` for an apex at distance `r`.
pub fn half_aperture_at(r: f64, c: f64) -> f64 {
    (2.0 * c / r.sinh()).min(1.0).asin()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}
