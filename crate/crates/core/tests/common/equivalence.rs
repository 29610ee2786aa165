//! Library modules against the straight-line versions in the parent module.
//! Each check returns the worst relative error over `instances` random draws.

use hlformer::attention::{
    euclidean_gaussian_attention, lorentz_linear, lorentz_self_attention, EuclideanAttention,
    GaussianMask, LorentzAttention, LorentzLinear,
};
use hlformer::diff::{Graph, ParamStore};
use hlformer::model::similarity;
use hlformer::objectives::{div_loss, sim_loss, BatchSimMatrix, LossWeights};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng, std: f64) {
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        let t = store.get_mut(id);
        let (r, c) = (t.rows(), t.cols());
        let fresh = normal_mat(rng, r, c, std);
        *t = tensor(&fresh);
    }
}

fn lorentz_points(rng: &mut ChaCha8Rng, rows: usize, n: usize) -> Mat {
    normal_mat(rng, rows, n, 0.7)
        .into_iter()
        .map(|s| {
            let mut p = vec![(1.0 + dot(&s, &s)).sqrt()];
            p.extend(s);
            p
        })
        .collect()
}

fn linear_weights(store: &ParamStore, l: &LorentzLinear) -> LorentzLinearWeights {
    LorentzLinearWeights {
        weight: mat(store.get(l.weight)),
        time_weight: store.get(l.time_weight).data().to_vec(),
        bias: store.get(l.bias).data().to_vec(),
        time_bias: store.get(l.time_bias).data()[0],
        scale_raw: store.get(l.scale_raw).data()[0],
    }
}

fn pick_variance(rng: &mut ChaCha8Rng) -> Option<f64> {
    match rng.random_range(0..4) {
        0 => None,
        1 => Some(f64::INFINITY),
        k => Some(2f64.powi(k)),
    }
}


pub fn gaussian_mask_worst() -> f64 {
    [(1, 2.0), (5, 2.0), (7, 8.0), (4, f64::INFINITY)]
        .iter()
        .map(|&(size, var)| {
            let lib = mat(GaussianMask::new(size, var).unwrap().matrix());
            max_rel_err(&lib, &gaussian_mask(size, var))
        })
        .fold(0.0, f64::max)
}

pub fn euclidean_attention_worst(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let heads = rng.random_range(1..=3);
        let dim = heads * rng.random_range(1..=3);
        let len = rng.random_range(1..=7);
        let mut store = ParamStore::new();
        let attn = EuclideanAttention::new(&mut store, "a", dim, heads, &mut rng).unwrap();
        randomize(&mut store, &mut rng, 0.6);
        let x = normal_mat(&mut rng, len, dim, 1.0);
        let variance = pick_variance(&mut rng);
        let mask = variance.map(|v| GaussianMask::new(len, v).unwrap());

        let g = Graph::new();
        let p = store.bind(&g).unwrap();
        let out = euclidean_gaussian_attention(&p, g.constant(tensor(&x)).unwrap(), mask.as_ref(), &attn)
            .unwrap()
            .value();

        let weights = EuclideanWeights {
            wq: mat(store.get(attn.query.weight)),
            wk: mat(store.get(attn.key.weight)),
            wv: mat(store.get(attn.value.weight)),
            wo: mat(store.get(attn.output.weight)),
            bo: store.get(attn.output.bias.unwrap()).data().to_vec(),
            heads,
        };
        let oracle_mask = variance.map(|v| gaussian_mask(len, v));
        let want = euclidean_attention(&x, oracle_mask.as_ref(), &weights);
        worst = worst.max(max_rel_err(&mat(&out), &want));
    }
    worst
}

/// Also folds in the on-manifold error `|<y,y>_L + 1|` of every output row.
pub fn lorentz_linear_worst(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..=5);
        let m = rng.random_range(1..=5);
        let rows = rng.random_range(1..=6);
        let mut store = ParamStore::new();
        let layer = LorentzLinear::new(&mut store, "l", n, m, 1.0, &mut rng).unwrap();
        randomize(&mut store, &mut rng, 0.5);
        let x = lorentz_points(&mut rng, rows, n);

        let g = Graph::new();
        let p = store.bind(&g).unwrap();
        let out = lorentz_linear(&p, g.constant(tensor(&x)).unwrap(), &layer)
            .unwrap()
            .value();
        let want = super::lorentz_linear(&x, &linear_weights(&store, &layer));
        worst = worst.max(max_rel_err(&mat(&out), &want));
        for row in mat(&out) {
            worst = worst.max((minkowski(&row, &row) + 1.0).abs());
        }
    }
    worst
}

pub fn lorentz_self_attention_worst(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..=5);
        let len = rng.random_range(1..=6);
        let mut store = ParamStore::new();
        let attn = LorentzAttention::new(&mut store, "h", n, 1.0, &mut rng).unwrap();
        randomize(&mut store, &mut rng, 0.4);
        let x = lorentz_points(&mut rng, len, n);
        let variance = pick_variance(&mut rng);
        let mask = variance.map(|v| GaussianMask::new(len, v).unwrap());

        let g = Graph::new();
        let p = store.bind(&g).unwrap();
        let out = lorentz_self_attention(&p, g.constant(tensor(&x)).unwrap(), mask.as_ref(), &attn)
            .unwrap()
            .value();
        let oracle_mask = variance.map(|v| gaussian_mask(len, v));
        let want = super::lorentz_self_attention(
            &x,
            oracle_mask.as_ref(),
            &linear_weights(&store, &attn.query),
            &linear_weights(&store, &attn.key),
            &linear_weights(&store, &attn.value),
        );
        worst = worst.max(max_rel_err(&mat(&out), &want));
    }
    worst
}

pub fn similarity_worst(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let d = rng.random_range(2..=8);
        let q = normal_mat(&mut rng, 1, d, 1.0);
        let (nf, nc) = (rng.random_range(1..=9), rng.random_range(1..=4));
        let frames = normal_mat(&mut rng, nf, d, 1.0);
        let clips = normal_mat(&mut rng, nc, d, 1.0);
        let af: f64 = rng.random_range(0.0..1.0);

        let g = Graph::new();
        let c = |m: &Mat| g.constant(tensor(m)).unwrap();
        let s = similarity(c(&q), c(&frames), c(&clips), af, 1.0 - af).unwrap();
        let (f, cl, total) = super::similarity(&q[0], &frames, &clips, af, 1.0 - af);
        worst = worst
            .max(rel_err(s.frame.item().unwrap(), f))
            .max(rel_err(s.clip.item().unwrap(), cl))
            .max(rel_err(s.total.item().unwrap(), total));
    }
    worst
}

fn batch_ids(rng: &mut ChaCha8Rng) -> Vec<usize> {
    loop {
        let b = rng.random_range(2..=8);
        let videos = rng.random_range(2..=b);
        let ids: Vec<usize> = (0..b).map(|_| rng.random_range(0..videos)).collect();
        if ids.iter().any(|&v| v != ids[0]) {
            return ids;
        }
    }
}

/// Square matrix whose columns agree for queries of the same video.
fn video_matrix(rng: &mut ChaCha8Rng, ids: &[usize]) -> Mat {
    let videos = ids.iter().max().unwrap() + 1;
    let per_video = uniform_mat(rng, ids.len(), videos, -1.0, 1.0);
    per_video
        .iter()
        .map(|row| ids.iter().map(|&v| row[v]).collect())
        .collect()
}

pub fn sim_loss_worst(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let ids = batch_ids(&mut rng);
        let frame = video_matrix(&mut rng, &ids);
        let clip = video_matrix(&mut rng, &ids);
        let weights = LossWeights {
            margin: rng.random_range(0.05..0.5),
            temperature: rng.random_range(0.05..1.0),
            ..LossWeights::default()
        };

        let g = Graph::new();
        let batch = BatchSimMatrix::new(
            g.constant(tensor(&frame)).unwrap(),
            g.constant(tensor(&clip)).unwrap(),
            ids.clone(),
        )
        .unwrap();
        let got = sim_loss(&batch, &weights).unwrap().item().unwrap();
        let want = super::sim_loss(&frame, &clip, &ids, weights.margin, weights.temperature);
        worst = worst.max(rel_err(got, want));
    }
    worst
}

/// Worst error and the number of draws where the hinge was active.
pub fn div_loss_worst(seed: u64, instances: usize) -> (f64, usize) {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for _ in 0..instances {
        let b = rng.random_range(1..=8);
        let ids: Vec<usize> = (0..b).map(|_| rng.random_range(0..3)).collect();
        let d = rng.random_range(2..=6);
        // A shared direction makes some same-video pairs exceed the margin.
        let base = normal_mat(&mut rng, 1, d, 1.0);
        let noise = normal_mat(&mut rng, b, d, 0.8);
        let q: Mat = noise
            .iter()
            .map(|r| r.iter().zip(&base[0]).map(|(a, c)| a + c).collect())
            .collect();
        let margin = rng.random_range(0.0..0.8);

        let g = Graph::new();
        let got = div_loss(g.constant(tensor(&q)).unwrap(), &ids, margin)
            .unwrap()
            .item()
            .unwrap();
        let want = super::div_loss(&q, &ids, margin);
        if want > 0.0 {
            nonzero += 1;
        }
        worst = worst.max(rel_err(got, want));
    }
    (worst, nonzero)
}
