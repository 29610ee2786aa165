mod common;

use common::*;
use hlformer::diff::{Graph, ParamStore};
use hlformer::model::{maim_weights, Maim};
use hlformer::objectives::{aggregate_loss, div_loss, triplet_hinges, LossWeights};
use rand::Rng;

fn hinge_means(s: &Mat, ids: &[usize], margin: f64) -> (f64, f64) {
    let g = Graph::inference();
    let (a, b) = triplet_hinges(g.constant(tensor(s)).unwrap(), ids, margin).unwrap();
    let mean = |v: hlformer::diff::Var| v.mean_all().unwrap().item().unwrap();
    (mean(a), mean(b))
}

#[test]
fn separated_scores_leave_no_triplet_loss() {
    let n = 5;
    let s: Mat = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { -1.0 }).collect())
        .collect();
    assert_eq!(hinge_means(&s, &[0, 1, 2, 3, 4], 0.2), (0.0, 0.0));
}

#[test]
fn identical_scores_cost_one_margin_per_pair() {
    let s = vec![vec![0.3; 4]; 4];
    let (a, b) = hinge_means(&s, &[0, 1, 2, 3], 0.2);
    assert!((a - 0.2).abs() < 1e-15 && (b - 0.2).abs() < 1e-15);
}

#[test]
fn repeated_queries_pay_the_cosine_excess() {
    let g = Graph::inference();
    let q = g.constant(tensor(&vec![vec![0.6, -0.8, 0.0]; 2])).unwrap();
    let v = div_loss(q, &[7, 7], 0.5).unwrap().item().unwrap();
    assert!((v - 0.5).abs() < 1e-15);
    let apart = g.constant(tensor(&vec![vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
    assert_eq!(div_loss(apart, &[7, 7], 0.5).unwrap().item().unwrap(), 0.0);
    assert_eq!(div_loss(q, &[1, 2], 0.5).unwrap().item().unwrap(), 0.0);
}

#[test]
fn aggregate_is_linear_in_each_weight() {
    let mut rng = rng(70);
    for _ in 0..20 {
        let (s, d, p) = (rng.random_range(0.0..3.0), rng.random_range(0.0..1.0), rng.random_range(0.0..2.0));
        let (l1, l2) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let g = Graph::inference();
        let c = |x: f64| g.scalar(x).unwrap();
        let total = aggregate_loss(c(s), c(d), c(p), l1, l2).unwrap().item().unwrap();
        assert!(rel_err(total, s + l1 * d + l2 * p) < 1e-14);
    }
    let w = LossWeights::sim_only();
    let g = Graph::inference();
    let c = |x: f64| g.scalar(x).unwrap();
    let total = aggregate_loss(c(1.5), c(9.0), c(9.0), w.lambda_div, w.lambda_pop).unwrap();
    assert_eq!(total.item().unwrap(), 1.5);
}

#[test]
fn lower_temperature_sharpens_fusion_weights() {
    let mut rng = rng(71);
    let mut store = ParamStore::new();
    let maim = Maim::new(&mut store, "m", 5, &mut rng).unwrap();
    for _ in 0..10 {
        let outs: Vec<Mat> = (0..3).map(|_| normal_mat(&mut rng, 4, 5, 1.0)).collect();
        let mut last = vec![0.0; 4];
        for tau in [1.0, 0.5, 0.1, 0.05, 0.01] {
            let g = Graph::inference();
            let p = store.bind(&g).unwrap();
            let vars: Vec<_> = outs.iter().map(|o| g.constant(tensor(o)).unwrap()).collect();
            let w = mat(&maim_weights(&p, &vars, &maim, tau).unwrap().value());
            for (r, prev) in w.iter().zip(last.iter_mut()) {
                let top = r.iter().cloned().fold(0.0, f64::max);
                assert!(top >= *prev - 1e-12, "tau {tau}: {top} < {prev}");
                *prev = top;
            }
        }
    }
}
