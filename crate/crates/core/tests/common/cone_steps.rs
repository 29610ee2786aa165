//! Cone loss evaluated on the tape, and one descent step on it.

use hlformer::diff::{concat_cols, Graph, Tensor, Var};
use hlformer::manifold::project_to_manifold;
use hlformer::objectives::{pop_loss_rows, CONE_C};

fn on_manifold<'g>(spatial: Var<'g>) -> Var<'g> {
    let time = spatial
        .square()
        .unwrap()
        .row_sums()
        .unwrap()
        .add_scalar(1.0)
        .unwrap()
        .sqrt()
        .unwrap();
    concat_cols(&[time, spatial]).unwrap()
}

pub fn graph_pop(v: &[f64], t: &[f64]) -> f64 {
    let g = Graph::inference();
    let row = |x: &[f64]| g.constant(Tensor::row_vector(x)).unwrap();
    pop_loss_rows(row(v), row(t), CONE_C).unwrap().item().unwrap()
}

/// One normalized gradient step on the spatial parts of both points.
pub fn step(v: &[f64], t: &[f64], eta: f64) -> (f64, f64) {
    let g = Graph::new();
    let vs = g.param(Tensor::row_vector(&v[1..])).unwrap();
    let ts = g.param(Tensor::row_vector(&t[1..])).unwrap();
    let loss = pop_loss_rows(on_manifold(vs), on_manifold(ts), CONE_C).unwrap();
    let before = loss.item().unwrap();
    let grads = g.backward(loss).unwrap();
    let (gv, gt) = (grads.wrt(vs), grads.wrt(ts));
    let len = gv
        .data()
        .iter()
        .chain(gt.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    assert!(len > 0.0, "positive loss with zero gradient");
    let moved = |x: &[f64], gx: &Tensor| -> Vec<f64> {
        let spatial: Vec<f64> = x[1..]
            .iter()
            .zip(gx.data())
            .map(|(a, d)| a - eta * d / len)
            .collect();
        let mut full = vec![0.0];
        full.extend(spatial);
        project_to_manifold(&full).unwrap().into_coords()
    };
    let (v2, t2) = (moved(v, &gv), moved(t, &gt));
    (before, graph_pop(&v2, &t2))
}
