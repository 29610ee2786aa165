use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::{Error, Result};

fn random(rng: &mut impl Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Checks `sum(w * op(x))` for a random weight `w` so every output coordinate matters.
fn check_unary(
    lo: f64,
    hi: f64,
    op: for<'g> fn(Var<'g>) -> Result<Var<'g>>,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, 3, 4, lo, hi);
    let w = random(&mut rng, 3, 4, -1.0, 1.0);
    finite_diff_check(
        move |g, p| {
            let w = g.constant(w.clone())?;
            op(p[0])?.mul(w)?.sum_all()
        },
        &[x],
        1e-5,
    )
    .unwrap()
}

#[test]
fn unary_primitives_match_central_differences() {
    type Op = for<'g> fn(Var<'g>) -> Result<Var<'g>>;
    let cases: Vec<(&str, f64, f64, Op)> = vec![
        ("neg", -2.0, 2.0, |v| v.neg()),
        ("exp", -2.0, 2.0, |v| v.exp()),
        ("ln", 0.5, 3.0, |v| v.ln()),
        ("cosh", -2.0, 2.0, |v| v.cosh()),
        ("sinh", -2.0, 2.0, |v| v.sinh()),
        ("asinh", -2.0, 2.0, |v| v.asinh()),
        ("arcosh", 1.2, 4.0, |v| v.arcosh()),
        ("arcsin", -0.9, 0.9, |v| v.arcsin()),
        ("arccos", -0.9, 0.9, |v| v.arccos()),
        ("sqrt", 0.3, 3.0, |v| v.sqrt()),
        ("abs", 0.2, 2.0, |v| v.abs()),
        ("softplus", -3.0, 3.0, |v| v.softplus()),
        ("sinh_ratio", 0.0, 3.0, |v| v.sinh_ratio(2.0)),
        ("asinh_ratio", -2.0, 2.0, |v| v.asinh_ratio()),
        ("square", -2.0, 2.0, |v| v.square()),
        ("scale", -2.0, 2.0, |v| v.scale(-1.7)),
        ("add_scalar", -2.0, 2.0, |v| v.add_scalar(0.3)),
        ("clamp", -2.0, 2.0, |v| v.clamp(-0.5, 0.7)),
        ("softmax", -2.0, 2.0, |v| v.softmax_rows()),
        ("row_norm", -2.0, 2.0, |v| v.row_norm()?.square()),
        ("transpose", -2.0, 2.0, |v| v.transpose()?.transpose()),
        ("row_max", -2.0, 2.0, |v| v.row_max()?.transpose()?.row_sums()?.transpose()),
        ("col_max", -2.0, 2.0, |v| v.col_max()?.transpose()?.transpose()),
        ("slice_cols", -2.0, 2.0, |v| v.slice_cols(1, 3)?.exp()),
        ("gather_rows", -2.0, 2.0, |v| v.gather_rows(&[2, 0, 2])?.exp()),
    ];
    for (name, lo, hi, op) in cases {
        let report = match name {
            // Reductions change the shape, so the weighted sum must adapt.
            "row_norm" | "row_max" | "col_max" | "slice_cols" | "gather_rows" => {
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                let x = random(&mut rng, 3, 4, lo, hi);
                finite_diff_check(move |_, p| op(p[0])?.sum_all(), &[x], 1e-5).unwrap()
            }
            _ => check_unary(lo, hi, op),
        };
        if report.min_kink_distance > 1e-3 {
            assert!(
                report.max_rel_error < 1e-6,
                "{name}: rel err {}",
                report.max_rel_error
            );
        }
    }
}

#[test]
fn binary_and_matrix_primitives_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    type Op = for<'g> fn(Var<'g>, Var<'g>) -> Result<Var<'g>>;
    let shapes: Vec<((usize, usize), (usize, usize), Op)> = vec![
        ((3, 4), (3, 4), |a, b| a.add(b)),
        ((3, 4), (1, 4), |a, b| a.sub(b)),
        ((3, 4), (3, 1), |a, b| a.mul(b)),
        ((1, 1), (3, 4), |a, b| a.mul(b)),
        ((3, 4), (1, 4), |a, b| a.div(b.abs()?.add_scalar(0.5)?)),
        ((3, 4), (4, 2), |a, b| a.matmul(b)),
        ((3, 4), (5, 4), |a, b| a.matmul_t(b)),
        ((3, 4), (2, 4), |a, b| concat_rows(&[a, b])),
        ((3, 4), (3, 2), |a, b| concat_cols(&[a, b, a])),
    ];
    for (i, (sa, sb, op)) in shapes.into_iter().enumerate() {
        let a = random(&mut rng, sa.0, sa.1, -1.5, 1.5);
        let b = random(&mut rng, sb.0, sb.1, -1.5, 1.5);
        let report = finite_diff_check(
            move |_, p| op(p[0], p[1])?.exp()?.sum_all(),
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "case {i}: {report:?}");
    }
}

#[test]
fn reductions_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&mut rng, 4, 3, -1.0, 1.0);
    let report = finite_diff_check(
        |_, p| {
            let a = p[0].row_sums()?.exp()?.sum_all()?;
            let b = p[0].col_means()?.sinh()?.sum_all()?;
            let c = p[0].mean_all()?.cosh()?;
            a.add(b)?.add(c)
        },
        &[x],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn radial_ratios_are_smooth_through_zero() {
    let g = Graph::new();
    let x = g.param(Tensor::row_vector(&[0.0, 1e-4, 0.5, 9.0])).unwrap();
    let s = x.sinh_ratio(8.0).unwrap();
    let a = x.asinh_ratio().unwrap();
    let sv = s.value();
    assert_eq!(sv.data()[0], 1.0);
    assert!((sv.data()[1] - 1e-4f64.sinh() / 1e-4).abs() < 1e-15);
    assert!((sv.data()[2] - 0.5f64.sinh() / 0.5).abs() < 1e-15);
    assert!((sv.data()[3] - 8f64.sinh() / 9.0).abs() < 1e-12);
    assert_eq!(a.value().data()[0], 1.0);
    let grads = g.backward(s.add(a).unwrap().sum_all().unwrap()).unwrap().wrt(x);
    assert_eq!(grads.data()[0], 0.0);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let g = Graph::new();
    let x = g.constant(Tensor::zeros(1, 3)).unwrap();
    let s = x.softmax_rows().unwrap().value();
    for v in s.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn cosh_derivative_at_zero() {
    let g = Graph::new();
    let x = g.param(Tensor::scalar(0.0)).unwrap();
    let y = x.cosh().unwrap();
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.wrt(x).item().unwrap(), 0.0);
}

#[test]
fn backward_of_sum_is_all_ones() {
    let g = Graph::new();
    let x = g.param(Tensor::matrix(2, 3, vec![1., -2., 3., 0.5, 7., -1.]).unwrap()).unwrap();
    let grads = g.backward(x.sum_all().unwrap()).unwrap();
    assert_eq!(grads.wrt(x).data(), &[1.0; 6]);
}

#[test]
fn backward_of_lorentz_self_inner() {
    // d/dx <x,x>_L = 2 diag(-1, 1, ..., 1) x
    let x0 = [1.3, 0.4, -0.2, 0.9];
    let g = Graph::new();
    let x = g.param(Tensor::row_vector(&x0)).unwrap();
    let sign = g.constant(Tensor::row_vector(&[-1.0, 1.0, 1.0, 1.0])).unwrap();
    let inner = x.mul(x).unwrap().mul(sign).unwrap().sum_all().unwrap();
    let grads = g.backward(inner).unwrap().wrt(x);
    let expected = [-2.6, 0.8, -0.4, 1.8];
    for (a, b) in grads.data().iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn unused_parameter_gets_zero_gradient() {
    let g = Graph::new();
    let x = g.param(Tensor::scalar(2.0)).unwrap();
    let unused = g.param(Tensor::zeros(2, 2)).unwrap();
    let grads = g.backward(x.square().unwrap()).unwrap();
    assert_eq!(grads.wrt(unused), Tensor::zeros(2, 2));
    assert_eq!(grads.wrt(x).item().unwrap(), 4.0);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let g = Graph::new();
    let x = g.param(Tensor::zeros(2, 2)).unwrap();
    assert!(matches!(g.backward(x), Err(Error::Argument(_))));
    let inf = Graph::inference();
    let y = inf.param(Tensor::scalar(1.0)).unwrap();
    assert!(matches!(inf.backward(y), Err(Error::Argument(_))));
}

#[test]
fn backward_does_not_mutate_forward_values() {
    let g = Graph::new();
    let x = g.param(Tensor::row_vector(&[0.3, -0.8, 1.1])).unwrap();
    let h = x.exp().unwrap().softmax_rows().unwrap();
    let loss = h.row_norm().unwrap().sum_all().unwrap();
    let before: Vec<Tensor> = [x, h, loss].iter().map(|v| v.value()).collect();
    g.backward(loss).unwrap();
    g.backward(loss).unwrap();
    let after: Vec<Tensor> = [x, h, loss].iter().map(|v| v.value()).collect();
    assert_eq!(before, after);
}

#[test]
fn shape_mismatch_and_non_finite_errors() {
    let g = Graph::new();
    let a = g.constant(Tensor::zeros(2, 3)).unwrap();
    let b = g.constant(Tensor::zeros(3, 2)).unwrap();
    assert!(matches!(a.add(b), Err(Error::Dimension(_))));
    assert!(matches!(a.matmul(a), Err(Error::Dimension(_))));
    let z = g.constant(Tensor::scalar(0.0)).unwrap();
    match z.ln() {
        Err(Error::Numerical { op, .. }) => assert_eq!(op, "ln"),
        other => panic!("expected numerical error, got {other:?}"),
    }
}

#[test]
fn domain_clamps_are_straight_through_inside_zero_outside() {
    let g = Graph::new();
    let x = g.param(Tensor::row_vector(&[0.5, 1.0, 0.999_999_99, 1.5])).unwrap();
    let y = x.arcosh().unwrap().sum_all().unwrap();
    let grad = g.backward(y).unwrap().wrt(x);
    assert_eq!(&grad.data()[..3], &[0.0, 0.0, 0.0]);
    assert!((grad.data()[3] - 1.0 / (1.5f64 * 1.5 - 1.0).sqrt()).abs() < 1e-12);
    assert_eq!(x.arcosh().unwrap().value().data()[0], (1.0 + DOMAIN_EPS).acosh());

    let g = Graph::new();
    let x = g.param(Tensor::row_vector(&[-2.0, 0.3, 1.0])).unwrap();
    let y = x.clamp(-1.0, 0.5).unwrap().sum_all().unwrap();
    assert_eq!(g.backward(y).unwrap().wrt(x).data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn kink_distance_tracks_max_ties() {
    let g = Graph::new();
    let x = g.param(Tensor::row_vector(&[0.1, 0.1005, -1.0])).unwrap();
    x.row_max().unwrap();
    assert!((g.min_kink_distance() - 0.0005).abs() < 1e-12);
}

#[test]
fn quadratic_gradient_check_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&mut rng, 3, 3, -1.0, 1.0);
    let x = random(&mut rng, 3, 1, -1.0, 1.0);
    let report = finite_diff_check(
        move |g, p| {
            let a = g.constant(a.clone())?;
            p[0].transpose()?.matmul(a)?.matmul(p[0])?.sum_all()
        },
        &[x],
        1e-4,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-9, "{report:?}");
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut store = ParamStore::new();
    store.add("w", Tensor::row_vector(&[1.0, -2.0])).unwrap();
    let mut state = AdamState::new(&store, 0.1);
    let before = store.clone();
    adam_step(&mut store, &[Tensor::zeros(1, 2)], &mut state).unwrap();
    assert_eq!(store, before);
    assert_eq!(state.step, 1);
}

#[test]
fn adam_first_step_moves_by_lr_times_sign() {
    let mut store = ParamStore::new();
    store.add("w", Tensor::row_vector(&[1.0, -2.0, 0.5])).unwrap();
    let mut state = AdamState::new(&store, 0.01);
    let g = Tensor::row_vector(&[3.0, -0.2, 1e-3]);
    adam_step(&mut store, &[g], &mut state).unwrap();
    let got = store.tensors()[0].data();
    let expected = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
    for (a, b) in got.iter().zip(expected) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn adam_rejects_shape_mismatch() {
    let mut store = ParamStore::new();
    store.add("w", Tensor::zeros(2, 2)).unwrap();
    let mut state = AdamState::new(&store, 0.1);
    assert!(matches!(
        adam_step(&mut store, &[Tensor::zeros(1, 4)], &mut state),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        store.add("w", random(&mut rng, 3, 3, -1.0, 1.0)).unwrap();
        let mut state = AdamState::new(&store, 0.05);
        for _ in 0..10 {
            let g = Graph::new();
            let b = store.bind(&g).unwrap();
            let loss = b.vars()[0].sinh().unwrap().square().unwrap().sum_all().unwrap();
            let grads = b.gradients(&g.backward(loss).unwrap());
            adam_step(&mut store, &grads, &mut state).unwrap();
        }
        store
    };
    let (a, b) = (run(), run());
    let bits = |s: &ParamStore| -> Vec<u64> {
        s.tensors()[0].data().iter().map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}
