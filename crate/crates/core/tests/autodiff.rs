mod common;

use common::*;
use hlformer::diff::{finite_diff_check_with, FdOptions, Graph, Tensor};
use proptest::prelude::*;

fn seeded(seed: u64, r: usize, c: usize) -> Tensor {
    tensor(&normal_mat(&mut rng(seed), r, c, 1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matmul_gradient_is_readout_times_transpose(seed in 0u64..1000, m in 1usize..5, k in 1usize..5, n in 1usize..5) {
        let (a0, b0, r0) = (seeded(seed, m, k), seeded(seed + 1, k, n), seeded(seed + 2, m, n));
        let g = Graph::new();
        let a = g.param(a0).unwrap();
        let b = g.constant(b0.clone()).unwrap();
        let r = g.constant(r0.clone()).unwrap();
        let loss = a.matmul(b).unwrap().mul(r).unwrap().sum_all().unwrap();
        let got = mat(&g.backward(loss).unwrap().wrt(a));
        let bt: Mat = (0..n).map(|j| (0..k).map(|i| b0.get(i, j)).collect()).collect();
        let want = matmul(&mat(&r0), &bt);
        prop_assert!(max_rel_err(&got, &want) < 1e-12);
    }

    #[test]
    fn reordered_expression_is_bitwise_identical(seed in 0u64..1000) {
        let (a0, b0, c0) = (seeded(seed, 3, 4), seeded(seed + 1, 3, 4), seeded(seed + 2, 3, 4));
        let run = |flip: bool| {
            let g = Graph::new();
            let a = g.param(a0.clone()).unwrap();
            let b = g.param(b0.clone()).unwrap();
            let c = g.param(c0.clone()).unwrap();
            let y = if flip {
                c.add(b.mul(a).unwrap()).unwrap()
            } else {
                a.mul(b).unwrap().add(c).unwrap()
            };
            let loss = y.square().unwrap().sum_all().unwrap();
            let grads = g.backward(loss).unwrap();
            (loss.item().unwrap(), grads.wrt(a), grads.wrt(b), grads.wrt(c))
        };
        prop_assert_eq!(run(false), run(true));
    }

    #[test]
    fn repeated_runs_are_bitwise_identical(seed in 0u64..1000) {
        let (x0, w0) = (seeded(seed, 4, 3), seeded(seed + 1, 3, 3));
        let run = || {
            let g = Graph::new();
            let x = g.param(x0.clone()).unwrap();
            let w = g.param(w0.clone()).unwrap();
            let loss = x.matmul(w).unwrap().softmax_rows().unwrap().row_max().unwrap().sum_all().unwrap();
            let grads = g.backward(loss).unwrap();
            (grads.wrt(x), grads.wrt(w))
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn reused_variable_accumulates(seed in 0u64..1000) {
        let x0 = seeded(seed, 2, 3);
        let g = Graph::new();
        let x = g.param(x0.clone()).unwrap();
        let loss = x.mul(x).unwrap().add(x).unwrap().sum_all().unwrap();
        let got = g.backward(loss).unwrap().wrt(x);
        for (d, v) in got.data().iter().zip(x0.data()) {
            prop_assert!((d - (2.0 * v + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let x0 = seeded(seed, 3, 5);
        let g = Graph::inference();
        let x = g.constant(x0).unwrap();
        let p = x.softmax_rows().unwrap().value();
        let q = x.add_scalar(shift).unwrap().softmax_rows().unwrap().value();
        for r in 0..3 {
            prop_assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(p.max_abs_diff(&q) < 1e-12);
    }

    #[test]
    fn smooth_composite_matches_central_differences(seed in 0u64..1000) {
        let x = seeded(seed, 3, 4);
        let w = seeded(seed + 1, 4, 2);
        let options = FdOptions {
            h: 2e-5,
            // Roundoff of the stencil is about 1e-11 at h = 2e-5.
            floor: 1e-5,
            fourth_order: true,
            ..FdOptions::default()
        };
        let report = finite_diff_check_with(
            |_g, p| {
                let h = p[0].matmul(p[1])?;
                let r = h.row_norm()?.sinh_ratio(8.0)?;
                let s = h.softplus()?.ln()?.add(h.square()?.add_scalar(1.0)?.sqrt()?)?;
                let t = h.row_norm()?.asinh_ratio()?;
                s.softmax_rows()?.mul(r)?.add(t)?.scale(0.1)?.exp()?.mean_all()
            },
            &[x, w],
            &options,
        )
        .unwrap();
        prop_assert!(report.max_rel_error < 1e-6, "{:?}", report);
    }
}

#[test]
fn inference_graph_refuses_backward() {
    let g = Graph::inference();
    let x = g.constant(Tensor::scalar(2.0)).unwrap();
    assert!(g.backward(x.square().unwrap()).is_err());
}
