//! Build a small expression on the tape, read its gradients and confirm them
//! against central differences.

use hlformer::diff::{finite_diff_check_with, FdOptions, Graph, Tensor};

fn main() -> hlformer::Result<()> {
    let x0 = Tensor::from_rows(&[vec![0.3, -1.2, 0.5], vec![1.0, 0.2, -0.4]])?;
    let w0 = Tensor::from_rows(&[vec![0.7, 0.1], vec![-0.5, 0.9], vec![0.2, 0.3]])?;

    let g = Graph::new();
    let x = g.param(x0.clone())?;
    let w = g.param(w0.clone())?;
    let loss = x.matmul(w)?.softmax_rows()?.row_max()?.sum_all()?;
    let grads = g.backward(loss)?;
    println!("loss = {:.6}", loss.item()?);
    println!("d/dw = {:?}", grads.wrt(w).to_rows());

    let report = finite_diff_check_with(
        |_g, p| p[0].matmul(p[1])?.softmax_rows()?.row_max()?.sum_all(),
        &[x0, w0],
        &FdOptions { fourth_order: true, ..FdOptions::default() },
    )?;
    println!(
        "finite differences: {} coordinates, max relative error {:.2e}",
        report.coords_checked, report.max_rel_error
    );
    Ok(())
}
