//! Batch retrieval, diversity and partial-order terms on a random batch.

use hlformer::diff::{Graph, Tensor};
use hlformer::objectives::{
    aggregate_loss, div_loss, pop_loss_euclidean, sim_loss, BatchSimMatrix, LossWeights,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> hlformer::Result<Tensor> {
    let rows: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    Tensor::from_rows(&rows)
}

fn main() -> hlformer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Two queries each for three videos.
    let ids = vec![0, 0, 1, 1, 2, 2];
    let w = LossWeights::default();
    let g = Graph::inference();

    let frame = g.constant(random(&mut rng, 6, 6)?)?;
    let clip = g.constant(random(&mut rng, 6, 6)?)?;
    let sim = sim_loss(&BatchSimMatrix::new(frame, clip, ids.clone())?, &w)?;

    let queries = g.constant(random(&mut rng, 6, 8)?)?;
    let div = div_loss(queries, &ids, w.margin_div)?;

    let videos = g.constant(random(&mut rng, 6, 8)?)?;
    let pop = pop_loss_euclidean(videos, queries, &w, 8.0)?;

    let total = aggregate_loss(sim, div, pop, w.lambda_div, w.lambda_pop)?;
    println!("sim {:.4}  div {:.4}  pop {:.4}", sim.item()?, div.item()?, pop.item()?);
    println!("total with lambda_div {} and lambda_pop {}: {:.4}", w.lambda_div, w.lambda_pop, total.item()?);
    Ok(())
}
