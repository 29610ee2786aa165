//! Gaussian masks and one hybrid block of parallel Lorentz and Euclidean
//! attention fused by MAIM.

use hlformer::attention::{variance_schedule, GaussianMask};
use hlformer::diff::{Graph, ParamStore, Tensor};
use hlformer::model::{maim_weights, HlFormerBlock, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hlformer::Result<()> {
    let schedule = variance_schedule(4);
    println!("variance schedule: {schedule:?}");
    let mask = GaussianMask::new(6, 2.0)?;
    for i in 0..6 {
        let row: Vec<String> = (0..6).map(|j| format!("{:.4}", mask.entry(i, j))).collect();
        println!("  {}", row.join(" "));
    }

    let config = ModelConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let block = HlFormerBlock::new(&mut store, "block", &config, &mut rng)?;

    let rows: Vec<Vec<f64>> = (0..8)
        .map(|i| (0..config.dim).map(|c| ((i * 7 + c) as f64 * 0.37).sin()).collect())
        .collect();
    let g = Graph::inference();
    let p = store.bind(&g)?;
    let x = g.constant(Tensor::from_rows(&rows)?)?;
    let outs = block.block_outputs(&p, x)?;
    let w = maim_weights(&p, &outs, &block.fusion, block.tau)?.value();
    println!(
        "{} Lorentz + {} Euclidean blocks, fusion weights per position:",
        config.lorentz_blocks, config.euclidean_blocks
    );
    for r in w.to_rows() {
        let row: Vec<String> = r.iter().map(|v| format!("{v:.3}")).collect();
        println!("  {}", row.join(" "));
    }
    let y = block.forward(&p, x)?.value();
    println!("output shape {:?}", y.shape());
    Ok(())
}
