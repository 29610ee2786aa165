//! Distances from the hyperboloid origin of glance, gaze and query embeddings
//! before and after a short training run.

use hlformer::harness::{
    gen_synthetic_corpus, inspect_norms, train, Checkpoint, Config, Preset, SyntheticCorpusSpec,
};

fn main() -> hlformer::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(15);
    let spec = SyntheticCorpusSpec { num_videos: 60, ..SyntheticCorpusSpec::default() };
    let dataset = gen_synthetic_corpus(&spec)?.dataset;
    let config = Config::preset(Preset::Toy);
    let scale = config.loss.pop_lift_scale;

    let before = inspect_norms(&Checkpoint::initial(config.clone())?.model, &dataset, scale, 5)?;
    println!("at initialization:\n{}", before.to_table());
    let trained = train(&config, &dataset, epochs)?;
    let after = inspect_norms(&trained.last.model, &dataset, scale, 5)?;
    println!("after {epochs} epochs:\n{}", after.to_table());
    for g in &after.groups {
        println!("{:<7} mean {:.4}", g.name, g.mean());
    }
    Ok(())
}
