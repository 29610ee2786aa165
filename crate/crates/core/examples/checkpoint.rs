//! Save, reload and resume a training run; the reloaded model ranks videos
//! exactly as the original.

use hlformer::harness::{
    gen_synthetic_corpus, rank, resume, train, Checkpoint, Config, Preset, SyntheticCorpusSpec,
};

fn main() -> hlformer::Result<()> {
    let spec = SyntheticCorpusSpec { num_videos: 30, ..SyntheticCorpusSpec::default() };
    let dataset = gen_synthetic_corpus(&spec)?.dataset;
    let config = Config::preset(Preset::Toy);

    let first = train(&config, &dataset, 2)?;
    let path = std::env::temp_dir().join("hlformer-example.ckpt");
    first.last.save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    println!("{} bytes at {}", loaded.to_bytes().len(), path.display());
    println!("byte-identical: {}", loaded.to_bytes() == first.last.to_bytes());

    let words = &dataset.queries[0].words;
    let a = rank(&first.last.model, &dataset, words)?;
    let b = rank(&loaded.model, &dataset, words)?;
    println!("same ranking after reload: {}", a == b);
    println!("top 3 for {}: {:?}", dataset.queries[0].id, &a[..3]);

    let continued = resume(loaded, &dataset, 2)?;
    let straight = train(&config, &dataset, 4)?;
    println!(
        "2 + 2 epochs equals 4 epochs: {}",
        continued.last.to_bytes() == straight.last.to_bytes()
    );
    Ok(())
}
