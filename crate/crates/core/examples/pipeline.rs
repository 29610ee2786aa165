//! Generate a small corpus on disk, train the toy model for a few epochs and
//! evaluate on the held-out test queries.

use hlformer::harness::{
    evaluate_retrieval, gen_synthetic_corpus, load_dataset, save_corpus, split_queries,
    train_with_progress, Checkpoint, Config, Preset, Split, SyntheticCorpusSpec,
};

fn main() -> hlformer::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(15);
    let dir = std::env::temp_dir().join("hlformer-pipeline");
    let spec = SyntheticCorpusSpec { num_videos: 60, ..SyntheticCorpusSpec::default() };
    save_corpus(&gen_synthetic_corpus(&spec)?, &dir)?;
    let dataset = load_dataset(&dir)?;
    println!("corpus in {}", dir.display());

    let config = Config::preset(Preset::Toy);
    let out = train_with_progress(Checkpoint::initial(config)?, &dataset, epochs, |r| {
        println!("epoch {:>2}  loss {:.4}  val SumR {:.1}", r.epoch, r.loss.total, r.val.sumr);
    })?;

    let test = split_queries(&dataset, Some(Split::Test))?;
    for (name, ckpt) in [("last", &out.last), ("best on val", &out.best)] {
        let m = evaluate_retrieval(&ckpt.model, &dataset, &test)?;
        println!("{name}: test {}", m.machine_line());
    }
    println!("chance R@1 is {:.2}%", 100.0 / dataset.videos.len() as f64);
    Ok(())
}
