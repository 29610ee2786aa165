//! Encode three synthetic videos and score the queries of the first against each.

use hlformer::diff::Graph;
use hlformer::harness::{gen_synthetic_corpus, SyntheticCorpusSpec};
use hlformer::model::{similarity, HlFormer, ModelConfig};

fn main() -> hlformer::Result<()> {
    let spec = SyntheticCorpusSpec { num_videos: 3, ..SyntheticCorpusSpec::default() };
    let corpus = gen_synthetic_corpus(&spec)?;
    let config = ModelConfig::toy();
    let model = HlFormer::new(config.clone())?;

    for video in &corpus.dataset.videos {
        let f = model.embed_video(&video.frames)?;
        println!(
            "{}: {} frames -> gaze {:?}, glance {:?}, unified {:?}",
            video.id,
            video.frames.rows(),
            f.frames.shape(),
            f.clips.shape(),
            f.unified.shape()
        );
        let g = Graph::inference();
        for q in corpus.dataset.queries.iter().filter(|q| q.video == 0) {
            let emb = g.constant(model.embed_query(&q.words)?)?;
            let s = similarity(
                emb,
                g.constant(f.frames.clone())?,
                g.constant(f.clips.clone())?,
                config.alpha_frame,
                config.alpha_clip,
            )?;
            println!("  {} score {:+.4}", q.id, s.total.item()?);
        }
    }
    Ok(())
}
