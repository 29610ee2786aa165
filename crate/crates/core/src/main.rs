use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hlformer::harness::gradcheck::GRADCHECK_MODULES;
use hlformer::harness::io::read_feature_file;
use hlformer::harness::{
    best_checkpoint_path, evaluate_retrieval, gen_synthetic_corpus, gradcheck_suite,
    inspect_norms, load_dataset, rank, save_corpus, split_queries, train_with_progress, Checkpoint,
    Config, GradcheckSettings, Split, SyntheticCorpusSpec,
};
use hlformer::{Error, Result};

#[derive(Parser)]
#[command(name = "hlformer", version, about = "Hybrid Lorentz/Euclidean video retrieval at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus directory.
    GenData {
        /// Corpus spec file (`key = value`); defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from scratch; writes the final checkpoint and a `.best.ckpt` sibling.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Recall table and `R1 R5 R10 R100 SumR` line.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Rank every video of the corpus for one query.
    Rank {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Query id from the corpus, or a feature file holding one record.
        #[arg(long)]
        query: String,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        /// One of the module names; all when omitted.
        #[arg(long)]
        module: Option<String>,
        #[arg(long, default_value_t = 20)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Check the configured widths instead of a narrow copy.
        #[arg(long)]
        full_width: bool,
    },
    /// Histogram of lifted embedding distances from the origin.
    InspectNorms {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
}

fn query_words(dataset: &hlformer::harness::Dataset, query: &str) -> Result<hlformer::diff::Tensor> {
    if let Some(i) = dataset.find_query(query) {
        return Ok(dataset.queries[i].words.clone());
    }
    let path = Path::new(query);
    if !path.is_file() {
        return Err(Error::Argument(format!("unknown query id {query}")));
    }
    let mut records = read_feature_file(path)?;
    if records.len() != 1 {
        return Err(Error::Argument(format!(
            "{query} holds {} records, expected 1",
            records.len()
        )));
    }
    Ok(records.remove(0).1)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData { spec, out } => {
            let spec = match spec {
                Some(p) => SyntheticCorpusSpec::from_file(&p)?,
                None => SyntheticCorpusSpec::default(),
            };
            let corpus = gen_synthetic_corpus(&spec)?;
            save_corpus(&corpus, &out)?;
            println!(
                "wrote {} videos and {} queries to {}",
                corpus.dataset.videos.len(),
                corpus.dataset.queries.len(),
                out.display()
            );
        }
        Command::Train {
            config,
            data,
            out,
            epochs,
        } => {
            let config = Config::from_file(&config)?;
            let dataset = load_dataset(&data)?;
            let epochs = epochs.unwrap_or(config.train.epochs);
            let outcome = train_with_progress(Checkpoint::initial(config)?, &dataset, epochs, |r| {
                eprintln!(
                    "epoch {:>3}  lr {:.2e}  loss {:.4} (sim {:.4} div {:.4} pop {:.4})  val SumR {:.2}",
                    r.epoch, r.lr, r.loss.total, r.loss.sim, r.loss.div, r.loss.pop, r.val.sumr
                );
            })?;
            outcome.last.save(&out)?;
            outcome.best.save(&best_checkpoint_path(&out))?;
            eprintln!("validation after the last epoch:");
            print!("{}", outcome.report.table());
            println!("{}", outcome.report.machine_line());
        }
        Command::Eval { ckpt, data, split } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let dataset = load_dataset(&data)?;
            let queries = split_queries(&dataset, split.split())?;
            let report = evaluate_retrieval(&ckpt.model, &dataset, &queries)?;
            print!("{}", report.table());
            println!("{}", report.machine_line());
        }
        Command::Rank {
            ckpt,
            data,
            query,
            top,
        } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let dataset = load_dataset(&data)?;
            let words = query_words(&dataset, &query)?;
            let ranked = rank(&ckpt.model, &dataset, &words)?;
            let n = top.unwrap_or(ranked.len());
            for (i, (id, score)) in ranked.iter().take(n).enumerate() {
                println!("{}\t{id}\t{score:.6}", i + 1);
            }
        }
        Command::Gradcheck {
            config,
            module,
            draws,
            seed,
            full_width,
        } => {
            let config = Config::from_file(&config)?;
            let settings = GradcheckSettings {
                draws,
                seed,
                shrink: !full_width,
                ..GradcheckSettings::default()
            };
            let modules: Vec<&str> = match &module {
                Some(m) => vec![m.as_str()],
                None => GRADCHECK_MODULES.to_vec(),
            };
            let results = gradcheck_suite(&modules, &config.model, &config.loss, &settings)?;
            for r in &results {
                println!("{}", r.line());
            }
            return Ok(results.iter().all(|r| r.passed));
        }
        Command::InspectNorms { ckpt, data, bins } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let dataset = load_dataset(&data)?;
            let report =
                inspect_norms(&ckpt.model, &dataset, ckpt.config.loss.pop_lift_scale, bins)?;
            print!("{}", report.to_table());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
