//! Finite-difference check of every block and loss of the toy model.

use hlformer::harness::gradcheck::GRADCHECK_MODULES;
use hlformer::harness::{gradcheck_suite, Config, GradcheckSettings, Preset};

fn main() -> hlformer::Result<()> {
    let draws = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let config = Config::preset(Preset::Toy);
    let settings = GradcheckSettings { draws, ..GradcheckSettings::default() };
    let results = gradcheck_suite(&GRADCHECK_MODULES, &config.model, &config.loss, &settings)?;
    for r in &results {
        println!("{}", r.line());
    }
    Ok(())
}
