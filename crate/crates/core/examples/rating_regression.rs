// Holistic ratings and error counts regressed on strategy, CONTROL as baseline.

use std::error::Error;
use std::path::Path;

use entail_guard::analysis::{
    error_type_regressions, format_regression_table, rating_regressions, ErrorOutcome, GroupBy,
};
use entail_guard::corpus::{load_corpus, DEFAULT_MIN_AGREEMENT};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus.jsonl");
    let corpus = load_corpus(path)?;
    print!("{}", format_regression_table(&rating_regressions(&corpus, GroupBy::TopP, "CONTROL")?));
    let counts = error_type_regressions(
        &corpus,
        GroupBy::None,
        "CONTROL",
        DEFAULT_MIN_AGREEMENT,
        ErrorOutcome::Proportion,
    )?;
    println!();
    print!("{}", format_regression_table(&counts));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
