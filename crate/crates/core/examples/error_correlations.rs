// Spearman correlations between error-span proportions and class probabilities.

use std::error::Error;
use std::path::Path;

use entail_guard::analysis::{classify_examples, correlation_report, format_correlation_table, GroupBy};
use entail_guard::backends::NliTable;
use entail_guard::corpus::{load_corpus, DEFAULT_MIN_AGREEMENT};
use entail_guard::stats::spearman;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let corpus = load_corpus(fixtures.join("corpus.jsonl"))?;
    let nli = NliTable::from_path(fixtures.join("corpus_nli.json"))?;
    let dists = classify_examples(&nli, &corpus)?;
    let rows = correlation_report(&dists, &corpus, GroupBy::None, DEFAULT_MIN_AGREEMENT)?;
    print!("{}", format_correlation_table(&rows));

    // small samples get an exact permutation p-value, larger ones Monte Carlo
    let small = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0])?;
    println!("\nn = 5: rho {:.3}, p {:.4} ({:?})", small.rho, small.p_value, small.method);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
