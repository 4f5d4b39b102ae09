// Class breakdown and error-type × class contingency for the bundled corpus.

use std::error::Error;
use std::path::Path;

use entail_guard::analysis::{
    class_distribution, classify_examples, error_class_contingency, format_class_table, labels_of,
    GroupBy,
};
use entail_guard::backends::NliTable;
use entail_guard::corpus::{load_corpus, DEFAULT_MIN_AGREEMENT};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let corpus = load_corpus(fixtures.join("corpus.jsonl"))?;
    let nli = NliTable::from_path(fixtures.join("corpus_nli.json"))?;
    let labels = labels_of(&classify_examples(&nli, &corpus)?);

    println!("NLI class of whole generations (%):");
    print!("{}", format_class_table(&class_distribution(&labels, &corpus, GroupBy::TopP)?));
    println!("\nBy error type, spans with agreement >= {DEFAULT_MIN_AGREEMENT} (%):");
    let rows = error_class_contingency(&labels, &corpus, GroupBy::TopP, DEFAULT_MIN_AGREEMENT)?;
    print!("{}", format_class_table(&rows));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
