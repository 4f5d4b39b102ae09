// Memoized NLI calls, persisted to a JSON file and reloaded.

use std::error::Error;

use entail_guard::backends::{cached, nli_classify, NliTable, NoNli};
use entail_guard::nli::NliDistribution;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let table = NliTable::constant(NliDistribution::new(0.1, 0.7, 0.2)?);
    let nli = cached(table);
    let pairs = [("It rained.", "The street is wet."), ("It rained.", "The street is wet."), ("The street is wet.", "It rained.")];
    for (premise, hypothesis) in pairs {
        let d = nli_classify(&nli, premise, hypothesis)?;
        println!("{premise:?} => {hypothesis:?}: neutral {:.2}", d.neutral());
    }
    let stats = nli.stats();
    println!("hits {} misses {} (pairs are ordered)", stats.hits, stats.misses);

    let dir = std::env::temp_dir().join(format!("entail-guard-cache-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("nli-cache.json");
    nli.save_file(&path)?;

    // a cache-only backend answers everything it has seen before
    let offline = cached(NoNli);
    offline.load_file(&path)?;
    let d = nli_classify(&offline, "It rained.", "The street is wet.")?;
    println!("reloaded {} entries; offline lookup gives entailment {:.2}", offline.len(), d.entailment());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
