// The full strategy × top-p grid over the bundled prompts, on four workers.

use std::error::Error;
use std::path::Path;

use entail_guard::backends::{cached, NliTable, SamplingParams, ScriptedLm};
use entail_guard::nli::{Strategy, StrategyKind};
use entail_guard::pipeline::{format_summary, run_batch, summarize, GridCell, PipelineConfig};
use entail_guard::records::{load_prompts, results_jsonl};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let prompts = load_prompts(fixtures.join("prompts.jsonl"))?;
    let lm = ScriptedLm::from_path(fixtures.join("lm.json"))?;
    let nli = cached(NliTable::from_path(fixtures.join("nli.json"))?);

    let mut grid = Vec::new();
    for top_p in [0.4, 0.96] {
        for kind in [StrategyKind::Control, StrategyKind::Neu, StrategyKind::Ent, StrategyKind::Con] {
            grid.push(GridCell { strategy: Strategy::of(kind), top_p });
        }
    }
    let config = PipelineConfig {
        params: SamplingParams { seed: Some(7), ..Default::default() },
        ..Default::default()
    };
    let report = run_batch(&lm, &nli, &prompts, &grid, &config, 4)?;

    print!("{}", format_summary(&summarize(&report)));
    let stats = nli.stats();
    println!("NLI cache: {} hits, {} misses", stats.hits, stats.misses);
    let jsonl = results_jsonl(&report);
    println!("{} result lines; first:\n{}", jsonl.lines().count(), jsonl.lines().next().unwrap_or(""));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
