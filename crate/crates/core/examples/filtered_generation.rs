// One NLI-filtered continuation with its audit trace, using in-process mocks.

use std::error::Error;

use entail_guard::backends::{NliTable, SamplingParams, ScriptedLm};
use entail_guard::nli::{NliDistribution, Strategy};
use entail_guard::pipeline::{generate_filtered, PipelineConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let lm = ScriptedLm::new([
        "The ferry left at dawn. It never reached the island. Gulls followed the wake.",
        "Passengers watched the coast. The captain checked the charts again. Fog rolled in \
         from the west and stayed for hours. By noon the horn sounded twice.",
    ]);
    // neutral unless a rule fires; "never" reads as a contradiction and a
    // repeated sentence entails itself, so NEU rejects both
    let nli = NliTable::new()
        .with_identical(NliDistribution::new(0.01, 0.04, 0.95)?)
        .with_rule(None, Some("never"), NliDistribution::new(0.8, 0.15, 0.05)?)
        .with_default(NliDistribution::new(0.03, 0.93, 0.04)?);
    let config = PipelineConfig {
        strategy: Strategy::neu(),
        params: SamplingParams {
            top_p: 0.96,
            seed: Some(0),
            ..Default::default()
        },
        ..Default::default()
    };
    let prompt = "A ferry crossed the bay every morning.";
    let result = generate_filtered(&lm, &nli, prompt, &config)?;

    for e in &result.trace.events {
        println!(
            "run {} attempt {} {:<22} {:?}",
            e.run_index,
            e.attempt_index,
            format!("{:?}", e.decision),
            e.candidate.text
        );
        if let Some(failed) = e.checks.iter().find(|c| !c.passed) {
            println!("    failed against {:?} ({:?})", failed.premise_text, failed.distribution);
        }
    }
    println!("stop: {}  attempts: {:?}", result.stop_reason.as_str(), result.attempts_per_run);
    println!("continuation: {}", result.continuation_text);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
