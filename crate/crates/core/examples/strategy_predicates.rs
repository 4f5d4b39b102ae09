// The four acceptance strategies and argmax labelling on a few distributions.

use std::error::Error;

use entail_guard::nli::{label_of, NliDistribution, Strategy, StrategyKind};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let strategies = [
        Strategy::control(),
        Strategy::ent(),
        Strategy::con(),
        Strategy::neu(),
        Strategy::new(StrategyKind::Neu, 0.5)?,
    ];
    let samples = [
        (0.05, 0.91, 0.04),
        (0.10, 0.85, 0.05),
        (0.10, 0.50, 0.40),
        (0.40, 0.50, 0.10),
        (0.45, 0.10, 0.45),
    ];
    println!("{:<20} {:<6} CONTROL ENT   CON   NEU   NEU@0.5", "(con, neu, ent)", "label");
    for (c, n, e) in samples {
        let d = NliDistribution::new(c, n, e)?;
        let verdicts: Vec<String> = strategies
            .iter()
            .map(|s| format!("{:<5}", if s.accepts(&d) { "yes" } else { "no" }))
            .collect();
        println!(
            "{:<20} {:<6} {}",
            format!("({c:.2}, {n:.2}, {e:.2})"),
            label_of(&d).short(),
            verdicts.join("  ")
        );
    }
    // strategies parse case-insensitively, as on the command line
    let parsed: StrategyKind = "neu".parse()?;
    println!("parsed \"neu\" as {parsed}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
