// Rule-based sentence splitting with character offsets.

use std::error::Error;

use entail_guard::segment::split_sentences;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let text = "Dr. Lee measured 2.5 litres at 9 a.m. sharp. \"Is that all?\" she asked. \
                The U.S. team agreed. Then the power went";
    for s in split_sentences(text) {
        println!(
            "[{:>3}..{:>3}] {} {:?}",
            s.char_start,
            s.char_end,
            if s.terminated { "sentence" } else { "fragment" },
            s.text
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
