// The HTTP clients against the bundled mock server on an ephemeral port.

use std::error::Error;
use std::path::Path;

use entail_guard::backends::{
    lm_complete, nli_classify, HttpLm, HttpNli, MockServer, SamplingParams, ServerFixture,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/server.json");
    let server = MockServer::start(ServerFixture::from_path(path)?, "127.0.0.1:0".parse()?)?;
    println!("serving on {}", server.base_url());

    let lm = HttpLm::new(&server.base_url());
    let params = SamplingParams { top_p: 0.4, seed: Some(3), ..Default::default() };
    let reply = lm_complete(&lm, "The market opened early.", &params)?;
    println!("completion ({:?} prompt tokens): {:.60}...", reply.prompt_tokens, reply.text);

    let nli = HttpNli::new(&server.base_url());
    let d = nli_classify(&nli, "The market opened early.", "It never opened.")?;
    println!("NLI: con {:.2} neu {:.2} ent {:.2}", d.contradiction(), d.neutral(), d.entailment());

    server.shutdown()?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
