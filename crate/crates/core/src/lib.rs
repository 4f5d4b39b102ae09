pub mod backends;
pub mod nli;
pub mod segment;
mod util;
pub mod pipeline;
pub mod corpus;
pub mod stats;
pub mod analysis;
pub mod records;
pub mod cli;
