//! Print the built-in run configuration as JSON, a starting point for
//! `semcom --config`.
//!
//! ```bash
//! cargo run --example default_config > my-run.json
//! ```

use semcom::pipeline::RunConfig;

fn main() -> semcom::Result<()> {
    let paper = std::env::args().any(|a| a == "--paper-scale");
    let cfg = if paper { RunConfig::default().paper_scale() } else { RunConfig::default() };
    println!("{}", cfg.to_json()?);
    Ok(())
}
