//! Run every stage of the command-line workflow in-process and list the
//! artifacts, optionally from a JSON config.
//!
//! ```bash
//! cargo run --release --example run_pipeline -- [out_dir] [config.json]
//! ```

use semcom::pipeline::{run_all, RunConfig};

fn main() -> semcom::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "semcom-run".into());
    let cfg = match args.next() {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::default(),
    }
    .with_out_dir(&out);
    for stage in run_all(&cfg)? {
        println!("{}:", stage.stage);
        for f in stage.files.iter().chain([&stage.sidecar]) {
            println!("  {}", f.display());
        }
    }
    Ok(())
}
