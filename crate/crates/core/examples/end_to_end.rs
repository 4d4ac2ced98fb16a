//! Runs every stage on the bundled demo inputs and prints the manifest.
use std::path::Path;

use urban_perception::pipeline::{cmd_run, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/config.json");
    let cfg = RunConfig::load(&config)?;
    let out = std::env::temp_dir().join("urban-perception-demo-out");
    let manifest = cmd_run(&cfg, &out)?;
    println!("{} {} seed {} config {}", manifest.tool, manifest.version, manifest.seed, &manifest.config_sha256[..12]);
    for f in &manifest.files {
        println!("{:>9}  {}  {}", f.bytes, &f.sha256[..12], f.path);
    }
    println!("outputs in {}", out.display());
    Ok(())
}
