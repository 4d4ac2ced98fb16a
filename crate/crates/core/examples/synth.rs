//! Generates a complete input bundle and writes it to a temporary directory.
use urban_perception::synth::{generate, season_tally, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec { seed: 3, n_images: 800, ..SynthSpec::default() };
    let bundle = generate(&spec)?;
    println!(
        "{} images, {} ratings, {} points, {} street segments",
        bundle.images.len(),
        bundle.ratings.len(),
        bundle.ppgis.len(),
        bundle.segments.segments.len()
    );
    let months: Vec<u32> = bundle.images.iter().map(|i| i.capture_month).collect();
    println!("images per season (winter first) {:?}", season_tally(&months));
    println!("{} points carry a planted disagreement", bundle.truth.disagreement_points.len());

    let dir = std::env::temp_dir().join("urban-perception-synth-example");
    bundle.write(&dir)?;
    let mut files: Vec<_> = walk(&dir);
    files.sort();
    for f in files {
        println!("  {}", f.strip_prefix(&dir)?.display());
    }
    Ok(())
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .flat_map(|e| if e.path().is_dir() { walk(&e.path()) } else { vec![e.path()] })
        .collect()
}
