//! Rater standardization, per-image targets and Cronbach's alpha on a small
//! synthetic rating table.
use urban_perception::ratings::{cronbach_alpha, image_targets, standardize, RatingMatrix};
use urban_perception::synth::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for noise in [0.1, 0.6, 1.5] {
        let spec = SynthSpec {
            n_images: 400,
            n_raters: 8,
            ratings_per_image: 8,
            n_ppgis_attractive: 12,
            n_ppgis_unattractive: 12,
            extent_m: 1000.0,
            street_spacing_m: 125.0,
            rater_noise_sd: noise,
            ..SynthSpec::default()
        };
        let bundle = generate(&spec)?;
        let (profiles, z) = standardize(&bundle.ratings)?;
        let alpha = cronbach_alpha(&RatingMatrix::from_ratings(&bundle.ratings))?;
        let targets = image_targets(&z);
        println!("rater noise sd {noise}: alpha = {alpha:.3}, {} images scored", targets.len());
        if let Some(p) = profiles.first() {
            println!("  {}: mean {:.2}, sd {:.2} over {} ratings", p.rater_id, p.mean, p.sd, p.count);
        }
    }
    Ok(())
}
