//! Buffer scores around participatory-mapping points and their agreement
//! with the study-wide prediction distribution. The generator's own
//! ground-truth scores stand in for model predictions.
use urban_perception::alignment::{agreement_summary, buffer_scores, classify_all, PredictionDistribution};
use urban_perception::geo::PointIndex;
use urban_perception::synth::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = generate(&SynthSpec::default())?;
    let predictions = &bundle.truth.g;
    let index = PointIndex::build(bundle.images.iter().map(|i| i.location).collect())?;

    let dist = PredictionDistribution::from_predictions(predictions)?;
    println!("mu {:.3}, sigma {:.3} over {} images", dist.mu, dist.sigma, dist.n);

    let scores = buffer_scores(&bundle.ppgis, &index, predictions, 50.0, 5)?;
    println!("{} points scored, {} excluded", scores.scores.len(), scores.excluded.len());

    let records = classify_all(&scores.scores, &dist)?;
    for s in agreement_summary(&records)? {
        println!(
            "{:<12} n={:<4} strict {:.1}%  moderate {:.1}%",
            s.label.name(),
            s.n,
            100.0 * s.strict_rate,
            100.0 * s.moderate_rate
        );
    }
    Ok(())
}
