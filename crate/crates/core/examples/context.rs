//! Environmental covariates around each mapped point: population presence,
//! noise, traffic, speed limits and land use.
use urban_perception::context::{aggregate_corine, context_sample, ContextLayers, LandUseCategory};
use urban_perception::domain::grid::GridLayer;
use urban_perception::synth::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = generate(&SynthSpec::default())?;
    let landuse = aggregate_corine(&bundle.land_cover, &bundle.legend, &bundle.category_map)?;
    let noise: Vec<GridLayer> = bundle.noise.iter().map(|(_, l)| l.clone()).collect();
    let layers = ContextLayers { population: &bundle.population, noise: &noise, segments: &bundle.segments, landuse: &landuse };

    let samples: Vec<_> =
        bundle.ppgis.iter().map(|p| context_sample(&p.point_id, &p.location, &layers, 50.0, 1000.0)).collect();
    for s in samples.iter().take(5) {
        println!(
            "{}: presence {:?}, LAeq {:?}, traffic {:.0}{}, speed {:?}",
            s.point_id,
            s.population.map(|v| (v * 10.0).round() / 10.0),
            s.noise_laeq.map(|v| (v * 10.0).round() / 10.0),
            s.traffic,
            if s.traffic_in_range { "" } else { " (none in range)" },
            s.speed
        );
        if let Some(mix) = s.landuse {
            let parts: Vec<String> =
                LandUseCategory::ALL.iter().map(|c| format!("{} {:.2}", c.name(), mix[c.index()])).collect();
            println!("    {}", parts.join(", "));
        }
    }

    let mean_noise = |shifted: bool| {
        let v: Vec<f64> = samples
            .iter()
            .filter(|s| bundle.truth.disagreement_points.contains(&s.point_id) == shifted)
            .filter_map(|s| s.noise_laeq)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    println!("mean LAeq: shifted points {:.1} dB, others {:.1} dB", mean_noise(true), mean_noise(false));
    Ok(())
}
