//! Multicollinearity screen, boosted-tree fit and permutation importance on
//! generated street-view features.
use urban_perception::domain::Dataset;
use urban_perception::explain::permutation_importance;
use urban_perception::model::{metrics, train_gbt, vif_filter, Hyperparams};
use urban_perception::pipeline::{split_rows, training_set};
use urban_perception::synth::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = generate(&SynthSpec { n_images: 1500, ..SynthSpec::default() })?;
    let data = Dataset {
        ratings: bundle.ratings,
        images: bundle.images,
        features: bundle.features,
        ppgis: bundle.ppgis,
    };
    let set = training_set(&data)?;

    let vif = vif_filter(&set.x, 5.0)?;
    for e in &vif.initial {
        println!("VIF {:<12} {:8.3}", e.feature, e.vif);
    }
    let x = set.x.select_columns(&vif.retained_names())?;

    let (train, test) = split_rows(x.n_rows(), 0.2, 7);
    let y_train: Vec<f64> = train.iter().map(|&i| set.y[i]).collect();
    let y_test: Vec<f64> = test.iter().map(|&i| set.y[i]).collect();
    let hp = Hyperparams { depth: 6, iterations: 120, ..Hyperparams::default() };
    let model = train_gbt(&x.select_rows(&train), &y_train, &hp, 7)?;

    let x_test = x.select_rows(&test);
    let m = metrics(&model.predict_matrix(&x_test)?, &y_test)?;
    println!("test MAE {:.4}, RMSE {:.4}", m.mae, m.mse.sqrt());

    let mut ranked = permutation_importance(&model, &x_test, &y_test, 5, 7)?;
    ranked.sort_by_key(|r| r.rank);
    for row in ranked {
        println!("#{} {:<12} {:+.4} ± {:.4}", row.rank, row.feature, row.importance, row.std);
    }
    Ok(())
}
