//! Exact per-feature contributions for a hand-built tree and for a fitted
//! ensemble, plus decision paths.
use urban_perception::explain::{decision_paths, shap_matrix, tree_shap_single};
use urban_perception::model::{train_gbt, FeatureMatrix, Hyperparams, Node, Tree};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // splits on feature 0, then feature 1 on the right
    let tree = Tree {
        nodes: vec![
            Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, cover: 10.0 },
            Node::Leaf { value: -1.0, cover: 4.0 },
            Node::Split { feature: 1, threshold: 0.5, left: 3, right: 4, cover: 6.0 },
            Node::Leaf { value: 0.5, cover: 3.0 },
            Node::Leaf { value: 2.0, cover: 3.0 },
        ],
    };
    let row = [0.9, 0.9, 0.0];
    let mut phi = vec![0.0; 3];
    tree_shap_single(&tree, &row, &mut phi);
    println!("expected {:.3}, prediction {:.3}", tree.expected_value(), tree.leaf_value(&row));
    println!("contributions {phi:.3?}");

    let rows: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let a = (i % 20) as f64 / 20.0;
            let b = (i / 20) as f64 / 10.0;
            vec![a, b, (i * 7 % 13) as f64]
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] - r[1] * r[1]).collect();
    let x = FeatureMatrix::from_rows(vec!["a".into(), "b".into(), "noise".into()], &rows)?;
    let model = train_gbt(&x, &y, &Hyperparams { depth: 4, iterations: 50, ..Hyperparams::default() }, 1)?;

    let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
    let shap = shap_matrix(&model, &x, ids)?;
    println!("base value {:.4}, worst additivity error {:.2e}", shap.base_value, shap.max_local_error());
    for (name, v) in shap.feature_names.iter().zip(shap.mean_abs()) {
        println!("mean |contribution| {name:<6} {v:.4}");
    }
    for step in decision_paths(&shap, 1, 3)? {
        println!("{} step {} {:<10} {:.4}", step.row_id, step.step, step.feature, step.cumulative_value);
    }
    Ok(())
}
