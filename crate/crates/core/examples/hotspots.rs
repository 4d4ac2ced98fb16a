//! Global and local spatial autocorrelation of values on a point lattice.
use urban_perception::domain::Point2;
use urban_perception::geo::{getis_ord_gstar, knn_weights, morans_i, HotspotClass, PointIndex, WeightScheme};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let side = 15;
    let points: Vec<Point2> = (0..side * side).map(|i| Point2::new((i % side) as f64 * 10.0, (i / side) as f64 * 10.0)).collect();
    // a warm blob in one corner over a gentle gradient
    let values: Vec<f64> = points
        .iter()
        .map(|p| {
            let d = ((p.x - 30.0).powi(2) + (p.y - 30.0).powi(2)).sqrt();
            (-d / 25.0).exp() * 5.0 + p.x / 200.0
        })
        .collect();

    let index = PointIndex::build(points)?;
    let w = knn_weights(&index, 8, WeightScheme::KnnRowStandardized)?;
    let moran = morans_i(&values, &w, 499, 11)?;
    println!("Moran's I {:.4} (expected {:.4}), z {:.2}, permutation p {:?}", moran.i, moran.expected, moran.z, moran.p_permutation);

    let g = getis_ord_gstar(&values, &index, 8)?;
    let hot = g.iter().filter(|s| s.class == HotspotClass::Hot).count();
    let cold = g.iter().filter(|s| s.class == HotspotClass::Cold).count();
    println!("{hot} hot and {cold} cold of {} points", g.len());
    let peak = g.iter().map(|s| s.z).fold(f64::NEG_INFINITY, f64::max);
    println!("largest G* z {peak:.2}");
    Ok(())
}
