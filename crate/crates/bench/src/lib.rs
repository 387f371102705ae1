//! Fixtures shared by the benchmarks.

use ubsr_core::{DistributionModel, RegressionDataset};

/// `m` rows of `y = x · w* + noise` with standard Gaussian features.
pub fn synthetic_regression(m: usize, d: usize, seed: u64) -> RegressionDataset {
    let gauss = DistributionModel::gaussian(0.0, 1.0).expect("valid law");
    let xs = gauss.sample(m * d, seed).expect("sampling").values;
    let noise = DistributionModel::gaussian(0.0, 0.3).expect("valid law").sample(m, seed + 1).expect("sampling").values;
    let rows: Vec<Vec<f64>> = xs.chunks(d).map(<[f64]>::to_vec).collect();
    let targets: Vec<f64> = rows
        .iter()
        .zip(&noise)
        .map(|(x, e)| x.iter().enumerate().map(|(j, v)| v / (j + 1) as f64).sum::<f64>() + e)
        .collect();
    RegressionDataset::from_rows(&rows, &targets).expect("consistent rows")
}
