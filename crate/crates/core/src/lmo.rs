//! Linear minimization oracle: empirical risk minimization of
//! `Σ ℓ((y_i - w·x_i)² - γ)` over linear models, by projected gradient descent.
//!
//! The objective is a sum (not a mean) over the rows. Comparisons made by
//! the bisection trainer do not depend on that normalization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UbsrError};
use crate::utility::Utility;

/// Slack allowed on the norm constraint of a [`LinearModel`].
pub const NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    features: DMatrix<f64>,
    targets: DVector<f64>,
}

impl RegressionDataset {
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        let (m, d) = features.shape();
        if m == 0 || d == 0 {
            return Err(UbsrError::invalid(format!("dataset needs m >= 1 and d >= 1, got {m} x {d}")));
        }
        if targets.len() != m {
            return Err(UbsrError::DimensionMismatch {
                expected: m,
                got: targets.len(),
            });
        }
        if let Some(i) = (0..m).find(|&i| !targets[i].is_finite() || features.row(i).iter().any(|v| !v.is_finite())) {
            return Err(UbsrError::NonFinite(format!("dataset row {i}")));
        }
        Ok(RegressionDataset { features, targets })
    }

    /// Builds a dataset from feature rows `x_i` and targets `y_i`.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(UbsrError::DimensionMismatch { expected: d, got: bad.len() });
        }
        let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        RegressionDataset::new(features, DVector::from_column_slice(targets))
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// Dataset made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.len()) {
            return Err(UbsrError::invalid(format!("row index {bad} out of range for {} rows", self.len())));
        }
        RegressionDataset::new(
            self.features.select_rows(rows.iter()),
            DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.targets[i])),
        )
    }

    /// `(B₁, B₂) = (max ‖x_i‖, max |y_i|)`.
    pub fn data_bounds(&self) -> (f64, f64) {
        let b1 = self.features.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        let b2 = self.targets.amax();
        (b1, b2)
    }

    /// `y - X w`.
    pub fn residuals(&self, weights: &[f64]) -> Result<DVector<f64>> {
        if weights.len() != self.dim() {
            return Err(UbsrError::DimensionMismatch {
                expected: self.dim(),
                got: weights.len(),
            });
        }
        let w = DVector::from_column_slice(weights);
        Ok(&self.targets - &self.features * w)
    }

    /// Squared losses `(w·x_i - y_i)²` of a model on every row.
    pub fn squared_losses(&self, model: &LinearModel) -> Result<Vec<f64>> {
        Ok(self.residuals(&model.weights)?.iter().map(|r| r * r).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    /// `B₃`, the radius of the Euclidean ball the weights live in.
    pub norm_bound: Option<f64>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, norm_bound: Option<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(UbsrError::NonFinite("model weights".into()));
        }
        if let Some(b) = norm_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(UbsrError::invalid(format!("norm bound must be positive, got {b}")));
            }
            let norm = euclidean(&weights);
            if norm > b + NORM_SLACK {
                return Err(UbsrError::invalid(format!("weights have norm {norm} above the bound {b}")));
            }
        }
        Ok(LinearModel { weights, norm_bound })
    }

    pub fn zeros(dim: usize, norm_bound: Option<f64>) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
            norm_bound,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmoSettings {
    /// Stop once the projected-gradient norm is below `grad_tol · (1 + |objective|)`.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for LmoSettings {
    fn default() -> Self {
        LmoSettings {
            grad_tol: 1e-8,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmoResult {
    pub model: LinearModel,
    /// Sum over rows, not the mean.
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn euclidean(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn project(w: &mut DVector<f64>, bound: Option<f64>) {
    if let Some(b) = bound {
        let norm = w.norm();
        if norm > b {
            *w *= b / norm;
        }
    }
}

fn loss_of_residuals(r: &DVector<f64>, u: &Utility, gamma: f64) -> f64 {
    r.iter().map(|&r| u.eval(r * r - gamma)).sum()
}

fn objective(data: &RegressionDataset, u: &Utility, gamma: f64, w: &DVector<f64>) -> Result<f64> {
    let r = &data.targets - &data.features * w;
    let value = loss_of_residuals(&r, u, gamma);
    if !value.is_finite() {
        return Err(UbsrError::NonFinite(format!(
            "surrogate loss overflowed at ‖w‖ = {:e} (largest |residual| {:e})",
            w.norm(),
            r.amax()
        )));
    }
    Ok(value)
}

fn gradient(data: &RegressionDataset, u: &Utility, gamma: f64, w: &DVector<f64>) -> DVector<f64> {
    let r = &data.targets - &data.features * w;
    let scaled = r.map(|r| -2.0 * u.derivative(r * r - gamma) * r);
    data.features.tr_mul(&scaled)
}

/// `Σ ℓ((y_i - w·x_i)² - γ)` for the model's weights.
pub fn surrogate_loss(data: &RegressionDataset, u: &Utility, gamma: f64, model: &LinearModel) -> Result<f64> {
    let r = data.residuals(&model.weights)?;
    Ok(loss_of_residuals(&r, u, gamma))
}

/// `-2 Σ ℓ'((y_i - w·x_i)² - γ) (y_i - w·x_i) x_i`.
pub fn surrogate_gradient(data: &RegressionDataset, u: &Utility, gamma: f64, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != data.dim() {
        return Err(UbsrError::DimensionMismatch {
            expected: data.dim(),
            got: weights.len(),
        });
    }
    let w = DVector::from_column_slice(weights);
    Ok(gradient(data, u, gamma, &w).as_slice().to_vec())
}

fn least_squares(data: &RegressionDataset) -> Option<DVector<f64>> {
    let svd = data.features.clone().svd(true, true);
    svd.solve(&data.targets, 1e-12).ok().filter(|w| w.iter().all(|v| v.is_finite()))
}

/// Minimizes the surrogate loss over `{w : ‖w‖ <= norm_bound}`.
///
/// Starts from whichever of `w = 0` and the projected least-squares fit has
/// the smaller loss, then takes projected gradient steps with a backtracking
/// line search (step 1, halved until the Armijo condition with factor 1e-4
/// holds). The reported `grad_norm` is `‖w - P(w - ∇f(w))‖`, which equals
/// `‖∇f(w)‖` without a bound.
pub fn solve(
    data: &RegressionDataset,
    u: &Utility,
    gamma: f64,
    norm_bound: Option<f64>,
    settings: &LmoSettings,
) -> Result<LmoResult> {
    if !gamma.is_finite() {
        return Err(UbsrError::NonFinite(format!("gamma = {gamma}")));
    }
    if !(settings.grad_tol > 0.0) {
        return Err(UbsrError::invalid("grad_tol must be positive"));
    }
    LinearModel::new(Vec::new(), norm_bound)?;
    let (b1, b2) = data.data_bounds();
    log::debug!("lmo: m = {}, d = {}, B1 = {b1:e}, B2 = {b2:e}, gamma = {gamma:e}", data.len(), data.dim());

    let mut w = DVector::zeros(data.dim());
    let mut f = objective(data, u, gamma, &w)?;
    if let Some(mut ls) = least_squares(data) {
        project(&mut ls, norm_bound);
        let f_ls = objective(data, u, gamma, &ls)?;
        if f_ls < f {
            w = ls;
            f = f_ls;
        }
    }

    let mut iterations = 0;
    let mut grad_norm;
    loop {
        let g = gradient(data, u, gamma, &w);
        let mut full = &w - &g;
        project(&mut full, norm_bound);
        grad_norm = (&w - &full).norm();
        if grad_norm <= settings.grad_tol * (1.0 + f.abs()) || iterations >= settings.max_iter {
            break;
        }
        let mut step = 1.0;
        let accepted = loop {
            let mut trial = &w - &g * step;
            project(&mut trial, norm_bound);
            let moved = (&trial - &w).norm_squared();
            if moved == 0.0 {
                break None;
            }
            let f_trial = match objective(data, u, gamma, &trial) {
                Ok(v) => v,
                // Overflow at a long step only means the step is too long.
                Err(_) if step > f64::MIN_POSITIVE => {
                    step *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if f_trial <= f - 1e-4 * moved / step {
                break Some((trial, f_trial));
            }
            step *= 0.5;
        };
        iterations += 1;
        match accepted {
            Some((trial, f_trial)) => {
                w = trial;
                f = f_trial;
            }
            // The step shrank below floating-point resolution: no further progress is representable.
            None => break,
        }
    }

    let model = LinearModel {
        weights: w.as_slice().to_vec(),
        norm_bound,
    };
    let objective = surrogate_loss(data, u, gamma, &model)?;
    Ok(LmoResult {
        model,
        objective,
        iterations,
        grad_norm,
    })
}
