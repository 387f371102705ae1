//! Bisection trainer for shortfall-risk-optimal linear regression.
//!
//! Each iteration guesses a risk level `γ_t`, asks the oracle for the model
//! minimizing `Σ ℓ((y_i - w·x_i)² - γ_t)` on the training half, estimates
//! that model's shortfall risk `γ̂` on the estimation half and keeps the half
//! of `[α, β]` that must contain the optimum: `[α, γ_t]` when `γ̂ < γ_t`,
//! `[γ_t, β]` otherwise.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionModel;
use crate::error::{Result, UbsrError};
use crate::estimator::{self, sample_bracket};
use crate::lmo::{self, LinearModel, LmoSettings, RegressionDataset};
use crate::rng;
use crate::utility::Utility;

/// Largest number of iterations for which the interval arithmetic stays exact.
pub const MAX_ITERATIONS: usize = 50;

/// Where the lower end of the search interval starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaStart {
    /// `α₀ = 0`, valid when `λ <= ℓ(0)`.
    Zero,
    /// `α₀ = min(0, SR_λ(δ₀))`, a lower bound on the risk of any nonnegative loss.
    #[default]
    LossFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub iterations: usize,
    pub lambda: f64,
    pub utility: Utility,
    pub norm_bound: Option<f64>,
    /// `None` uses the estimator's default tolerance for each sample.
    pub estimator_tol: Option<f64>,
    pub lmo: LmoSettings,
    /// Added to the initial estimate before it becomes `β₀`.
    pub beta_margin: f64,
    pub alpha_start: AlphaStart,
    /// Return the iterate with the smallest estimated risk instead of the last one.
    pub best_so_far: bool,
}

impl BisectionConfig {
    pub fn new(iterations: usize, lambda: f64, utility: Utility) -> Self {
        BisectionConfig {
            iterations,
            lambda,
            utility,
            norm_bound: None,
            estimator_tol: None,
            lmo: LmoSettings::default(),
            beta_margin: 0.0,
            alpha_start: AlphaStart::default(),
            best_so_far: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.iterations > MAX_ITERATIONS {
            return Err(UbsrError::invalid(format!(
                "iteration count must lie in 1..={MAX_ITERATIONS}, got {}",
                self.iterations
            )));
        }
        if !self.lambda.is_finite() {
            return Err(UbsrError::NonFinite(format!("lambda = {}", self.lambda)));
        }
        if !self.utility.is_strictly_increasing() {
            return Err(UbsrError::invalid(format!(
                "training needs a strictly increasing utility, got {}",
                self.utility
            )));
        }
        if !(self.beta_margin >= 0.0 && self.beta_margin.is_finite()) {
            return Err(UbsrError::invalid(format!("beta margin must be >= 0, got {}", self.beta_margin)));
        }
        if let Some(tol) = self.estimator_tol {
            if !(tol > 0.0) {
                return Err(UbsrError::invalid(format!("estimator tolerance must be positive, got {tol}")));
            }
        }
        LinearModel::new(Vec::new(), self.norm_bound)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `γ̂ < γ_t`: the interval becomes `[α, γ_t]`.
    Lower,
    /// `γ̂ >= γ_t`: the interval becomes `[γ_t, β]`.
    Upper,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Lower => "lower",
            Branch::Upper => "upper",
        })
    }
}

impl FromStr for Branch {
    type Err = UbsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Branch::Lower),
            "upper" => Ok(Branch::Upper),
            _ => Err(UbsrError::Parse {
                what: "branch",
                input: s.to_string(),
                reason: "expected lower or upper".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// Interval after this iteration's update.
    pub alpha: f64,
    pub beta: f64,
    pub gamma_t: f64,
    pub gamma_hat: f64,
    pub branch: Branch,
    pub lmo_objective: f64,
    pub lmo_iters: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionTrace {
    pub alpha0: f64,
    pub beta0: f64,
    /// Shortfall-risk estimate of the zero model, before margin and grid rounding.
    pub beta0_estimate: f64,
    pub records: Vec<IterationRecord>,
    pub final_model: LinearModel,
    pub final_ubsr_estimate: f64,
    pub warnings: Vec<String>,
}

impl BisectionTrace {
    /// Checks exact halving, monotone ends and branch consistency.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let (mut alpha, mut beta) = (self.alpha0, self.beta0);
        if alpha > beta {
            return Err(format!("initial interval [{alpha}, {beta}] is empty"));
        }
        let width0 = beta - alpha;
        for r in &self.records {
            if r.gamma_t != 0.5 * (alpha + beta) {
                return Err(format!("t = {}: gamma_t {} is not the midpoint of [{alpha}, {beta}]", r.t, r.gamma_t));
            }
            let expected = if r.gamma_hat < r.gamma_t { Branch::Lower } else { Branch::Upper };
            if r.branch != expected {
                return Err(format!(
                    "t = {}: branch {} disagrees with gamma_hat {} vs gamma_t {}",
                    r.t, r.branch, r.gamma_hat, r.gamma_t
                ));
            }
            if r.alpha < alpha || r.beta > beta || r.alpha > r.beta {
                return Err(format!(
                    "t = {}: [{}, {}] does not nest in [{alpha}, {beta}]",
                    r.t, r.alpha, r.beta
                ));
            }
            let want = width0 * 0.5f64.powi(r.t as i32);
            if r.beta - r.alpha != want || r.beta - r.alpha != 0.5 * (beta - alpha) {
                return Err(format!("t = {}: width {} is not (beta0 - alpha0) 2^-t = {want}", r.t, r.beta - r.alpha));
            }
            alpha = r.alpha;
            beta = r.beta;
        }
        Ok(())
    }

    pub fn width_at(&self, t: usize) -> f64 {
        if t == 0 {
            self.beta0 - self.alpha0
        } else {
            self.records[t - 1].beta - self.records[t - 1].alpha
        }
    }
}

/// Instance constants of the convergence analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    /// `1 / U`
    pub c1: f64,
    /// `G / U`
    pub c2: f64,
    /// `β₀ - α₀`
    pub c3: f64,
    pub big_c1: f64,
    pub big_c2: f64,
    pub big_c3: f64,
}

impl AnalysisConstants {
    pub fn new(u: &Utility, trace: &BisectionTrace) -> Result<Self> {
        let slope = u.slope_at_zero();
        if !(slope > 0.0) {
            return Err(UbsrError::invalid("analysis constants need a positive slope at zero"));
        }
        let g = u.lipschitz();
        let c1 = 1.0 / slope;
        let c2 = g / slope;
        let c3 = trace.beta0 - trace.alpha0;
        Ok(AnalysisConstants {
            c1,
            c2,
            c3,
            big_c1: c1 + (g * c1 + 1.0) / slope,
            big_c2: c2 + g * c2 / slope,
            big_c3: c3 + g * c3 / slope,
        })
    }

    /// Half-width `c₁ρ + c₂ρ'` of the band around the optimal risk that every
    /// interval `[α_t, β_t]` must meet.
    pub fn interval_slack(&self, rho: f64, rho_prime: f64) -> f64 {
        self.c1 * rho + self.c2 * rho_prime
    }

    /// `C₁ρ + C₂ρ' + C₃2^{-T}`.
    pub fn excess_bound(&self, rho: f64, rho_prime: f64, iterations: usize) -> f64 {
        self.big_c1 * rho + self.big_c2 * rho_prime + self.big_c3 * 0.5f64.powi(iterations as i32)
    }
}

/// First `⌊m/2⌋` rows train, the next `⌊m/2⌋` estimate; an odd last row is dropped.
/// With a seed the rows are shuffled first.
pub fn split_dataset(data: &RegressionDataset, shuffle_seed: Option<u64>) -> Result<(RegressionDataset, RegressionDataset)> {
    let n = data.len() / 2;
    if n == 0 {
        return Err(UbsrError::invalid(format!("need at least 2 rows to split, got {}", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut rng::rng_for(seed));
    }
    Ok((data.select(&order[..n])?, data.select(&order[n..2 * n])?))
}

fn estimate_losses(z: &[f64], cfg: &BisectionConfig) -> Result<f64> {
    Ok(estimator::estimate_ubsr(z, &cfg.utility, cfg.lambda, sample_bracket(z), cfg.estimator_tol)?.estimate)
}

/// Estimated shortfall risk of the squared losses `(w·x_i - y_i)²` of a model.
pub fn ubsr_of_model(model: &LinearModel, data: &RegressionDataset, u: &Utility, lambda: f64, tol: Option<f64>) -> Result<f64> {
    let z = data.squared_losses(model)?;
    Ok(estimator::estimate_ubsr(&z, u, lambda, sample_bracket(&z), tol)?.estimate)
}

// Rounds the initial interval outward to multiples of `g 2^T`, with `g` the
// spacing of doubles just above the interval's magnitude. Every midpoint and
// width computed afterwards is then exact.
fn snap_interval(alpha: f64, beta: f64, iterations: usize) -> (f64, f64) {
    let magnitude = alpha.abs().max(beta.abs()).max(f64::MIN_POSITIVE);
    let exponent = magnitude.log2().ceil() as i32 + 2;
    let grid = 2f64.powi(exponent - 53 + iterations as i32);
    ((alpha / grid).floor() * grid, (beta / grid).ceil() * grid)
}

/// Runs the bisection trainer. `train_half` feeds the oracle, `estimate_half`
/// the risk estimates.
pub fn train(train_half: &RegressionDataset, estimate_half: &RegressionDataset, cfg: &BisectionConfig) -> Result<(LinearModel, BisectionTrace)> {
    cfg.validate()?;
    if train_half.dim() != estimate_half.dim() {
        return Err(UbsrError::DimensionMismatch {
            expected: train_half.dim(),
            got: estimate_half.dim(),
        });
    }
    let u = &cfg.utility;
    let dim = train_half.dim();
    let h0 = LinearModel::zeros(dim, cfg.norm_bound);
    let beta0_estimate = estimate_losses(&estimate_half.squared_losses(&h0)?, cfg).map_err(|e| e.at_iteration(0))?;

    let alpha0 = match cfg.alpha_start {
        AlphaStart::Zero => 0.0,
        AlphaStart::LossFloor => DistributionModel::PointMass(0.0).ubsr_exact(u, cfg.lambda)?.min(0.0),
    };
    let mut warnings = Vec::new();
    let raw_beta = beta0_estimate + cfg.beta_margin;
    if raw_beta < alpha0 {
        warnings.push(format!("initial estimate {raw_beta} lies below the lower end {alpha0}; using a zero-width start"));
    }
    let (alpha0, beta0) = snap_interval(alpha0, raw_beta.max(alpha0), cfg.iterations);

    let (mut alpha, mut beta) = (alpha0, beta0);
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut current = h0;
    let mut current_estimate = beta0_estimate;
    let mut best: Option<(LinearModel, f64)> = None;
    for t in 1..=cfg.iterations {
        let gamma_t = 0.5 * (alpha + beta);
        let g = lmo::solve(train_half, u, gamma_t, cfg.norm_bound, &cfg.lmo).map_err(|e| e.at_iteration(t))?;
        let z = estimate_half.squared_losses(&g.model)?;
        let gamma_hat = estimate_losses(&z, cfg).map_err(|e| e.at_iteration(t))?;
        let branch = if gamma_hat < gamma_t {
            beta = gamma_t;
            Branch::Lower
        } else {
            alpha = gamma_t;
            Branch::Upper
        };
        log::debug!("t = {t}: gamma_t = {gamma_t}, gamma_hat = {gamma_hat}, branch = {branch}");
        records.push(IterationRecord {
            t,
            alpha,
            beta,
            gamma_t,
            gamma_hat,
            branch,
            lmo_objective: g.objective,
            lmo_iters: g.iterations,
            weights: g.model.weights.clone(),
        });
        if best.as_ref().is_none_or(|b| gamma_hat < b.1) {
            best = Some((g.model.clone(), gamma_hat));
        }
        current = g.model;
        current_estimate = gamma_hat;
    }
    if cfg.best_so_far {
        if let Some((model, estimate)) = best {
            current = model;
            current_estimate = estimate;
        }
    }
    if current_estimate > beta0 {
        warnings.push(format!(
            "final risk estimate {current_estimate} exceeds beta0 = {beta0}; the initial interval may have missed the optimum"
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let trace = BisectionTrace {
        alpha0,
        beta0,
        beta0_estimate,
        records,
        final_model: current.clone(),
        final_ubsr_estimate: current_estimate,
        warnings,
    };
    Ok((current, trace))
}
