//! Structural checks of the shortfall risk: non-convexity in the
//! distribution, monotonicity along mixtures, the directional-derivative
//! formula, closure of the acceptance set under mixing, and Monte-Carlo
//! coverage of the concentration bounds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionModel;
use crate::error::{Result, UbsrError};
use crate::estimator::{estimate_ubsr, SrProblem, TailSpec};
use crate::rng::trial_seed;
use crate::utility::Utility;

/// Default slack of the mixture-monotonicity check.
pub const MONOTONE_SLACK: f64 = 1e-8;

/// Relative error the derivative check accepts at its smallest step.
pub const GRADIENT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub passed: bool,
    /// Set when the precondition of the check does not hold; such a check passes vacuously.
    pub skipped: bool,
    pub details: BTreeMap<String, f64>,
    pub message: String,
}

impl VerificationReport {
    fn new(name: &str) -> Self {
        VerificationReport {
            name: name.to_string(),
            passed: true,
            skipped: false,
            details: BTreeMap::new(),
            message: String::new(),
        }
    }

    fn set(&mut self, key: impl Into<String>, value: f64) {
        self.details.insert(key.into(), value);
    }

    fn fail(&mut self, message: String) {
        self.passed = false;
        if !self.message.is_empty() {
            self.message.push_str("; ");
        }
        self.message.push_str(&message);
    }

    fn finish(mut self) -> Self {
        if self.passed && self.message.is_empty() {
            self.message = if self.skipped { "skipped: precondition not met".into() } else { "ok".into() };
        }
        self
    }
}

/// Shortfall risk of two uniforms and of their even mixture under the hinge
/// at `λ = 2`, against the closed forms `10 - √40`, `20 - √40` and `20 - √80`.
pub fn check_nonconvexity() -> Result<VerificationReport> {
    let u = Utility::Hinge;
    let lambda = 2.0;
    let low = DistributionModel::uniform(0.0, 10.0)?;
    let high = DistributionModel::uniform(10.0, 20.0)?;
    let mix = DistributionModel::blend_of(&low, &high, 0.5)?;
    let sr_low = low.ubsr_exact(&u, lambda)?;
    let sr_high = high.ubsr_exact(&u, lambda)?;
    let sr_mix = mix.ubsr_exact(&u, lambda)?;
    let average = 0.5 * (sr_low + sr_high);
    let gap = sr_mix - average;

    let mut r = VerificationReport::new("nonconvexity");
    r.set("sr_low", sr_low);
    r.set("sr_high", sr_high);
    r.set("sr_mixture", sr_mix);
    r.set("average", average);
    r.set("gap", gap);
    for (key, got, want) in [
        ("sr_low", sr_low, 10.0 - 40f64.sqrt()),
        ("sr_high", sr_high, 20.0 - 40f64.sqrt()),
        ("sr_mixture", sr_mix, 20.0 - 80f64.sqrt()),
    ] {
        let err = (got - want).abs();
        r.set(format!("{key}_closed_form_error"), err);
        if err > 1e-8 {
            r.fail(format!("{key} = {got} differs from {want} by {err:e} > 1e-8"));
        }
    }
    if !(gap > 0.0) {
        r.fail(format!("SR(mixture) - average = {gap} is not positive"));
    }
    Ok(r.finish())
}

/// `SR((1 - α) f1 + α f2)` on `grid` evenly spaced `α ∈ [0, 1]`, so the
/// sequence runs from `SR(f1)` to `SR(f2)`.
pub fn mixture_path(f1: &DistributionModel, f2: &DistributionModel, u: &Utility, lambda: f64, grid: usize) -> Result<Vec<f64>> {
    if grid < 2 {
        return Err(UbsrError::invalid(format!("grid needs at least 2 points, got {grid}")));
    }
    (0..grid)
        .map(|k| {
            let alpha = k as f64 / (grid - 1) as f64;
            DistributionModel::blend_of(f2, f1, alpha)?.ubsr_exact(u, lambda)
        })
        .collect()
}

/// Checks that the risk along the mixture path is monotone in either direction.
pub fn check_pseudolinearity(
    f1: &DistributionModel,
    f2: &DistributionModel,
    u: &Utility,
    lambda: f64,
    grid: usize,
) -> Result<VerificationReport> {
    let path = mixture_path(f1, f2, u, lambda, grid)?;
    // Largest step against each direction.
    let mut worst_drop = 0.0f64;
    let mut worst_rise = 0.0f64;
    for w in path.windows(2) {
        worst_drop = worst_drop.max(w[0] - w[1]);
        worst_rise = worst_rise.max(w[1] - w[0]);
    }
    let mut r = VerificationReport::new("pseudolinear");
    r.set("grid", grid as f64);
    r.set("first", path[0]);
    r.set("last", path[grid - 1]);
    r.set("max_decrease", worst_drop);
    r.set("max_increase", worst_rise);
    let violation = worst_drop.min(worst_rise);
    r.set("violation", violation);
    if violation > MONOTONE_SLACK {
        r.fail(format!(
            "path is not monotone: it rises by {worst_rise:e} and falls by {worst_drop:e}, both above {MONOTONE_SLACK:e}"
        ));
    }
    Ok(r.finish())
}

/// Predicted derivative of `ε ↦ SR((1 - ε) F + ε F')` at 0:
/// `(L_{F'}(t*) - L_F(t*)) / E_F[ℓ'(Z - t*)]` with `t* = SR(F)`.
pub fn predicted_directional_derivative(
    f: &DistributionModel,
    f_prime: &DistributionModel,
    u: &Utility,
    lambda: f64,
) -> Result<f64> {
    let t = f.ubsr_exact(u, lambda)?;
    let slope = f.expected_slope(u, t);
    if !(slope > 0.0) {
        return Err(UbsrError::NotDifferentiable(format!("E[ℓ'(Z - t)] = {slope} at t = {t}")));
    }
    Ok((f_prime.expected_utility(u, t) - f.expected_utility(u, t)) / slope)
}

/// Compares the predicted derivative with forward differences
/// `(SR((1 - ε) F + ε F') - SR(F)) / ε` for each `ε`, largest first.
pub fn check_gradient(
    f: &DistributionModel,
    f_prime: &DistributionModel,
    u: &Utility,
    lambda: f64,
    eps_grid: &[f64],
) -> Result<VerificationReport> {
    if eps_grid.is_empty() || eps_grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(UbsrError::invalid("eps grid must be nonempty with entries in (0, 1]"));
    }
    let mut eps: Vec<f64> = eps_grid.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let base = f.ubsr_exact(u, lambda)?;
    let predicted = predicted_directional_derivative(f, f_prime, u, lambda)?;
    let mut r = VerificationReport::new("gradient");
    r.set("sr", base);
    r.set("predicted", predicted);
    let scale = predicted.abs();
    let mut errors = Vec::with_capacity(eps.len());
    for &e in &eps {
        let moved = DistributionModel::blend_of(f_prime, f, e)?.ubsr_exact(u, lambda)?;
        let fd = (moved - base) / e;
        // Relative error, falling back to absolute for a zero direction.
        let err = if scale > 0.0 { (fd - predicted).abs() / scale } else { (fd - predicted).abs() };
        r.set(format!("finite_difference[eps={e:e}]"), fd);
        r.set(format!("relative_error[eps={e:e}]"), err);
        errors.push(err);
    }
    let last = *errors.last().unwrap_or(&0.0);
    r.set("final_relative_error", last);
    // Errors must shrink as ε shrinks, up to 10% noise and a floor from the root tolerance.
    let floor = 1e-7;
    let monotone = errors.windows(2).all(|w| w[1] <= 1.1 * w[0] || w[1] <= floor);
    r.set("monotone_decrease", if monotone { 1.0 } else { 0.0 });
    if last > GRADIENT_TOLERANCE {
        r.fail(format!(
            "relative error {last:e} at eps = {:e} exceeds {GRADIENT_TOLERANCE:e}",
            eps.last().copied().unwrap_or(f64::NAN)
        ));
    }
    if !monotone {
        r.fail(format!("finite-difference errors {errors:?} do not decrease with eps"));
    }
    Ok(r.finish())
}

/// If both laws are acceptable (`SR <= 0`), every mixture must be too.
pub fn check_randomization_invariance(
    f1: &DistributionModel,
    f2: &DistributionModel,
    u: &Utility,
    lambda: f64,
    alphas: &[f64],
) -> Result<VerificationReport> {
    let sr1 = f1.ubsr_exact(u, lambda)?;
    let sr2 = f2.ubsr_exact(u, lambda)?;
    let mut r = VerificationReport::new("randomization");
    r.set("sr_first", sr1);
    r.set("sr_second", sr2);
    if sr1 > 0.0 || sr2 > 0.0 {
        r.skipped = true;
        return Ok(r.finish());
    }
    let mut worst = f64::NEG_INFINITY;
    for &alpha in alphas {
        let sr = DistributionModel::blend_of(f1, f2, alpha)?.ubsr_exact(u, lambda)?;
        r.set(format!("sr_mixture[alpha={alpha}]"), sr);
        worst = worst.max(sr);
        if sr > 1e-9 {
            r.fail(format!("mixture at alpha = {alpha} has SR = {sr:e} > 1e-9"));
        }
    }
    r.set("max_mixture_sr", worst);
    Ok(r.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub n: usize,
    pub delta: f64,
    pub trial: usize,
    pub abs_error: f64,
    pub bound: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub n: usize,
    pub delta: f64,
    pub bound: f64,
    pub coverage: f64,
    /// `1 - 2δ - 2 sqrt(δ / trials)`.
    pub threshold: f64,
    pub median_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationOutcome {
    pub report: VerificationReport,
    pub rows: Vec<CoverageRow>,
    pub cells: Vec<CoverageCell>,
    /// Least-squares slope of log(median |error|) against log(n).
    pub median_error_slope: f64,
}

pub struct ConcentrationSetup<'a> {
    pub tail: TailSpec,
    pub dist: &'a DistributionModel,
    pub utility: &'a Utility,
    pub problem: SrProblem,
    pub n_grid: &'a [usize],
    pub delta_grid: &'a [f64],
    pub trials: usize,
    pub seed: u64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Empirical coverage of the concentration bound over `trials` seeds per `n`.
///
/// Trial `i` draws its sample from seed `seed + i` for every `n`; trials run
/// in parallel and the output does not depend on the thread count.
pub fn run_concentration_suite(setup: &ConcentrationSetup<'_>) -> Result<ConcentrationOutcome> {
    if setup.trials == 0 || setup.n_grid.is_empty() || setup.delta_grid.is_empty() {
        return Err(UbsrError::invalid("concentration suite needs trials, sample sizes and deltas"));
    }
    let u = setup.utility;
    let lambda = setup.problem.lambda;
    let truth = setup.dist.ubsr_exact(u, lambda)?;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut medians = Vec::new();
    let mut r = VerificationReport::new("concentration");
    r.set("truth", truth);
    r.set("eta", setup.problem.eta);
    r.set("t_lo", setup.problem.bracket.lo);
    r.set("t_hi", setup.problem.bracket.hi);
    for &n in setup.n_grid {
        let errors: Vec<f64> = (0..setup.trials)
            .into_par_iter()
            .map(|i| {
                let z = setup.dist.sample(n, trial_seed(setup.seed, i as u64))?;
                let e = estimate_ubsr(&z.values, u, lambda, setup.problem.bracket, None)?;
                Ok((e.estimate - truth).abs())
            })
            .collect::<Result<_>>()?;
        let med = median(&mut errors.clone());
        medians.push(med);
        r.set(format!("median_error[n={n}]"), med);
        for &delta in setup.delta_grid {
            let bound = setup.tail.bound(u.lipschitz(), &setup.problem, n, delta)?;
            let covered = errors.iter().filter(|&&e| e <= bound).count();
            let coverage = covered as f64 / setup.trials as f64;
            let threshold = 1.0 - 2.0 * delta - 2.0 * (delta / setup.trials as f64).sqrt();
            r.set(format!("coverage[n={n},delta={delta}]"), coverage);
            r.set(format!("threshold[n={n},delta={delta}]"), threshold);
            r.set(format!("bound[n={n},delta={delta}]"), bound);
            if coverage < threshold {
                r.fail(format!(
                    "coverage {coverage} < {threshold} at n = {n}, delta = {delta} (short by {:e})",
                    threshold - coverage
                ));
            }
            rows.extend(errors.iter().enumerate().map(|(trial, &abs_error)| CoverageRow {
                n,
                delta,
                trial,
                abs_error,
                bound,
                covered: abs_error <= bound,
            }));
            cells.push(CoverageCell {
                n,
                delta,
                bound,
                coverage,
                threshold,
                median_error: med,
            });
        }
    }
    let slope = if setup.n_grid.len() >= 2 {
        let x: Vec<f64> = setup.n_grid.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
        fitted_slope(&x, &y)
    } else {
        f64::NAN
    };
    r.set("median_error_slope", slope);
    Ok(ConcentrationOutcome {
        report: r.finish(),
        rows,
        cells,
        median_error_slope: slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::root::Bracket;
    use proptest::prelude::*;

    fn uniform(lo: f64, hi: f64) -> DistributionModel {
        DistributionModel::uniform(lo, hi).unwrap()
    }

    fn point(z: f64) -> DistributionModel {
        DistributionModel::point(z).unwrap()
    }

    #[test]
    fn nonconvexity_reproduced() {
        let r = check_nonconvexity().unwrap();
        assert!(r.passed, "{}", r.message);
        assert!((r.details["sr_mixture"] - 11.0557281).abs() < 1e-7);
        assert!((r.details["gap"] - 2.3803).abs() < 1e-4);
    }

    #[test]
    fn pseudolinearity_examples() {
        let r = check_pseudolinearity(&uniform(0.0, 10.0), &uniform(0.0, 10.0), &Utility::Hinge, 2.0, 11).unwrap();
        assert!(r.passed);
        assert_eq!(r.details["max_increase"], 0.0);

        let r = check_pseudolinearity(&uniform(0.0, 10.0), &uniform(10.0, 20.0), &Utility::Hinge, 2.0, 101).unwrap();
        assert!(r.passed, "{}", r.message);
        assert!((r.details["first"] - 3.6754447).abs() < 1e-6);
        assert!((r.details["last"] - 13.6754447).abs() < 1e-6);
        assert!(r.details["max_decrease"] <= 0.0);

        let path = mixture_path(&point(0.0), &point(5.0), &Utility::Linear, 1.0, 5).unwrap();
        for (k, v) in path.iter().enumerate() {
            assert!((v - (5.0 * k as f64 / 4.0 - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn failures_accumulate_messages() {
        let mut r = VerificationReport::new("x");
        r.fail("a".into());
        r.fail("b".into());
        assert_eq!(r.message, "a; b");
        assert!(!r.finish().passed);
    }

    #[test]
    fn gradient_examples() {
        let r = check_gradient(&uniform(1.0, 2.0), &uniform(1.0, 2.0), &Utility::default(), 0.3, &[1e-3, 1e-5]).unwrap();
        assert_eq!(r.details["predicted"], 0.0);
        assert!(r.passed, "{}", r.message);

        let r = check_gradient(&point(0.0), &point(1.0), &Utility::Linear, 0.0, &[1e-2, 1e-5]).unwrap();
        assert!((r.details["predicted"] - 1.0).abs() < 1e-15);
        assert!(r.passed, "{}", r.message);

        let u = Utility::blend(0.9, 0.5).unwrap();
        let r = check_gradient(&uniform(0.0, 10.0), &uniform(10.0, 20.0), &u, 2.0, &[1e-3, 1e-4, 1e-5]).unwrap();
        assert!(r.passed, "{}", r.message);
        assert!(r.details["final_relative_error"] <= 1e-3);
    }

    #[test]
    fn flat_utility_is_not_differentiable() {
        let r = check_gradient(&point(0.0), &point(1.0), &Utility::Hinge, 0.0, &[1e-3]);
        assert!(r.is_ok());
        let r = predicted_directional_derivative(&uniform(0.0, 1.0), &point(1.0), &Utility::Hinge, 0.0);
        assert!(matches!(r, Err(UbsrError::NotDifferentiable(_))));
    }

    #[test]
    fn randomization_examples() {
        let r = check_randomization_invariance(&point(-1.0), &point(-1.0), &Utility::Linear, 0.0, &[0.3]).unwrap();
        assert!(r.passed && !r.skipped);
        let r = check_randomization_invariance(&point(-2.0), &point(-1.0), &Utility::Linear, 0.0, &[0.5]).unwrap();
        assert!((r.details["sr_mixture[alpha=0.5]"] + 1.5).abs() < 1e-12);
        let alphas: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let r = check_randomization_invariance(&uniform(0.0, 10.0), &uniform(0.0, 4.0), &Utility::Hinge, 6.0, &alphas).unwrap();
        assert!(r.passed && !r.skipped, "{}", r.message);
        let r = check_randomization_invariance(&point(1.0), &point(-1.0), &Utility::Linear, 0.0, &[0.5]).unwrap();
        assert!(r.passed && r.skipped);
    }

    #[test]
    fn small_concentration_run() {
        let d = uniform(0.0, 10.0);
        let u = Utility::Hinge;
        let problem = SrProblem::for_distribution(&d, &u, 2.0, Bracket { lo: 0.0, hi: 10.0 }).unwrap();
        let setup = ConcentrationSetup {
            tail: TailSpec::SubGaussian { sigma: 5.0 },
            dist: &d,
            utility: &u,
            problem,
            n_grid: &[100, 1000],
            delta_grid: &[0.05, 0.1],
            trials: 200,
            seed: 17,
        };
        let out = run_concentration_suite(&setup).unwrap();
        assert_eq!(out.rows.len(), 800);
        assert_eq!(out.cells.len(), 4);
        assert!(out.report.passed, "{}", out.report.message);
        assert!(out.median_error_slope < -0.3 && out.median_error_slope > -0.7);
        assert_eq!(run_concentration_suite(&setup).unwrap(), out);
    }

    #[test]
    fn slope_fit() {
        let x = [0.0, 1.0, 2.0];
        assert!((fitted_slope(&x, &[1.0, 0.5, 0.0]) + 0.5).abs() < 1e-15);
        assert_eq!(median(&mut [3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    fn arb_dist() -> impl Strategy<Value = DistributionModel> {
        prop_oneof![
            (-5.0f64..5.0, 0.1f64..6.0).prop_map(|(lo, w)| uniform(lo, lo + w)),
            (-5.0f64..5.0, 0.1f64..3.0).prop_map(|(m, s)| DistributionModel::gaussian(m, s).unwrap()),
            (0.2f64..3.0).prop_map(|r| DistributionModel::exponential(r).unwrap()),
            (-5.0f64..5.0).prop_map(point),
            (proptest::collection::vec(-5.0f64..5.0, 1..5)).prop_map(|vs| {
                let p = 1.0 / vs.len() as f64;
                DistributionModel::discrete(vs.into_iter().map(|v| (v, p)).collect()).unwrap()
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn pseudolinear_on_random_pairs(f1 in arb_dist(), f2 in arb_dist(), lambda in 0.1f64..2.0) {
            for u in [Utility::Hinge, Utility::default()] {
                let r = check_pseudolinearity(&f1, &f2, &u, lambda, 21).unwrap();
                prop_assert!(r.passed, "{} {} {}: {}", f1, f2, u, r.message);
            }
        }
    }
}
