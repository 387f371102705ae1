//! Sample-average estimation of the shortfall risk and the concentration
//! bounds that accompany it.
//!
//! With i.i.d. losses `z_1..z_n` the estimator is the infimum crossing of
//! `q_n(t) = (1/n) Σ ℓ(z_i - t) - λ`, i.e. the smallest `t` with
//! `q_n(t) <= 0`. Since `q_n` is nonincreasing (piecewise linear with kinks
//! under the hinge) the crossing is found by plain bisection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionModel;
use crate::error::{Result, UbsrError};
use crate::root::{self, Bracket, ExpansionFailure, SearchError};
use crate::utility::Utility;

/// One shortfall-risk instance: threshold `λ`, a bracket `[t_L, t_U]` and the
/// margin `η` with `q(t_L) >= η` and `q(t_U) <= -η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrProblem {
    pub lambda: f64,
    pub bracket: Bracket,
    pub eta: f64,
}

impl SrProblem {
    pub fn new(lambda: f64, t_lo: f64, t_hi: f64, eta: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(UbsrError::NonFinite(format!("lambda = {lambda}")));
        }
        let bracket = Bracket::new(t_lo, t_hi)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(UbsrError::invalid(format!("margin eta must be positive, got {eta}")));
        }
        Ok(SrProblem { lambda, bracket, eta })
    }

    /// Instance for a known law, with `η` computed from the exact `L_F` at
    /// the bracket ends. Fails if the bracket does not straddle the root.
    pub fn for_distribution(d: &DistributionModel, u: &Utility, lambda: f64, bracket: Bracket) -> Result<Self> {
        let above = d.expected_utility(u, bracket.lo) - lambda;
        let below = lambda - d.expected_utility(u, bracket.hi);
        let eta = above.min(below);
        if !(eta > 0.0) {
            return Err(UbsrError::invalid(format!(
                "bracket [{}, {}] has no positive margin (q(t_L) = {above}, -q(t_U) = {below})",
                bracket.lo, bracket.hi
            )));
        }
        SrProblem::new(lambda, bracket.lo, bracket.hi, eta)
    }

    /// `[SR - 2s, SR + 2s]` with `s` the standard deviation of the law
    /// (1 for degenerate laws).
    pub fn default_bracket(d: &DistributionModel, u: &Utility, lambda: f64) -> Result<Bracket> {
        let sr = d.ubsr_exact(u, lambda)?;
        let s = d.std_dev();
        let s = if s > 0.0 { s } else { 1.0 };
        Bracket::new(sr - 2.0 * s, sr + 2.0 * s)
    }

    /// Runs [`estimate_ubsr`] from this instance's bracket.
    pub fn estimate(&self, z: &[f64], u: &Utility, tol: Option<f64>) -> Result<Estimate> {
        estimate_ubsr(z, u, self.lambda, self.bracket, tol)
    }

    /// `(t_U - t_L) / η`, the factor converting a `q_n` deviation into a root deviation.
    pub fn spread(&self) -> f64 {
        self.bracket.width() / self.eta
    }
}

/// Tail certificate of the loss distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TailSpec {
    SubGaussian { sigma: f64 },
    /// `E[exp(|X| / K)] <= 2`.
    SubExponential { k: f64 },
}

impl TailSpec {
    /// Standard certificates: half the range for bounded laws, `2 / rate`
    /// for the exponential. `None` for kinds without one here.
    pub fn certified_for(d: &DistributionModel) -> Option<TailSpec> {
        match *d {
            DistributionModel::Uniform { lo, hi } => Some(TailSpec::SubGaussian { sigma: 0.5 * (hi - lo) }),
            DistributionModel::Exponential { rate } => Some(TailSpec::SubExponential { k: 2.0 / rate }),
            DistributionModel::Gaussian { sigma, .. } => Some(TailSpec::SubGaussian { sigma }),
            _ => None,
        }
    }

    pub fn bound(&self, lipschitz: f64, prob: &SrProblem, n: usize, delta: f64) -> Result<f64> {
        match *self {
            TailSpec::SubGaussian { sigma } => bound_subgaussian(lipschitz, sigma, prob, n, delta),
            TailSpec::SubExponential { k } => bound_subexponential(lipschitz, k, prob, n, delta),
        }
    }
}

impl fmt::Display for TailSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailSpec::SubGaussian { sigma } => write!(f, "subgauss:{sigma}"),
            TailSpec::SubExponential { k } => write!(f, "subexp:{k}"),
        }
    }
}

impl FromStr for TailSpec {
    type Err = UbsrError;

    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: String| UbsrError::Parse {
            what: "tail",
            input: s.to_string(),
            reason,
        };
        let (kind, value) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| err("expected subgauss:<sigma> or subexp:<K>".into()))?;
        let value: f64 = value.trim().parse().map_err(|e| err(format!("bad number: {e}")))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(err(format!("parameter must be positive, got {value}")));
        }
        match kind {
            "subgauss" => Ok(TailSpec::SubGaussian { sigma: value }),
            "subexp" => Ok(TailSpec::SubExponential { k: value }),
            other => Err(err(format!("unknown tail kind {other:?}"))),
        }
    }
}

impl TryFrom<String> for TailSpec {
    type Error = UbsrError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TailSpec> for String {
    fn from(t: TailSpec) -> String {
        t.to_string()
    }
}

/// `q_n(t) = (1/n) Σ ℓ(z_i - t) - λ`.
pub fn q_n(z: &[f64], u: &Utility, lambda: f64, t: f64) -> f64 {
    let sum: f64 = z.iter().map(|&zi| u.eval(zi - t)).sum();
    sum / z.len() as f64 - lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub iterations: u32,
    /// Number of symmetric doublings applied to the supplied bracket.
    pub expansions: u32,
    pub bracket_used: Bracket,
    pub q_at_estimate: f64,
}

/// `1e-9 · max(1, t_U - t_L)`.
pub fn default_tolerance(bracket: &Bracket) -> f64 {
    1e-9 * bracket.width().max(1.0)
}

/// `[min z - 1, max z + 1]`, a starting bracket when nothing better is known.
pub fn sample_bracket(z: &[f64]) -> Bracket {
    let (lo, hi) = z
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Bracket { lo: lo - 1.0, hi: hi + 1.0 }
}

/// Smallest `t` with `q_n(t) <= 0`, bisected to a bracket of width `tol`.
///
/// The supplied bracket is doubled symmetrically until `q_n(lo) > 0 >= q_n(hi)`.
/// The result satisfies `q_n(t̂) ∈ [-G·tol, 0]`.
pub fn estimate_ubsr(z: &[f64], u: &Utility, lambda: f64, bracket: Bracket, tol: Option<f64>) -> Result<Estimate> {
    if z.is_empty() {
        return Err(UbsrError::invalid("cannot estimate from an empty sample"));
    }
    if !lambda.is_finite() {
        return Err(UbsrError::NonFinite(format!("lambda = {lambda}")));
    }
    let tol = tol.unwrap_or_else(|| default_tolerance(&bracket));
    if !(tol > 0.0) {
        return Err(UbsrError::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let crossing = root::infimum_crossing(|t| q_n(z, u, lambda, t), 0.0, bracket, tol).map_err(|e| match e {
        SearchError::Fatal(e) => e,
        SearchError::Expansion(
            ExpansionFailure::AboveLevel { lo, hi, expansions } | ExpansionFailure::BelowLevel { lo, hi, expansions },
        ) => UbsrError::BracketFailure { lo, hi, expansions },
    })?;
    Ok(Estimate {
        estimate: crossing.value,
        iterations: crossing.iterations,
        expansions: crossing.expansions,
        bracket_used: crossing.bracket,
        q_at_estimate: q_n(z, u, lambda, crossing.value),
    })
}

fn check_bound_inputs(lipschitz: f64, param: f64, n: usize, delta: f64) -> Result<()> {
    if !(lipschitz > 0.0) || !(param > 0.0) {
        return Err(UbsrError::invalid("Lipschitz constant and tail parameter must be positive"));
    }
    if n == 0 {
        return Err(UbsrError::invalid("sample size must be at least 1"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(UbsrError::invalid(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

/// `2Gσ (t_U - t_L)/η · sqrt(log(1/δ)/n)`, holding with probability `1 - 2δ`.
pub fn bound_subgaussian(lipschitz: f64, sigma: f64, prob: &SrProblem, n: usize, delta: f64) -> Result<f64> {
    check_bound_inputs(lipschitz, sigma, n, delta)?;
    Ok(2.0 * lipschitz * sigma * prob.spread() * ((1.0 / delta).ln() / n as f64).sqrt())
}

/// `4eGK (t_U - t_L)/η · log(1/δ)/n`, holding with probability `1 - 2δ`.
pub fn bound_subexponential(lipschitz: f64, k: f64, prob: &SrProblem, n: usize, delta: f64) -> Result<f64> {
    check_bound_inputs(lipschitz, k, n, delta)?;
    Ok(4.0 * std::f64::consts::E * lipschitz * k * prob.spread() * (1.0 / delta).ln() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn est(z: &[f64], u: Utility, lambda: f64) -> f64 {
        estimate_ubsr(z, &u, lambda, sample_bracket(z), Some(1e-12)).unwrap().estimate
    }

    #[test]
    fn q_n_examples() {
        assert_eq!(q_n(&[1.0, 3.0], &Utility::Linear, 0.0, 0.0), 2.0);
        assert_eq!(q_n(&[0.0, 2.0], &Utility::Hinge, 0.5, 1.0), 0.0);
    }

    #[test]
    fn q_n_near_zero_at_the_true_root() {
        let d = DistributionModel::uniform(0.0, 10.0).unwrap();
        let z = d.sample(100_000, 3).unwrap();
        assert!(q_n(&z.values, &Utility::Hinge, 2.0, 3.6754).abs() < 0.05);
    }

    #[test]
    fn estimate_examples() {
        let z = vec![4.25; 17];
        assert!((est(&z, Utility::Linear, 1.5) - 2.75).abs() < 1e-11);
        assert!((est(&[0.0, 2.0], Utility::Hinge, 0.5) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn million_uniform_draws() {
        let d = DistributionModel::uniform(0.0, 10.0).unwrap();
        let z = d.sample(1_000_000, 1).unwrap();
        let e = estimate_ubsr(&z.values, &Utility::Hinge, 2.0, Bracket { lo: 0.0, hi: 10.0 }, Some(1e-8)).unwrap();
        assert!((e.estimate - (10.0 - 40f64.sqrt())).abs() < 0.02);
        assert!(e.q_at_estimate <= 0.0 && e.q_at_estimate >= -1e-8);
    }

    #[test]
    fn bracket_expands_and_reports() {
        let z = vec![100.0, 101.0];
        let e = estimate_ubsr(&z, &Utility::Linear, 0.0, Bracket { lo: -1.0, hi: 1.0 }, None).unwrap();
        assert!(e.expansions > 0);
        assert!(e.bracket_used.lo < 100.5 && e.bracket_used.hi > 100.5);
        assert!((e.estimate - 100.5).abs() < 1e-6);
    }

    #[test]
    fn hinge_failures() {
        // q_n >= -λ > 0 for a negative level: nothing is acceptable.
        let r = estimate_ubsr(&[1.0, 2.0], &Utility::Hinge, -0.5, Bracket { lo: 0.0, hi: 1.0 }, None);
        assert!(matches!(r, Err(UbsrError::BracketFailure { .. })));
        // λ = 0 under the hinge lands on the largest sample.
        assert!((est(&[1.0, 2.0, 7.0], Utility::Hinge, 0.0) - 7.0).abs() < 1e-11);
        assert!(estimate_ubsr(&[], &Utility::Hinge, 1.0, Bracket { lo: 0.0, hi: 1.0 }, None).is_err());
    }

    #[test]
    fn matches_exact_on_discrete_atoms() {
        let atoms = [(0.5, 0.25), (2.0, 0.25), (3.5, 0.25), (9.0, 0.25)];
        let d = DistributionModel::discrete(atoms.to_vec()).unwrap();
        let z: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        for u in [Utility::Linear, Utility::Hinge, Utility::blend(0.4, 0.7).unwrap()] {
            for lambda in [0.1, 0.8, 2.0] {
                let exact = d.ubsr_exact(&u, lambda).unwrap();
                assert!((est(&z, u, lambda) - exact).abs() < 1e-9, "{u} λ={lambda}");
            }
        }
    }

    #[test]
    fn bound_examples() {
        let prob = SrProblem::new(0.0, 0.0, 10.0, 1.0).unwrap();
        let b = bound_subgaussian(1.0, 1.0, &prob, 10_000, 0.05).unwrap();
        assert!((b - 20.0 * (20f64.ln() / 1e4).sqrt()).abs() < 1e-12);
        assert!((b - 0.34616).abs() < 1e-5);
        let quarter = bound_subgaussian(1.0, 1.0, &prob, 40_000, 0.05).unwrap();
        assert!((quarter - 0.5 * b).abs() < 1e-12);
        assert_eq!(bound_subgaussian(1.0, 1.0, &prob, 100, 1.0).unwrap(), 0.0);

        let b = bound_subexponential(1.0, 1.0, &prob, 1000, 0.05).unwrap();
        assert!((b - 40.0 * std::f64::consts::E * 20f64.ln() / 1e3).abs() < 1e-12);
        assert!((b - 0.32572).abs() < 1e-5);
        let half = bound_subexponential(1.0, 1.0, &prob, 2000, 0.05).unwrap();
        assert!((half - 0.5 * b).abs() < 1e-12);
        assert_eq!(bound_subexponential(1.0, 1.0, &prob, 100, 1.0).unwrap(), 0.0);

        assert!(bound_subgaussian(1.0, 1.0, &prob, 0, 0.05).is_err());
        assert!(bound_subgaussian(1.0, 1.0, &prob, 10, 0.0).is_err());
    }

    #[test]
    fn problem_margin_from_distribution() {
        let d = DistributionModel::uniform(0.0, 10.0).unwrap();
        let p = SrProblem::for_distribution(&d, &Utility::Hinge, 2.0, Bracket { lo: 0.0, hi: 10.0 }).unwrap();
        // L(0) = 5, L(10) = 0
        assert!((p.eta - 2.0).abs() < 1e-12);
        assert!((p.spread() - 5.0).abs() < 1e-12);
        assert!(SrProblem::for_distribution(&d, &Utility::Hinge, 2.0, Bracket { lo: 5.0, hi: 10.0 }).is_err());
        assert!(SrProblem::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(SrProblem::new(0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn tail_grammar() {
        assert_eq!("subgauss:5".parse::<TailSpec>().unwrap(), TailSpec::SubGaussian { sigma: 5.0 });
        assert_eq!("subexp:2".parse::<TailSpec>().unwrap(), TailSpec::SubExponential { k: 2.0 });
        assert!("subexp:-2".parse::<TailSpec>().is_err());
        assert!("heavy:1".parse::<TailSpec>().is_err());
        let d = DistributionModel::exponential(1.0).unwrap();
        assert_eq!(TailSpec::certified_for(&d), Some(TailSpec::SubExponential { k: 2.0 }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn translation_equivariant(z in proptest::collection::vec(-20.0f64..20.0, 1..40), shift in -50.0f64..50.0, lambda in 0.05f64..3.0) {
            for u in [Utility::Linear, Utility::Hinge, Utility::default()] {
                let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
                let a = est(&z, u, lambda);
                let b = est(&shifted, u, lambda);
                prop_assert!((b - a - shift).abs() < 1e-9, "{} vs {}", b - a, shift);
            }
        }

        #[test]
        fn monotone_in_lambda(z in proptest::collection::vec(-20.0f64..20.0, 1..40), l1 in 0.05f64..3.0, l2 in 0.05f64..3.0) {
            let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
            for u in [Utility::Linear, Utility::Hinge, Utility::default()] {
                prop_assert!(est(&z, u, hi) <= est(&z, u, lo) + 1e-11);
            }
        }

        #[test]
        fn q_n_nonincreasing(z in proptest::collection::vec(-20.0f64..20.0, 1..40), t1 in -30.0f64..30.0, t2 in -30.0f64..30.0) {
            let (a, b) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(q_n(&z, &Utility::Hinge, 0.3, b) <= q_n(&z, &Utility::Hinge, 0.3, a));
            if a < b {
                prop_assert!(q_n(&z, &Utility::default(), 0.3, b) < q_n(&z, &Utility::default(), 0.3, a));
            }
        }
    }
}
