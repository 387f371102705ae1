//! Analytic loss distributions with exact `L_F(t) = E[ℓ(Z - t)]`.
//!
//! Linear and hinge utilities use closed forms for every kind (the Gaussian
//! hinge goes through the partial-expectation identity
//! `E[(Z - t)+] = σφ(d) + (μ - t)Φ(d)` with `d = (μ - t)/σ`). The smooth-hinge
//! blend is written as the hinge plus a correction supported on
//! `[t - τ, t + τ]`, which is integrated by adaptive Gauss–Kronrod on pieces
//! where the integrand is smooth.
//!
//! Grammar: `uniform:lo,hi`, `gauss:mu,sigma`, `exp:rate`, `point:z`,
//! `discrete:v1:p1,v2:p2,...` and `mix:w1*<spec>|w2*<spec>|...` (mixture
//! components cannot themselves be mixtures in the textual form).

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UbsrError};
use crate::quadrature;
use crate::rng;
use crate::root::{self, Bracket, ExpansionFailure, SearchError};
use crate::utility::Utility;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-13;
const EXACT_ROOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistributionModel {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
    PointMass(f64),
    FiniteDiscrete(Vec<(f64, f64)>),
    Mixture(Vec<(DistributionModel, f64)>),
}

/// i.i.d. draws together with the seed that produced them (if any).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVector {
    pub values: Vec<f64>,
    pub seed: Option<u64>,
}

impl SampleVector {
    pub fn new(values: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(UbsrError::invalid("sample vector must be nonempty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(UbsrError::NonFinite(format!("sample {i} is {}", values[i])));
        }
        Ok(SampleVector { values, seed })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_weights(what: &str, weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    let mut count = 0;
    for w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(UbsrError::invalid(format!("{what} weight {w} is not a probability")));
        }
        sum += w;
        count += 1;
    }
    if count == 0 {
        return Err(UbsrError::invalid(format!("{what} needs at least one component")));
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(UbsrError::invalid(format!("{what} weights sum to {sum}, not 1")));
    }
    Ok(())
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

impl DistributionModel {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = DistributionModel::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        let d = DistributionModel::Gaussian { mu, sigma };
        d.validate()?;
        Ok(d)
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        let d = DistributionModel::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn point(z: f64) -> Result<Self> {
        let d = DistributionModel::PointMass(z);
        d.validate()?;
        Ok(d)
    }

    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let d = DistributionModel::FiniteDiscrete(atoms);
        d.validate()?;
        Ok(d)
    }

    pub fn mixture(components: Vec<(DistributionModel, f64)>) -> Result<Self> {
        let d = DistributionModel::Mixture(components);
        d.validate()?;
        Ok(d)
    }

    /// `alpha·first + (1 - alpha)·second`.
    pub fn blend_of(first: &DistributionModel, second: &DistributionModel, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(UbsrError::invalid(format!("mixing weight {alpha} outside [0, 1]")));
        }
        DistributionModel::mixture(vec![(first.clone(), alpha), (second.clone(), 1.0 - alpha)])
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(UbsrError::NonFinite(format!("{name} = {v}")))
            }
        };
        match self {
            DistributionModel::Uniform { lo, hi } => {
                finite("lo", *lo)?;
                finite("hi", *hi)?;
                if lo >= hi {
                    return Err(UbsrError::invalid(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
                }
            }
            DistributionModel::Gaussian { mu, sigma } => {
                finite("mu", *mu)?;
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(UbsrError::invalid(format!("gaussian sigma must be positive, got {sigma}")));
                }
            }
            DistributionModel::Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(UbsrError::invalid(format!("exponential rate must be positive, got {rate}")));
                }
            }
            DistributionModel::PointMass(z) => finite("z", *z)?,
            DistributionModel::FiniteDiscrete(atoms) => {
                for (v, _) in atoms {
                    finite("atom", *v)?;
                }
                check_weights("discrete", atoms.iter().map(|a| a.1))?;
            }
            DistributionModel::Mixture(components) => {
                for (c, _) in components {
                    c.validate()?;
                }
                check_weights("mixture", components.iter().map(|c| c.1))?;
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistributionModel::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionModel::Gaussian { mu, .. } => *mu,
            DistributionModel::Exponential { rate } => 1.0 / rate,
            DistributionModel::PointMass(z) => *z,
            DistributionModel::FiniteDiscrete(atoms) => atoms.iter().map(|(v, p)| v * p).sum(),
            DistributionModel::Mixture(cs) => cs.iter().map(|(c, w)| w * c.mean()).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            DistributionModel::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            DistributionModel::Gaussian { sigma, .. } => sigma * sigma,
            DistributionModel::Exponential { rate } => 1.0 / (rate * rate),
            DistributionModel::PointMass(_) => 0.0,
            DistributionModel::FiniteDiscrete(atoms) => {
                let m = self.mean();
                atoms.iter().map(|(v, p)| p * (v - m).powi(2)).sum()
            }
            DistributionModel::Mixture(cs) => {
                let m = self.mean();
                let second: f64 = cs.iter().map(|(c, w)| w * (c.variance() + c.mean().powi(2))).sum();
                (second - m * m).max(0.0)
            }
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Essential supremum of the support (`+inf` when unbounded).
    pub fn sup(&self) -> f64 {
        match self {
            DistributionModel::Uniform { hi, .. } => *hi,
            DistributionModel::Gaussian { .. } | DistributionModel::Exponential { .. } => f64::INFINITY,
            DistributionModel::PointMass(z) => *z,
            DistributionModel::FiniteDiscrete(atoms) => atoms
                .iter()
                .filter(|a| a.1 > 0.0)
                .map(|a| a.0)
                .fold(f64::NEG_INFINITY, f64::max),
            DistributionModel::Mixture(cs) => cs
                .iter()
                .filter(|c| c.1 > 0.0)
                .map(|c| c.0.sup())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Mixture tree collapsed to a single level, dropping zero weights.
    pub fn flattened(&self) -> DistributionModel {
        match self {
            DistributionModel::Mixture(cs) => {
                let mut out = Vec::new();
                for (c, w) in cs {
                    if *w == 0.0 {
                        continue;
                    }
                    match c.flattened() {
                        DistributionModel::Mixture(inner) => {
                            out.extend(inner.into_iter().map(|(ic, iw)| (ic, iw * w)));
                        }
                        other => out.push((other, *w)),
                    }
                }
                DistributionModel::Mixture(out)
            }
            other => other.clone(),
        }
    }

    /// `L_F(t) = E[ℓ(Z - t)]`.
    pub fn expected_utility(&self, u: &Utility, t: f64) -> f64 {
        match self {
            DistributionModel::PointMass(z) => u.eval(z - t),
            DistributionModel::FiniteDiscrete(atoms) => atoms.iter().map(|(v, p)| p * u.eval(v - t)).sum(),
            DistributionModel::Mixture(cs) => cs
                .iter()
                .filter(|c| c.1 != 0.0)
                .map(|(c, w)| w * c.expected_utility(u, t))
                .sum(),
            continuous => {
                let c = Continuous::of(continuous);
                match *u {
                    Utility::Linear => c.mean() - t,
                    Utility::Hinge => c.partial_expectation(t),
                    Utility::SmoothHingeBlend { a, tau } => {
                        let correction = c.correction(t, tau, |x| {
                            if x <= 0.0 {
                                (x + tau) * (x + tau) / (4.0 * tau)
                            } else {
                                (x - tau) * (x - tau) / (4.0 * tau)
                            }
                        });
                        a * (c.mean() - t) + (1.0 - a) * (c.partial_expectation(t) + correction)
                    }
                }
            }
        }
    }

    /// `E[ℓ'(Z - t)]`, i.e. `-L_F'(t)` (right derivative for the hinge on atoms).
    pub fn expected_slope(&self, u: &Utility, t: f64) -> f64 {
        match self {
            DistributionModel::PointMass(z) => u.derivative(z - t),
            DistributionModel::FiniteDiscrete(atoms) => atoms.iter().map(|(v, p)| p * u.derivative(v - t)).sum(),
            DistributionModel::Mixture(cs) => cs
                .iter()
                .filter(|c| c.1 != 0.0)
                .map(|(c, w)| w * c.expected_slope(u, t))
                .sum(),
            continuous => {
                let c = Continuous::of(continuous);
                match *u {
                    Utility::Linear => 1.0,
                    Utility::Hinge => c.survival(t),
                    Utility::SmoothHingeBlend { a, tau } => {
                        let correction = c.correction(t, tau, |x| {
                            if x <= 0.0 {
                                (x + tau) / (2.0 * tau)
                            } else {
                                (x - tau) / (2.0 * tau)
                            }
                        });
                        a + (1.0 - a) * (c.survival(t) + correction)
                    }
                }
            }
        }
    }

    /// Exact shortfall risk `inf{t : L_F(t) <= λ}`.
    ///
    /// Closed forms cover the linear utility and the hinge on uniform,
    /// exponential and point-mass laws; everything else is located by
    /// bisection on [`expected_utility`](Self::expected_utility) starting from
    /// `[-1, 1]` and doubling outward up to `2^60`.
    pub fn ubsr_exact(&self, u: &Utility, lambda: f64) -> Result<f64> {
        if !lambda.is_finite() {
            return Err(UbsrError::NonFinite(format!("lambda = {lambda}")));
        }
        if let Some(v) = self.ubsr_closed_form(u, lambda)? {
            return Ok(v);
        }
        let start = Bracket { lo: -1.0, hi: 1.0 };
        match root::infimum_crossing(|t| self.expected_utility(u, t), lambda, start, EXACT_ROOT_TOL) {
            Ok(c) => Ok(c.value),
            Err(SearchError::Fatal(e)) => Err(e),
            Err(SearchError::Expansion(ExpansionFailure::AboveLevel { .. })) => Err(UbsrError::EmptyAcceptanceSet {
                lambda,
                cap: root::EXPANSION_CAP,
            }),
            Err(SearchError::Expansion(ExpansionFailure::BelowLevel { .. })) => {
                Err(UbsrError::UnboundedBelow { lambda })
            }
        }
    }

    fn ubsr_closed_form(&self, u: &Utility, lambda: f64) -> Result<Option<f64>> {
        let empty = || UbsrError::EmptyAcceptanceSet {
            lambda,
            cap: f64::INFINITY,
        };
        match u {
            Utility::Linear => Ok(Some(self.mean() - lambda)),
            Utility::Hinge => {
                // L_F >= 0, and L_F = 0 exactly from the top of the support onwards.
                if lambda < 0.0 {
                    return Err(empty());
                }
                if lambda == 0.0 {
                    let top = self.sup();
                    return if top.is_finite() { Ok(Some(top)) } else { Err(empty()) };
                }
                match *self {
                    DistributionModel::PointMass(z) => Ok(Some(z - lambda)),
                    DistributionModel::Uniform { lo, hi } => {
                        let width = hi - lo;
                        if lambda >= 0.5 * width {
                            Ok(Some(0.5 * (lo + hi) - lambda))
                        } else {
                            Ok(Some(hi - (2.0 * width * lambda).sqrt()))
                        }
                    }
                    DistributionModel::Exponential { rate } => {
                        if lambda * rate >= 1.0 {
                            Ok(Some(1.0 / rate - lambda))
                        } else {
                            Ok(Some(-(rate * lambda).ln() / rate))
                        }
                    }
                    _ => Ok(None),
                }
            }
            Utility::SmoothHingeBlend { .. } => Ok(None),
        }
    }

    /// One draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DistributionModel::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            DistributionModel::Gaussian { mu, sigma } => mu + sigma * rng.sample::<f64, _>(StandardNormal),
            DistributionModel::Exponential { rate } => rng.sample::<f64, _>(Exp1) / rate,
            DistributionModel::PointMass(z) => *z,
            DistributionModel::FiniteDiscrete(atoms) => {
                let idx = pick(rng, atoms.iter().map(|a| a.1));
                atoms[idx].0
            }
            DistributionModel::Mixture(cs) => {
                let idx = pick(rng, cs.iter().map(|c| c.1));
                cs[idx].0.draw(rng)
            }
        }
    }

    /// `n` i.i.d. draws, deterministic in `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleVector> {
        if n == 0 {
            return Err(UbsrError::invalid("sample size must be at least 1"));
        }
        let mut rng = rng::rng_for(seed);
        let values = (0..n).map(|_| self.draw(&mut rng)).collect();
        Ok(SampleVector {
            values,
            seed: Some(seed),
        })
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Absolutely continuous kinds, viewed through the primitives the closed
/// forms need.
enum Continuous {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
}

impl Continuous {
    fn of(d: &DistributionModel) -> Continuous {
        match *d {
            DistributionModel::Uniform { lo, hi } => Continuous::Uniform { lo, hi },
            DistributionModel::Gaussian { mu, sigma } => Continuous::Gaussian { mu, sigma },
            DistributionModel::Exponential { rate } => Continuous::Exponential { rate },
            _ => unreachable!("atoms and mixtures are handled by the caller"),
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            Continuous::Uniform { lo, hi } => 0.5 * (lo + hi),
            Continuous::Gaussian { mu, .. } => mu,
            Continuous::Exponential { rate } => 1.0 / rate,
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Continuous::Uniform { lo, hi } => (lo, hi),
            Continuous::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Continuous::Exponential { .. } => (0.0, f64::INFINITY),
        }
    }

    fn pdf(&self, z: f64) -> f64 {
        match *self {
            Continuous::Uniform { lo, hi } => {
                if (lo..=hi).contains(&z) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Continuous::Gaussian { mu, sigma } => std_normal_pdf((z - mu) / sigma) / sigma,
            Continuous::Exponential { rate } => {
                if z >= 0.0 {
                    rate * (-rate * z).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(Z > t)`.
    fn survival(&self, t: f64) -> f64 {
        match *self {
            Continuous::Uniform { lo, hi } => ((hi - t) / (hi - lo)).clamp(0.0, 1.0),
            Continuous::Gaussian { mu, sigma } => std_normal_cdf((mu - t) / sigma),
            Continuous::Exponential { rate } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-rate * t).exp()
                }
            }
        }
    }

    /// `E[(Z - t)+]`.
    fn partial_expectation(&self, t: f64) -> f64 {
        match *self {
            Continuous::Uniform { lo, hi } => {
                if t <= lo {
                    0.5 * (lo + hi) - t
                } else if t >= hi {
                    0.0
                } else {
                    (hi - t) * (hi - t) / (2.0 * (hi - lo))
                }
            }
            Continuous::Gaussian { mu, sigma } => {
                let d = (mu - t) / sigma;
                sigma * std_normal_pdf(d) + (mu - t) * std_normal_cdf(d)
            }
            Continuous::Exponential { rate } => {
                if t <= 0.0 {
                    1.0 / rate - t
                } else {
                    (-rate * t).exp() / rate
                }
            }
        }
    }

    /// `∫ g(z - t) f(z) dz` for a kernel `g` supported on `[-τ, τ]` that is
    /// smooth on each side of 0.
    fn correction(&self, t: f64, tau: f64, g: impl Fn(f64) -> f64) -> f64 {
        let (s_lo, s_hi) = self.support();
        let mut total = 0.0;
        for (a, b) in [(t - tau, t), (t, t + tau)] {
            let (a, b) = (a.max(s_lo), b.min(s_hi));
            if a < b {
                total += quadrature::integrate(|z| g(z - t) * self.pdf(z), a, b, QUAD_TOL);
            }
        }
        total
    }
}

fn parse_f64(what: &'static str, input: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| UbsrError::Parse {
        what,
        input: input.to_string(),
        reason: format!("bad number {s:?}: {e}"),
    })
}

fn parse_args<const N: usize>(input: &str, args: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = args.split(',').collect();
    if parts.len() != N {
        return Err(UbsrError::Parse {
            what: "distribution",
            input: input.to_string(),
            reason: format!("expected {N} comma-separated parameter(s), got {}", parts.len()),
        });
    }
    let mut out = [0.0; N];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = parse_f64("distribution", input, p)?;
    }
    Ok(out)
}

impl FromStr for DistributionModel {
    type Err = UbsrError;

    fn from_str(input: &str) -> Result<Self> {
        let s = input.trim();
        let err = |reason: String| UbsrError::Parse {
            what: "distribution",
            input: input.to_string(),
            reason,
        };
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| err("expected <kind>:<parameters>".to_string()))?;
        let model = match kind {
            "uniform" => {
                let [lo, hi] = parse_args(input, args)?;
                DistributionModel::Uniform { lo, hi }
            }
            "gauss" => {
                let [mu, sigma] = parse_args(input, args)?;
                DistributionModel::Gaussian { mu, sigma }
            }
            "exp" => {
                let [rate] = parse_args(input, args)?;
                DistributionModel::Exponential { rate }
            }
            "point" => {
                let [z] = parse_args(input, args)?;
                DistributionModel::PointMass(z)
            }
            "discrete" => {
                let atoms = args
                    .split(',')
                    .map(|atom| {
                        let (v, p) = atom
                            .split_once(':')
                            .ok_or_else(|| err(format!("atom {atom:?} is not value:prob")))?;
                        Ok((parse_f64("distribution", input, v)?, parse_f64("distribution", input, p)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                DistributionModel::FiniteDiscrete(atoms)
            }
            "mix" => {
                let components = args
                    .split('|')
                    .map(|part| {
                        let (w, spec) = part
                            .split_once('*')
                            .ok_or_else(|| err(format!("component {part:?} is not weight*<spec>")))?;
                        let inner: DistributionModel = spec.parse()?;
                        if matches!(inner, DistributionModel::Mixture(_)) {
                            return Err(err("nested mix: components are not supported".to_string()));
                        }
                        Ok((inner, parse_f64("distribution", input, w)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                DistributionModel::Mixture(components)
            }
            other => return Err(err(format!("unknown kind {other:?}"))),
        };
        model.validate().map_err(|e| err(e.to_string()))?;
        Ok(model)
    }
}

impl fmt::Display for DistributionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionModel::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            DistributionModel::Gaussian { mu, sigma } => write!(f, "gauss:{mu},{sigma}"),
            DistributionModel::Exponential { rate } => write!(f, "exp:{rate}"),
            DistributionModel::PointMass(z) => write!(f, "point:{z}"),
            DistributionModel::FiniteDiscrete(atoms) => {
                f.write_str("discrete:")?;
                for (i, (v, p)) in atoms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}:{p}")?;
                }
                Ok(())
            }
            DistributionModel::Mixture(_) => {
                let DistributionModel::Mixture(cs) = self.flattened() else {
                    unreachable!()
                };
                f.write_str("mix:")?;
                for (i, (c, w)) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    write!(f, "{w}*{c}")?;
                }
                Ok(())
            }
        }
    }
}

impl TryFrom<String> for DistributionModel {
    type Error = UbsrError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DistributionModel> for String {
    fn from(d: DistributionModel) -> String {
        d.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blend(a: f64, tau: f64) -> Utility {
        Utility::blend(a, tau).unwrap()
    }

    /// Brute-force `E[ℓ(Z - t)]` by composite Simpson on a wide grid.
    fn simpson_l(d: &DistributionModel, u: &Utility, t: f64) -> f64 {
        let c = Continuous::of(d);
        let (lo, hi) = match c.support() {
            (a, b) if a.is_finite() && b.is_finite() => (a, b),
            (a, _) if a.is_finite() => (a, a + 60.0 * c.mean()),
            _ => (c.mean() - 40.0 * d.std_dev(), c.mean() + 40.0 * d.std_dev()),
        };
        let n = 400_000;
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let z = lo + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * u.eval(z - t) * c.pdf(z);
        }
        acc * h / 3.0
    }

    #[test]
    fn lf_examples() {
        let u010 = DistributionModel::uniform(0.0, 10.0).unwrap();
        assert!((u010.expected_utility(&Utility::Hinge, 4.0) - 1.8).abs() < 1e-12);
        let p = DistributionModel::point(3.0).unwrap();
        assert_eq!(p.expected_utility(&Utility::Linear, 1.0), 2.0);
        let mix = DistributionModel::blend_of(&u010, &DistributionModel::uniform(10.0, 20.0).unwrap(), 0.5).unwrap();
        assert!((mix.expected_utility(&Utility::Hinge, 12.0) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn ubsr_examples() {
        let u010 = DistributionModel::uniform(0.0, 10.0).unwrap();
        let got = u010.ubsr_exact(&Utility::Hinge, 2.0).unwrap();
        assert!((got - (10.0 - 40f64.sqrt())).abs() < 1e-12);
        let u1020 = DistributionModel::uniform(10.0, 20.0).unwrap();
        let got = u1020.ubsr_exact(&Utility::Hinge, 2.0).unwrap();
        assert!((got - (20.0 - 40f64.sqrt())).abs() < 1e-12);
        for c in [-3.0, 0.0, 7.5] {
            for lambda in [-1.0, 0.0, 2.0] {
                let p = DistributionModel::point(c).unwrap();
                assert_eq!(p.ubsr_exact(&Utility::Linear, lambda).unwrap(), c - lambda);
            }
        }
    }

    #[test]
    fn closed_forms_agree_with_bisection_path() {
        // Mixtures take the bisection path; a one-component mixture must agree
        // with the closed form of its component.
        let cases = [
            (DistributionModel::uniform(0.0, 10.0).unwrap(), Utility::Hinge, 2.0),
            (DistributionModel::uniform(-3.0, 1.0).unwrap(), Utility::Hinge, 5.0),
            (DistributionModel::exponential(1.5).unwrap(), Utility::Hinge, 0.2),
            (DistributionModel::exponential(0.5).unwrap(), Utility::Hinge, 3.0),
            (DistributionModel::point(2.0).unwrap(), Utility::Hinge, 0.7),
            (DistributionModel::gaussian(1.0, 2.0).unwrap(), Utility::Linear, 0.3),
        ];
        for (d, u, lambda) in cases {
            let closed = d.ubsr_exact(&u, lambda).unwrap();
            let wrapped = DistributionModel::Mixture(vec![(d.clone(), 1.0)]);
            let bisected = wrapped.ubsr_exact(&u, lambda).unwrap();
            assert!((closed - bisected).abs() < 1e-9, "{d} {u}: {closed} vs {bisected}");
        }
    }

    #[test]
    fn gaussian_hinge_partial_expectation_matches_quadrature() {
        let d = DistributionModel::gaussian(0.5, 1.7).unwrap();
        for t in [-4.0, -1.0, 0.0, 0.5, 2.0, 6.0] {
            let exact = d.expected_utility(&Utility::Hinge, t);
            let brute = simpson_l(&d, &Utility::Hinge, t);
            assert!((exact - brute).abs() < 1e-7, "t={t}: {exact} vs {brute}");
        }
    }

    #[test]
    fn blend_matches_brute_force_integration() {
        let laws = [
            DistributionModel::uniform(0.0, 10.0).unwrap(),
            DistributionModel::uniform(-1.0, 0.5).unwrap(),
            DistributionModel::gaussian(1.0, 0.7).unwrap(),
            DistributionModel::exponential(1.0).unwrap(),
        ];
        let u = blend(0.3, 0.8);
        for d in &laws {
            for t in [-2.0, -0.3, 0.0, 0.4, 1.0, 3.0, 9.5] {
                let exact = d.expected_utility(&u, t);
                let brute = simpson_l(d, &u, t);
                assert!((exact - brute).abs() < 1e-7, "{d} t={t}: {exact} vs {brute}");
                // slope against a central difference of the exact value
                let h = 1e-5;
                let fd = -(d.expected_utility(&u, t + h) - d.expected_utility(&u, t - h)) / (2.0 * h);
                assert!((d.expected_slope(&u, t) - fd).abs() < 1e-7, "{d} slope at {t}");
            }
        }
    }

    #[test]
    fn mixture_is_linear_in_the_distribution() {
        let f1 = DistributionModel::gaussian(2.0, 1.0).unwrap();
        let f2 = DistributionModel::exponential(0.7).unwrap();
        for u in [Utility::Linear, Utility::Hinge, blend(0.6, 0.4)] {
            for alpha in [0.0, 0.25, 0.9, 1.0] {
                let mix = DistributionModel::blend_of(&f1, &f2, alpha).unwrap();
                for t in [-1.0, 0.5, 2.5] {
                    let lhs = mix.expected_utility(&u, t);
                    let rhs = alpha * f1.expected_utility(&u, t) + (1.0 - alpha) * f2.expected_utility(&u, t);
                    assert!((lhs - rhs).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn lf_is_monotone_in_t() {
        let laws: Vec<DistributionModel> = [
            "uniform:0,10",
            "gauss:0,1",
            "exp:2",
            "point:1",
            "discrete:0:0.2,1:0.5,4:0.3",
            "mix:0.3*uniform:0,1|0.7*exp:1",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
        for d in &laws {
            for u in [Utility::Linear, blend(0.5, 1.0)] {
                let vals: Vec<f64> = (0..200).map(|i| d.expected_utility(&u, -5.0 + 0.07 * i as f64)).collect();
                assert!(vals.windows(2).all(|w| w[1] < w[0]), "{d} {u} not strictly decreasing");
            }
            let vals: Vec<f64> = (0..200)
                .map(|i| d.expected_utility(&Utility::Hinge, -5.0 + 0.07 * i as f64))
                .collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{d} hinge increasing");
        }
    }

    #[test]
    fn hinge_edge_levels() {
        let u = DistributionModel::uniform(0.0, 10.0).unwrap();
        assert_eq!(u.ubsr_exact(&Utility::Hinge, 0.0).unwrap(), 10.0);
        assert!(matches!(
            u.ubsr_exact(&Utility::Hinge, -0.1),
            Err(UbsrError::EmptyAcceptanceSet { .. })
        ));
        let g = DistributionModel::gaussian(0.0, 1.0).unwrap();
        assert!(matches!(
            g.ubsr_exact(&Utility::Hinge, 0.0),
            Err(UbsrError::EmptyAcceptanceSet { .. })
        ));
        // Flat L_F at the level on a discrete law: infimum is the top atom.
        let d: DistributionModel = "discrete:0:0.5,3:0.5".parse().unwrap();
        assert_eq!(d.ubsr_exact(&Utility::Hinge, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn sampling_examples() {
        let p = DistributionModel::point(4.0).unwrap();
        assert_eq!(p.sample(3, 99).unwrap().values, vec![4.0; 3]);

        let u = DistributionModel::uniform(0.0, 10.0).unwrap();
        let s = u.sample(1_000_000, 1).unwrap();
        let mean = s.values.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 5.0).abs() < 0.02, "mean {mean}");

        let coin: DistributionModel = "mix:0.5*point:0|0.5*point:1".parse().unwrap();
        let s = coin.sample(100_000, 7).unwrap();
        let ones = s.values.iter().filter(|&&v| v == 1.0).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 0.01);

        assert_eq!(u.sample(10, 5).unwrap(), u.sample(10, 5).unwrap());
        assert_ne!(u.sample(10, 5).unwrap().values, u.sample(10, 6).unwrap().values);
        assert!(u.sample(0, 1).is_err());
    }

    #[test]
    fn monte_carlo_lf_converges() {
        let laws: Vec<DistributionModel> = ["uniform:0,10", "gauss:1,2", "exp:1", "mix:0.4*gauss:-1,1|0.6*uniform:0,3"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let u = blend(0.5, 1.0);
        let n = 20_000;
        for d in &laws {
            let t = d.mean();
            let exact = d.expected_utility(&u, t);
            let mut hits = 0;
            for seed in 0..40 {
                let s = d.sample(n, seed).unwrap();
                let mc = s.values.iter().map(|z| u.eval(z - t)).sum::<f64>() / n as f64;
                if (mc - exact).abs() <= 4.0 * u.lipschitz() * d.std_dev() / (n as f64).sqrt() {
                    hits += 1;
                }
            }
            assert!(hits >= 38, "{d}: {hits}/40");
        }
    }

    #[test]
    fn grammar_round_trip_and_errors() {
        for s in [
            "uniform:0,10",
            "gauss:-1.5,2",
            "exp:0.25",
            "point:3",
            "discrete:1:0.25,2:0.75",
            "mix:0.5*uniform:0,10|0.5*uniform:10,20",
        ] {
            let d: DistributionModel = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
            assert_eq!(d.to_string().parse::<DistributionModel>().unwrap(), d);
        }
        for bad in [
            "uniform:10,0",
            "gauss:0,-1",
            "exp:0",
            "discrete:1:0.5,2:0.4",
            "mix:0.5*point:0|0.6*point:1",
            "cauchy:0,1",
            "uniform:0",
            "point:abc",
            "nothing",
        ] {
            assert!(bad.parse::<DistributionModel>().is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn nested_mixtures_flatten_for_display() {
        let inner = DistributionModel::blend_of(&"point:0".parse().unwrap(), &"point:1".parse().unwrap(), 0.5).unwrap();
        let outer = DistributionModel::blend_of(&inner, &"uniform:0,1".parse().unwrap(), 0.5).unwrap();
        let text = outer.to_string();
        assert_eq!(text, "mix:0.25*point:0|0.25*point:1|0.5*uniform:0,1");
        let back: DistributionModel = text.parse().unwrap();
        let u = blend(0.5, 1.0);
        assert!((back.ubsr_exact(&u, 0.3).unwrap() - outer.ubsr_exact(&u, 0.3).unwrap()).abs() < 1e-12);
    }
}
