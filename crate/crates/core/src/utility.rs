//! Convex nondecreasing utilities `ℓ` applied to the excess loss `Z - t`.
//!
//! Three families are supported:
//!
//! * `Linear`: `ℓ(x) = x`, which turns the shortfall risk into `E[Z] - λ`.
//! * `Hinge`: `ℓ(x) = max(0, x)`. Only nondecreasing, so it is accepted by the
//!   estimator and the verification checks but rejected by the trainer.
//! * `SmoothHingeBlend { a, tau }`: `ℓ(x) = a·x + (1 - a)·h_τ(x)` where `h_τ`
//!   is the hinge with its kink replaced by a quadratic on `[-τ, τ]`. Strictly
//!   increasing with slope in `[a, 1]`, 1-Lipschitz, and `ℓ'(0) = (1 + a) / 2`.
//!
//! The textual grammar is `linear`, `hinge` or `blend:a=<r>,tau=<r>`; a bare
//! `blend` uses `a = 0.5, tau = 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UbsrError};

pub const DEFAULT_BLEND_A: f64 = 0.5;
pub const DEFAULT_BLEND_TAU: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Utility {
    Linear,
    Hinge,
    SmoothHingeBlend { a: f64, tau: f64 },
}

impl Default for Utility {
    fn default() -> Self {
        Utility::SmoothHingeBlend {
            a: DEFAULT_BLEND_A,
            tau: DEFAULT_BLEND_TAU,
        }
    }
}

impl Utility {
    /// Smooth-hinge blend with validated parameters, `a ∈ (0, 1]`, `tau > 0`.
    pub fn blend(a: f64, tau: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(UbsrError::invalid(format!("blend weight a must lie in (0, 1], got {a}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(UbsrError::invalid(format!("blend width tau must be positive, got {tau}")));
        }
        Ok(Utility::SmoothHingeBlend { a, tau })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Utility::Linear => x,
            Utility::Hinge => x.max(0.0),
            Utility::SmoothHingeBlend { a, tau } => a * x + (1.0 - a) * smooth_hinge(x, tau),
        }
    }

    /// `ℓ'(x)`; the hinge reports its right derivative at the kink.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Utility::Linear => 1.0,
            Utility::Hinge => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Utility::SmoothHingeBlend { a, tau } => a + (1.0 - a) * smooth_hinge_slope(x, tau),
        }
    }

    /// Global Lipschitz constant `G`.
    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    /// `U = ℓ'(0)` (right derivative for the hinge).
    pub fn slope_at_zero(&self) -> f64 {
        self.derivative(0.0)
    }

    /// Smallest slope of `ℓ` anywhere on the real line.
    pub fn min_slope(&self) -> f64 {
        match *self {
            Utility::Linear => 1.0,
            Utility::Hinge => 0.0,
            Utility::SmoothHingeBlend { a, .. } => a,
        }
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.min_slope() > 0.0
    }

    /// Points where `ℓ` is not twice differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            Utility::Linear => vec![],
            Utility::Hinge => vec![0.0],
            Utility::SmoothHingeBlend { tau, .. } => vec![-tau, tau],
        }
    }
}

/// `h_τ(x)`: zero below `-τ`, identity above `τ`, `(x + τ)² / 4τ` in between.
fn smooth_hinge(x: f64, tau: f64) -> f64 {
    if x <= -tau {
        0.0
    } else if x >= tau {
        x
    } else {
        (x + tau) * (x + tau) / (4.0 * tau)
    }
}

fn smooth_hinge_slope(x: f64, tau: f64) -> f64 {
    if x <= -tau {
        0.0
    } else if x >= tau {
        1.0
    } else {
        (x + tau) / (2.0 * tau)
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::Linear => f.write_str("linear"),
            Utility::Hinge => f.write_str("hinge"),
            Utility::SmoothHingeBlend { a, tau } => write!(f, "blend:a={a},tau={tau}"),
        }
    }
}

impl FromStr for Utility {
    type Err = UbsrError;

    fn from_str(s: &str) -> Result<Self> {
        let parse_err = |reason: String| UbsrError::Parse {
            what: "utility",
            input: s.to_string(),
            reason,
        };
        let s = s.trim();
        match s {
            "linear" => return Ok(Utility::Linear),
            "hinge" => return Ok(Utility::Hinge),
            "blend" => return Ok(Utility::default()),
            _ => {}
        }
        let Some(params) = s.strip_prefix("blend:") else {
            return Err(parse_err(
                "expected linear | hinge | blend:a=<r>,tau=<r>".to_string(),
            ));
        };
        let (mut a, mut tau) = (DEFAULT_BLEND_A, DEFAULT_BLEND_TAU);
        for kv in params.split(',').filter(|kv| !kv.trim().is_empty()) {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got {kv:?}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad number for {}: {e}", key.trim())))?;
            match key.trim() {
                "a" => a = value,
                "tau" => tau = value,
                other => return Err(parse_err(format!("unknown blend parameter {other:?}"))),
            }
        }
        Utility::blend(a, tau).map_err(|e| parse_err(e.to_string()))
    }
}

impl TryFrom<String> for Utility {
    type Error = UbsrError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Utility> for String {
    fn from(u: Utility) -> String {
        u.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half_blend() -> Utility {
        Utility::blend(0.5, 1.0).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Utility::Hinge.eval(-3.0), 0.0);
        assert_eq!(Utility::Linear.eval(2.5), 2.5);
        assert!((half_blend().eval(0.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(Utility::Hinge.derivative(5.0), 1.0);
        assert_eq!(Utility::Hinge.derivative(0.0), 1.0);
        assert_eq!(Utility::Linear.derivative(-7.0), 1.0);
        assert!((half_blend().derivative(0.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn constants() {
        let b = Utility::blend(0.3, 2.0).unwrap();
        assert_eq!(b.lipschitz(), 1.0);
        assert!((b.slope_at_zero() - (0.3 + 0.7 * 0.5)).abs() < 1e-15);
        assert!(b.is_strictly_increasing());
        assert!(Utility::Linear.is_strictly_increasing());
        assert!(!Utility::Hinge.is_strictly_increasing());
        assert_eq!(Utility::Hinge.slope_at_zero(), 1.0);
    }

    #[test]
    fn grammar() {
        assert_eq!("linear".parse::<Utility>().unwrap(), Utility::Linear);
        assert_eq!("hinge".parse::<Utility>().unwrap(), Utility::Hinge);
        assert_eq!(
            "blend:a=0.9,tau=0.5".parse::<Utility>().unwrap(),
            Utility::SmoothHingeBlend { a: 0.9, tau: 0.5 }
        );
        assert_eq!("blend".parse::<Utility>().unwrap(), Utility::default());
        assert!("blend:a=0,tau=1".parse::<Utility>().is_err());
        assert!("blend:a=0.5,tau=-1".parse::<Utility>().is_err());
        assert!("blend:b=1".parse::<Utility>().is_err());
        assert!("exp".parse::<Utility>().is_err());
        let u = Utility::blend(0.25, 3.5).unwrap();
        assert_eq!(u.to_string().parse::<Utility>().unwrap(), u);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let utilities = [Utility::Linear, Utility::Hinge, half_blend(), Utility::blend(0.1, 0.3).unwrap()];
        for u in utilities {
            let mut checked = 0;
            while checked < 1000 {
                let x: f64 = rng.random_range(-5.0..5.0);
                if u.kinks().iter().any(|k| (x - k).abs() < 1e-4) {
                    continue;
                }
                let h = 1e-6;
                let fd = (u.eval(x + h) - u.eval(x - h)) / (2.0 * h);
                let d = u.derivative(x);
                let rel = (fd - d).abs() / d.abs().max(1e-12);
                assert!(rel <= 1e-6 || (fd - d).abs() <= 1e-9, "{u} at {x}: fd {fd} vs {d}");
                checked += 1;
            }
        }
    }

    fn any_utility() -> impl Strategy<Value = Utility> {
        prop_oneof![
            Just(Utility::Linear),
            Just(Utility::Hinge),
            (0.01f64..=1.0, 0.01f64..5.0).prop_map(|(a, tau)| Utility::SmoothHingeBlend { a, tau }),
        ]
    }

    proptest! {
        #[test]
        fn monotone_convex_lipschitz(u in any_utility(), x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            prop_assert!(u.eval(lo) <= u.eval(hi));
            let mid = u.eval(0.5 * (x + y));
            prop_assert!(mid <= 0.5 * (u.eval(x) + u.eval(y)) + 1e-12);
            prop_assert!((u.eval(x) - u.eval(y)).abs() <= u.lipschitz() * (x - y).abs() + 1e-12);
            let d = u.derivative(x);
            prop_assert!((0.0..=u.lipschitz()).contains(&d));
        }

        #[test]
        fn sorted_inputs_give_sorted_outputs(u in any_utility(), mut xs in proptest::collection::vec(-20.0f64..20.0, 1..50)) {
            xs.sort_by(f64::total_cmp);
            let ys: Vec<f64> = xs.iter().map(|&x| u.eval(x)).collect();
            prop_assert!(ys.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
