//! Infimum-crossing bisection for nonincreasing functions.
//!
//! Both the exact shortfall risk and its sample-average estimate are the
//! smallest `t` with `f(t) <= level` for a nonincreasing `f`. Flat segments
//! at the level are possible under the hinge, so the search keeps the
//! invariant `f(lo) > level >= f(hi)` and returns `hi`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UbsrError};

/// Largest half-width the bracket may be expanded to.
pub const EXPANSION_CAP: f64 = 1.152_921_504_606_847e18; // 2^60

const MAX_BISECTIONS: u32 = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(UbsrError::NonFinite(format!("bracket [{lo}, {hi}]")));
        }
        if lo >= hi {
            return Err(UbsrError::invalid(format!("bracket needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Bracket { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Crossing {
    pub value: f64,
    pub iterations: u32,
    pub expansions: u32,
    /// Bracket after expansion, before bisection.
    pub bracket: Bracket,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ExpansionFailure {
    /// `f(hi) > level` at the cap.
    AboveLevel { lo: f64, hi: f64, expansions: u32 },
    /// `f(lo) <= level` at the cap.
    BelowLevel { lo: f64, hi: f64, expansions: u32 },
}

pub(crate) enum SearchError {
    Expansion(ExpansionFailure),
    Fatal(UbsrError),
}

impl From<UbsrError> for SearchError {
    fn from(e: UbsrError) -> Self {
        SearchError::Fatal(e)
    }
}

fn checked(f: &mut impl FnMut(f64) -> f64, t: f64) -> Result<f64> {
    let v = f(t);
    if v.is_nan() {
        return Err(UbsrError::NonFinite(format!("function value at t = {t}")));
    }
    Ok(v)
}

/// Smallest `t` with `f(t) <= level`, to within `tol`.
///
/// The start bracket is doubled symmetrically about its center until
/// `f(lo) > level >= f(hi)` or the half-width exceeds [`EXPANSION_CAP`].
pub(crate) fn infimum_crossing(
    mut f: impl FnMut(f64) -> f64,
    level: f64,
    start: Bracket,
    tol: f64,
) -> std::result::Result<Crossing, SearchError> {
    let center = 0.5 * (start.lo + start.hi);
    let mut half = 0.5 * start.width();
    let (mut lo, mut hi) = (start.lo, start.hi);
    let mut expansions = 0u32;
    loop {
        let f_lo = checked(&mut f, lo)?;
        let f_hi = checked(&mut f, hi)?;
        if f_lo > level && f_hi <= level {
            break;
        }
        if half > EXPANSION_CAP {
            let failure = if f_hi > level {
                ExpansionFailure::AboveLevel { lo, hi, expansions }
            } else {
                ExpansionFailure::BelowLevel { lo, hi, expansions }
            };
            return Err(SearchError::Expansion(failure));
        }
        half *= 2.0;
        lo = center - half;
        hi = center + half;
        expansions += 1;
    }
    let bracket = Bracket { lo, hi };

    let mut iterations = 0;
    while hi - lo > tol && iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if checked(&mut f, mid)? <= level {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(Crossing {
        value: hi,
        iterations,
        expansions,
        bracket,
    })
}
