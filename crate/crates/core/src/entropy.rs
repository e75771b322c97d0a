//! Binary entropy, its low-branch inverse, and the balance function `f(Δ)`.
//!
//! `f(Δ)` is the unique `f ∈ [0, 1/2]` with `H2(1/2 − f) + H2(Δ) = 1`. It bounds
//! how far the phase error rate can drift from the bit error rate when the
//! basis choice is only `Δ`-balanced, and every flawed-device rate in
//! [`crate::keyrate`] funnels through it.

use crate::error::{Error, Result};
use std::fmt;

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const HALF: Probability = Probability(0.5);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        Self::named("probability", value)
    }

    /// Like [`Probability::new`] but the domain error carries `name`.
    pub fn named(name: &'static str, value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::Domain {
                name,
                value,
                domain: "[0, 1]",
            })
        }
    }

    /// Clamp any finite value into `[0, 1]`. NaN maps to 0.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Probability(0.0)
        } else {
            Probability(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Self {
        Probability(1.0 - self.0)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Binary entropy in bits. The endpoints return exactly 0.
pub fn h2(p: Probability) -> f64 {
    let p = p.value();
    if p == 0.0 || p == 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// `h2` on a raw float, rejecting values outside `[0, 1]`.
pub fn h2_checked(p: f64) -> Result<f64> {
    Probability::named("p", p).map(h2)
}

/// Absolute tolerance on the argument for the bisection in [`h2_inv_low`].
pub const INVERSE_TOLERANCE: f64 = 1e-12;

/// The unique `p ∈ [0, 1/2]` with `h2(p) = y`.
///
/// Bracketed bisection on `[0, 1/2]`, where `h2` is strictly increasing. The
/// bracket is halved until its width drops under [`INVERSE_TOLERANCE`] and the
/// endpoint near zero keeps going until the width is also below the midpoint's
/// own resolution, so tiny `y` still get a small entropy residual.
pub fn h2_inv_low(y: f64) -> Result<Probability> {
    Ok(h2_inv_low_counted(y)?.0)
}

fn h2_inv_low_counted(y: f64) -> Result<(Probability, usize)> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain {
            name: "y",
            value: y,
            domain: "[0, 1]",
        });
    }
    if y == 0.0 {
        return Ok((Probability::ZERO, 0));
    }
    if y == 1.0 {
        return Ok((Probability::HALF, 0));
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h2(Probability(mid)) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if hi - lo <= INVERSE_TOLERANCE && hi - lo <= 1e-6 * lo {
            break;
        }
    }
    Ok((Probability(0.5 * (lo + hi)), iterations))
}

/// Solution of the balance equation together with its quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceResult {
    /// `f(Δ) ∈ [0, 1/2]`.
    pub f_value: f64,
    /// `h2(1/2 − f) + h2(Δ) − 1`.
    pub residual: f64,
    /// Bisection steps spent on the inverse.
    pub iterations: usize,
}

/// Solve `h2(1/2 − f) + h2(Δ) = 1` for `f`. `Δ` must lie in `[0, 1/2]`.
pub fn f_of_delta(delta: Probability) -> Result<BalanceResult> {
    let d = delta.value();
    if d > 0.5 {
        return Err(Error::Domain {
            name: "Delta",
            value: d,
            domain: "[0, 1/2]",
        });
    }
    let target = 1.0 - h2(delta);
    let (p, iterations) = h2_inv_low_counted(target.clamp(0.0, 1.0))?;
    let f_value = 0.5 - p.value();
    let residual = h2(Probability(0.5 - f_value)) + h2(delta) - 1.0;
    Ok(BalanceResult {
        f_value,
        residual,
        iterations,
    })
}

/// Shorthand for `f_of_delta(Δ).f_value`.
pub fn balance(delta: Probability) -> Result<f64> {
    f_of_delta(delta).map(|r| r.f_value)
}

/// The `Δ ∈ [0, 1/2]` with `f(Δ) = f`, i.e. the inverse of the balance function.
pub fn delta_for_balance(f: f64) -> Result<Probability> {
    if !(0.0..=0.5).contains(&f) {
        return Err(Error::Domain {
            name: "f",
            value: f,
            domain: "[0, 1/2]",
        });
    }
    h2_inv_low(1.0 - h2(Probability(0.5 - f)))
}

/// The two closed-form upper bounds on `f(Δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceBounds {
    /// `sqrt((ln 2 / 2) · H2(Δ))`.
    pub quadratic_bound: f64,
    /// `sqrt((Δ / 2) · ln(e / Δ))`, 0 at `Δ = 0` by continuity.
    pub sqrt_bound: f64,
}

pub fn f_upper_bounds(delta: Probability) -> BalanceBounds {
    let d = delta.value();
    let quadratic_bound = (0.5 * std::f64::consts::LN_2 * h2(delta)).sqrt();
    let sqrt_bound = if d == 0.0 {
        0.0
    } else {
        (0.5 * d * (1.0 - d.ln())).sqrt()
    };
    BalanceBounds {
        quadratic_bound,
        sqrt_bound,
    }
}

/// The largest `Δ` for which `2 f(Δ) < 1/2`, the point where the balanced
/// rate at zero bit error rate hits zero.
pub fn balance_threshold() -> Probability {
    delta_for_balance(0.25).expect("1/4 lies in the domain")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    #[test]
    fn probability_rejects_out_of_range() {
        assert!(Probability::new(-1e-18).is_err());
        assert!(Probability::new(1.0 + 1e-15).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert_eq!(Probability::saturating(1.7).value(), 1.0);
    }

    #[test]
    fn h2_examples() {
        assert_eq!(h2(p(0.5)), 1.0);
        assert_eq!(h2(p(0.0)), 0.0);
        assert_eq!(h2(p(1.0)), 0.0);
        assert!((h2(p(0.25)) - 0.811_278_124_459_132_9).abs() < 1e-12);
        assert!(h2_checked(1.5).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(h2_inv_low(1.0).unwrap().value(), 0.5);
        assert_eq!(h2_inv_low(0.0).unwrap().value(), 0.0);
        let x = h2_inv_low(0.5).unwrap().value();
        assert!((x - 0.110_027_864_438_359_55).abs() < 1e-12);
        assert!(h2_inv_low(-0.1).is_err());
        assert!(h2_inv_low(1.1).is_err());
    }

    #[test]
    fn balance_examples() {
        assert_eq!(balance(p(0.0)).unwrap(), 0.0);
        assert_eq!(balance(p(0.5)).unwrap(), 0.5);
        let f = balance(p(0.01)).unwrap();
        assert!((f - 0.165_752_927_652_401).abs() < 1e-10);
        assert!(f <= f_upper_bounds(p(0.01)).sqrt_bound);
        assert!(f_of_delta(p(0.51)).is_err());
    }

    #[test]
    fn threshold_is_near_0289() {
        let t = balance_threshold().value();
        assert!((t - 0.028_875_709_265_554).abs() < 1e-10, "{t}");
    }

    #[test]
    fn bounds_examples() {
        let b = f_upper_bounds(p(0.01));
        assert!((b.sqrt_bound - 0.167_409_231_913_716).abs() < 1e-12);
        let b = f_upper_bounds(p(0.5));
        assert!((b.quadratic_bound - 0.588_705_011_257_737).abs() < 1e-12);
        let b = f_upper_bounds(p(0.0));
        assert_eq!((b.quadratic_bound, b.sqrt_bound), (0.0, 0.0));
    }

    #[test]
    fn residual_small_near_half() {
        for d in [0.5 - 1e-9, 0.5 - 5e-5, 0.499, 1e-300, 1e-12] {
            let r = f_of_delta(p(d)).unwrap();
            assert!(r.residual.abs() < 1e-10, "Δ={d} residual {}", r.residual);
        }
    }
}
