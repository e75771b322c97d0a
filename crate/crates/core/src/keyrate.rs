//! Achievable key rates for BB84 under the flaw models of the balanced-attack
//! framework.
//!
//! Every rate has the shape `1 − H2(bit) − H2(phase)` (or a weighted variant
//! for tagging). Side conditions on validity become the `feasible` flag on
//! [`KeyRate`] so sweeps can cross them and read a zero rate instead of an
//! error.

use crate::entropy::{balance, balance_threshold, h2, h2_inv_low, Probability};
use crate::error::{Error, Result};
use std::f64::consts::{E, FRAC_PI_4};

/// Which analysis a [`FlawModel::RefinedBias`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinedMode {
    /// Basis-dependent but random detector losses: the phase error rate is the
    /// bit error rate with the basis weights swapped.
    BiasedEfficiency,
    /// Separate error rates per basis, `1 − H2(δ_Z) − H2(δ_X)`.
    PureRefined,
}

/// Device-imperfection scenarios, one variant per rate formula.
///
/// `delta` is always the bit error rate observed in the verification test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlawModel {
    BasisIndependent { delta: f64 },
    /// Generic attack that is `balance`-balanced.
    DeltaBalanced { delta: f64, balance: f64 },
    /// Individual source flaw with `sqrt F(ρ0, ρ1) > 1 − 2 eps_s`.
    SourceFlaw { delta: f64, eps_s: f64 },
    /// Individual oblivious attack with `¼‖U0 − U1‖²_sup < eps`.
    ObliviousIndividual { delta: f64, eps: f64 },
    /// Source and detector axes within `theta` radians of ideal.
    Misalignment { delta: f64, theta: f64 },
    /// Individual flaws in both source and detector, both bounded by `eps`.
    GenericIndividual { delta: f64, eps: f64 },
    /// Tagged fraction handled by the plain gap bound.
    TaggingSimple { delta: f64, tagged: f64 },
    /// Tagged fraction with privacy amplification on the untagged bits only.
    Tagging { delta: f64, tagged: f64 },
    /// Coherent superposition of tagging patterns; only the balanced bound applies.
    CoherentTagging { delta: f64, tagged: f64 },
    /// Adversarial removal of a fraction `removed` of detection events, after
    /// a fraction `random_loss` has been lost at random.
    TrojanPony {
        delta: f64,
        removed: f64,
        random_loss: f64,
    },
    /// Double clicks assigned a random bit, occurring a fraction `double_click` of the time.
    IlmDoubleClick { delta: f64, double_click: f64 },
    RefinedBias {
        delta_x: f64,
        delta_z: f64,
        p_x: f64,
        mode: RefinedMode,
    },
}

impl FlawModel {
    pub fn name(&self) -> &'static str {
        match self {
            FlawModel::BasisIndependent { .. } => "basis_independent",
            FlawModel::DeltaBalanced { .. } => "delta_balanced",
            FlawModel::SourceFlaw { .. } => "source_flaw",
            FlawModel::ObliviousIndividual { .. } => "oblivious_individual",
            FlawModel::Misalignment { .. } => "misalignment",
            FlawModel::GenericIndividual { .. } => "generic_individual",
            FlawModel::TaggingSimple { .. } => "tagging_simple",
            FlawModel::Tagging { .. } => "tagging",
            FlawModel::CoherentTagging { .. } => "coherent_tagging",
            FlawModel::TrojanPony { .. } => "trojan_pony",
            FlawModel::IlmDoubleClick { .. } => "ilm_double_click",
            FlawModel::RefinedBias { .. } => "refined",
        }
    }

    /// Check every field against its domain.
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &'static str, v: f64| Probability::named(name, v).map(|_| ());
        match *self {
            FlawModel::BasisIndependent { delta } => prob("delta", delta),
            FlawModel::DeltaBalanced { delta, balance } => {
                prob("delta", delta)?;
                prob("Delta", balance)
            }
            FlawModel::SourceFlaw { delta, eps_s } => {
                prob("delta", delta)?;
                prob("eps_s", eps_s)
            }
            FlawModel::ObliviousIndividual { delta, eps }
            | FlawModel::GenericIndividual { delta, eps } => {
                prob("delta", delta)?;
                prob("eps", eps)
            }
            FlawModel::Misalignment { delta, theta } => {
                prob("delta", delta)?;
                if (0.0..=FRAC_PI_4).contains(&theta) {
                    Ok(())
                } else {
                    Err(Error::Domain {
                        name: "theta",
                        value: theta,
                        domain: "[0, pi/4] radians",
                    })
                }
            }
            FlawModel::TaggingSimple { delta, tagged }
            | FlawModel::Tagging { delta, tagged }
            | FlawModel::CoherentTagging { delta, tagged } => {
                prob("delta", delta)?;
                prob("Delta", tagged)
            }
            FlawModel::TrojanPony {
                delta,
                removed,
                random_loss,
            } => {
                prob("delta", delta)?;
                prob("Delta", removed)?;
                prob("f_random", random_loss)
            }
            FlawModel::IlmDoubleClick {
                delta,
                double_click,
            } => {
                prob("delta", delta)?;
                prob("Delta", double_click)
            }
            FlawModel::RefinedBias {
                delta_x,
                delta_z,
                p_x,
                ..
            } => {
                prob("delta_x", delta_x)?;
                prob("delta_z", delta_z)?;
                prob("p_x", p_x)
            }
        }
    }

    /// The same model with its flaw parameter set to zero.
    pub fn without_flaw(&self) -> FlawModel {
        match *self {
            FlawModel::BasisIndependent { delta } => FlawModel::BasisIndependent { delta },
            FlawModel::DeltaBalanced { delta, .. } => FlawModel::DeltaBalanced { delta, balance: 0.0 },
            FlawModel::SourceFlaw { delta, .. } => FlawModel::SourceFlaw { delta, eps_s: 0.0 },
            FlawModel::ObliviousIndividual { delta, .. } => {
                FlawModel::ObliviousIndividual { delta, eps: 0.0 }
            }
            FlawModel::Misalignment { delta, .. } => FlawModel::Misalignment { delta, theta: 0.0 },
            FlawModel::GenericIndividual { delta, .. } => {
                FlawModel::GenericIndividual { delta, eps: 0.0 }
            }
            FlawModel::TaggingSimple { delta, .. } => FlawModel::TaggingSimple { delta, tagged: 0.0 },
            FlawModel::Tagging { delta, .. } => FlawModel::Tagging { delta, tagged: 0.0 },
            FlawModel::CoherentTagging { delta, .. } => {
                FlawModel::CoherentTagging { delta, tagged: 0.0 }
            }
            FlawModel::TrojanPony { delta, random_loss, .. } => FlawModel::TrojanPony {
                delta,
                removed: 0.0,
                random_loss,
            },
            FlawModel::IlmDoubleClick { delta, .. } => FlawModel::IlmDoubleClick {
                delta,
                double_click: 0.0,
            },
            FlawModel::RefinedBias { delta_z, mode, .. } => FlawModel::RefinedBias {
                delta_x: delta_z,
                delta_z,
                p_x: 0.5,
                mode,
            },
        }
    }

    /// Bit error rate the model carries (for the refined model, the sifted average).
    pub fn bit_error(&self) -> f64 {
        match *self {
            FlawModel::BasisIndependent { delta }
            | FlawModel::DeltaBalanced { delta, .. }
            | FlawModel::SourceFlaw { delta, .. }
            | FlawModel::ObliviousIndividual { delta, .. }
            | FlawModel::Misalignment { delta, .. }
            | FlawModel::GenericIndividual { delta, .. }
            | FlawModel::TaggingSimple { delta, .. }
            | FlawModel::Tagging { delta, .. }
            | FlawModel::CoherentTagging { delta, .. }
            | FlawModel::TrojanPony { delta, .. }
            | FlawModel::IlmDoubleClick { delta, .. } => delta,
            FlawModel::RefinedBias {
                delta_x,
                delta_z,
                p_x,
                ..
            } => p_x * delta_x + (1.0 - p_x) * delta_z,
        }
    }
}

/// Result of a rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRate {
    /// Formula value before clamping; may be negative.
    pub raw: f64,
    /// `max(raw, 0)` when feasible, otherwise 0.
    pub clamped: f64,
    /// Whether the formula's side condition holds.
    pub feasible: bool,
    /// Bit error rate entering the error-correction term.
    pub bit_error: Probability,
    /// Balance (or tag/removal fraction) the formula used.
    pub effective_delta: Probability,
    /// Phase error rate entering the privacy-amplification term (saturated at 1).
    pub effective_phase_rate: Probability,
}

impl KeyRate {
    fn new(bit: f64, delta_eff: f64, phase: f64, raw: f64, feasible: bool) -> Self {
        let clamped = if feasible { raw.max(0.0) } else { 0.0 };
        KeyRate {
            raw,
            clamped,
            feasible,
            bit_error: Probability::saturating(bit),
            effective_delta: Probability::saturating(delta_eff),
            effective_phase_rate: Probability::saturating(phase),
        }
    }
}

/// Privacy-amplification cost of a phase error rate. Past 1/2 the cost is a
/// full bit, so a bound beyond 1/2 cannot make the rate look better.
fn privacy_cost(phase: f64) -> f64 {
    h2(Probability::saturating(phase.min(0.5)))
}

fn check(name: &'static str, v: f64) -> Result<f64> {
    Probability::named(name, v).map(Probability::value)
}

/// `1 − 2 H2(δ)`, feasible for `δ < 1/2`.
pub fn rate_basis_independent(delta: Probability) -> KeyRate {
    let d = delta.value();
    KeyRate::new(d, 0.0, d, 1.0 - h2(delta) - h2(delta), d < 0.5)
}

/// `1 − H2(δ) − H2(δ + 2 f(Δ))`, feasible while the phase bound stays under 1/2.
pub fn rate_delta_balanced(delta: Probability, balance_param: Probability) -> Result<KeyRate> {
    let d = delta.value();
    if d > 0.5 {
        return Err(Error::Domain {
            name: "delta",
            value: d,
            domain: "[0, 1/2]",
        });
    }
    let f = balance(balance_param)?;
    let phase = d + 2.0 * f;
    let raw = 1.0 - h2(delta) - privacy_cost(phase);
    Ok(KeyRate::new(d, balance_param.value(), phase, raw, phase < 0.5))
}

/// Balanced rate that folds `Δ > 1/2` into an infeasible result with `f = 1/2`
/// instead of failing.
fn rate_delta_balanced_folded(delta: f64, balance_param: f64) -> Result<KeyRate> {
    if balance_param <= 0.5 && delta <= 0.5 {
        return rate_delta_balanced(Probability::saturating(delta), Probability::saturating(balance_param));
    }
    let phase = delta + 2.0 * balance_param.min(0.5);
    let raw = 1.0 - h2(Probability::saturating(delta)) - privacy_cost(phase);
    Ok(KeyRate::new(delta, balance_param, phase, raw, false))
}

/// `1 − H2(δ) − H2(δ + Δ)`, feasible for `δ + Δ ≤ 1/2`.
pub fn rate_tagging_simple(delta: Probability, tagged: Probability) -> KeyRate {
    let (d, t) = (delta.value(), tagged.value());
    let phase = d + t;
    let raw = 1.0 - h2(delta) - privacy_cost(phase);
    KeyRate::new(d, t, phase, raw, phase <= 0.5)
}

/// `(1−Δ) − H2(δ) − (1−Δ) H2(δ/(1−Δ))`, feasible for `δ/(1−Δ) < 1/2`.
pub fn rate_tagging(delta: Probability, tagged: Probability) -> KeyRate {
    let (d, t) = (delta.value(), tagged.value());
    let untagged = 1.0 - t;
    if untagged <= 0.0 {
        return KeyRate::new(d, t, 1.0, -h2(delta), false);
    }
    let phase = d / untagged;
    let raw = untagged - h2(delta) - untagged * privacy_cost(phase);
    KeyRate::new(d, t, phase, raw, phase < 0.5)
}

/// `1 − H2(δ) − H2(δ + Δ/(1−Δ))`, feasible while that phase rate is under 1/2.
pub fn rate_trojan_pony(delta: Probability, removed: Probability) -> KeyRate {
    let (d, r) = (delta.value(), removed.value());
    if r >= 1.0 {
        return KeyRate::new(d, r, 1.0, -h2(delta), false);
    }
    let phase = d + r / (1.0 - r);
    let raw = 1.0 - h2(delta) - privacy_cost(phase);
    KeyRate::new(d, r, phase, raw, phase < 0.5)
}

/// Overall detector efficiency `(1 − f)(1 − Δ)` when a fraction `f` is lost
/// at random and then a fraction `Δ` of the rest is removed adversarially.
pub fn pony_efficiency(random_loss: Probability, removed: Probability) -> f64 {
    (1.0 - random_loss.value()) * (1.0 - removed.value())
}

/// `1 − 2 H2((1−Δ)δ + Δ/2)`.
///
/// The sifted key here includes double clicks, so relative to
/// [`rate_trojan_pony`] the throughput carries an extra factor `(1−Δ)⁻¹`; see
/// [`ilm_throughput_factor`].
pub fn rate_ilm_double_click(delta: Probability, double_click: Probability) -> KeyRate {
    let (d, c) = (delta.value(), double_click.value());
    let err = (1.0 - c) * d + 0.5 * c;
    let raw = 1.0 - 2.0 * h2(Probability::saturating(err));
    KeyRate::new(err, c, err, raw, err <= 0.5)
}

/// Sifted-key enhancement of the double-click prescription over the pony
/// analysis, `(1 − Δ)⁻¹`. Infinite at `Δ = 1`.
pub fn ilm_throughput_factor(double_click: Probability) -> f64 {
    1.0 / (1.0 - double_click.value())
}

/// Refined per-basis analysis.
pub fn rate_refined(
    delta_x: Probability,
    delta_z: Probability,
    p_x: Probability,
    mode: RefinedMode,
) -> KeyRate {
    let (dx, dz, px) = (delta_x.value(), delta_z.value(), p_x.value());
    let pz = 1.0 - px;
    match mode {
        RefinedMode::BiasedEfficiency => {
            let bit = px * dx + pz * dz;
            let phase = px * dz + pz * dx;
            let raw = 1.0 - h2(Probability::saturating(bit)) - privacy_cost(phase);
            KeyRate::new(bit, 0.0, phase, raw, bit < 0.5 && phase < 0.5)
        }
        RefinedMode::PureRefined => {
            let raw = 1.0 - h2(delta_z) - privacy_cost(dx);
            KeyRate::new(dz, 0.0, dx, raw, dz < 0.5 && dx < 0.5)
        }
    }
}

/// Balance after a fraction `f_loss` of signals is dropped in the worst way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossAmplified {
    /// `Δ/(1 − f_loss)`, saturated at 1/2.
    pub delta: Probability,
    /// False when the amplified value exceeds 1/2 or `f_loss = 1`.
    pub feasible: bool,
}

pub fn loss_amplified_delta(balance_param: Probability, f_loss: Probability) -> LossAmplified {
    let kept = 1.0 - f_loss.value();
    if kept <= 0.0 {
        return LossAmplified {
            delta: Probability::HALF,
            feasible: false,
        };
    }
    let amplified = balance_param.value() / kept;
    LossAmplified {
        delta: Probability::saturating(amplified.min(0.5)),
        feasible: amplified <= 0.5,
    }
}

/// Reduction of a flaw model to an effective balance parameter.
///
/// Source flaw → `ε_s`; oblivious individual → `e·ε`; misalignment →
/// `e·sin²θ`; generic individual → `8√ε + 4ε`; coherent tagging → `Δ/2`.
/// Values past 1 saturate. Models with a dedicated formula are rejected.
pub fn effective_delta(model: &FlawModel) -> Result<Probability> {
    model.validate()?;
    let d = match *model {
        FlawModel::BasisIndependent { .. } => 0.0,
        FlawModel::DeltaBalanced { balance, .. } => balance,
        FlawModel::SourceFlaw { eps_s, .. } => eps_s,
        FlawModel::ObliviousIndividual { eps, .. } => E * eps,
        FlawModel::Misalignment { theta, .. } => E * theta.sin().powi(2),
        FlawModel::GenericIndividual { eps, .. } => 8.0 * eps.sqrt() + 4.0 * eps,
        FlawModel::CoherentTagging { tagged, .. } => 0.5 * tagged,
        FlawModel::TaggingSimple { .. }
        | FlawModel::Tagging { .. }
        | FlawModel::TrojanPony { .. }
        | FlawModel::IlmDoubleClick { .. }
        | FlawModel::RefinedBias { .. } => return Err(Error::UnsupportedModel(model.name())),
    };
    Ok(Probability::saturating(d))
}

/// Engineering margins applied on top of the asymptotic formulas.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateOptions {
    /// Added to every bit error rate and to every balance/tag/removal fraction.
    pub slack: f64,
    /// Fraction of signals lost before detection. Applied to the effective
    /// balance of the balanced-reducible models, after the model map.
    pub loss: f64,
}

/// Evaluate the rate for `model` with no margins.
pub fn rate(model: &FlawModel) -> Result<KeyRate> {
    rate_with(model, &RateOptions::default())
}

pub fn rate_with(model: &FlawModel, options: &RateOptions) -> Result<KeyRate> {
    model.validate()?;
    let slack = check("slack", options.slack)?;
    let loss = check("loss", options.loss)?;
    let pad = |v: f64| Probability::saturating(v + slack);

    match *model {
        FlawModel::TaggingSimple { delta, tagged } => Ok(rate_tagging_simple(pad(delta), pad(tagged))),
        FlawModel::Tagging { delta, tagged } => Ok(rate_tagging(pad(delta), pad(tagged))),
        FlawModel::TrojanPony { delta, removed, .. } => Ok(rate_trojan_pony(pad(delta), pad(removed))),
        FlawModel::IlmDoubleClick {
            delta,
            double_click,
        } => Ok(rate_ilm_double_click(pad(delta), pad(double_click))),
        FlawModel::RefinedBias {
            delta_x,
            delta_z,
            p_x,
            mode,
        } => Ok(rate_refined(pad(delta_x), pad(delta_z), Probability::saturating(p_x), mode)),
        FlawModel::BasisIndependent { delta } => Ok(rate_basis_independent(pad(delta))),
        _ => {
            let delta = pad(model.bit_error()).value();
            let padded = effective_delta(model)?.value() + slack;
            if loss == 0.0 {
                return rate_delta_balanced_folded(delta, padded);
            }
            let kept = 1.0 - loss;
            let amplified = if kept > 0.0 { padded / kept } else { f64::INFINITY };
            let mut r = rate_delta_balanced_folded(delta, amplified.min(1.0))?;
            if amplified > 0.5 {
                r.feasible = false;
                r.clamped = 0.0;
            }
            Ok(r)
        }
    }
}

/// Largest `x ∈ [lo, hi]` with `positive(x)`, assuming `positive` holds on
/// `[lo, x*)` and fails on `(x*, hi]`.
pub fn last_positive(lo: f64, hi: f64, positive: impl Fn(f64) -> bool) -> f64 {
    let (mut a, mut b) = (lo, hi);
    if positive(b) {
        return b;
    }
    while b - a > 1e-15 * b.abs().max(1e-300) {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if positive(m) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Bit error rate where `1 − 2 H2(δ)` reaches zero.
pub fn bb84_threshold() -> Probability {
    h2_inv_low(0.5).expect("1/2 is a valid entropy")
}

/// Largest balance parameter with a positive balanced rate at bit error `δ`.
pub fn balanced_threshold(delta: Probability) -> Probability {
    if delta.value() == 0.0 {
        return balance_threshold();
    }
    let x = last_positive(0.0, 0.5, |d| {
        rate_delta_balanced(delta, Probability::saturating(d)).map_or(false, |r| r.raw > 0.0)
    });
    Probability::saturating(x)
}

/// Largest misalignment angle (radians) with a positive rate at bit error `δ`.
pub fn misalignment_threshold(delta: Probability) -> f64 {
    last_positive(0.0, FRAC_PI_4, |theta| {
        rate(&FlawModel::Misalignment {
            delta: delta.value(),
            theta,
        })
        .map_or(false, |r| r.raw > 0.0 && r.feasible)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    #[test]
    fn basis_independent_examples() {
        assert_eq!(rate_basis_independent(p(0.0)).raw, 1.0);
        let r = rate_basis_independent(p(0.110_027_864_438_359_55));
        assert!(r.raw.abs() < 1e-4);
        let r = rate_basis_independent(p(0.05));
        assert!((r.raw - 0.427_206_085_768_087_7).abs() < 1e-12);
        assert!(!rate_basis_independent(p(0.6)).feasible);
    }

    #[test]
    fn effective_delta_maps() {
        let m = FlawModel::Misalignment { delta: 0.0, theta: 0.0 };
        assert_eq!(effective_delta(&m).unwrap().value(), 0.0);
        let theta = 0.010_633_5_f64.sqrt().asin();
        let m = FlawModel::Misalignment { delta: 0.0, theta };
        assert!((effective_delta(&m).unwrap().value() - 0.028_907).abs() < 1e-5);
        assert!((theta.to_degrees() - 5.92).abs() < 0.01);
        let g = FlawModel::GenericIndividual { delta: 0.0, eps: 1e-4 };
        assert!((effective_delta(&g).unwrap().value() - 0.0804).abs() < 1e-12);
        let s = FlawModel::SourceFlaw { delta: 0.0, eps_s: 0.003 };
        assert_eq!(effective_delta(&s).unwrap().value(), 0.003);
        let o = FlawModel::ObliviousIndividual { delta: 0.0, eps: 0.001 };
        assert!((effective_delta(&o).unwrap().value() - E * 0.001).abs() < 1e-15);
        let c = FlawModel::CoherentTagging { delta: 0.0, tagged: 0.02 };
        assert_eq!(effective_delta(&c).unwrap().value(), 0.01);
        for m in [
            FlawModel::Tagging { delta: 0.0, tagged: 0.1 },
            FlawModel::TrojanPony { delta: 0.0, removed: 0.1, random_loss: 0.0 },
            FlawModel::IlmDoubleClick { delta: 0.0, double_click: 0.1 },
            FlawModel::RefinedBias { delta_x: 0.0, delta_z: 0.0, p_x: 0.5, mode: RefinedMode::PureRefined },
        ] {
            assert!(matches!(effective_delta(&m), Err(Error::UnsupportedModel(_))));
        }
    }

    #[test]
    fn delta_balanced_examples() {
        let r = rate_delta_balanced(p(0.01), p(0.001)).unwrap();
        assert!((r.raw - 0.346_635_697_859_477_8).abs() < 1e-9, "{}", r.raw);
        assert!((r.raw - 0.3472).abs() < 1e-3);
        let r0 = rate_delta_balanced(p(0.07), p(0.0)).unwrap();
        assert_eq!(r0.raw, rate_basis_independent(p(0.07)).raw);
        let edge = rate_delta_balanced(p(0.0), p(0.0289)).unwrap();
        assert!(edge.raw.abs() < 1e-3 && edge.clamped < 1e-3);
        assert!(rate_delta_balanced(p(0.6), p(0.01)).is_err());
    }

    #[test]
    fn tagging_examples() {
        assert_eq!(rate_tagging_simple(p(0.03), p(0.0)).raw, rate_basis_independent(p(0.03)).raw);
        let r = rate_tagging_simple(p(0.05), p(0.1));
        assert!((r.raw - 0.103_762_738_167_643_4).abs() < 1e-12);
        assert!(rate_tagging_simple(p(0.0), p(0.5)).raw.abs() < 1e-15);

        assert_eq!(rate_tagging(p(0.03), p(0.0)).raw, rate_basis_independent(p(0.03)).raw);
        let r = rate_tagging(p(0.05), p(0.1));
        assert!((r.raw - 0.335_013_956_648_751_2).abs() < 1e-12);
        assert!((rate_tagging(p(0.0), p(0.3)).raw - 0.7).abs() < 1e-15);
        let dead = rate_tagging(p(0.05), p(1.0));
        assert!(!dead.feasible && dead.clamped == 0.0);
    }

    #[test]
    fn pony_and_ilm_examples() {
        assert_eq!(rate_trojan_pony(p(0.04), p(0.0)).raw, rate_basis_independent(p(0.04)).raw);
        let r = rate_trojan_pony(p(0.05), p(0.1));
        assert!((r.raw - 0.076_641_971_536_516_4).abs() < 1e-12);
        assert!(rate_trojan_pony(p(0.0), p(1.0 / 3.0)).raw.abs() < 1e-12);
        assert!(!rate_trojan_pony(p(0.0), p(1.0)).feasible);

        assert_eq!(rate_ilm_double_click(p(0.04), p(0.0)).raw, rate_basis_independent(p(0.04)).raw);
        let r = rate_ilm_double_click(p(0.05), p(0.1));
        assert!((r.raw - 0.094_114_903_625_433_5).abs() < 1e-12);
        let r = rate_ilm_double_click(p(0.0), p(1.0));
        assert_eq!((r.raw, r.clamped), (-1.0, 0.0));
        assert!((ilm_throughput_factor(p(0.2)) - 1.25).abs() < 1e-15);
        assert!((pony_efficiency(p(0.5), p(0.2)) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn refined_examples() {
        for px in [0.0, 0.3, 1.0] {
            for mode in [RefinedMode::BiasedEfficiency, RefinedMode::PureRefined] {
                let r = rate_refined(p(0.07), p(0.07), p(px), mode);
                assert!((r.raw - rate_basis_independent(p(0.07)).raw).abs() < 1e-15);
            }
        }
        let r = rate_refined(p(0.0), p(0.1), p(0.5), RefinedMode::BiasedEfficiency);
        assert!((r.bit_error.value() - 0.05).abs() < 1e-15);
        assert!((r.effective_phase_rate.value() - 0.05).abs() < 1e-15);
        assert!((r.raw - 0.427_206_085_768_087_7).abs() < 1e-12);
        let r = rate_refined(p(0.5), p(0.0), p(0.5), RefinedMode::PureRefined);
        assert_eq!(r.raw, 0.0);
    }

    #[test]
    fn loss_amplification() {
        assert_eq!(loss_amplified_delta(p(0.01), p(0.0)).delta.value(), 0.01);
        let a = loss_amplified_delta(p(0.01), p(0.5));
        assert!((a.delta.value() - 0.02).abs() < 1e-15 && a.feasible);
        let a = loss_amplified_delta(p(0.3), p(0.5));
        assert!(!a.feasible && a.delta.value() == 0.5);
        assert!(!loss_amplified_delta(p(0.01), p(1.0)).feasible);
    }

    #[test]
    fn dispatch_examples() {
        assert_eq!(rate(&FlawModel::BasisIndependent { delta: 0.0 }).unwrap().raw, 1.0);
        let m = FlawModel::Misalignment { delta: 0.0, theta: 5.92_f64.to_radians() };
        assert!(rate(&m).unwrap().clamped < 1e-3);
        let t = rate(&FlawModel::Tagging { delta: 0.05, tagged: 0.1 }).unwrap();
        assert!((t.raw - 0.3350).abs() < 1e-3);
        let bad = FlawModel::Misalignment { delta: 0.0, theta: 1.0 };
        assert!(rate(&bad).is_err());
        assert!(rate(&FlawModel::Tagging { delta: -0.1, tagged: 0.1 }).is_err());
    }

    #[test]
    fn saturated_balance_is_infeasible_not_an_error() {
        let r = rate(&FlawModel::ObliviousIndividual { delta: 0.01, eps: 0.5 }).unwrap();
        assert!(!r.feasible && r.clamped == 0.0);
    }

    #[test]
    fn loss_composes_after_model_map() {
        let opts = RateOptions { slack: 0.0, loss: 0.5 };
        let m = FlawModel::SourceFlaw { delta: 0.0, eps_s: 0.005 };
        let lossy = rate_with(&m, &opts).unwrap();
        let direct = rate_delta_balanced(p(0.0), p(0.01)).unwrap();
        assert!((lossy.raw - direct.raw).abs() < 1e-15);
        let m = FlawModel::SourceFlaw { delta: 0.0, eps_s: 0.3 };
        assert!(!rate_with(&m, &opts).unwrap().feasible);
    }

    #[test]
    fn slack_lowers_rate() {
        let m = FlawModel::Tagging { delta: 0.02, tagged: 0.05 };
        let plain = rate(&m).unwrap().raw;
        let padded = rate_with(&m, &RateOptions { slack: 0.005, loss: 0.0 }).unwrap().raw;
        assert!(padded < plain);
    }

    #[test]
    fn thresholds() {
        assert!((bb84_threshold().value() - 0.110_027_864_438_359_55).abs() < 1e-12);
        assert!((balanced_threshold(p(0.0)).value() - 0.0289).abs() < 1e-4);
        let t = balanced_threshold(p(0.02)).value();
        assert!(t > 0.0 && t < 0.0289);
        assert!((misalignment_threshold(p(0.0)).to_degrees() - 5.92).abs() < 0.01);
    }
}
