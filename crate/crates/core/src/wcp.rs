//! Weak coherent pulse sources over a lossy fiber.
//!
//! A phase-randomized coherent state is a Poisson mixture of photon-number
//! states. Every multi-photon signal is treated as tagged, so the tag fraction
//! among detected signals is `Δ = pM / pD` and the tagged-signal rate applies.

use crate::entropy::Probability;
use crate::error::{Error, Result};
use crate::keyrate::{rate_tagging, KeyRate};
use rayon::prelude::*;

/// A pulsed laser attenuated to mean photon number `mu`, firing at `nu` Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcpSource {
    pub mu: f64,
    pub nu: f64,
    /// Only phase-randomized pulses are supported; see [`budget`].
    pub phase_randomized: bool,
}

impl WcpSource {
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        let s = WcpSource {
            mu,
            nu,
            phase_randomized: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        positive("mu", self.mu)?;
        positive("nu", self.nu)
    }

    pub fn with_mu(self, mu: f64) -> Self {
        WcpSource { mu, ..self }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: v,
            domain: "(0, inf)",
        })
    }
}

/// Detector plus fiber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub eta_det: f64,
    pub alpha_db_per_km: f64,
    pub length_km: f64,
    /// Per-gate dark count probability.
    pub dark_prob: f64,
    /// Bit error rate of the optics alone.
    pub delta_intrinsic: f64,
    /// A measured detection probability that replaces the modeled one.
    pub detection_override: Option<f64>,
}

impl Link {
    /// A link with no fiber: the transmittance is just `eta`.
    pub fn direct(eta: f64, delta_intrinsic: f64) -> Result<Self> {
        Self::fiber(eta, 0.0, 0.0, 0.0, delta_intrinsic)
    }

    pub fn fiber(
        eta_det: f64,
        alpha_db_per_km: f64,
        length_km: f64,
        dark_prob: f64,
        delta_intrinsic: f64,
    ) -> Result<Self> {
        let l = Link {
            eta_det,
            alpha_db_per_km,
            length_km,
            dark_prob,
            delta_intrinsic,
            detection_override: None,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        Probability::named("eta_det", self.eta_det)?;
        nonnegative("alpha_db_per_km", self.alpha_db_per_km)?;
        nonnegative("length_km", self.length_km)?;
        if !(0.0..1.0).contains(&self.dark_prob) {
            return Err(Error::Domain {
                name: "dark_prob",
                value: self.dark_prob,
                domain: "[0, 1)",
            });
        }
        if !(0.0..=0.5).contains(&self.delta_intrinsic) {
            return Err(Error::Domain {
                name: "delta_intrinsic",
                value: self.delta_intrinsic,
                domain: "[0, 1/2]",
            });
        }
        if let Some(pd) = self.detection_override {
            Probability::named("pD", pd)?;
        }
        Ok(())
    }

    pub fn with_length(self, length_km: f64) -> Self {
        Link { length_km, ..self }
    }

    pub fn with_dark(self, dark_prob: f64) -> Self {
        Link { dark_prob, ..self }
    }

    pub fn with_detection_override(self, pd: f64) -> Self {
        Link {
            detection_override: Some(pd),
            ..self
        }
    }

    /// `η = eta_det · 10^(−α L / 10)`.
    pub fn transmittance(&self) -> f64 {
        self.eta_det * 10f64.powf(-self.alpha_db_per_km * self.length_km / 10.0)
    }
}

fn nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: v,
            domain: "[0, inf)",
        })
    }
}

/// Vacuum, single-photon and multi-photon probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonStats {
    pub p0: f64,
    pub p1: f64,
    pub p_m: f64,
}

/// Exact Poisson photon-number probabilities.
///
/// `pM = 1 − e^−μ(1 + μ)` loses all precision for small `μ`, so below 1/2 it
/// is summed as `e^−μ Σ_{k≥2} μ^k / k!`.
pub fn photon_stats(mu: f64) -> Result<PhotonStats> {
    positive("mu", mu)?;
    let p0 = (-mu).exp();
    let p1 = mu * p0;
    let p_m = if mu < 0.5 {
        let mut term = mu * mu / 2.0;
        let mut sum = 0.0;
        let mut k = 2.0;
        while term > sum * 1e-18 {
            sum += term;
            k += 1.0;
            term *= mu / k;
        }
        sum * p0
    } else {
        1.0 - p0 * (1.0 + mu)
    };
    Ok(PhotonStats { p0, p1, p_m })
}

/// `pD = η (1 − e^−μ) + dark · e^−μ`, or the link's override.
pub fn detection_prob(mu: f64, link: &Link) -> Result<f64> {
    positive("mu", mu)?;
    if let Some(pd) = link.detection_override {
        return Ok(pd);
    }
    let eta = link.transmittance();
    Ok(eta * -(-mu).exp_m1() + link.dark_prob * (-mu).exp())
}

/// `Δ = pM / pD`, saturated at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagFraction {
    pub delta: Probability,
    /// `pM / pD` exceeded 1 and was clamped; such a link yields no key.
    pub clamped: bool,
}

pub fn tag_fraction(mu: f64, link: &Link) -> Result<TagFraction> {
    let stats = photon_stats(mu)?;
    let pd = detection_prob(mu, link)?;
    tag_fraction_from(stats.p_m, pd)
}

fn tag_fraction_from(p_m: f64, pd: f64) -> Result<TagFraction> {
    if pd <= 0.0 {
        return Err(Error::ZeroDetection);
    }
    let ratio = p_m / pd;
    Ok(TagFraction {
        delta: Probability::saturating(ratio),
        clamped: ratio > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcpBudget {
    pub mu: f64,
    pub eta: f64,
    pub p0: f64,
    pub p1: f64,
    pub p_m: f64,
    pub p_d: f64,
    pub delta_tag: Probability,
    pub tag_clamped: bool,
    pub delta_bits: Probability,
    pub sifted_rate_hz: f64,
    pub final_rate: KeyRate,
    pub throughput_hz: f64,
}

/// Full link budget at the source's `μ`.
///
/// Dark counts fire only on vacuum and give a random bit, which adds
/// `½ · dark · e^−μ / pD` to the bit error rate.
pub fn budget(source: &WcpSource, link: &Link) -> Result<WcpBudget> {
    if !source.phase_randomized {
        return Err(Error::NonRandomPhase);
    }
    source.validate()?;
    link.validate()?;
    let stats = photon_stats(source.mu)?;
    let pd = detection_prob(source.mu, link)?;
    let tag = tag_fraction_from(stats.p_m, pd)?;
    let dark_errors = 0.5 * link.dark_prob * stats.p0 / pd;
    let delta_bits = Probability::saturating(link.delta_intrinsic + dark_errors);
    let mut final_rate = rate_tagging(delta_bits, tag.delta);
    if tag.clamped {
        final_rate = KeyRate { clamped: 0.0, feasible: false, ..final_rate };
    }
    let sifted_rate_hz = 0.5 * source.nu * pd;
    Ok(WcpBudget {
        mu: source.mu,
        eta: link.transmittance(),
        p0: stats.p0,
        p1: stats.p1,
        p_m: stats.p_m,
        p_d: pd,
        delta_tag: tag.delta,
        tag_clamped: tag.clamped,
        delta_bits,
        sifted_rate_hz,
        final_rate,
        throughput_hz: sifted_rate_hz * final_rate.clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuOptimum {
    pub mu: f64,
    pub budget: WcpBudget,
    /// False when the coarse scan saw more than one local maximum.
    pub unimodal: bool,
    /// False when no scanned `μ` gives positive throughput.
    pub feasible: bool,
}

const SCAN_POINTS: usize = 200;
const GOLDEN_REL_TOL: f64 = 1e-6;

/// Intensity maximizing throughput on `mu_range`.
///
/// A log-spaced coarse scan locates the best grid point and counts local
/// maxima; golden-section search then refines between its neighbours.
pub fn optimize_mu(nu: f64, link: &Link, mu_range: (f64, f64)) -> Result<MuOptimum> {
    let (lo, hi) = mu_range;
    positive("mu_min", lo)?;
    positive("mu_max", hi)?;
    if hi <= lo {
        return Err(Error::Domain {
            name: "mu_max",
            value: hi,
            domain: "(mu_min, inf)",
        });
    }
    let through = |mu: f64| -> Result<f64> {
        Ok(budget(&WcpSource::new(mu, nu)?, link)?.throughput_hz)
    };
    let ratio = (hi / lo).ln();
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo * (ratio * i as f64 / (SCAN_POINTS - 1) as f64).exp())
        .collect();
    let values = grid.iter().map(|&m| through(m)).collect::<Result<Vec<_>>>()?;
    let (best, &top) = values
        .iter()
        .enumerate()
        .fold((0, &values[0]), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    let peaks = (0..values.len())
        .filter(|&i| {
            let left = i == 0 || values[i] > values[i - 1];
            let right = i + 1 == values.len() || values[i] >= values[i + 1];
            values[i] > 0.0 && left && right
        })
        .count();
    if top <= 0.0 {
        let b = budget(&WcpSource::new(grid[0], nu)?, link)?;
        return Ok(MuOptimum {
            mu: grid[0],
            budget: b,
            unimodal: true,
            feasible: false,
        });
    }

    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (through(x1)?, through(x2)?);
    while b - a > GOLDEN_REL_TOL * 0.5 * (a + b) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = through(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = through(x1)?;
        }
    }
    let mut mu = 0.5 * (a + b);
    if through(mu)? < top {
        mu = grid[best];
    }
    Ok(MuOptimum {
        mu,
        budget: budget(&WcpSource::new(mu, nu)?, link)?,
        unimodal: peaks <= 1,
        feasible: true,
    })
}

/// The `μ` at which the tag fraction equals `target` on this link.
/// `Δ(μ)` is increasing, so plain bisection suffices.
pub fn mu_for_tag_fraction(link: &Link, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain {
            name: "Delta",
            value: target,
            domain: "(0, 1)",
        });
    }
    let delta = |mu: f64| -> Result<f64> {
        let stats = photon_stats(mu)?;
        Ok(stats.p_m / detection_prob(mu, link)?)
    };
    let (mut lo, mut hi) = (1e-12, 1.0);
    while delta(hi)? < target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Domain {
                name: "Delta",
                value: target,
                domain: "reachable tag fractions of this link",
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delta(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One budget per fiber length. With `optimize` set, `μ` is re-optimized on
/// that range at every length; otherwise the source's `μ` is used throughout.
pub fn rate_vs_distance(
    source: &WcpSource,
    link_template: &Link,
    lengths: &[f64],
    optimize: Option<(f64, f64)>,
) -> Result<Vec<WcpBudget>> {
    for w in lengths.windows(2) {
        if w[1] < w[0] {
            return Err(Error::Domain {
                name: "length_km",
                value: w[1],
                domain: "sorted ascending",
            });
        }
    }
    lengths
        .par_iter()
        .map(|&len| {
            let link = link_template.with_length(len);
            link.validate()?;
            match optimize {
                Some(range) => optimize_mu(source.nu, &link, range).map(|o| o.budget),
                None => budget(source, &link),
            }
        })
        .collect()
}
