//! Monte Carlo of the entanglement-based protocol under concrete attacks.
//!
//! Each pair ends up in a two-qubit state determined by the scenario and the
//! basis. A Bell measurement of that state gives both error indicators at
//! once: in a Z round a bit error is `Z⊗Z = −1` and a phase error is
//! `X⊗X = −1`; in an X round the roles swap.
//!
//! Pairs are processed in fixed-size chunks, each with its own ChaCha20
//! stream, so a tally depends only on the seed and never on the thread count.

use crate::entropy::{balance, Probability};
use crate::error::{Error, Result};
use crate::lemma_verify::VerifyReport;
use crate::quantum::{bell, identity, kron, pauli_x, pauli_y, pauli_z, Bell, Channel, CMatrix, Complex64, DensityOp, Ket};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

/// Confidence level used for every statistical slack in this module.
pub const ALPHA: f64 = 0.01;
/// Slack multiplier on the Hoeffding half-width.
pub const SLACK_WIDTHS: f64 = 4.0;

const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackScenario {
    /// A fraction `delta` of pairs is tagged: Eve knows the basis and measures
    /// in it, so tagged pairs carry no bit errors and random phase. The rest
    /// see independent bit and phase flips with probability `q_untagged`.
    Tagging { delta: f64, q_untagged: f64 },
    /// Symmetric noise `p`, after which Fred discards up to `⌊Δn⌋` pairs that
    /// show a bit error but no phase error.
    Pony { p: f64, delta: f64 },
    /// Bob's qubit is rotated by `diag(e^{iθ}, e^{−iθ})` in Z rounds and by its
    /// inverse in X rounds, on top of independent flips with `q_channel`.
    Misalign { theta: f64, q_channel: f64 },
    /// Independent bit and phase flips with probability `q`.
    Null { q: f64 },
}

impl AttackScenario {
    pub fn name(&self) -> &'static str {
        match self {
            AttackScenario::Tagging { .. } => "tagging",
            AttackScenario::Pony { .. } => "pony",
            AttackScenario::Misalign { .. } => "misalign",
            AttackScenario::Null { .. } => "null",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackScenario::Tagging { delta, q_untagged } => {
                Probability::named("Delta", delta)?;
                Probability::named("q", q_untagged)?;
            }
            AttackScenario::Pony { p, delta } => {
                Probability::named("p", p)?;
                Probability::named("Delta", delta)?;
                if !(delta <= p && p <= 1.0 - delta) {
                    return Err(Error::Scenario(format!(
                        "pony attack needs Delta <= p <= 1 - Delta, got p = {p}, Delta = {delta}"
                    )));
                }
            }
            AttackScenario::Misalign { theta, q_channel } => {
                if !theta.is_finite() {
                    return Err(Error::Domain {
                        name: "theta",
                        value: theta,
                        domain: "finite angle",
                    });
                }
                Probability::named("q", q_channel)?;
            }
            AttackScenario::Null { q } => {
                Probability::named("q", q)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Z,
    X,
}

/// Post-attack pair states for one scenario: untagged pairs in either basis
/// and, optionally, tagged pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStates {
    pub z: DensityOp,
    pub x: DensityOp,
    pub tagged: Option<(DensityOp, DensityOp)>,
}

/// `Pr[Φ+], Pr[Φ−], Pr[Ψ+], Pr[Ψ−]`.
pub fn bell_probabilities(rho: &DensityOp) -> [f64; 4] {
    let mut out = [Bell::PhiPlus, Bell::PhiMinus, Bell::PsiPlus, Bell::PsiMinus]
        .map(|b| rho.expectation(&bell(b)).max(0.0));
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// `(bit error, phase error)` for a Bell outcome index in the given basis.
fn errors_of(outcome: usize, basis: Basis) -> (bool, bool) {
    let zz_minus = outcome >= 2;
    let xx_minus = outcome % 2 == 1;
    match basis {
        Basis::Z => (zz_minus, xx_minus),
        Basis::X => (xx_minus, zz_minus),
    }
}

fn phi_plus() -> DensityOp {
    bell(Bell::PhiPlus).projector()
}

/// Pauli channel on Bob's qubit with the given X, Y, Z weights.
fn pauli_noise(px: f64, py: f64, pz: f64) -> Result<Channel> {
    let pi = (1.0 - px - py - pz).max(0.0);
    let bob = |m: CMatrix, w: f64| kron(&identity(2), &m.scale(w.sqrt()));
    Channel::new(vec![
        bob(identity(2), pi)?,
        bob(pauli_x(), px)?,
        bob(pauli_y(), py)?,
        bob(pauli_z(), pz)?,
    ])
}

/// Bit and phase flips on Bob's side, each with probability `q`, independent.
fn independent_flips(q: f64) -> Result<Channel> {
    pauli_noise(q * (1.0 - q), q * q, q * (1.0 - q))
}

/// Bit and phase flip rates `p` with as little overlap as possible, so that
/// bit-only events have probability `min(p, 1 − p)`.
fn anticorrelated_flips(p: f64) -> Result<Channel> {
    let both = (2.0 * p - 1.0).max(0.0);
    pauli_noise(p - both, both, p - both)
}

/// Eve measures both qubits in the round's basis: the pair becomes a
/// classical mixture of agreeing outcomes.
fn measured_in(basis: Basis) -> DensityOp {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b) = match basis {
        Basis::Z => (Ket::basis(2, 0), Ket::basis(2, 1)),
        Basis::X => (
            Ket::from_slice(&[Complex64::new(h, 0.0), Complex64::new(h, 0.0)]),
            Ket::from_slice(&[Complex64::new(h, 0.0), Complex64::new(-h, 0.0)]),
        ),
    };
    let aa = a.kron(&a).expect("qubits").projector();
    let bb = b.kron(&b).expect("qubits").projector();
    DensityOp::new((aa.matrix() + bb.matrix()).scale(0.5)).expect("mixture of product states")
}

fn bob_rotation(theta: f64) -> CMatrix {
    let mut u = CMatrix::zeros(2, 2);
    u[(0, 0)] = Complex64::from_polar(1.0, theta);
    u[(1, 1)] = Complex64::from_polar(1.0, -theta);
    u
}

/// Build the post-attack pair states of a scenario.
pub fn pair_states(scenario: &AttackScenario) -> Result<PairStates> {
    scenario.validate()?;
    let base = phi_plus();
    Ok(match *scenario {
        AttackScenario::Null { q } => {
            let s = independent_flips(q)?.apply(&base)?;
            PairStates { z: s.clone(), x: s, tagged: None }
        }
        AttackScenario::Tagging { q_untagged, .. } => {
            let s = independent_flips(q_untagged)?.apply(&base)?;
            PairStates {
                z: s.clone(),
                x: s,
                tagged: Some((measured_in(Basis::Z), measured_in(Basis::X))),
            }
        }
        AttackScenario::Pony { p, .. } => {
            let s = anticorrelated_flips(p)?.apply(&base)?;
            PairStates { z: s.clone(), x: s, tagged: None }
        }
        AttackScenario::Misalign { theta, q_channel } => {
            let noisy = independent_flips(q_channel)?.apply(&base)?;
            let u = bob_rotation(theta);
            let z = noisy.conjugate(&kron(&identity(2), &u)?)?;
            let x = noisy.conjugate(&kron(&identity(2), &u.adjoint())?)?;
            PairStates { z, x, tagged: None }
        }
    })
}

/// Raw counts plus derived rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tally {
    pub n_pairs: u64,
    /// Pairs kept after any removals.
    pub n_sifted: u64,
    pub n_bit_err: u64,
    pub n_phase_err: u64,
    /// Sifted pairs with a bit error and no phase error.
    pub n_bit_only: u64,
    pub n_removed: u64,
    pub n_tagged: u64,
    pub n_tagged_bit_err: u64,
    pub n_untagged_bit_err: u64,
    pub delta_hat: f64,
    pub delta_p_hat: f64,
    /// `delta_p_hat − delta_hat`.
    pub gap_hat: f64,
    /// Two-sided Hoeffding half-width at confidence `1 − ALPHA`.
    pub ci_half_width: f64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.n_pairs += o.n_pairs;
        self.n_sifted += o.n_sifted;
        self.n_bit_err += o.n_bit_err;
        self.n_phase_err += o.n_phase_err;
        self.n_bit_only += o.n_bit_only;
        self.n_removed += o.n_removed;
        self.n_tagged += o.n_tagged;
        self.n_tagged_bit_err += o.n_tagged_bit_err;
        self.n_untagged_bit_err += o.n_untagged_bit_err;
        self
    }

    fn finish(mut self) -> Tally {
        let n = self.n_sifted.max(1) as f64;
        self.delta_hat = self.n_bit_err as f64 / n;
        self.delta_p_hat = self.n_phase_err as f64 / n;
        self.gap_hat = self.delta_p_hat - self.delta_hat;
        self.ci_half_width = mc_confidence(self.n_sifted, ALPHA);
        self
    }

    /// Bit error rate among untagged pairs.
    pub fn untagged_bit_rate(&self) -> f64 {
        let n = self.n_sifted - self.n_tagged;
        if n == 0 {
            0.0
        } else {
            self.n_untagged_bit_err as f64 / n as f64
        }
    }
}

/// `sqrt(ln(2/α) / (2n))`; 0 for `α ≥ 1`, infinite for `n = 0` or `α ≤ 0`.
pub fn mc_confidence(n: u64, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return 0.0;
    }
    if n == 0 || alpha <= 0.0 {
        return f64::INFINITY;
    }
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

fn cumulative(p: [f64; 4]) -> [f64; 3] {
    [p[0], p[0] + p[1], p[0] + p[1] + p[2]]
}

fn sample(cum: &[f64; 3], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or(3)
}

/// Whether pair `i` of a run is tagged: exactly `⌊Δn⌋` pairs, evenly spread.
fn is_tagged(i: u64, delta: f64) -> bool {
    ((i + 1) as f64 * delta).floor() > (i as f64 * delta).floor()
}

/// Simulate `n_pairs` pairs from arbitrary post-attack states.
///
/// `tag_fraction` marks pairs as tagged (used only if `states.tagged` is set)
/// and `removal_budget` is the pony fraction (0 for no removal).
pub fn simulate_states(
    states: &PairStates,
    tag_fraction: f64,
    removal_budget: f64,
    n_pairs: u64,
    seed: u64,
) -> Result<Tally> {
    if n_pairs == 0 {
        return Err(Error::Domain {
            name: "n_pairs",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    let cz = cumulative(bell_probabilities(&states.z));
    let cx = cumulative(bell_probabilities(&states.x));
    let tagged = states
        .tagged
        .as_ref()
        .map(|(z, x)| (cumulative(bell_probabilities(z)), cumulative(bell_probabilities(x))));

    let chunks = n_pairs.div_ceil(CHUNK as u64);
    let partial: Tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let start = c * CHUNK as u64;
            let end = (start + CHUNK as u64).min(n_pairs);
            let mut t = Tally::default();
            for i in start..end {
                let basis = if rng.random::<bool>() { Basis::X } else { Basis::Z };
                let u: f64 = rng.random();
                let tag = tagged.is_some() && is_tagged(i, tag_fraction);
                let cum = match (tag, basis, &tagged) {
                    (true, Basis::Z, Some((tz, _))) => tz,
                    (true, Basis::X, Some((_, tx))) => tx,
                    (_, Basis::Z, _) => &cz,
                    (_, Basis::X, _) => &cx,
                };
                let (bit, phase) = errors_of(sample(cum, u), basis);
                t.n_pairs += 1;
                t.n_sifted += 1;
                t.n_bit_err += bit as u64;
                t.n_phase_err += phase as u64;
                t.n_bit_only += (bit && !phase) as u64;
                if tag {
                    t.n_tagged += 1;
                    t.n_tagged_bit_err += bit as u64;
                } else {
                    t.n_untagged_bit_err += bit as u64;
                }
            }
            t
        })
        .reduce(Tally::default, Tally::merge);

    let mut t = partial;
    if removal_budget > 0.0 {
        // Greedy: the worst case throws away bit-error-only pairs exclusively.
        let budget = (removal_budget * n_pairs as f64).floor() as u64;
        let removed = budget.min(t.n_bit_only);
        t.n_removed = removed;
        t.n_sifted -= removed;
        t.n_bit_err -= removed;
        t.n_bit_only -= removed;
        t.n_untagged_bit_err -= removed;
    }
    Ok(t.finish())
}

/// Simulate a scenario. Identical inputs give identical tallies.
pub fn simulate(scenario: &AttackScenario, n_pairs: u64, seed: u64) -> Result<Tally> {
    let states = pair_states(scenario)?;
    let (tag, removal) = match *scenario {
        AttackScenario::Tagging { delta, .. } => (delta, 0.0),
        AttackScenario::Pony { delta, .. } => (0.0, delta),
        _ => (0.0, 0.0),
    };
    simulate_states(&states, tag, removal, n_pairs, seed)
}

/// `|gap_hat| ≤ 2 f(Δ)` plus four half-widths.
pub fn check_gap_bound(tally: &Tally, delta: f64) -> Result<VerifyReport> {
    let f = balance(Probability::named("Delta", delta)?)?;
    let slack = SLACK_WIDTHS * tally.ci_half_width;
    Ok(VerifyReport::at_most(
        "gap_bound",
        format!("Delta={delta};n={};slack={slack:.6e}", tally.n_sifted),
        tally.gap_hat.abs(),
        2.0 * f + slack,
        0.0,
    ))
}

/// `|gap_hat| ≤ Δ` plus four half-widths, the tagged-signal gap bound.
pub fn check_tagging_gap(tally: &Tally, delta: f64) -> Result<VerifyReport> {
    Probability::named("Delta", delta)?;
    let slack = SLACK_WIDTHS * tally.ci_half_width;
    Ok(VerifyReport::at_most(
        "tagging_gap",
        format!("Delta={delta};n={}", tally.n_sifted),
        tally.gap_hat.abs(),
        delta + slack,
        0.0,
    ))
}

/// Post-removal error rates against `(p − Δ)/(1 − Δ)` and `p/(1 − Δ)`.
pub fn check_pony(tally: &Tally, p: f64, delta: f64) -> Result<[VerifyReport; 2]> {
    AttackScenario::Pony { p, delta }.validate()?;
    let slack = SLACK_WIDTHS * tally.ci_half_width;
    let params = format!("p={p};Delta={delta};n={}", tally.n_pairs);
    Ok([
        VerifyReport::at_most(
            "pony_bit",
            params.clone(),
            (tally.delta_hat - (p - delta) / (1.0 - delta)).abs(),
            slack,
            0.0,
        ),
        VerifyReport::at_most(
            "pony_phase",
            params,
            (tally.delta_p_hat - p / (1.0 - delta)).abs(),
            slack,
            0.0,
        ),
    ])
}
