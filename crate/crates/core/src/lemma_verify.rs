//! Numerical checks of the coin and dilation lemmas behind the flawed-device
//! rates.
//!
//! Each check returns one or more [`VerifyReport`]s: a measured quantity, the
//! bound it must respect, and whether it does within a stated tolerance.

use crate::entropy::{balance, Probability};
use crate::error::{Error, Result};
use crate::quantum::{
    self, c, cnot, coin_x_minus_prob, dilation_from_purification,
    fidelity_root, identity, kron, kron_all, max_abs_diff, pauli_x, pauli_z, random, sup_norm,
    trace_norm, uhlmann_pair, Channel, CMatrix, Complex64, DensityOp, Isometry, Ket,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;

/// How `measured` must relate to `bound`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub claim_id: String,
    /// `key=value` pairs separated by `;`.
    pub params: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
}

impl VerifyReport {
    pub fn new(
        claim_id: &str,
        params: impl Into<String>,
        measured: f64,
        relation: Relation,
        bound: f64,
        tolerance: f64,
    ) -> Self {
        let pass = match relation {
            Relation::AtMost => measured <= bound + tolerance,
            Relation::AtLeast => measured >= bound - tolerance,
        };
        VerifyReport {
            claim_id: claim_id.to_string(),
            params: params.into(),
            measured,
            bound,
            relation,
            tolerance,
            pass: pass && measured.is_finite(),
        }
    }

    pub fn at_most(id: &str, params: impl Into<String>, measured: f64, bound: f64, tol: f64) -> Self {
        Self::new(id, params, measured, Relation::AtMost, bound, tol)
    }

    pub fn at_least(id: &str, params: impl Into<String>, measured: f64, bound: f64, tol: f64) -> Self {
        Self::new(id, params, measured, Relation::AtLeast, bound, tol)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        write!(
            f,
            "{} [{}] {:.6e} {} {:.6e} (tol {:e}): {}",
            self.claim_id,
            self.params,
            self.measured,
            rel,
            self.bound,
            self.tolerance,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

const GAP_TRANS_TOL: f64 = 1e-12;

/// The two controlled-NOTs from Alice's and Bob's qubits into the coin.
/// Qubit order: Alice, Bob, coin.
fn parity_to_coin(second_cnot: bool) -> CMatrix {
    let first = cnot(3, 0, 2);
    if second_cnot {
        cnot(3, 1, 2) * first
    } else {
        first
    }
}

fn gap_trans_deviation(second_cnot: bool) -> f64 {
    let v = parity_to_coin(second_cnot);
    let (i2, x, z) = (identity(2), pauli_x(), pauli_z());
    let zzz = kron_all([&z, &z, &z]).expect("8x8");
    let iiz = kron_all([&i2, &i2, &z]).expect("8x8");
    let iix = kron_all([&i2, &i2, &x]).expect("8x8");
    let conj = |m: &CMatrix| &v * m * v.adjoint();
    max_abs_diff(&conj(&zzz), &iiz).max(max_abs_diff(&conj(&iix), &iix))
}

/// `V (Z⊗Z⊗Z) V† = I⊗I⊗Z` and `V (I⊗I⊗X) V† = I⊗I⊗X` for the parity circuit `V`.
pub fn verify_gap_trans() -> VerifyReport {
    VerifyReport::at_most("gap_trans", "qubits=A;B;coin", gap_trans_deviation(true), 0.0, GAP_TRANS_TOL)
}

/// The same identity with the controlled-NOT from Bob dropped. It must fail:
/// the report passes when the deviation is visibly nonzero.
pub fn gap_trans_control() -> VerifyReport {
    VerifyReport::at_least(
        "gap_trans_control",
        "qubits=A;B;coin;cnot=A only",
        gap_trans_deviation(false),
        1.0,
        0.0,
    )
}

/// Coin count, X-weight cap and deviation threshold for [`coin_extremal_tail`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoinSubspaceSpec {
    pub n: usize,
    /// At most `k` coins show `X = −1`.
    pub k: usize,
    /// The event is `|n/2 − n_Z| ≥ t`.
    pub t: usize,
}

impl CoinSubspaceSpec {
    pub const MAX_COINS: usize = 24;

    pub fn new(n: usize, k: usize, t: usize) -> Result<Self> {
        let s = CoinSubspaceSpec { n, k, t };
        s.validate()?;
        Ok(s)
    }

    /// `k = ⌊nΔ⌋` and `t = ⌈n (f(Δ) + slack)⌉`, capped at `n/2`.
    pub fn for_balance(n: usize, delta: f64, slack: f64) -> Result<Self> {
        let f = balance(Probability::named("Delta", delta)?)?;
        let k = (n as f64 * delta).floor() as usize;
        let t = ((n as f64 * (f + slack)).ceil() as usize).min(n / 2);
        Self::new(n, k, t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > Self::MAX_COINS {
            return Err(Error::Domain {
                name: "n",
                value: self.n as f64,
                domain: "1..=24",
            });
        }
        if self.k > self.n {
            return Err(Error::Domain {
                name: "k",
                value: self.k as f64,
                domain: "0..=n",
            });
        }
        if 2 * self.t > self.n {
            return Err(Error::Domain {
                name: "t",
                value: self.t as f64,
                domain: "0..=n/2",
            });
        }
        Ok(())
    }
}

/// In-place unnormalized Walsh–Hadamard transform.
fn walsh_hadamard(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        h *= 2;
    }
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 20_000;

/// Largest probability, over coin states with X-weight at most `k`, that the
/// Z-basis count deviates from `n/2` by at least `t`.
///
/// This is the top eigenvalue of `Π_X P_dev Π_X`. `P_dev` is diagonal in the
/// Z basis; `Π_X` is diagonal in the X basis and is applied through a
/// Walsh–Hadamard transform, so no matrix is ever stored.
pub fn coin_extremal_tail(spec: CoinSubspaceSpec) -> Result<f64> {
    spec.validate()?;
    let CoinSubspaceSpec { n, k, t } = spec;
    let dim = 1usize << n;
    let x_mask: Vec<bool> = (0..dim).map(|x| (x as u32).count_ones() as usize <= k).collect();
    let dev_mask: Vec<bool> = (0..dim)
        .map(|z| (n as i64 - 2 * (z as u32).count_ones() as i64).unsigned_abs() as usize >= 2 * t)
        .collect();
    let scale = 1.0 / dim as f64;
    let project = |v: &mut Vec<f64>| {
        walsh_hadamard(v);
        for (x, keep) in v.iter_mut().zip(&x_mask) {
            if !keep {
                *x = 0.0;
            }
        }
        walsh_hadamard(v);
        for x in v.iter_mut() {
            *x *= scale;
        }
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let seed = ((n as u64) << 40) ^ ((k as u64) << 20) ^ t as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    project(&mut v);
    let nv = norm(&v);
    if nv == 0.0 {
        return Ok(0.0);
    }
    v.iter_mut().for_each(|x| *x /= nv);

    let mut lambda = f64::NAN;
    for iter in 0..POWER_MAX_ITER {
        let mut w: Vec<f64> = v
            .iter()
            .zip(&dev_mask)
            .map(|(x, &on)| if on { *x } else { 0.0 })
            .collect();
        project(&mut w);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        w.iter_mut().for_each(|x| *x /= nw);
        v = w;
        if (next - lambda).abs() < POWER_TOL {
            return Ok(next.clamp(0.0, 1.0));
        }
        lambda = next;
        if iter + 1 == POWER_MAX_ITER {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITER,
        last_change: lambda,
    })
}

/// `Pr[|n/2 − B| ≥ t]` for `B ~ Binomial(n, 1/2)`.
pub fn binomial_tail(n: usize, t: usize) -> f64 {
    let mut binom = 1u128;
    let mut hits = 0u128;
    for z in 0..=n {
        if (n as i64 - 2 * z as i64).unsigned_abs() as usize >= 2 * t {
            hits += binom;
        }
        binom = binom * (n - z) as u128 / (z + 1) as u128;
    }
    hits as f64 / 2f64.powi(n as i32)
}

/// `¼ ‖U0 − U1‖²_sup`.
pub fn isometry_distance(u0: &Isometry, u1: &Isometry) -> Result<f64> {
    if u0.matrix().shape() != u1.matrix().shape() {
        return Err(Error::Dimension("isometries differ in shape".into()));
    }
    Ok(0.25 * sup_norm(&(u0.matrix() - u1.matrix()))?.powi(2))
}

/// A pair `(U0, W U0)` with `W` a random unitary within `strength` of the
/// identity (in eigenphase).
pub fn random_close_isometries<R: Rng + ?Sized>(
    d_in: usize,
    d_out: usize,
    env_dim: usize,
    strength: f64,
    rng: &mut R,
) -> Result<(Isometry, Isometry)> {
    let rows = d_out * env_dim;
    let u0 = random::isometry_matrix(d_in, rows, rng);
    let w = random::near_identity(rows, strength, rng);
    let u1 = &w * &u0;
    Ok((Isometry::new(u0, env_dim)?, Isometry::new(u1, env_dim)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma3Outcome {
    pub report: VerifyReport,
    /// `P(x)` indexed by the bit string `x` (coin 0 is the most significant bit).
    pub distribution: Vec<f64>,
    /// Per-coin `¼ ‖U0 − U1‖²_sup`.
    pub epsilons: Vec<f64>,
    pub epsilon: f64,
    /// `max P(x) / ε^|x|` over `x ≠ 0`; recorded, not asserted.
    pub max_ratio: f64,
    /// `|Σ_x P(x) − 1|`.
    pub normalization_error: f64,
}

const LEMMA3_TOL: f64 = 1e-12;
const LEMMA3_MAX_COINS: usize = 8;
const LEMMA3_MAX_ENTRIES: usize = 1 << 22;

/// Apply `op` to tensor factor `site` of a vector with factor dimensions `dims`.
fn apply_site(v: &[Complex64], dims: &[usize], site: usize, op: &CMatrix) -> Vec<Complex64> {
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + 1..].iter().product();
    let (d_out, d_in) = op.shape();
    let mut out = vec![c(0.0, 0.0); left * d_out * right];
    for l in 0..left {
        for r in 0..right {
            for j in 0..d_in {
                let amp = v[(l * d_in + j) * right + r];
                if amp == c(0.0, 0.0) {
                    continue;
                }
                for i in 0..d_out {
                    out[(l * d_out + i) * right + r] += op[(i, j)] * amp;
                }
            }
        }
    }
    out
}

/// Coin outcome statistics under an individual, weakly basis-dependent attack.
///
/// Coins start in `X = +1`. Coin `i` controls whether `U0` or `U1` of pair `i`
/// acts on signal `i` of `phi`; any dimensions of `phi` beyond the signals form
/// an untouched environment. All coins are then measured in the X basis and
/// `P(x) ≤ ε^|x|` is checked for every outcome string.
pub fn verify_lemma3(pairs: &[(Isometry, Isometry)], phi: &Ket) -> Result<Lemma3Outcome> {
    let n = pairs.len();
    if n == 0 || n > LEMMA3_MAX_COINS {
        return Err(Error::Domain {
            name: "n",
            value: n as f64,
            domain: "1..=8",
        });
    }
    for (u0, u1) in pairs {
        if u0.matrix().shape() != u1.matrix().shape() {
            return Err(Error::Dimension("isometry pair differs in shape".into()));
        }
    }
    let signal_in: usize = pairs.iter().map(|(u, _)| u.d_in()).product();
    if phi.dim() % signal_in != 0 {
        return Err(Error::Dimension(format!(
            "state of dimension {} does not contain signals of total dimension {signal_in}",
            phi.dim()
        )));
    }
    let norm = phi.norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(norm));
    }
    let env = phi.dim() / signal_in;
    let out_dim: usize = pairs.iter().map(|(u, _)| u.matrix().nrows()).product::<usize>() * env;
    let n_coin = 1usize << n;
    if out_dim.saturating_mul(n_coin) > LEMMA3_MAX_ENTRIES {
        return Err(Error::Dimension(format!(
            "joint coin-signal state of {} entries is too large",
            out_dim.saturating_mul(n_coin)
        )));
    }

    let epsilons = pairs
        .iter()
        .map(|(u0, u1)| isometry_distance(u0, u1))
        .collect::<Result<Vec<_>>>()?;
    let epsilon = epsilons.iter().fold(0.0_f64, |a, &b| a.max(b));

    // Branch a of the coin superposition carries U_a |phi> with amplitude 2^{-n/2}.
    let amp = 1.0 / (n_coin as f64).sqrt();
    let mut branches: Vec<Vec<Complex64>> = (0..n_coin)
        .into_par_iter()
        .map(|a| {
            let mut dims: Vec<usize> = pairs.iter().map(|(u, _)| u.d_in()).collect();
            dims.push(env);
            let mut v: Vec<Complex64> = phi.amplitudes.iter().map(|z| z * amp).collect();
            for (i, (u0, u1)) in pairs.iter().enumerate() {
                let bit = (a >> (n - 1 - i)) & 1;
                let u = if bit == 0 { u0 } else { u1 };
                v = apply_site(&v, &dims, i, u.matrix());
                dims[i] = u.matrix().nrows();
            }
            v
        })
        .collect();

    // X-basis measurement of the coins: Hadamard on every coin index.
    let mut h = 1;
    while h < n_coin {
        for start in (0..n_coin).step_by(2 * h) {
            for a in start..start + h {
                let (lo, hi) = branches.split_at_mut(a + h);
                for (x, y) in lo[a].iter_mut().zip(hi[0].iter_mut()) {
                    let (s, d) = (*x + *y, *x - *y);
                    *x = s;
                    *y = d;
                }
            }
        }
        h *= 2;
    }
    let coin_scale = 1.0 / n_coin as f64;
    let distribution: Vec<f64> = branches
        .iter()
        .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>() * coin_scale)
        .collect();

    let mut worst = f64::NEG_INFINITY;
    let mut max_ratio = 0.0_f64;
    for (x, &p) in distribution.iter().enumerate() {
        let w = (x as u32).count_ones() as i32;
        let bound = epsilon.powi(w);
        worst = worst.max(p - bound);
        if x != 0 && bound > 0.0 {
            max_ratio = max_ratio.max(p / bound);
        }
        if p < -LEMMA3_TOL {
            worst = worst.max(f64::INFINITY);
        }
    }
    let normalization_error = (distribution.iter().sum::<f64>() - 1.0).abs();
    let mut report = VerifyReport::at_most(
        "lemma3",
        format!("n={n};eps={epsilon:.6e};env={env}"),
        worst,
        0.0,
        LEMMA3_TOL,
    );
    if normalization_error > 1e-10 {
        report.pass = false;
    }
    Ok(Lemma3Outcome {
        report,
        distribution,
        epsilons,
        epsilon,
        max_ratio,
        normalization_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DilationChainOutcome {
    pub reports: Vec<VerifyReport>,
    /// `‖ρ̃0 − ρ̃1‖_tr / d`.
    pub epsilon: f64,
    pub dilations: (Isometry, Isometry),
    /// `|Re⟨Φ̃1'|Φ̃0'⟩ − d √F(ρ̃0/d, ρ̃1/d)|`; zero up to round-off by Uhlmann's theorem.
    pub uhlmann_deviation: f64,
}

impl DilationChainOutcome {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

const CHAIN_TOL: f64 = 1e-9;

/// Walk two channels through the similar-channels-similar-dilations chain.
///
/// The diamond norm is not computed. Its only use in the chain is to bound
/// the trace distance of the Choi states, so `ε` is taken to be that trace
/// distance divided by `d` and every later inequality is checked against it.
pub fn verify_dilation_chain(
    e0: &Channel,
    e1: &Channel,
    trials: usize,
    seed: u64,
) -> Result<DilationChainOutcome> {
    let (d, dp) = (e0.d_in(), e0.d_out());
    if (e1.d_in(), e1.d_out()) != (d, dp) {
        return Err(Error::Dimension("channels differ in input or output dimension".into()));
    }
    if d > 4 || dp > 4 {
        return Err(Error::Dimension("dilation chain is limited to dimensions <= 4".into()));
    }
    let df = d as f64;
    let params = format!("d={d};d'={dp}");
    let (r0, r1) = (e0.choi(), e1.choi());
    let dist = trace_norm(&(r0.matrix() - r1.matrix()))?;
    let epsilon = dist / df;
    let mut reports = vec![VerifyReport::at_most(
        "dilation_trace",
        params.clone(),
        dist,
        df * epsilon,
        CHAIN_TOL,
    )];

    let sqrt_f = fidelity_root(&r0.normalized(), &r1.normalized())?;
    let half_dist = 0.5 * trace_norm(&(r0.normalized().matrix() - r1.normalized().matrix()))?;
    reports.push(VerifyReport::at_least(
        "dilation_fvdg",
        params.clone(),
        sqrt_f,
        1.0 - half_dist,
        CHAIN_TOL,
    ));

    let env = d * dp;
    let (p0, p1) = uhlmann_pair(&r0, &r1, env)?;
    let overlap = p1.inner(&p0).re;
    let uhlmann_deviation = (overlap - df * sqrt_f).abs();
    reports.push(VerifyReport::at_least(
        "dilation_overlap",
        params.clone(),
        overlap,
        df * (1.0 - epsilon / 2.0),
        CHAIN_TOL,
    ));

    let u0 = dilation_from_purification(&p0, d, dp, env)?;
    let u1 = dilation_from_purification(&p1, d, dp, env)?;
    let gram = u1.matrix().adjoint() * u0.matrix();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = random::unitary(d, &mut rng);
    let mut states: Vec<Ket> = (0..d).map(|j| Ket::new(basis.column(j).into_owned())).collect();
    states.extend((0..trials).map(|_| random::ket(d, &mut rng)));
    let basis_sum: f64 = states[..d]
        .iter()
        .map(|s| s.inner(&s.apply(&gram).expect("square")).re)
        .sum();
    let worst = states
        .iter()
        .map(|s| s.inner(&s.apply(&gram).expect("square")).re)
        .fold(f64::INFINITY, f64::min);
    reports.push(VerifyReport::at_least(
        "dilation_basis_sum",
        params.clone(),
        basis_sum,
        df * (1.0 - epsilon / 2.0),
        CHAIN_TOL,
    ));
    reports.push(VerifyReport::at_least(
        "dilation_per_state",
        format!("{params};states={}", states.len()),
        worst,
        1.0 - df * epsilon / 2.0,
        CHAIN_TOL,
    ));
    let sup2 = sup_norm(&(u0.matrix() - u1.matrix()))?.powi(2);
    reports.push(VerifyReport::at_most("dilation_sup", params, sup2, df * epsilon, CHAIN_TOL));

    Ok(DilationChainOutcome {
        reports,
        epsilon,
        dilations: (u0, u1),
        uhlmann_deviation,
    })
}

fn coin_state(psi0: &Ket, psi1: &Ket) -> Result<Ket> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let a = psi0.kron(&Ket::basis(2, 0))?;
    let b = psi1.kron(&Ket::basis(2, 1))?;
    Ok(Ket::new((a.amplitudes + b.amplitudes).scale(h)))
}

/// `Pr[X = −1]` on the coin of `(|Ψ0⟩|0⟩ + |Ψ1⟩|1⟩)/√2`, read off the coin's
/// reduced state.
pub fn coin_minus_probability(psi0: &Ket, psi1: &Ket) -> Result<f64> {
    let joint = coin_state(psi0, psi1)?;
    let coin = joint.projector().partial_trace(&[psi0.dim(), 2], &[1])?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let minus = Ket::from_slice(&[c(h, 0.0), c(-h, 0.0)]);
    Ok(coin.expectation(&minus))
}

/// The tightest `ε_s` with `√F(ρ0, ρ1) ≥ 1 − 2ε_s`.
pub fn source_flaw(rho0: &DensityOp, rho1: &DensityOp) -> Result<f64> {
    Ok(((1.0 - fidelity_root(rho0, rho1)?) / 2.0).max(0.0))
}

const COIN_LEAK_TOL: f64 = 1e-10;

/// With Uhlmann-aligned purifications of the two source states, the basis
/// coin shows `X = −1` with probability at most `ε_s`.
///
/// `eps_s` defaults to the tightest value allowed by the fidelity, where the
/// bound is met with equality.
pub fn verify_coin_leak(rho0: &DensityOp, rho1: &DensityOp, eps_s: Option<f64>) -> Result<VerifyReport> {
    let tight = source_flaw(rho0, rho1)?;
    let eps_s = eps_s.unwrap_or(tight);
    if eps_s + COIN_LEAK_TOL < tight {
        return Err(Error::Domain {
            name: "eps_s",
            value: eps_s,
            domain: "[(1 - sqrt F)/2, 1/2]",
        });
    }
    let env = rho0.dim();
    let (psi0, psi1) = uhlmann_pair(&rho0.normalized(), &rho1.normalized(), env)?;
    let reduced = coin_minus_probability(&psi0, &psi1)?;
    let direct = coin_x_minus_prob(&psi0, &psi1)?.value();
    let mut report = VerifyReport::at_most(
        "coin_leak",
        format!("d={};sqrtF={:.6e}", rho0.dim(), 1.0 - 2.0 * tight),
        reduced,
        eps_s,
        COIN_LEAK_TOL,
    );
    if (reduced - direct).abs() > 1e-12 {
        report.pass = false;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisalignedSearch {
    pub eps_s: f64,
    /// Largest `Pr[X = −1]` found.
    pub max_probability: f64,
    /// How many of the trials exceeded `ε_s`.
    pub violations: usize,
    pub trials: usize,
}

/// Rotate the environment of one Uhlmann purification by random unitaries
/// and record how often the coin then leaks more than `ε_s`.
pub fn coin_leak_misaligned(
    rho0: &DensityOp,
    rho1: &DensityOp,
    trials: usize,
    seed: u64,
) -> Result<MisalignedSearch> {
    let eps_s = source_flaw(rho0, rho1)?;
    let d = rho0.dim();
    let (psi0, psi1) = uhlmann_pair(&rho0.normalized(), &rho1.normalized(), d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_probability = 0.0_f64;
    let mut violations = 0;
    for _ in 0..trials {
        let w = random::unitary(d, &mut rng);
        let rotated = psi0.apply(&kron(&identity(d), &w)?)?;
        let p = coin_x_minus_prob(&rotated, &psi1)?.value();
        if p > eps_s + COIN_LEAK_TOL {
            violations += 1;
        }
        max_probability = max_probability.max(p);
    }
    Ok(MisalignedSearch {
        eps_s,
        max_probability,
        violations,
        trials,
    })
}

/// A qubit state pair with root fidelity `sqrt_f`: `ρ0` is a random mixed
/// state and `ρ1 = (1 − s) ρ0 + s |v⟩⟨v|`, with `v` the weakest eigenvector of
/// `ρ0`. Root fidelity is concave in `s` and maximal at 0, hence monotone, so
/// `s` is found by bisection.
pub fn qubit_pair_with_fidelity<R: Rng + ?Sized>(sqrt_f: f64, rng: &mut R) -> Result<(DensityOp, DensityOp)> {
    Probability::named("sqrt_f", sqrt_f)?;
    let rho0 = random::density(2, 2, rng);
    let eig = quantum::hermitian_eig(rho0.matrix())?;
    let weak = Ket::new(eig.vectors.column(1).into_owned()).projector();
    let mix = |s: f64| DensityOp::new(rho0.matrix().scale(1.0 - s) + weak.matrix().scale(s));
    let fid = |s: f64| -> Result<f64> { fidelity_root(&rho0, &mix(s)?) };
    if fid(1.0)? > sqrt_f {
        return Err(Error::Domain {
            name: "sqrt_f",
            value: sqrt_f,
            domain: "root fidelities reachable from this state",
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if fid(mid)? > sqrt_f {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((rho0.clone(), mix(0.5 * (lo + hi))?))
}

/// Which group of checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    GapTrans,
    CoinTail,
    Lemma3,
    Dilation,
    CoinLeak,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "gap_trans" => Suite::GapTrans,
            "coin_tail" => Suite::CoinTail,
            "lemma3" => Suite::Lemma3,
            "dilation" => Suite::Dilation,
            "coin_leak" => Suite::CoinLeak,
            other => return Err(Error::Scenario(format!("unknown verification suite `{other}`"))),
        })
    }
}

fn stream(seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    rng
}

/// Decay of the extremal coin tail at `Δ = 0.1`, slack 0.05, over `ns`.
pub fn coin_tail_decay(ns: &[usize], delta: f64, slack: f64) -> Result<Vec<(CoinSubspaceSpec, f64)>> {
    ns.iter()
        .map(|&n| {
            let spec = CoinSubspaceSpec::for_balance(n, delta, slack)?;
            Ok((spec, coin_extremal_tail(spec)?))
        })
        .collect()
}

fn coin_tail_reports() -> Result<Vec<VerifyReport>> {
    let mut out = Vec::new();
    for (n, t) in [(8, 2), (12, 3), (16, 4)] {
        let spec = CoinSubspaceSpec::new(n, 0, t)?;
        let tail = coin_extremal_tail(spec)?;
        out.push(VerifyReport::at_most(
            "coin_tail_binomial",
            format!("n={n};k=0;t={t}"),
            (tail - binomial_tail(n, t)).abs(),
            0.0,
            1e-10,
        ));
    }
    let spec = CoinSubspaceSpec::new(10, 10, 5)?;
    out.push(VerifyReport::at_least(
        "coin_tail_full",
        "n=10;k=10;t=5",
        coin_extremal_tail(spec)?,
        1.0,
        1e-10,
    ));
    let decay = coin_tail_decay(&[8, 12, 16, 20], 0.1, 0.05)?;
    let rise = decay
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(VerifyReport::at_most(
        "coin_tail_decay",
        "Delta=0.1;slack=0.05;n=8..20",
        rise,
        0.0,
        0.0,
    ));
    Ok(out)
}

fn lemma3_reports(seed: u64) -> Result<Vec<VerifyReport>> {
    (0..20u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, 0x1e3a_0000 + trial);
            let n = 4;
            let pairs = (0..n)
                .map(|_| random_close_isometries(2, 2, 2, 0.4, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let phi = random::ket(1 << n, &mut rng);
            Ok(verify_lemma3(&pairs, &phi)?.report)
        })
        .collect()
}

fn dilation_reports(seed: u64) -> Result<Vec<VerifyReport>> {
    let mut out = Vec::new();
    for q in [0.01, 0.05, 0.1] {
        let chain = verify_dilation_chain(&Channel::identity(2), &Channel::depolarizing(q)?, 100, seed)?;
        out.extend(chain.reports.into_iter().map(|mut r| {
            r.params = format!("{};q={q}", r.params);
            r
        }));
    }
    let random_runs: Vec<DilationChainOutcome> = (0..500u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, 0xd11a_0000 + trial);
            let e0 = random::channel(2, 2, 2, &mut rng);
            let e1 = random::channel(2, 2, 2, &mut rng);
            verify_dilation_chain(&e0, &e1, 20, seed ^ trial)
        })
        .collect::<Result<_>>()?;
    let failures = random_runs.iter().filter(|r| !r.pass()).count();
    out.push(VerifyReport::at_most(
        "dilation_random",
        "d=2;d'=2;kraus=2;trials=500",
        failures as f64,
        0.0,
        0.0,
    ));
    Ok(out)
}

fn coin_leak_reports(seed: u64) -> Result<Vec<VerifyReport>> {
    let mut rng = stream(seed, 0xc014);
    let rho = random::density(2, 2, &mut rng);
    let mut out = vec![verify_coin_leak(&rho, &rho, None)?];
    let (r0, r1) = qubit_pair_with_fidelity(0.99, &mut rng)?;
    out.push(verify_coin_leak(&r0, &r1, Some(0.005))?);
    Ok(out)
}

/// Run a suite; reports come back in a fixed order regardless of threading.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<VerifyReport>> {
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::GapTrans {
        out.push(verify_gap_trans());
        out.push(gap_trans_control());
    }
    if all || suite == Suite::CoinTail {
        out.extend(coin_tail_reports()?);
    }
    if all || suite == Suite::Lemma3 {
        out.extend(lemma3_reports(seed)?);
    }
    if all || suite == Suite::Dilation {
        out.extend(dilation_reports(seed)?);
    }
    if all || suite == Suite::CoinLeak {
        out.extend(coin_leak_reports(seed)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::choi_of_isometry;

    #[test]
    fn gap_trans_holds_and_control_fails() {
        let r = verify_gap_trans();
        assert!(r.pass && r.measured < 1e-12, "{r}");
        let ctl = gap_trans_control();
        assert!(ctl.pass && ctl.measured >= 1.0, "{ctl}");
        // The control leaves Z_B ⊗ Z_coin behind.
        let v = parity_to_coin(false);
        let z = pauli_z();
        let zzz = kron_all([&z, &z, &z]).unwrap();
        let izz = kron_all([&identity(2), &z, &z]).unwrap();
        assert!(max_abs_diff(&(&v * zzz * v.adjoint()), &izz) < 1e-15);
    }

    #[test]
    fn wht_is_involution_up_to_scale() {
        let mut v = vec![1.0, 2.0, 3.0, 4.0];
        walsh_hadamard(&mut v);
        assert_eq!(v, vec![10.0, -2.0, -4.0, 0.0]);
        walsh_hadamard(&mut v);
        assert_eq!(v, vec![4.0, 8.0, 12.0, 16.0]);
    }

    #[test]
    fn coin_tail_k0_is_binomial() {
        for (n, t) in [(4, 1), (8, 2), (10, 3), (12, 6)] {
            let tail = coin_extremal_tail(CoinSubspaceSpec::new(n, 0, t).unwrap()).unwrap();
            assert!((tail - binomial_tail(n, t)).abs() < 1e-10, "n={n} t={t}");
        }
    }

    #[test]
    fn coin_tail_full_subspace() {
        for t in 0..=3 {
            let tail = coin_extremal_tail(CoinSubspaceSpec::new(6, 6, t).unwrap()).unwrap();
            assert!((tail - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn coin_spec_validation() {
        assert!(CoinSubspaceSpec::new(25, 0, 0).is_err());
        assert!(CoinSubspaceSpec::new(4, 5, 0).is_err());
        assert!(CoinSubspaceSpec::new(4, 0, 3).is_err());
        let s = CoinSubspaceSpec::for_balance(20, 0.1, 0.05).unwrap();
        assert_eq!((s.k, s.t), (2, 9));
    }

    #[test]
    fn binomial_tail_values() {
        assert_eq!(binomial_tail(4, 0), 1.0);
        assert_eq!(binomial_tail(4, 2), 2.0 / 16.0);
        assert_eq!(binomial_tail(4, 1), 10.0 / 16.0);
    }

    #[test]
    fn coin_bound_identical_isometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs: Vec<_> = (0..3)
            .map(|_| {
                let u = Isometry::new(random::isometry_matrix(2, 4, &mut rng), 2).unwrap();
                (u.clone(), u)
            })
            .collect();
        let phi = random::ket(8, &mut rng);
        let out = verify_lemma3(&pairs, &phi).unwrap();
        assert!(out.report.pass);
        assert!(out.distribution[1..].iter().all(|&p| p.abs() < 1e-15));
        assert!((out.distribution[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coin_bound_single_coin_saturates() {
        let phase = 0.3_f64;
        let eps = 0.5 * (1.0 - phase.cos());
        let u0 = Isometry::plain(identity(2)).unwrap();
        let u1 = Isometry::plain(identity(2).scale(1.0) * Complex64::from_polar(1.0, phase)).unwrap();
        let phi = Ket::basis(2, 0);
        let out = verify_lemma3(&[(u0, u1)], &phi).unwrap();
        assert!((out.epsilon - eps).abs() < 1e-14);
        assert!((out.distribution[1] - eps).abs() < 1e-14);
        assert!((out.max_ratio - 1.0).abs() < 1e-10);
        assert!(out.report.pass);
    }

    #[test]
    fn coin_bound_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let pairs: Vec<_> = (0..4)
                .map(|_| random_close_isometries(2, 2, 2, 0.4, &mut rng).unwrap())
                .collect();
            let phi = random::ket(16 * 3, &mut rng);
            let out = verify_lemma3(&pairs, &phi).unwrap();
            assert!(out.epsilon <= 0.05);
            assert!(out.report.pass, "{}", out.report);
            assert!(out.normalization_error < 1e-10);
        }
    }

    #[test]
    fn coin_bound_rejects_bad_inputs() {
        let u = Isometry::plain(identity(2)).unwrap();
        let pairs = vec![(u.clone(), u)];
        assert!(verify_lemma3(&pairs, &Ket::basis(3, 0)).is_err());
        assert!(verify_lemma3(&[], &Ket::basis(2, 0)).is_err());
    }

    #[test]
    fn dilation_chain_equal_channels() {
        let ch = random::channel(2, 2, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let out = verify_dilation_chain(&ch, &ch, 20, 0).unwrap();
        assert!(out.epsilon < 1e-12);
        assert!(out.pass(), "{:?}", out.reports);
    }

    #[test]
    fn dilation_chain_depolarizing() {
        for q in [0.01, 0.05, 0.1] {
            let out =
                verify_dilation_chain(&Channel::identity(2), &Channel::depolarizing(q).unwrap(), 100, 4)
                    .unwrap();
            assert!(out.pass(), "q={q}: {:?}", out.reports);
            assert!(out.uhlmann_deviation < 1e-8);
            let (u0, _) = &out.dilations;
            let back = choi_of_isometry(u0);
            assert!(max_abs_diff(back.matrix(), Channel::identity(2).choi().matrix()) < 1e-10);
        }
    }

    #[test]
    fn dilation_chain_random_pairs() {
        for trial in 0..50 {
            let mut rng = stream(5, trial);
            let e0 = random::channel(2, 2, 2, &mut rng);
            let e1 = random::channel(2, 2, 2, &mut rng);
            let out = verify_dilation_chain(&e0, &e1, 20, trial).unwrap();
            assert!(out.pass(), "trial {trial}: {:?}", out.reports);
        }
    }

    #[test]
    fn coin_leak_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random::density(2, 2, &mut rng);
        let r = verify_coin_leak(&rho, &rho, None).unwrap();
        assert!(r.pass && r.measured.abs() < 1e-10);

        let (r0, r1) = qubit_pair_with_fidelity(0.99, &mut rng).unwrap();
        assert!((fidelity_root(&r0, &r1).unwrap() - 0.99).abs() < 1e-9);
        let r = verify_coin_leak(&r0, &r1, Some(0.005)).unwrap();
        assert!(r.pass, "{r}");
        assert!((r.measured - 0.005).abs() < 1e-9);
        assert!(verify_coin_leak(&r0, &r1, Some(0.001)).is_err());
    }

    #[test]
    fn misaligned_purifications_leak() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (r0, r1) = qubit_pair_with_fidelity(0.99, &mut rng).unwrap();
        let search = coin_leak_misaligned(&r0, &r1, 50, 8).unwrap();
        assert!(search.violations > 0);
        assert!(search.max_probability > search.eps_s);
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("nope".parse::<Suite>().is_err());
    }
}
