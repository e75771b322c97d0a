//! Extremal coin tails: how likely the Z-basis coin count strays from n/2
//! when at most ⌊nΔ⌋ coins may read X = −1.

use bb84_flaws::lemma_verify::{binomial_tail, coin_extremal_tail, coin_tail_decay, CoinSubspaceSpec};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("k = 0 reproduces the symmetric binomial tail:");
    for (n, t) in [(8, 2), (12, 3), (16, 4)] {
        let tail = coin_extremal_tail(CoinSubspaceSpec::new(n, 0, t)?)?;
        println!("  n={n:2} t={t}  tail={tail:.12}  binomial={:.12}", binomial_tail(n, t));
    }

    println!("Delta = 0.1, slack 0.05:");
    let start = Instant::now();
    for (spec, tail) in coin_tail_decay(&[8, 12, 16, 20], 0.1, 0.05)? {
        println!("  n={:2} k={} t={}  tail={tail:.6e}", spec.n, spec.k, spec.t);
    }
    println!("  ({:.2?})", start.elapsed());
    Ok(())
}
