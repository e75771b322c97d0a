//! Monte Carlo of a tagging attack: the gap between phase and bit error
//! counts stays within the tagged fraction.

use bb84_flaws::edp_mc::{check_gap_bound, check_tagging_gap, mc_confidence, simulate, AttackScenario, ALPHA};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let delta = 0.2;
    let t = simulate(&AttackScenario::Tagging { delta, q_untagged: 0.05 }, 1_000_000, 2)?;
    println!(
        "tagged {} of {}, untagged bit rate {:.5}, gap {:.5}",
        t.n_tagged,
        t.n_pairs,
        t.untagged_bit_rate(),
        t.gap_hat
    );
    println!("99% half-width at this size: {:.2e}", mc_confidence(t.n_pairs, ALPHA));
    println!("{}", check_tagging_gap(&t, delta)?);
    println!("{}", check_gap_bound(&t, delta)?);
    Ok(())
}
