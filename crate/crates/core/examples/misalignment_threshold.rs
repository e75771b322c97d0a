//! Largest tolerable basis misalignment as the bit error rate grows.

use bb84_flaws::keyrate::{bb84_threshold, misalignment_threshold};
use bb84_flaws::Probability;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("bit errors alone stop key generation at delta = {:.6}", bb84_threshold().value());
    for delta in [0.0, 0.005, 0.01, 0.02, 0.03, 0.05] {
        let theta = misalignment_threshold(Probability::new(delta)?);
        println!("delta = {delta:<5}  theta* = {:.4} deg", theta.to_degrees());
    }
    Ok(())
}
