//! Coin outcome statistics when each signal is hit by one of two nearby
//! isometries chosen by its coin: P(x) stays below ε^|x|.

use bb84_flaws::lemma_verify::{random_close_isometries, verify_lemma3};
use bb84_flaws::quantum::random;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 4;
    let pairs = (0..n)
        .map(|_| random_close_isometries(2, 2, 2, 0.4, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let phi = random::ket(1 << n, &mut rng);
    let out = verify_lemma3(&pairs, &phi)?;
    println!("per-coin eps: {:?}", out.epsilons.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>());
    for (x, p) in out.distribution.iter().enumerate() {
        let w = (x as u32).count_ones() as i32;
        println!("x = {x:04b}  P = {p:.3e}  eps^|x| = {:.3e}", out.epsilon.powi(w));
    }
    println!("{}", out.report);
    Ok(())
}
