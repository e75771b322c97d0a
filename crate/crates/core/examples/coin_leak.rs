//! How much basis information a flawed source leaks through the coin, with
//! aligned and with deliberately misaligned purifications.

use bb84_flaws::lemma_verify::{coin_leak_misaligned, qubit_pair_with_fidelity, source_flaw, verify_coin_leak};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (rho0, rho1) = qubit_pair_with_fidelity(0.99, &mut rng)?;
    println!("eps_s = {:.6}", source_flaw(&rho0, &rho1)?);
    println!("{}", verify_coin_leak(&rho0, &rho1, Some(0.005))?);
    let search = coin_leak_misaligned(&rho0, &rho1, 200, 11)?;
    println!("{search:?}");
    Ok(())
}
