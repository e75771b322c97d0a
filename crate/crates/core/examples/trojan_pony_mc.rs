//! Monte Carlo of a detector-control attack that hides bit errors by
//! suppressing detections.

use bb84_flaws::edp_mc::{check_pony, simulate, AttackScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (p, delta) = (0.1, 0.05);
    let t = simulate(&AttackScenario::Pony { p, delta }, 1_000_000, 1)?;
    println!("removed {} of {} pairs", t.n_removed, t.n_pairs);
    println!("bit error   {:.5}  expected {:.5}", t.delta_hat, (p - delta) / (1.0 - delta));
    println!("phase error {:.5}  expected {:.5}", t.delta_p_hat, p / (1.0 - delta));
    for r in check_pony(&t, p, delta)? {
        println!("{r}");
    }
    Ok(())
}
