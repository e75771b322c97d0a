//! Photon statistics and the link budget of a weak coherent source, at a
//! fixed mean photon number and at the optimized one.

use bb84_flaws::wcp::{budget, optimize_mu, Link, WcpSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let link = Link::fiber(0.15, 0.25, 10.0, 1e-6, 0.01)?;
    println!("eta = {:.5} at {} km", link.transmittance(), link.length_km);
    for mu in [0.005, 0.01, 0.05, 0.1] {
        let b = budget(&WcpSource::new(mu, 1e6)?, &link)?;
        println!(
            "mu = {mu:<6} pM = {:.3e}  pD = {:.3e}  Delta = {:.4}  delta = {:.4}  throughput = {:.2} Hz",
            b.p_m,
            b.p_d,
            b.delta_tag.value(),
            b.delta_bits.value(),
            b.throughput_hz
        );
    }
    let best = optimize_mu(1e6, &link, (1e-4, 1.0))?;
    println!("optimum mu = {:.5}, throughput = {:.2} Hz (unimodal: {})", best.mu, best.budget.throughput_hz, best.unimodal);
    Ok(())
}
