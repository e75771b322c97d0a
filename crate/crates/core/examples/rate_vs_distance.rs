//! Throughput against fiber length with the mean photon number re-optimized
//! at every length.

use bb84_flaws::wcp::{rate_vs_distance, Link, WcpSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let template = Link::fiber(0.15, 0.25, 0.0, 1e-5, 0.01)?;
    let source = WcpSource::new(0.01, 1e6)?;
    let lengths: Vec<f64> = (0..=12).map(|i| 5.0 * i as f64).collect();
    for (l, b) in lengths.iter().zip(rate_vs_distance(&source, &template, &lengths, Some((1e-5, 1.0)))?) {
        println!(
            "{l:>5.1} km  mu* = {:.5}  Delta = {:.4}  throughput = {:.3} Hz",
            b.mu,
            b.delta_tag.value(),
            b.throughput_hz
        );
    }
    Ok(())
}
