//! The balance function f(Δ) beside its two closed-form upper bounds.

use bb84_flaws::entropy::{balance_threshold, f_of_delta, f_upper_bounds};
use bb84_flaws::Probability;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "Delta", "f", "residual", "quad", "sqrt");
    for d in [0.0, 0.001, 0.01, 0.0289, 0.05, 0.1, 0.2, 0.5] {
        let p = Probability::new(d)?;
        let r = f_of_delta(p)?;
        let b = f_upper_bounds(p);
        println!(
            "{d:>8} {:>10.6} {:>10.1e} {:>10.6} {:>10.6}",
            r.f_value, r.residual, b.quadratic_bound, b.sqrt_bound
        );
    }
    println!("2 f(Delta) = 1/2 at Delta = {:.9}", balance_threshold().value());
    Ok(())
}
