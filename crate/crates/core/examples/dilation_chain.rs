//! Close channels have close dilations: the identity against a depolarizing
//! channel, step by step.

use bb84_flaws::lemma_verify::verify_dilation_chain;
use bb84_flaws::quantum::Channel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for q in [0.01, 0.05, 0.1] {
        let out = verify_dilation_chain(&Channel::identity(2), &Channel::depolarizing(q)?, 100, 1)?;
        println!("q = {q}: eps = {:.4}, Uhlmann deviation {:.1e}", out.epsilon, out.uhlmann_deviation);
        for r in &out.reports {
            println!("  {r}");
        }
    }
    Ok(())
}
