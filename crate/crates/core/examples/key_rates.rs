//! Every flaw model at one operating point, next to the flawless rate.

use bb84_flaws::keyrate::{rate, rate_basis_independent, FlawModel, RefinedMode};
use bb84_flaws::Probability;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let delta = 0.03;
    let models = [
        FlawModel::DeltaBalanced { delta, balance: 0.005 },
        FlawModel::SourceFlaw { delta, eps_s: 0.001 },
        FlawModel::ObliviousIndividual { delta, eps: 0.001 },
        FlawModel::Misalignment { delta, theta: 2f64.to_radians() },
        FlawModel::GenericIndividual { delta, eps: 1e-5 },
        FlawModel::TaggingSimple { delta, tagged: 0.1 },
        FlawModel::Tagging { delta, tagged: 0.1 },
        FlawModel::CoherentTagging { delta, tagged: 0.1 },
        FlawModel::TrojanPony { delta, removed: 0.05, random_loss: 0.2 },
        FlawModel::IlmDoubleClick { delta, double_click: 0.05 },
        FlawModel::RefinedBias { delta_x: 0.02, delta_z: 0.04, p_x: 0.5, mode: RefinedMode::BiasedEfficiency },
        FlawModel::RefinedBias { delta_x: 0.02, delta_z: 0.04, p_x: 0.5, mode: RefinedMode::PureRefined },
    ];
    println!("flawless at delta = {delta}: {:.6}", rate_basis_independent(Probability::new(delta)?).raw);
    println!("{:<22} {:>10} {:>10} {:>10}  feasible", "model", "Delta_eff", "phase", "rate");
    for m in &models {
        let r = rate(m)?;
        println!(
            "{:<22} {:>10.6} {:>10.6} {:>10.6}  {}",
            m.name(),
            r.effective_delta.value(),
            r.effective_phase_rate.value(),
            r.clamped,
            r.feasible
        );
    }
    Ok(())
}
