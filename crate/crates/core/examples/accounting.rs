//! Privacy accounting without running the sampler.

use langevin_dp::privacy::{
    account_multi_pass, certify_multi_pass, gaussian_step_epsilon, rdp_to_dp, single_pass_report, strong_compose,
    subsample_amplify,
};
use langevin_dp::{DpBudget, MultiPassSchedule, RdpBudget, Result, SinglePassSchedule};

fn main() -> Result<()> {
    // Building blocks.
    let step = gaussian_step_epsilon(0.1, 1.0, 1.0, 1e-5)?;
    let amplified = subsample_amplify(step, 1000, 1e-5)?;
    println!(
        "one Gaussian step: {step:.4}; after sampling 1 of 1000: {:.6}",
        amplified.epsilon
    );
    let composed = strong_compose(&vec![amplified; 1000], 1e-5)?;
    println!(
        "1000 such steps: epsilon = {:.4}, delta = {:e}",
        composed.epsilon, composed.delta
    );
    println!(
        "RDP (10, 0.1) as DP at delta 1e-6: {:.4}",
        rdp_to_dp(RdpBudget::new(10.0, 0.1)?, 1e-6)?.epsilon
    );

    // Whole schedules.
    print!(
        "{}",
        single_pass_report(&SinglePassSchedule::new(10_000, 1.0, 1.0, 0.5, 1e-5)?)?
    );
    let schedule = MultiPassSchedule::new(1000, 1.5, 0.5, 1e-6, 1.0, 1.0)?;
    let account = account_multi_pass(&schedule)?;
    println!(
        "multi-pass T = {}: composed {:.4}, closed form {:.4}",
        account.steps, account.composed.epsilon, account.closed_form.epsilon
    );

    for pass_exponent in [1.0, 1.5, 2.0] {
        let c = certify_multi_pass(10_000, pass_exponent, 1.0, 1e-8)?;
        let DpBudget { epsilon, .. } = c.exact;
        println!(
            "pass exponent {pass_exponent}: exact {epsilon:.4}, advertised {:.4}",
            c.claimed.epsilon
        );
    }
    Ok(())
}
