//! One private single-pass run on synthetic logistic data, with its certificate.

use langevin_dp::datagen::{draw_dataset, FeatureLaw, HeldOutSet, ModelKind, PopulationModel};
use langevin_dp::privacy::certify_single_pass;
use langevin_dp::rng::purpose;
use langevin_dp::schedules::single_pass_steps_within;
use langevin_dp::{run_single_pass, GlmLoss, Result, RngStream, RunOptions, SinglePassSchedule};

fn main() -> Result<()> {
    let (n, d) = (2000, 50);
    let model = PopulationModel::with_norm(ModelKind::Logistic, FeatureLaw::Spherical, d, 2.0)?;
    let rng = RngStream::new(42, 0);
    let data = draw_dataset(&model, n, &mut rng.substream(purpose::DATA))?;

    let steps = single_pass_steps_within(n);
    let schedule = SinglePassSchedule::new(steps, 1.0, 1.0, 0.5, 1e-5)?;
    let cert = certify_single_pass(&schedule)?;
    println!("T = {steps}, examples used = {} of {n}", schedule.sample_budget());
    println!("RDP: alpha = {:.3}, epsilon = {:.3}", cert.rdp.alpha, cert.rdp.epsilon);
    println!("DP:  epsilon = {:.3}, delta = {:e}", cert.dp.epsilon, cert.dp.delta);

    let held = HeldOutSet::draw(
        &model,
        20_000,
        &mut RngStream::new(42, u64::MAX).substream(purpose::HELD_OUT),
    )?;
    let loss = GlmLoss::Logistic;
    let record = run_single_pass(&data, &loss, &schedule, &rng, RunOptions::default())?;
    let (excess, se) = held.excess_risk(&loss, &record.final_iterate, model.w_star())?;
    println!("excess risk of the released iterate: {excess:.4} +/- {se:.4}");
    Ok(())
}
