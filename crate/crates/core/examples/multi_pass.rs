//! Multi-pass run with a population-risk trace, written as CSV to stdout.

use std::io;

use langevin_dp::datagen::{draw_dataset, FeatureLaw, HeldOutSet, ModelKind, PopulationModel};
use langevin_dp::rng::purpose;
use langevin_dp::{run_multi_pass, GlmLoss, MultiPassSchedule, Result, RngStream, RunOptions};

fn main() -> Result<()> {
    let n = 300;
    let model = PopulationModel::with_norm(ModelKind::Logistic, FeatureLaw::Spherical, 10, 3.0)?;
    let rng = RngStream::new(7, 0);
    let data = draw_dataset(&model, n, &mut rng.substream(purpose::DATA))?;
    let held = HeldOutSet::draw(
        &model,
        10_000,
        &mut RngStream::new(7, u64::MAX).substream(purpose::HELD_OUT),
    )?;

    let schedule = MultiPassSchedule::new(n, 1.5, 2.0, 1.0 / (n * n) as f64, 2.0, 1.0)?;
    let opts = RunOptions {
        log_interval: Some(schedule.etas().len() / 20),
        empirical_risk: true,
        probe: Some(&held),
        ..Default::default()
    };
    let record = run_multi_pass(&data, &GlmLoss::Logistic, &schedule, &rng, opts)?;
    record.write_csv(io::stdout().lock())?;
    if let Some(avg) = record.time_averaged_population_risk() {
        eprintln!("time-averaged population risk: {avg:.4}");
    }
    Ok(())
}
