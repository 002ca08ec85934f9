//! Coupled chains on neighboring datasets against the stability bound.

use langevin_dp::datagen::{draw_dataset, FeatureLaw, ModelKind, PopulationModel};
use langevin_dp::engine::coupled_stability_run;
use langevin_dp::oracles::{mean_and_se, stability_bound};
use langevin_dp::rng::purpose;
use langevin_dp::{GlmLoss, MultiPassSchedule, Result, RngStream};

fn main() -> Result<()> {
    let n = 100;
    let model = PopulationModel::with_norm(ModelKind::Logistic, FeatureLaw::Spherical, 16, 1.0)?;
    let schedule = MultiPassSchedule::new(n, 1.5, 1.0, 1e-4, 1.0, 1.0)?;
    let runs: Vec<Vec<(usize, f64)>> = (0..100u64)
        .map(|r| {
            let rng = RngStream::new(3, r);
            let data = draw_dataset(&model, n, &mut rng.substream(purpose::DATA))?;
            let swap = model.draw_example(&mut rng.substream(purpose::NEIGHBOR))?;
            let prime = data.with_replaced(0, swap)?;
            coupled_stability_run(&data, &prime, &GlmLoss::Logistic, &schedule, r)
        })
        .collect::<Result<_>>()?;
    let etas = schedule.etas();
    println!("t,mean_sq_distance,se,bound");
    for t in (100..=etas.len()).step_by(100) {
        let vals: Vec<f64> = runs.iter().map(|run| run[t - 1].1).collect();
        let (mean, se) = mean_and_se(&vals);
        println!("{t},{mean:.3e},{se:.1e},{:.3e}", stability_bound(t, n, 1.0, &etas)?);
    }
    Ok(())
}
