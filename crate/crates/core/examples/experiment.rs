//! A reduced excess-risk sweep through the experiment harness.

use langevin_dp::harness::{run_experiment, ExperimentConfig, ExperimentName};
use langevin_dp::Result;

fn main() -> Result<()> {
    let mut config = ExperimentConfig::defaults(ExperimentName::ExcessRiskVsN);
    config.n_grid = vec![64, 128, 256, 512];
    config.replicates = 10;
    config.n_test = 5_000;
    config.validate()?;
    let report = run_experiment(&config)?;
    report.write_csv(std::io::stdout().lock())?;
    eprint!("{}", report.summary_text());
    Ok(())
}
