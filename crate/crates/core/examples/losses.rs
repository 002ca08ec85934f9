//! The three loss families: values, gradients and their constants.

use langevin_dp::oracles::finite_diff_gradient;
use langevin_dp::{Example, GlmLoss, Result, Vector};

fn main() -> Result<()> {
    let z = Example::new(Vector::new(vec![0.6, 0.0, 0.8])?, 1.0)?;
    let w = Vector::new(vec![0.5, -1.0, 0.25])?;
    for loss in [
        GlmLoss::Logistic,
        GlmLoss::smoothed_hinge(0.5)?,
        GlmLoss::quadratic(1.0, 1.0)?,
    ] {
        let b = loss.bounds();
        let g = loss.gradient(&w, &z)?;
        let fd = finite_diff_gradient(&loss, &w, &z, 1e-6)?;
        println!(
            "{:<15} value {:.4}  |grad| {:.4}  fd error {:.1e}  G {} L {}",
            loss.name(),
            loss.value(&w, &z)?,
            g.norm(),
            g.distance_sq(&fd).sqrt(),
            b.g,
            b.smoothness
        );
    }
    Ok(())
}
