//! Fast invariant checks behind the `selftest` subcommand.

use std::io::Write;

use crate::data::{Dataset, Example};
use crate::engine::{drift, run_single_pass, RunOptions, SgldState};
use crate::error::Result;
use crate::linalg::Vector;
use crate::losses::GlmLoss;
use crate::oracles::{finite_diff_gradient, ks_test_normal};
use crate::privacy::{certify_single_pass, gaussian_step_epsilon, multi_pass_privacy, rdp_to_dp, RdpBudget};
use crate::rng::RngStream;
use crate::schedules::{MultiPassSchedule, SinglePassSchedule, StepParams, StepSchedule};

type Check = fn() -> Result<Option<String>>;

const CHECKS: [(&str, Check); 7] = [
    ("single-pass certificate", certificate),
    ("accountant reference values", accountant),
    ("gradients match finite differences", gradients),
    ("schedule shrink range and budget", schedules),
    ("full shrink gives the stationary law", stationary_law),
    ("drift is nonexpansive", contractive),
    ("runs are deterministic", deterministic),
];

/// Runs every check, printing one line each. Returns whether all passed.
pub fn run_all(out: &mut dyn Write) -> Result<bool> {
    let mut all = true;
    for (name, check) in CHECKS {
        match check() {
            Ok(None) => writeln!(out, "PASS {name}")?,
            Ok(Some(why)) => {
                all = false;
                writeln!(out, "FAIL {name}: {why}")?;
            }
            Err(e) => {
                all = false;
                writeln!(out, "FAIL {name}: error: {e}")?;
            }
        }
    }
    Ok(all)
}

fn fail(cond: bool, why: impl FnOnce() -> String) -> Option<String> {
    (!cond).then(why)
}

fn certificate() -> Result<Option<String>> {
    let s = SinglePassSchedule::new(10_000, 1.0, 1.0, 0.5, 1e-5)?;
    let c = certify_single_pass(&s)?;
    Ok(fail((c.dp.epsilon - 1.0).abs() < 1e-9, || {
        format!("dp epsilon {}", c.dp.epsilon)
    }))
}

fn accountant() -> Result<Option<String>> {
    let g = gaussian_step_epsilon(0.1, 1.0, 1.0, 1e-5)?;
    let m = multi_pass_privacy(1000, 1000, 1e-5)?.epsilon;
    let r = rdp_to_dp(RdpBudget::new(10.0, 0.1)?, 1e-6)?.epsilon;
    Ok(fail(
        (g - 0.968961).abs() <= 1e-6 && (m - 0.4321039146).abs() <= 1e-9 && (r - 1.635057).abs() <= 1e-6,
        || format!("got {g}, {m}, {r}"),
    ))
}

fn random_example(rng: &mut RngStream, d: usize, label: f64) -> Result<Example> {
    let mut x: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = 0.2 + 0.8 * rng.uniform();
    x.iter_mut().for_each(|v| *v *= r / norm);
    Example::new(Vector::new(x)?, label)
}

fn gradients() -> Result<Option<String>> {
    let mut rng = RngStream::new(1, 0);
    let losses = [
        GlmLoss::Logistic,
        GlmLoss::smoothed_hinge(0.5)?,
        GlmLoss::quadratic(2.0, 1.0)?,
    ];
    for i in 0..300 {
        let loss = losses[i % 3];
        let d = 1 + rng.index(6);
        let label = match loss {
            GlmLoss::Quadratic { .. } => 2.0 * rng.uniform() - 1.0,
            _ => {
                if rng.uniform() < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
        };
        let z = random_example(&mut rng, d, label)?;
        let mut w: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        if let GlmLoss::Quadratic { .. } = loss {
            // Keep the prediction in the range where the gradient bound holds.
            let a: f64 = w.iter().zip(z.x().iter()).map(|(a, b)| a * b).sum();
            if a.abs() > 2.0 {
                w.iter_mut().for_each(|v| *v *= 1.9 / a.abs());
            }
        }
        let w = Vector::new(w)?;
        let g = loss.gradient(&w, &z)?;
        let fd = finite_diff_gradient(&loss, &w, &z, 1e-5)?;
        let err = g.distance_sq(&fd).sqrt();
        if err > 1e-5 * g.norm().max(1e-7) {
            return Ok(Some(format!("{loss} relative error {err} at case {i}")));
        }
        if g.norm() > loss.bounds().g * (1.0 + 1e-12) {
            return Ok(Some(format!("{loss} gradient norm {} above G", g.norm())));
        }
    }
    Ok(None)
}

fn schedules() -> Result<Option<String>> {
    for steps in [1usize, 8, 100] {
        let s = SinglePassSchedule::new(steps, 1.0, 1.0, 0.5, 1e-5)?;
        for t in 1..=steps {
            let sh = s.step_params(t).shrink;
            if !(sh > 0.0 && sh <= 1.0) {
                return Ok(Some(format!("single-pass T={steps} t={t} shrink {sh}")));
            }
        }
    }
    let m = MultiPassSchedule::new(100, 1.5, 1.0, 1e-4, 1.0, 1.0)?;
    for t in 1..=m.steps() {
        let sh = m.step_params(t).shrink;
        if !(sh > 0.0 && sh <= 1.0) {
            return Ok(Some(format!("multi-pass t={t} shrink {sh}")));
        }
    }
    let budget = SinglePassSchedule::new(8, 1.0, 1.0, 0.5, 1e-5)?.sample_budget();
    Ok(fail(budget == 11, || format!("budget(8) = {budget}")))
}

fn stationary_law() -> Result<Option<String>> {
    let beta0 = 0.4;
    let z = Example::new(Vector::new(vec![0.6, 0.8])?, 1.0)?;
    let mut samples = Vec::with_capacity(4000);
    for r in 0..4000 {
        let mut s = SgldState::from_parts(0, Vector::new(vec![3.0, -2.0])?, RngStream::new(2, r));
        s.step(&[&z], StepParams::new(0.5, 1.0), beta0, &GlmLoss::Logistic)?;
        samples.push(s.w()[0]);
    }
    let (_, p) = ks_test_normal(&samples, beta0)?;
    Ok(fail(p > 1e-3, || format!("KS p-value {p}")))
}

fn contractive() -> Result<Option<String>> {
    let mut rng = RngStream::new(3, 0);
    for i in 0..300 {
        let d = 1 + rng.index(5);
        let loss = if i % 2 == 0 {
            GlmLoss::Logistic
        } else {
            GlmLoss::smoothed_hinge(0.5)?
        };
        let eta = 2.0 / loss.bounds().smoothness * rng.uniform();
        let batch: Vec<Example> = (0..1 + rng.index(3))
            .map(|_| {
                let label = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                random_example(&mut rng, d, label)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Example> = batch.iter().collect();
        let w = Vector::new((0..d).map(|_| 3.0 * rng.standard_normal()).collect())?;
        let v = Vector::new((0..d).map(|_| 3.0 * rng.standard_normal()).collect())?;
        let params = StepParams::new(eta, rng.uniform());
        let a = drift(&w, &refs, params, &loss)?;
        let b = drift(&v, &refs, params, &loss)?;
        if a.distance_sq(&b).sqrt() > w.distance_sq(&v).sqrt() * (1.0 + 1e-12) {
            return Ok(Some(format!("case {i} expands")));
        }
    }
    Ok(None)
}

fn deterministic() -> Result<Option<String>> {
    let s = SinglePassSchedule::new(30, 1.0, 1.0, 1.0, 1e-5)?;
    let mut rng = RngStream::new(4, 0);
    let data = Dataset::new(
        (0..s.sample_budget())
            .map(|_| random_example(&mut rng, 3, 1.0))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let a = run_single_pass(
        &data,
        &GlmLoss::Logistic,
        &s,
        &RngStream::new(9, 1),
        RunOptions::default(),
    )?;
    let b = run_single_pass(
        &data,
        &GlmLoss::Logistic,
        &s,
        &RngStream::new(9, 1),
        RunOptions::default(),
    )?;
    Ok(fail(a == b, || "records differ".into()))
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        let mut buf = Vec::new();
        assert!(super::run_all(&mut buf).unwrap(), "{}", String::from_utf8_lossy(&buf));
    }
}
