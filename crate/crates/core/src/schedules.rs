//! Step-size, shrinkage, prior-variance and mini-batch schedules.
//!
//! Two calibrations are provided:
//!
//! * [`SinglePassSchedule`]: constant step `eta = eta0 / (2 G sqrt(T))`,
//!   `lambda_t = 1 / (t eta)`, mini-batches `ceil(sqrt(T / (2 (T - t + 1))))`
//!   and prior variance `beta0 = (eps + ln(1/delta)) eta0^2 / (2 eps^2 T)`.
//!   Each example is used once; the last iterate is `(2 eps, delta)`-DP.
//! * [`MultiPassSchedule`]: `T = round(n^a eps^2)` single-example steps with
//!   decreasing `eta_t = sqrt(beta0) / (G sqrt(8 ln(2.5 t^2 / (n delta)) t))`,
//!   `lambda_1 = 1/eta_1`, `lambda_t = 1/eta_t - 1/eta_{t-1}` and
//!   `beta0 = eta0^2 n / T`.
//!
//! Steps are numbered `1..=T`; step 1 always has `lambda_1 eta_1 = 1`, so its
//! output is a fresh `N(0, beta0 I)` draw regardless of the data.

use std::fmt;

use crate::error::{invalid, Result};
use crate::fmtnum::g9;

/// Per-step parameters of the Langevin update.
///
/// `shrink` is the product `lambda_t * eta_t`; the update is
/// `w <- N((1 - shrink)(w - eta grad), shrink (2 - shrink) beta0 I)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    pub eta: f64,
    pub shrink: f64,
}

impl StepParams {
    pub fn new(eta: f64, shrink: f64) -> Self {
        Self { eta, shrink }
    }

    pub fn from_lambda(eta: f64, lambda: f64) -> Self {
        Self {
            eta,
            shrink: lambda * eta,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.shrink / self.eta
    }

    /// Variance of the Gaussian resampling step.
    pub fn noise_variance(&self, beta0: f64) -> f64 {
        self.shrink * (2.0 - self.shrink) * beta0
    }
}

/// Common view of a schedule used by the engine and accountant.
pub trait StepSchedule {
    fn steps(&self) -> usize;
    fn beta0(&self) -> f64;
    fn g(&self) -> f64;
    /// Parameters for step `t` in `1..=steps()`.
    fn step_params(&self, t: usize) -> StepParams;
    fn batch_size(&self, t: usize) -> usize;
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(invalid("delta", format!("must lie in (0, 1), got {delta}")))
    }
}

/// `ceil(sqrt(T / (2 (T - t + 1))))`, computed in exact integer arithmetic.
pub fn minibatch_size(total: usize, t: usize) -> Result<usize> {
    if t < 1 || t > total {
        return Err(invalid("t", format!("must lie in 1..={total}, got {t}")));
    }
    let k = (total - t + 1) as u128;
    let target = total as u128;
    // Smallest m with 2 k m^2 >= T.
    let mut m = ((total as f64) / (2.0 * k as f64)).sqrt().ceil().max(1.0) as u128;
    while m > 1 && 2 * k * (m - 1) * (m - 1) >= target {
        m -= 1;
    }
    while 2 * k * m * m < target {
        m += 1;
    }
    Ok(m as usize)
}

/// Total examples consumed by a single-pass run of `steps` steps.
pub fn single_pass_budget(steps: usize) -> usize {
    (1..=steps).map(|t| minibatch_size(steps, t).expect("t in range")).sum()
}

/// Largest step count whose single-pass budget fits in `n` examples (0 if none).
pub fn single_pass_steps_within(n: usize) -> usize {
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if single_pass_budget(mid) <= n {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

#[derive(Clone, Debug, PartialEq)]
pub struct SinglePassSchedule {
    steps: usize,
    g: f64,
    eta0: f64,
    eta: f64,
    beta0: f64,
    renyi_order: f64,
    epsilon: f64,
    delta: f64,
    batch_sizes: Vec<usize>,
}

impl SinglePassSchedule {
    pub fn new(steps: usize, g: f64, eta0: f64, epsilon: f64, delta: f64) -> Result<Self> {
        if steps < 1 {
            return Err(invalid("T", "must be >= 1"));
        }
        positive("G", g)?;
        positive("eta0", eta0)?;
        positive("epsilon", epsilon)?;
        check_delta(delta)?;
        let t = steps as f64;
        let log_inv_delta = (1.0 / delta).ln();
        let eta = eta0 * (1.0 / (4.0 * g * g * t)).sqrt();
        let beta0 = (epsilon + log_inv_delta) * eta0 * eta0 / (2.0 * epsilon * epsilon * t);
        let renyi_order = 1.0 + log_inv_delta / epsilon;
        let batch_sizes = (1..=steps)
            .map(|s| minibatch_size(steps, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            steps,
            g,
            eta0,
            eta,
            beta0,
            renyi_order,
            epsilon,
            delta,
            batch_sizes,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn lambda(&self, t: usize) -> f64 {
        1.0 / (t as f64 * self.eta)
    }

    /// Renyi order `1 + ln(1/delta) / eps` at which the calibration is tight.
    pub fn renyi_order(&self) -> f64 {
        self.renyi_order
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn batch_sizes(&self) -> &[usize] {
        &self.batch_sizes
    }

    /// Total number of examples consumed, `sum_t |M_t|`.
    pub fn sample_budget(&self) -> usize {
        self.batch_sizes.iter().sum()
    }
}

impl StepSchedule for SinglePassSchedule {
    fn steps(&self) -> usize {
        self.steps
    }

    fn beta0(&self) -> f64 {
        self.beta0
    }

    fn g(&self) -> f64 {
        self.g
    }

    fn step_params(&self, t: usize) -> StepParams {
        // lambda_t eta = 1/t exactly.
        StepParams::new(self.eta, 1.0 / t as f64)
    }

    fn batch_size(&self, t: usize) -> usize {
        self.batch_sizes[t - 1]
    }
}

impl fmt::Display for SinglePassSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode = single-pass")?;
        writeln!(f, "T = {}", self.steps)?;
        writeln!(f, "eta0 = {}", g9(self.eta0))?;
        writeln!(f, "eta = {}", g9(self.eta))?;
        writeln!(f, "beta0 = {}", g9(self.beta0))?;
        writeln!(f, "epsilon = {}", g9(self.epsilon))?;
        writeln!(f, "delta = {}", g9(self.delta))?;
        writeln!(f, "G = {}", g9(self.g))?;
        writeln!(f, "renyi_order = {}", g9(self.renyi_order))?;
        writeln!(f, "sample_budget = {}", self.sample_budget())
    }
}

/// Step count `T = round(n^pass_exponent epsilon^2)`; errors when it is zero.
pub fn multi_pass_steps(n: usize, pass_exponent: f64, epsilon: f64) -> Result<usize> {
    let steps = ((n as f64).powf(pass_exponent) * epsilon * epsilon).round();
    if !(steps >= 1.0) {
        return Err(invalid(
            "epsilon",
            format!("T = round(n^a eps^2) = {steps} < 1; epsilon too small for this exponent"),
        ));
    }
    Ok(steps as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiPassSchedule {
    n: usize,
    pass_exponent: f64,
    steps: usize,
    g: f64,
    eta0: f64,
    beta0: f64,
    epsilon: f64,
    delta: f64,
}

impl MultiPassSchedule {
    pub fn new(n: usize, pass_exponent: f64, epsilon: f64, delta: f64, eta0: f64, g: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", format!("must be >= 2, got {n}")));
        }
        if !(1.0..=2.0).contains(&pass_exponent) {
            return Err(invalid(
                "pass_exponent",
                format!("must lie in [1, 2], got {pass_exponent}"),
            ));
        }
        positive("epsilon", epsilon)?;
        check_delta(delta)?;
        positive("eta0", eta0)?;
        positive("G", g)?;
        // ln(2.5 t^2 / (n delta)) must be positive from t = 1 on.
        if n as f64 * delta >= 2.5 {
            return Err(invalid(
                "delta",
                format!("n * delta = {} must be < 2.5", n as f64 * delta),
            ));
        }
        let steps = multi_pass_steps(n, pass_exponent, epsilon)?;
        let beta0 = eta0 * eta0 * (n as f64 / steps as f64);
        Ok(Self {
            n,
            pass_exponent,
            steps,
            g,
            eta0,
            beta0,
            epsilon,
            delta,
        })
    }

    /// Same calibration, run for an explicit number of steps (possibly zero).
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pass_exponent(&self) -> f64 {
        self.pass_exponent
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eta(&self, t: usize) -> f64 {
        let t = t as f64;
        let log_term = (2.5 * t * t / (self.n as f64 * self.delta)).ln();
        self.beta0.sqrt() / (self.g * (8.0 * log_term * t).sqrt())
    }

    pub fn lambda(&self, t: usize) -> f64 {
        if t == 1 {
            1.0 / self.eta(1)
        } else {
            1.0 / self.eta(t) - 1.0 / self.eta(t - 1)
        }
    }

    pub fn etas(&self) -> Vec<f64> {
        (1..=self.steps).map(|t| self.eta(t)).collect()
    }
}

impl StepSchedule for MultiPassSchedule {
    fn steps(&self) -> usize {
        self.steps
    }

    fn beta0(&self) -> f64 {
        self.beta0
    }

    fn g(&self) -> f64 {
        self.g
    }

    fn step_params(&self, t: usize) -> StepParams {
        let eta = self.eta(t);
        // lambda_t eta_t = 1 - eta_t / eta_{t-1}, and exactly 1 at t = 1.
        let shrink = if t == 1 { 1.0 } else { 1.0 - eta / self.eta(t - 1) };
        StepParams::new(eta, shrink)
    }

    fn batch_size(&self, _t: usize) -> usize {
        1
    }
}

impl fmt::Display for MultiPassSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode = multi-pass")?;
        writeln!(f, "n = {}", self.n)?;
        writeln!(f, "pass_exponent = {}", g9(self.pass_exponent))?;
        writeln!(f, "T = {}", self.steps)?;
        writeln!(f, "eta0 = {}", g9(self.eta0))?;
        writeln!(f, "beta0 = {}", g9(self.beta0))?;
        writeln!(f, "epsilon = {}", g9(self.epsilon))?;
        writeln!(f, "delta = {}", g9(self.delta))?;
        writeln!(f, "G = {}", g9(self.g))?;
        writeln!(f, "sample_budget = {}", self.steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_pass_calibration() {
        let s = SinglePassSchedule::new(10_000, 1.0, 1.0, 0.5, 1e-5).unwrap();
        assert_relative_eq!(s.eta(), 0.005, max_relative = 1e-15);
        // Reference values from 40-digit evaluation.
        assert_relative_eq!(s.beta0(), 0.002_402_585_092_994_045_7, max_relative = 1e-14);
        assert_relative_eq!(s.renyi_order(), 24.025_850_929_940_457, max_relative = 1e-14);
    }

    #[test]
    fn single_step_degenerate() {
        let s = SinglePassSchedule::new(1, 1.0, 1.0, 0.5, 1e-5).unwrap();
        assert_eq!(s.eta(), 0.5);
        assert_eq!(s.batch_size(1), 1);
        assert_eq!(s.sample_budget(), 1);
        assert_eq!(s.step_params(1).shrink, 1.0);
    }

    #[test]
    fn eight_step_batches() {
        let s = SinglePassSchedule::new(8, 1.0, 1.0, 0.5, 1e-5).unwrap();
        assert_eq!(s.batch_sizes(), &[1, 1, 1, 1, 1, 2, 2, 2]);
        assert_eq!(s.sample_budget(), 11);
        assert_eq!(minibatch_size(8, 1).unwrap(), 1);
        assert_eq!(minibatch_size(8, 8).unwrap(), 2);
        assert_eq!(minibatch_size(1, 1).unwrap(), 1);
    }

    #[test]
    fn minibatch_out_of_range() {
        assert!(minibatch_size(8, 0).is_err());
        assert!(minibatch_size(8, 9).is_err());
    }

    #[test]
    fn minibatch_matches_float_formula_off_squares() {
        for total in 1..300usize {
            for t in 1..=total {
                let exact = minibatch_size(total, t).unwrap();
                let q = total as f64 / (2.0 * (total - t + 1) as f64);
                assert!((exact as f64) >= q.sqrt() - 1e-12);
                assert!(((exact - 1) as f64) < q.sqrt());
            }
        }
    }

    #[test]
    fn budget_for_thousand_steps() {
        let s = SinglePassSchedule::new(1000, 1.0, 1.0, 0.5, 1e-5).unwrap();
        let b = s.sample_budget();
        assert!((1414..=2415).contains(&b), "{b}");
    }

    #[test]
    fn single_pass_rejects_bad_params() {
        assert!(SinglePassSchedule::new(0, 1.0, 1.0, 0.5, 1e-5).is_err());
        assert!(SinglePassSchedule::new(10, 0.0, 1.0, 0.5, 1e-5).is_err());
        assert!(SinglePassSchedule::new(10, 1.0, -1.0, 0.5, 1e-5).is_err());
        assert!(SinglePassSchedule::new(10, 1.0, 1.0, 0.0, 1e-5).is_err());
        assert!(SinglePassSchedule::new(10, 1.0, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn multi_pass_first_step() {
        // n = 100, T = 1000 gives beta0 = 0.1 eta0^2; choose eta0 so beta0 = 0.01.
        let eta0 = 0.1f64.sqrt();
        let s = MultiPassSchedule::new(100, 1.5, 1.0, 1e-5, eta0, 1.0).unwrap();
        assert_eq!(s.steps(), 1000);
        assert_relative_eq!(s.beta0(), 0.01, max_relative = 1e-14);
        assert_relative_eq!(s.eta(1), 0.012_639_773_995_095_093, max_relative = 1e-13);
        assert_relative_eq!(s.lambda(1), 1.0 / 0.012_639_773_995_095_093, max_relative = 1e-13);
    }

    #[test]
    fn multi_pass_step_count() {
        let eps = 100f64.powf(-0.25);
        let s = MultiPassSchedule::new(100, 2.0, eps, 1e-5, 1.0, 1.0).unwrap();
        assert_eq!(s.steps(), 1000);
    }

    #[test]
    fn multi_pass_rejects_tiny_epsilon() {
        assert!(MultiPassSchedule::new(100, 1.0, 0.01, 1e-5, 1.0, 1.0).is_err());
        assert!(MultiPassSchedule::new(1, 1.0, 1.0, 1e-5, 1.0, 1.0).is_err());
        assert!(MultiPassSchedule::new(100, 2.5, 1.0, 1e-5, 1.0, 1.0).is_err());
    }

    #[test]
    fn multi_pass_shrink_identity() {
        let s = MultiPassSchedule::new(50, 2.0, 0.5, 1e-4, 1.0, 1.0).unwrap();
        assert_eq!(s.step_params(1).shrink, 1.0);
        for t in 2..=s.steps() {
            let p = s.step_params(t);
            assert!(p.shrink > 0.0 && p.shrink < 1.0);
            assert!(s.eta(t) < s.eta(t - 1));
            assert_relative_eq!(p.shrink, s.lambda(t) * s.eta(t), max_relative = 1e-9);
        }
    }

    #[test]
    fn key_value_block() {
        let s = SinglePassSchedule::new(8, 1.0, 1.0, 0.5, 1e-5).unwrap();
        let text = s.to_string();
        assert!(text.contains("mode = single-pass"));
        assert!(text.contains("sample_budget = 11"));
        for line in text.lines() {
            assert!(line.contains(" = "), "{line}");
        }
    }

    #[test]
    fn steps_within_budget() {
        assert_eq!(single_pass_budget(8), 11);
        assert_eq!(single_pass_steps_within(11), 8);
        assert_eq!(single_pass_steps_within(0), 0);
        for n in [1usize, 2, 10, 128, 2048] {
            let t = single_pass_steps_within(n);
            assert!(single_pass_budget(t) <= n);
            assert!(single_pass_budget(t + 1) > n);
        }
    }
}
