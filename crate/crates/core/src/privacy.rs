//! Privacy accounting for the single-pass and multi-pass schedules.
//!
//! Everything here is a pure function of schedule parameters and loss bounds;
//! no data is ever inspected. Logarithms are natural.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::fmtnum::g9;
use crate::schedules::{MultiPassSchedule, SinglePassSchedule, StepSchedule};

/// An `(epsilon, delta)` differential privacy guarantee.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(invalid("epsilon", format!("must be >= 0, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid("delta", format!("must lie in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// An `(alpha, epsilon)` Renyi differential privacy guarantee.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdpBudget {
    pub alpha: f64,
    pub epsilon: f64,
}

impl RdpBudget {
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(invalid("alpha", format!("must be > 1, got {alpha}")));
        }
        if !(epsilon >= 0.0) {
            return Err(invalid("epsilon", format!("must be >= 0, got {epsilon}")));
        }
        Ok(Self { alpha, epsilon })
    }
}

fn open_unit(name: &'static str, delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in (0, 1), got {delta}")))
    }
}

/// Gaussian mechanism on a step of size `eta` with gradient bound `g` and
/// noise standard deviation `sigma`: `sqrt(8 ln(1.25/delta)) eta G / sigma`.
pub fn gaussian_step_epsilon(eta: f64, g: f64, sigma: f64, delta: f64) -> Result<f64> {
    open_unit("delta", delta)?;
    if !(eta >= 0.0) || !(g >= 0.0) || !(sigma >= 0.0) {
        return Err(invalid("eta/G/sigma", "must be nonnegative"));
    }
    let sensitivity = eta * g;
    if sensitivity == 0.0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Err(Error::InfinitePrivacyLoss(format!(
            "noise-free step with eta*G = {sensitivity}"
        )));
    }
    Ok((8.0 * (1.25 / delta).ln()).sqrt() * sensitivity / sigma)
}

/// Amplification by uniform sampling of one element out of `m`:
/// `(ln(1 + exp(step_epsilon)/m), delta/m)`.
pub fn subsample_amplify(step_epsilon: f64, m: usize, delta: f64) -> Result<DpBudget> {
    check_amplify(step_epsilon, m, delta)?;
    DpBudget::new((step_epsilon.exp() / m as f64).ln_1p(), delta / m as f64)
}

/// The usual amplification `ln(1 + (exp(step_epsilon) - 1)/m)`, for comparison.
pub fn subsample_amplify_standard(step_epsilon: f64, m: usize, delta: f64) -> Result<DpBudget> {
    check_amplify(step_epsilon, m, delta)?;
    DpBudget::new((step_epsilon.exp_m1() / m as f64).ln_1p(), delta / m as f64)
}

fn check_amplify(step_epsilon: f64, m: usize, delta: f64) -> Result<()> {
    if m == 0 {
        return Err(invalid("m", "must be >= 1"));
    }
    if !(step_epsilon >= 0.0) {
        return Err(invalid("step_epsilon", format!("must be >= 0, got {step_epsilon}")));
    }
    open_unit("delta", delta)
}

/// Per-step delta share `0.5 delta / (t (t - 1))` for `t >= 2`; step 1 gets nothing.
pub fn delta_allotment(t: usize, delta: f64) -> f64 {
    if t < 2 {
        0.0
    } else {
        0.5 * delta / (t as f64 * (t - 1) as f64)
    }
}

/// Strong composition: `sqrt(2 ln(2/delta') sum eps^2) + sum eps (e^eps - 1)`,
/// with total delta `delta' + sum delta_t`.
pub fn strong_compose(per_step: &[DpBudget], delta_prime: f64) -> Result<DpBudget> {
    open_unit("delta_prime", delta_prime)?;
    let mut sq = 0.0;
    let mut drift = 0.0;
    let mut delta = delta_prime;
    for b in per_step {
        if !(b.epsilon >= 0.0) {
            return Err(invalid("epsilon_t", format!("must be >= 0, got {}", b.epsilon)));
        }
        sq += b.epsilon * b.epsilon;
        drift += b.epsilon * b.epsilon.exp_m1();
        delta += b.delta;
    }
    if delta >= 1.0 {
        return Err(invalid("delta", format!("composed delta {delta} is not below 1")));
    }
    DpBudget::new((2.0 * (2.0 / delta_prime).ln() * sq).sqrt() + drift, delta)
}

/// Closed-form multi-pass guarantee `(sqrt(2 T ln(2/delta)) e/n + T e^2/n^2, delta)`.
pub fn multi_pass_privacy(n: usize, steps: usize, delta: f64) -> Result<DpBudget> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    open_unit("delta", delta)?;
    let e = std::f64::consts::E;
    let (n, t) = (n as f64, steps as f64);
    DpBudget::new(
        (2.0 * t * (2.0 / delta).ln()).sqrt() * e / n + t * e * e / (n * n),
        delta,
    )
}

/// RDP of noisy SGD released at the last iterate:
/// `max_tau 2 alpha G^2 eta_tau^2 / (|M_tau|^2 sum_{t >= tau} eta_t^2 sigma_t^2)`,
/// where `sigma_t` is the standard deviation of the noise added to the gradient.
pub fn noisy_sgd_rdp_bound(
    alpha: f64,
    g: f64,
    etas: &[f64],
    sigmas: &[f64],
    batch_sizes: &[usize],
) -> Result<RdpBudget> {
    if etas.is_empty() {
        return Err(invalid("etas", "must be nonempty"));
    }
    if etas.len() != sigmas.len() || etas.len() != batch_sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: etas.len(),
            actual: if etas.len() != sigmas.len() {
                sigmas.len()
            } else {
                batch_sizes.len()
            },
        });
    }
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InfinitePrivacyLoss("a step has sigma <= 0".into()));
    }
    if batch_sizes.contains(&0) {
        return Err(invalid("batch_sizes", "must be >= 1"));
    }
    let mut tail = 0.0;
    let mut best: f64 = 0.0;
    for i in (0..etas.len()).rev() {
        tail += etas[i] * etas[i] * sigmas[i] * sigmas[i];
        let m = batch_sizes[i] as f64;
        best = best.max(2.0 * alpha * g * g * etas[i] * etas[i] / (m * m * tail));
    }
    RdpBudget::new(alpha, best)
}

/// Gradient-noise standard deviations of the single-pass schedule:
/// the step's Gaussian variance divided by `eta^2`.
pub fn single_pass_gradient_sigmas(schedule: &SinglePassSchedule) -> Vec<f64> {
    (1..=schedule.steps())
        .map(|t| schedule.step_params(t).noise_variance(schedule.beta0()).sqrt() / schedule.eta())
        .collect()
}

/// Last-iterate RDP of the single-pass schedule: `2 alpha eta^2 G^2 / beta0`.
pub fn single_pass_rdp(alpha: f64, eta: f64, g: f64, beta0: f64) -> Result<RdpBudget> {
    if !(eta >= 0.0) || !(g >= 0.0) || !(beta0 >= 0.0) {
        return Err(invalid("eta/G/beta0", "must be nonnegative"));
    }
    let num = 2.0 * alpha * eta * eta * g * g;
    if num == 0.0 {
        return RdpBudget::new(alpha, 0.0);
    }
    if beta0 == 0.0 {
        return Err(Error::InfinitePrivacyLoss("beta0 = 0".into()));
    }
    RdpBudget::new(alpha, num / beta0)
}

/// RDP to DP: `(epsilon + ln(1/delta)/(alpha - 1), delta)`.
pub fn rdp_to_dp(rdp: RdpBudget, delta: f64) -> Result<DpBudget> {
    if !(rdp.alpha > 1.0) {
        return Err(invalid("alpha", format!("must be > 1, got {}", rdp.alpha)));
    }
    open_unit("delta", delta)?;
    DpBudget::new(rdp.epsilon + (1.0 / delta).ln() / (rdp.alpha - 1.0), delta)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinglePassCertificate {
    pub rdp: RdpBudget,
    pub dp: DpBudget,
    /// The advertised guarantee `(2 epsilon, delta)`.
    pub claimed: DpBudget,
}

/// Certifies the last iterate of a single-pass schedule at its calibrated order.
pub fn certify_single_pass(schedule: &SinglePassSchedule) -> Result<SinglePassCertificate> {
    let rdp = single_pass_rdp(schedule.renyi_order(), schedule.eta(), schedule.g(), schedule.beta0())?;
    let dp = rdp_to_dp(rdp, schedule.delta())?;
    Ok(SinglePassCertificate {
        rdp,
        dp,
        claimed: DpBudget::new(2.0 * schedule.epsilon(), schedule.delta())?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiPassCertificate {
    pub steps: usize,
    pub exact: DpBudget,
    /// The advertised closed form `3 epsilon sqrt(ln(2/delta)) + 3 epsilon^2`.
    pub claimed: DpBudget,
}

impl MultiPassCertificate {
    pub fn ratio(&self) -> f64 {
        self.exact.epsilon / self.claimed.epsilon
    }
}

/// Multi-pass guarantee at `T = round(n^pass_exponent epsilon^2)`, exact and advertised.
pub fn certify_multi_pass(n: usize, pass_exponent: f64, epsilon: f64, delta: f64) -> Result<MultiPassCertificate> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", format!("must be > 0, got {epsilon}")));
    }
    open_unit("delta", delta)?;
    let steps = crate::schedules::multi_pass_steps(n, pass_exponent, epsilon)?;
    let exact = multi_pass_privacy(n, steps, delta)?;
    let claimed = DpBudget::new(
        3.0 * epsilon * (2.0 / delta).ln().sqrt() + 3.0 * epsilon * epsilon,
        delta,
    )?;
    Ok(MultiPassCertificate { steps, exact, claimed })
}

/// Step-by-step accounting of a multi-pass schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiPassAccount {
    pub steps: usize,
    pub max_step_epsilon: f64,
    pub max_amplified_epsilon: f64,
    pub max_standard_amplified_epsilon: f64,
    /// Strong composition of the amplified per-step guarantees.
    pub composed: DpBudget,
    pub closed_form: DpBudget,
    pub certificate: MultiPassCertificate,
}

/// Accounts every step `t >= 2` as a Gaussian mechanism with effective step
/// `eta_t^2 / eta_{t-1}` and noise `sqrt((1 - (eta_t/eta_{t-1})^2) beta0)`,
/// amplified by sampling one of `n` examples, then composes with
/// `delta' = delta / 2`. Step 1 discards the data and costs nothing.
pub fn account_multi_pass(schedule: &MultiPassSchedule) -> Result<MultiPassAccount> {
    let n = schedule.n();
    let delta = schedule.delta();
    let g = schedule.g();
    let beta0 = schedule.beta0();
    let mut per_step = Vec::with_capacity(schedule.steps().saturating_sub(1));
    let mut max_step: f64 = 0.0;
    let mut max_std: f64 = 0.0;
    for t in 2..=schedule.steps() {
        let ratio = schedule.eta(t) / schedule.eta(t - 1);
        let eta_eff = schedule.eta(t) * ratio;
        let sigma = ((1.0 - ratio * ratio) * beta0).sqrt();
        let delta_t = delta_allotment(t, delta);
        let step = gaussian_step_epsilon(eta_eff, g, sigma, n as f64 * delta_t)?;
        max_step = max_step.max(step);
        max_std = max_std.max(subsample_amplify_standard(step, n, n as f64 * delta_t)?.epsilon);
        per_step.push(subsample_amplify(step, n, n as f64 * delta_t)?);
    }
    let composed = strong_compose(&per_step, delta / 2.0)?;
    let max_amp = per_step.iter().map(|b| b.epsilon).fold(0.0, f64::max);
    Ok(MultiPassAccount {
        steps: schedule.steps(),
        max_step_epsilon: max_step,
        max_amplified_epsilon: max_amp,
        max_standard_amplified_epsilon: max_std,
        composed,
        closed_form: multi_pass_privacy(n, schedule.steps(), delta)?,
        certificate: certify_multi_pass(n, schedule.pass_exponent(), schedule.epsilon(), delta)?,
    })
}

/// `key = value` report for a single-pass schedule.
pub fn single_pass_report(schedule: &SinglePassSchedule) -> Result<String> {
    let cert = certify_single_pass(schedule)?;
    let t = schedule.steps();
    let last = schedule.step_params(t);
    let mut last_step = 0.0;
    if t >= 2 {
        let sigma = last.noise_variance(schedule.beta0()).sqrt();
        let m = schedule.batch_size(t) as f64;
        last_step = gaussian_step_epsilon(
            (1.0 - last.shrink) * last.eta / m,
            schedule.g(),
            sigma,
            schedule.delta(),
        )?;
    }
    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
    kv("mode", "single-pass".into());
    kv("steps", t.to_string());
    kv("sample_budget", schedule.sample_budget().to_string());
    kv("eta", g9(schedule.eta()));
    kv("beta0", g9(schedule.beta0()));
    kv("G", g9(schedule.g()));
    kv("per_step_epsilon_last", g9(last_step));
    kv("rdp_alpha", g9(cert.rdp.alpha));
    kv("rdp_epsilon", g9(cert.rdp.epsilon));
    kv("dp_epsilon", g9(cert.dp.epsilon));
    kv("dp_delta", g9(cert.dp.delta));
    kv("claimed_epsilon", g9(cert.claimed.epsilon));
    kv("claimed_delta", g9(cert.claimed.delta));
    Ok(out)
}

/// `key = value` report for a multi-pass schedule.
pub fn multi_pass_report(schedule: &MultiPassSchedule) -> Result<String> {
    let acc = account_multi_pass(schedule)?;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
    kv("mode", "multi-pass".into());
    kv("steps", acc.steps.to_string());
    kv("n", schedule.n().to_string());
    kv("beta0", g9(schedule.beta0()));
    kv("G", g9(schedule.g()));
    kv("per_step_epsilon_max", g9(acc.max_step_epsilon));
    kv("amplified_epsilon_max", g9(acc.max_amplified_epsilon));
    kv("amplified_epsilon_standard_max", g9(acc.max_standard_amplified_epsilon));
    kv("amplification_rule", "ln(1+exp(eps)/m)".into());
    kv("composed_epsilon", g9(acc.composed.epsilon));
    kv("composed_delta", g9(acc.composed.delta));
    kv("closed_form_epsilon", g9(acc.closed_form.epsilon));
    kv("closed_form_delta", g9(acc.closed_form.delta));
    kv("claimed_epsilon", g9(acc.certificate.claimed.epsilon));
    kv("claimed_delta", g9(acc.certificate.claimed.delta));
    kv("closed_form_to_claimed_ratio", g9(acc.certificate.ratio()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn gaussian_step_values() {
        assert_eq!(gaussian_step_epsilon(0.0, 1.0, 1.0, 1e-5).unwrap(), 0.0);
        let e = gaussian_step_epsilon(0.1, 1.0, 1.0, 1e-5).unwrap();
        assert_relative_eq!(e, 0.968961053, max_relative = 1e-8);
        let half = gaussian_step_epsilon(0.1, 1.0, 2.0, 1e-5).unwrap();
        assert_relative_eq!(half, e / 2.0, max_relative = 1e-15);
        assert!(matches!(
            gaussian_step_epsilon(0.1, 1.0, 0.0, 1e-5),
            Err(Error::InfinitePrivacyLoss(_))
        ));
        assert!(gaussian_step_epsilon(0.1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn amplification_values() {
        let step = gaussian_step_epsilon(0.1, 1.0, 1.0, 1e-5).unwrap();
        let b = subsample_amplify(step, 1000, 1e-5).unwrap();
        assert_relative_eq!(b.epsilon, 0.0026317391314755256, max_relative = 1e-12);
        assert_relative_eq!(b.delta, 1e-8, max_relative = 1e-15);
        let one = subsample_amplify(0.3, 1, 1e-5).unwrap();
        assert!(one.epsilon >= 0.3);
        let mut prev = f64::INFINITY;
        for m in [1, 2, 10, 100, 10_000, 1_000_000] {
            let e = subsample_amplify(0.5, m, 1e-5).unwrap().epsilon;
            assert!(e < prev);
            prev = e;
        }
        assert!(
            subsample_amplify_standard(0.5, 10, 1e-5).unwrap().epsilon
                < subsample_amplify(0.5, 10, 1e-5).unwrap().epsilon
        );
    }

    #[test]
    fn compose_single_and_zero() {
        let (eps, d) = (0.2, 1e-6);
        let c = strong_compose(&[DpBudget::new(eps, d).unwrap()], 1e-5).unwrap();
        let expect = (2.0 * (2e5f64).ln()).sqrt() * eps + eps * eps.exp_m1();
        assert_relative_eq!(c.epsilon, expect, max_relative = 1e-14);
        assert_relative_eq!(c.delta, 1e-5 + 1e-6, max_relative = 1e-14);
        let zeros = vec![DpBudget::new(0.0, 0.0).unwrap(); 50];
        assert_eq!(strong_compose(&zeros, 1e-5).unwrap().epsilon, 0.0);
        assert!(strong_compose(&[DpBudget::new(0.1, 0.9).unwrap()], 0.2).is_err());
    }

    #[test]
    fn compose_identical_steps() {
        let e = std::f64::consts::E / 1000.0;
        let steps = vec![DpBudget::new(e, 0.0).unwrap(); 1000];
        let c = strong_compose(&steps, 1e-5).unwrap();
        assert_relative_eq!(c.epsilon, 0.43211397, max_relative = 1e-7);
    }

    #[test]
    fn delta_allotment_telescopes() {
        let delta = 1e-5;
        for steps in [2usize, 10, 1000, 100_000] {
            let sum: f64 = (1..=steps).map(|t| delta_allotment(t, delta)).sum();
            assert_relative_eq!(
                sum + delta / 2.0,
                delta - delta / (2.0 * steps as f64),
                max_relative = 1e-12
            );
        }
        let sum: f64 = (1..=10_000_000).map(|t| delta_allotment(t, delta)).sum();
        assert!((sum + delta / 2.0 - delta).abs() < 1e-12);
    }

    #[test]
    fn multi_pass_closed_form() {
        let b = multi_pass_privacy(1000, 1000, 1e-5).unwrap();
        assert_relative_eq!(b.epsilon, 0.4321039146, max_relative = 1e-9);
        assert_eq!(multi_pass_privacy(1000, 0, 1e-5).unwrap().epsilon, 0.0);
    }

    #[test]
    fn noisy_sgd_rdp_special_cases() {
        let r = noisy_sgd_rdp_bound(3.0, 2.0, &[0.1], &[0.5], &[1]).unwrap();
        assert_relative_eq!(r.epsilon, 2.0 * 3.0 * 4.0 / 0.25, max_relative = 1e-14);
        let r = noisy_sgd_rdp_bound(3.0, 2.0, &[0.1; 20], &[0.5; 20], &[1; 20]).unwrap();
        assert_relative_eq!(r.epsilon, 2.0 * 3.0 * 4.0 / 0.25, max_relative = 1e-12);
        assert!(noisy_sgd_rdp_bound(3.0, 2.0, &[], &[], &[]).is_err());
        assert!(noisy_sgd_rdp_bound(3.0, 2.0, &[0.1], &[0.0], &[1]).is_err());
    }

    #[test]
    fn single_pass_instantiation_of_noisy_sgd_bound() {
        for steps in [1usize, 2, 8, 100, 1000] {
            let s = SinglePassSchedule::new(steps, 1.0, 1.0, 0.5, 1e-5).unwrap();
            let alpha = s.renyi_order();
            let closed = single_pass_rdp(alpha, s.eta(), 1.0, s.beta0()).unwrap().epsilon;
            let etas = vec![s.eta(); steps];
            let sigmas = single_pass_gradient_sigmas(&s);
            let general = noisy_sgd_rdp_bound(alpha, 1.0, &etas, &sigmas, s.batch_sizes())
                .unwrap()
                .epsilon;
            let tf = steps as f64;
            assert!(
                general <= closed * 2.0 * tf / (2.0 * tf - 1.0) * (1.0 + 1e-12),
                "T = {steps}"
            );
            // With real-valued batch sizes sqrt(T/(T-tau+1)) and noise variance
            // beta0 / t (the factor (2 - 1/t) dropped) the closed form dominates.
            let sig_relaxed: Vec<f64> = (1..=steps).map(|t| (s.beta0() / t as f64).sqrt() / s.eta()).collect();
            let mut best: f64 = 0.0;
            for tau in 1..=steps {
                let m2 = tf / (tf - tau as f64 + 1.0);
                let tail: f64 = (tau..=steps)
                    .map(|t| s.eta().powi(2) * sig_relaxed[t - 1].powi(2))
                    .sum();
                best = best.max(2.0 * alpha * s.eta().powi(2) / (m2 * tail));
            }
            assert!(best <= closed * (1.0 + 1e-9), "T = {steps}: {best} vs {closed}");
        }
    }

    #[test]
    fn single_pass_rdp_values() {
        let r = single_pass_rdp(2.0, 0.01, 1.0, 1e-3).unwrap();
        assert_relative_eq!(r.epsilon, 0.4, max_relative = 1e-14);
        assert_eq!(single_pass_rdp(2.0, 0.0, 1.0, 1e-3).unwrap().epsilon, 0.0);
        assert!(matches!(
            single_pass_rdp(2.0, 0.1, 1.0, 0.0),
            Err(Error::InfinitePrivacyLoss(_))
        ));
        let r4 = single_pass_rdp(4.0, 0.01, 1.0, 1e-3).unwrap();
        assert_relative_eq!(r4.epsilon, 0.8, max_relative = 1e-14);
    }

    #[test]
    fn rdp_conversion() {
        let d = rdp_to_dp(RdpBudget::new(10.0, 0.1).unwrap(), 1e-6).unwrap();
        assert_relative_eq!(d.epsilon, 1.6350567287, max_relative = 1e-10);
        let near_one = rdp_to_dp(RdpBudget::new(10.0, 0.1).unwrap(), 1.0 - 1e-12).unwrap();
        assert_relative_eq!(near_one.epsilon, 0.1, max_relative = 1e-9);
        let big_alpha = rdp_to_dp(RdpBudget::new(1e12, 0.1).unwrap(), 1e-6).unwrap();
        assert_relative_eq!(big_alpha.epsilon, 0.1, max_relative = 1e-9);
        assert!(RdpBudget::new(1.0, 0.1).is_err());
    }

    #[test]
    fn single_pass_certificate() {
        let s = SinglePassSchedule::new(10_000, 1.0, 1.0, 0.5, 1e-5).unwrap();
        let c = certify_single_pass(&s).unwrap();
        assert_relative_eq!(c.rdp.alpha, 24.025_850_929_940_457, max_relative = 1e-13);
        assert_relative_eq!(c.rdp.epsilon, 0.5, max_relative = 1e-12);
        assert_relative_eq!(c.dp.epsilon, 1.0, max_relative = 1e-12);
        let s = SinglePassSchedule::new(50, 1.0, 1.0, 1.0, (-1.0f64).exp()).unwrap();
        let c = certify_single_pass(&s).unwrap();
        assert_relative_eq!(c.rdp.alpha, 2.0, max_relative = 1e-14);
        assert_relative_eq!(c.dp.epsilon, c.rdp.epsilon + 1.0, max_relative = 1e-14);
    }

    #[test]
    fn multi_pass_certificate() {
        let c = certify_multi_pass(10_000, 2.0, 0.1, 1e-5).unwrap();
        assert_eq!(c.steps, 1_000_000);
        assert_relative_eq!(c.exact.epsilon, 1.41695687, max_relative = 1e-7);
        assert_relative_eq!(c.claimed.epsilon, 1.07811571, max_relative = 1e-7);
        let tiny = certify_multi_pass(10_000, 2.0, 1e-3, 1e-5).unwrap();
        assert!(tiny.exact.epsilon < 0.02 && tiny.claimed.epsilon < 0.02);
        assert!(certify_multi_pass(10_000, 2.0, 0.0, 1e-5).is_err());
    }

    #[test]
    fn multi_pass_account_per_step_bounded() {
        let s = MultiPassSchedule::new(1000, 1.5, 1.0, 1e-5, 1.0, 1.0).unwrap();
        let acc = account_multi_pass(&s).unwrap();
        let e = std::f64::consts::E;
        assert!(acc.max_step_epsilon <= 1.0, "{}", acc.max_step_epsilon);
        assert!(acc.max_amplified_epsilon <= (e / 1000.0).ln_1p() * (1.0 + 1e-12));
        assert!(acc.composed.epsilon <= acc.closed_form.epsilon * (1.0 + 1e-12));
        assert!(acc.composed.delta <= 1e-5);
    }

    #[test]
    fn reports_are_key_value() {
        let s = SinglePassSchedule::new(10_000, 1.0, 1.0, 0.5, 1e-5).unwrap();
        let text = single_pass_report(&s).unwrap();
        assert!(text.lines().all(|l| l.contains(" = ")));
        assert!(text.contains("dp_epsilon = 1\n"));
        let m = MultiPassSchedule::new(200, 1.5, 1.0, 1e-5, 1.0, 1.0).unwrap();
        let text = multi_pass_report(&m).unwrap();
        assert!(text.lines().all(|l| l.contains(" = ")));
    }

    proptest! {
        #[test]
        fn gaussian_monotone(eta in 0.0..1.0f64, g in 0.1..5.0f64, sigma in 0.1..5.0f64, k in 1.0..3.0f64) {
            let base = gaussian_step_epsilon(eta, g, sigma, 1e-5).unwrap();
            prop_assert!(gaussian_step_epsilon(eta * k, g, sigma, 1e-5).unwrap() >= base);
            prop_assert!(gaussian_step_epsilon(eta, g, sigma * k, 1e-5).unwrap() <= base);
        }

        #[test]
        fn multi_pass_monotone(n in 2usize..100_000, t in 1usize..100_000, dn in 1usize..100, dt in 1usize..100) {
            let base = multi_pass_privacy(n, t, 1e-5).unwrap().epsilon;
            prop_assert!(multi_pass_privacy(n, t + dt, 1e-5).unwrap().epsilon > base);
            prop_assert!(multi_pass_privacy(n + dn, t, 1e-5).unwrap().epsilon < base);
        }

        #[test]
        fn single_pass_monotone(eta in 0.001..1.0f64, beta0 in 1e-4..1.0f64, k in 1.01..3.0f64) {
            let base = single_pass_rdp(2.0, eta, 1.0, beta0).unwrap().epsilon;
            prop_assert!(single_pass_rdp(2.0, eta * k, 1.0, beta0).unwrap().epsilon > base);
            prop_assert!(single_pass_rdp(2.0, eta, 1.0, beta0 * k).unwrap().epsilon < base);
        }

        #[test]
        fn single_pass_certificate_at_most_twice_epsilon(
            steps in 1usize..5000, eta0 in 0.01..10.0f64, g in 0.1..10.0f64,
            eps in 0.01..5.0f64, log_delta in -12.0..-1.0f64,
        ) {
            let s = SinglePassSchedule::new(steps, g, eta0, eps, 10f64.powf(log_delta)).unwrap();
            let c = certify_single_pass(&s).unwrap();
            prop_assert!(c.dp.epsilon <= 2.0 * eps * (1.0 + 1e-12));
        }
    }
}
