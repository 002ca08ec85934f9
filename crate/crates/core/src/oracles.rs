//! Independent reference computations: numeric gradients, Gaussian divergences,
//! closed-form bounds and a Kolmogorov-Smirnov test.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Example;
use crate::error::{invalid, Error, Result};
use crate::linalg::Vector;
use crate::losses::GlmLoss;

/// Central-difference gradient of `loss` at `w`.
pub fn finite_diff_gradient(loss: &GlmLoss, w: &Vector, z: &Example, h: f64) -> Result<Vector> {
    if !(h > 0.0) {
        return Err(invalid("h", format!("must be > 0, got {h}")));
    }
    w.check_dim(z.dim())?;
    let mut probe = w.clone();
    let mut out = Vec::with_capacity(w.dim());
    for i in 0..w.dim() {
        let orig = probe[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = loss.value(&probe, z)?;
        probe.as_mut_slice()[i] = orig - h;
        let down = loss.value(&probe, z)?;
        probe.as_mut_slice()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Vector::new(out)
}

/// W2 between `N(m1, s I)` and `N(m2, s I)`.
pub fn w2_isotropic_gaussian(m1: &Vector, m2: &Vector, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(invalid("s", format!("must be >= 0, got {s}")));
    }
    m1.check_dim(m2.dim())?;
    Ok(m1.distance_sq(m2).sqrt())
}

/// W2 between two equal-size 1-d empirical measures via the sorted (quantile) coupling.
pub fn empirical_w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(invalid("samples", "must be nonempty"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Order-`alpha` Renyi divergence between `N(mu1, sigma2 I)` and `N(mu2, sigma2 I)`.
pub fn renyi_gaussian(alpha: f64, mu1: &Vector, mu2: &Vector, sigma2: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(invalid("alpha", format!("must be > 1, got {alpha}")));
    }
    if !(sigma2 >= 0.0) {
        return Err(invalid("sigma2", format!("must be >= 0, got {sigma2}")));
    }
    mu1.check_dim(mu2.dim())?;
    let dist = mu1.distance_sq(mu2);
    if dist == 0.0 {
        return Ok(0.0);
    }
    if sigma2 == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(alpha * dist / (2.0 * sigma2))
}

/// Renyi divergence of two 1-d Gaussians by Simpson quadrature of
/// `ln(int p^alpha q^(1-alpha)) / (alpha - 1)`.
pub fn renyi_gaussian_quadrature_1d(alpha: f64, mu1: f64, mu2: f64, sigma2: f64) -> Result<f64> {
    if !(alpha > 1.0) || !(sigma2 > 0.0) {
        return Err(invalid("alpha/sigma2", "need alpha > 1 and sigma2 > 0"));
    }
    let sd = sigma2.sqrt();
    // The integrand is a Gaussian centred at alpha*mu1 + (1-alpha)*mu2.
    let centre = alpha * mu1 + (1.0 - alpha) * mu2;
    let (lo, hi) = (centre - 40.0 * sd, centre + 40.0 * sd);
    let steps = 200_000;
    let h = (hi - lo) / steps as f64;
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
    let integrand = |x: f64| {
        let lp = log_norm - (x - mu1).powi(2) / (2.0 * sigma2);
        let lq = log_norm - (x - mu2).powi(2) / (2.0 * sigma2);
        (alpha * lp + (1.0 - alpha) * lq).exp()
    };
    let mut sum = integrand(lo) + integrand(hi);
    for i in 1..steps {
        let x = lo + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(x);
    }
    Ok((sum * h / 3.0).ln() / (alpha - 1.0))
}

/// `4 G^2 (t/n^2 + 1/n) sum_{s<=t} eta_s^2`, with `etas[s-1] = eta_s`.
pub fn stability_bound(t: usize, n: usize, g: f64, etas: &[f64]) -> Result<f64> {
    if t > etas.len() {
        return Err(invalid("t", format!("{t} exceeds schedule length {}", etas.len())));
    }
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let n = n as f64;
    let sum: f64 = etas[..t].iter().map(|e| e * e).sum();
    Ok(4.0 * g * g * (t as f64 / (n * n) + 1.0 / n) * sum)
}

fn check_positive(pairs: &[(&'static str, f64)]) -> Result<()> {
    for &(name, v) in pairs {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be positive and finite, got {v}")));
        }
    }
    Ok(())
}

fn check_nonnegative(pairs: &[(&'static str, f64)]) -> Result<()> {
    for &(name, v) in pairs {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be nonnegative and finite, got {v}")));
        }
    }
    Ok(())
}

/// Excess-risk bound for the single-pass algorithm against comparator norm `w_norm`.
pub fn single_pass_excess_bound(
    w_norm: f64,
    n: usize,
    g: f64,
    eta0: f64,
    epsilon: f64,
    delta: f64,
    trace: f64,
) -> Result<f64> {
    check_positive(&[("G", g), ("eta0", eta0), ("epsilon", epsilon)])?;
    check_nonnegative(&[("w_norm", w_norm), ("trace", trace)])?;
    check_delta(delta)?;
    if n < 1 {
        return Err(invalid("n", "must be >= 1"));
    }
    let nf = n as f64;
    let first = nf.ln() * (g * w_norm * w_norm + 1.5 * eta0 * eta0 * g) / (eta0 * nf.sqrt());
    let second = eta0 * eta0 * (1.0 / delta).ln() * trace / (epsilon * epsilon * nf);
    Ok(first + second)
}

/// Shape of the multi-pass bound with its hidden constant set to 1. Not a certified bound.
#[allow(clippy::too_many_arguments)]
pub fn multi_pass_excess_shape(
    w_norm: f64,
    n: usize,
    pass_exponent: f64,
    g: f64,
    eta0: f64,
    epsilon: f64,
    delta: f64,
    trace: f64,
) -> Result<f64> {
    check_positive(&[("G", g), ("eta0", eta0), ("epsilon", epsilon)])?;
    check_nonnegative(&[("w_norm", w_norm), ("trace", trace)])?;
    check_delta(delta)?;
    if n < 1 {
        return Err(invalid("n", "must be >= 1"));
    }
    let nf = n as f64;
    let steps = (nf.powf(pass_exponent) * epsilon * epsilon).round().max(1.0);
    let first = g * w_norm * w_norm * (steps / delta).ln().sqrt() / (eta0 * nf.sqrt());
    let second = eta0 * g / (nf * (1.0 / delta).ln()).sqrt();
    let third = eta0 * eta0 * trace / (epsilon * epsilon * nf.powf(pass_exponent - 1.0));
    Ok(first + second + third)
}

/// Reference rate `1/sqrt(n) + sqrt(d)/(epsilon n)` of dimension-dependent methods.
pub fn dimension_dependent_rate(n: usize, d: usize, epsilon: f64) -> f64 {
    let n = n as f64;
    1.0 / n.sqrt() + (d as f64).sqrt() / (epsilon * n)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Comparison of an empirical mean against an upper bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub bound_value: f64,
    pub empirical_value: f64,
    pub standard_error: f64,
    pub satisfied: bool,
}

impl BoundReport {
    pub fn new(bound_value: f64, empirical_value: f64, standard_error: f64) -> Self {
        Self {
            bound_value,
            empirical_value,
            standard_error,
            satisfied: empirical_value <= bound_value + 3.0 * standard_error,
        }
    }
}

/// Sample mean and its standard error (zero for fewer than two values).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// One-sample Kolmogorov-Smirnov test against `N(0, variance)`.
/// Returns the statistic and its asymptotic p-value.
pub fn ks_test_normal(samples: &[f64], variance: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(invalid("samples", "must be nonempty"));
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| invalid("variance", e.to_string()))?;
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok((d, kolmogorov_survival(lambda)))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
