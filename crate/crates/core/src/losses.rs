//! Convex GLM losses `l(w, z) = phi(w^T x, y)` with certified constants.
//!
//! For every family `|phi'| <= gamma1` and `0 <= phi'' <= gamma2`; with
//! `||x|| <= 1` this gives a gradient bound `G = gamma1`, smoothness
//! `L = gamma2`, and a Hessian-trace bound `gamma2`.

use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, Example};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Vector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GlmLoss {
    /// `ln(1 + exp(-y a))`, labels in {-1, +1}.
    Logistic,
    /// Quadratically smoothed hinge with smoothing half-width `h`, labels in {-1, +1}:
    /// `0` for `ya >= 1+h`, `(1+h-ya)^2 / (4h)` for `|1-ya| <= h`, `1-ya` for `ya <= 1-h`.
    SmoothedHinge { half_width: f64 },
    /// `(a - y)^2 / 2`. The gradient bound holds on the stated range
    /// `|a| <= max_abs_prediction`, `|y| <= max_abs_label`.
    Quadratic {
        max_abs_prediction: f64,
        max_abs_label: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBounds {
    /// Gradient-norm bound `G`.
    pub g: f64,
    /// Smoothness constant `L` of `l(., z)`.
    pub smoothness: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Bound on the trace of the population Hessian.
    pub hessian_trace: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl GlmLoss {
    pub fn smoothed_hinge(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid("half_width", format!("must be > 0, got {half_width}")));
        }
        Ok(GlmLoss::SmoothedHinge { half_width })
    }

    pub fn quadratic(max_abs_prediction: f64, max_abs_label: f64) -> Result<Self> {
        if !(max_abs_prediction >= 0.0 && max_abs_label >= 0.0)
            || !max_abs_prediction.is_finite()
            || !max_abs_label.is_finite()
        {
            return Err(invalid("quadratic range", "bounds must be finite and >= 0"));
        }
        Ok(GlmLoss::Quadratic {
            max_abs_prediction,
            max_abs_label,
        })
    }

    /// `phi(a, y)`
    pub fn phi(&self, a: f64, y: f64) -> f64 {
        match *self {
            GlmLoss::Logistic => softplus(-y * a),
            GlmLoss::SmoothedHinge { half_width: h } => {
                let m = y * a;
                if m >= 1.0 + h {
                    0.0
                } else if m <= 1.0 - h {
                    1.0 - m
                } else {
                    let r = 1.0 + h - m;
                    r * r / (4.0 * h)
                }
            }
            GlmLoss::Quadratic { .. } => 0.5 * (a - y) * (a - y),
        }
    }

    /// `d phi / d a`
    pub fn dphi(&self, a: f64, y: f64) -> f64 {
        match *self {
            GlmLoss::Logistic => -y * sigmoid(-y * a),
            GlmLoss::SmoothedHinge { half_width: h } => {
                let m = y * a;
                if m >= 1.0 + h {
                    0.0
                } else if m <= 1.0 - h {
                    -y
                } else {
                    -y * (1.0 + h - m) / (2.0 * h)
                }
            }
            GlmLoss::Quadratic { .. } => a - y,
        }
    }

    /// `d^2 phi / d a^2`
    pub fn d2phi(&self, a: f64, y: f64) -> f64 {
        match *self {
            GlmLoss::Logistic => {
                let s = sigmoid(y * a);
                y * y * s * (1.0 - s)
            }
            GlmLoss::SmoothedHinge { half_width: h } => {
                let m = y * a;
                if (m - 1.0).abs() < h {
                    y * y / (2.0 * h)
                } else {
                    0.0
                }
            }
            GlmLoss::Quadratic { .. } => 1.0,
        }
    }

    pub fn value(&self, w: &Vector, z: &Example) -> Result<f64> {
        w.check_dim(z.dim())?;
        Ok(self.phi(w.dot(z.x()), z.y()))
    }

    /// `phi'(w^T x, y) x`
    pub fn gradient(&self, w: &Vector, z: &Example) -> Result<Vector> {
        w.check_dim(z.dim())?;
        let mut g = Vector::zeros(w.dim());
        self.accumulate_gradient(w, z, 1.0, g.as_mut_slice());
        Ok(g)
    }

    /// `out += scale * gradient(w, z)`; dimensions are the caller's responsibility.
    pub(crate) fn accumulate_gradient(&self, w: &[f64], z: &Example, scale: f64, out: &mut [f64]) {
        let coeff = scale * self.dphi(dot(w, z.x()), z.y());
        if coeff == 0.0 {
            return;
        }
        for (o, x) in out.iter_mut().zip(z.x().iter()) {
            *o += coeff * x;
        }
    }

    pub fn bounds(&self) -> LossBounds {
        match *self {
            GlmLoss::Logistic => LossBounds {
                g: 1.0,
                smoothness: 0.25,
                gamma1: 1.0,
                gamma2: 0.25,
                hessian_trace: 0.25,
            },
            GlmLoss::SmoothedHinge { half_width: h } => {
                let c = 1.0 / (2.0 * h);
                LossBounds {
                    g: 1.0,
                    smoothness: c,
                    gamma1: 1.0,
                    gamma2: c,
                    hessian_trace: c,
                }
            }
            GlmLoss::Quadratic {
                max_abs_prediction,
                max_abs_label,
            } => {
                let g1 = max_abs_prediction + max_abs_label;
                LossBounds {
                    g: g1,
                    smoothness: 1.0,
                    gamma1: g1,
                    gamma2: 1.0,
                    hessian_trace: 1.0,
                }
            }
        }
    }

    /// `(1/n) sum_i l(w, z_i)`
    pub fn empirical_risk(&self, w: &Vector, dataset: &Dataset) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        w.check_dim(dataset.dim())?;
        let total: f64 = dataset.iter().map(|z| self.phi(w.dot(z.x()), z.y())).sum();
        Ok(total / dataset.len() as f64)
    }

    pub fn name(&self) -> &'static str {
        match self {
            GlmLoss::Logistic => "logistic",
            GlmLoss::SmoothedHinge { .. } => "smoothed-hinge",
            GlmLoss::Quadratic { .. } => "quadratic",
        }
    }
}

impl fmt::Display for GlmLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a family name with default parameters (`h = 0.5`, quadratic range `[1, 1]`).
impl FromStr for GlmLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(GlmLoss::Logistic),
            "smoothed-hinge" => GlmLoss::smoothed_hinge(0.5),
            "quadratic" => GlmLoss::quadratic(1.0, 1.0),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected logistic, smoothed-hinge, quadratic)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::finite_diff_gradient;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ex(x: Vec<f64>, y: f64) -> Example {
        Example::new(Vector::new(x).unwrap(), y).unwrap()
    }

    #[test]
    fn logistic_at_origin_is_ln2() {
        let z = ex(vec![0.3, -0.4], 1.0);
        let v = GlmLoss::Logistic.value(&Vector::zeros(2), &z).unwrap();
        assert_relative_eq!(v, std::f64::consts::LN_2, max_relative = 1e-15);
        let g = GlmLoss::Logistic.gradient(&Vector::zeros(2), &z).unwrap();
        assert_relative_eq!(g[0], -0.15, max_relative = 1e-15);
        assert_relative_eq!(g[1], 0.2, max_relative = 1e-15);
    }

    #[test]
    fn logistic_value_at_margin_two() {
        // ln(1 + e^-2), high-precision value 0.12692801104297263...
        let z = ex(vec![1.0], 1.0);
        let v = GlmLoss::Logistic.value(&Vector::new(vec![2.0]).unwrap(), &z).unwrap();
        assert_relative_eq!(v, 0.126_928_011_042_972_63, max_relative = 1e-14);
    }

    #[test]
    fn quadratic_minimizer() {
        let loss = GlmLoss::quadratic(1.0, 1.0).unwrap();
        let z = ex(vec![0.5, 0.5], 1.0);
        let w = Vector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(loss.value(&w, &z).unwrap(), 0.0);
        assert_eq!(loss.gradient(&w, &z).unwrap(), Vector::zeros(2));
    }

    #[test]
    fn dimension_mismatch() {
        let z = ex(vec![0.5, 0.5], 1.0);
        assert!(matches!(
            GlmLoss::Logistic.value(&Vector::zeros(3), &z),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(GlmLoss::Logistic.gradient(&Vector::zeros(1), &z).is_err());
    }

    #[test]
    fn certified_constants() {
        let b = GlmLoss::Logistic.bounds();
        assert_eq!(
            (b.g, b.smoothness, b.gamma1, b.gamma2, b.hessian_trace),
            (1.0, 0.25, 1.0, 0.25, 0.25)
        );
        let h = GlmLoss::smoothed_hinge(0.5).unwrap().bounds();
        assert_eq!(h.gamma2, 1.0);
        assert_eq!(h.g, 1.0);
    }

    #[test]
    fn sampled_logistic_derivatives_respect_bounds() {
        let mut rng = crate::rng::RngStream::new(11, 0);
        let (mut max1, mut max2) = (0.0f64, 0.0f64);
        for _ in 0..1_000_000 {
            let a = 40.0 * (rng.uniform() - 0.5);
            let y = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            max1 = max1.max(GlmLoss::Logistic.dphi(a, y).abs());
            max2 = max2.max(GlmLoss::Logistic.d2phi(a, y));
        }
        assert!(max1 <= 1.0 && max2 <= 0.25, "{max1} {max2}");
    }

    #[test]
    fn empirical_risk_is_mean() {
        let loss = GlmLoss::quadratic(2.0, 2.0).unwrap();
        let data = Dataset::new(vec![
            ex(vec![1.0, 0.0], 0.0),
            ex(vec![0.0, 1.0], 1.0),
            ex(vec![0.6, 0.8], -1.0),
        ])
        .unwrap();
        let w = Vector::new(vec![1.0, -1.0]).unwrap();
        // Predictions 1, -1, -0.2; losses 0.5, 2.0, 0.32.
        let r = loss.empirical_risk(&w, &data).unwrap();
        assert_relative_eq!(r, (0.5 + 2.0 + 0.32) / 3.0, max_relative = 1e-15);
        let single = Dataset::new(vec![data.get(1).clone()]).unwrap();
        assert_eq!(
            loss.empirical_risk(&w, &single).unwrap(),
            loss.value(&w, data.get(1)).unwrap()
        );
        assert_relative_eq!(
            GlmLoss::Logistic.empirical_risk(&Vector::zeros(2), &data).unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-15
        );
    }

    fn loss_strategy() -> impl Strategy<Value = GlmLoss> {
        prop_oneof![
            Just(GlmLoss::Logistic),
            (0.05f64..2.0).prop_map(|h| GlmLoss::SmoothedHinge { half_width: h }),
            Just(GlmLoss::Quadratic {
                max_abs_prediction: 3.0,
                max_abs_label: 1.0
            }),
        ]
    }

    /// (w, x, y) with ||x|| <= 1 and ||w|| <= 3 so the quadratic range holds.
    fn instance(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (
            prop::collection::vec(-1.0f64..1.0, d),
            prop::collection::vec(-1.0f64..1.0, d),
            0.0f64..=1.0,
            0.0f64..=3.0,
            prop::bool::ANY,
        )
            .prop_map(|(mut w, mut x, r, wn, pos)| {
                let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                x.iter_mut().for_each(|v| *v *= r / xn);
                let wl = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                w.iter_mut().for_each(|v| *v *= wn / wl);
                (w, x, if pos { 1.0 } else { -1.0 })
            })
    }

    proptest! {
        #[test]
        fn convexity_witness(loss in loss_strategy(), (w1, x, y) in instance(4), (w2, _, _) in instance(4), t in 0.0f64..=1.0) {
            let z = ex(x, y);
            let w1 = Vector::new(w1).unwrap();
            let w2 = Vector::new(w2).unwrap();
            let mid = Vector::new(w1.iter().zip(w2.iter()).map(|(a, b)| t * a + (1.0 - t) * b).collect()).unwrap();
            let lhs = loss.value(&mid, &z).unwrap();
            let rhs = t * loss.value(&w1, &z).unwrap() + (1.0 - t) * loss.value(&w2, &z).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn gradient_norm_bounded(loss in loss_strategy(), (w, x, y) in instance(5)) {
            let g = loss.gradient(&Vector::new(w).unwrap(), &ex(x, y)).unwrap();
            prop_assert!(g.norm() <= loss.bounds().g + 1e-12);
        }

        #[test]
        fn smoothness_witness(loss in loss_strategy(), (w1, x, y) in instance(4), (w2, _, _) in instance(4)) {
            let z = ex(x, y);
            let w1 = Vector::new(w1).unwrap();
            let w2 = Vector::new(w2).unwrap();
            let g1 = loss.gradient(&w1, &z).unwrap();
            let g2 = loss.gradient(&w2, &z).unwrap();
            prop_assert!(g1.distance_sq(&g2).sqrt() <= loss.bounds().smoothness * w1.distance_sq(&w2).sqrt() + 1e-12);
        }

        #[test]
        fn gradient_matches_central_differences((w, x, y) in instance(4)) {
            let z = ex(x, y);
            prop_assume!(z.x().norm() > 0.05);
            let w = Vector::new(w).unwrap();
            let g = GlmLoss::Logistic.gradient(&w, &z).unwrap();
            let fd = finite_diff_gradient(&GlmLoss::Logistic, &w, &z, 1e-5).unwrap();
            let err = g.distance_sq(&fd).sqrt();
            prop_assert!(err <= 1e-5 * g.norm() || err < 1e-12, "err {err} norm {}", g.norm());
        }
    }
}
