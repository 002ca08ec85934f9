//! Synthetic GLM populations with `||x|| <= 1`, held-out risk estimation and
//! Hessian-trace estimation.
//!
//! Features are `x = r u` with `r ~ U[0.5, 1)` and `u` a unit direction. For the
//! spherical law `u` is uniform on the sphere; for the low-effective-rank law
//! coordinate `i` of a standard normal vector is scaled by `1/i` before
//! normalizing.
//!
//! Held-out sets for the spherical law are stored in projected form. For a
//! fixed unit vector `e1` (the direction of `w*`) and any `w`, the pair
//! `(e1^T x, u_w^T x)` with `u_w` the unit part of `w` orthogonal to `e1` has
//! the same law as `(r g1/||g||, r g2/||g||)`, so each test point is kept as
//! `(s1, s2, r, y)` and `w^T x = (w^T e1) s1 + ||w_perp|| s2`. This keeps risk
//! evaluation `O(n_test + d)` at any dimension.

use std::io::{BufRead, Write};

use rand_distr::{ChiSquared, Distribution};

use crate::data::{Dataset, Example};
use crate::engine::RiskProbe;
use crate::error::{invalid, Error, Result};
use crate::linalg::Vector;
use crate::losses::GlmLoss;
use crate::oracles::mean_and_se;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    /// `P(y = 1 | x) = 1 / (1 + exp(-w*^T x))`, labels in {-1, +1}.
    Logistic,
    /// `y = w*^T x + xi` with `xi ~ U[-noise, noise]`.
    Quadratic { noise: f64 },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Quadratic { .. } => "quadratic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureLaw {
    Spherical,
    LowEffectiveRank,
}

impl FeatureLaw {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureLaw::Spherical => "spherical",
            FeatureLaw::LowEffectiveRank => "low-rank",
        }
    }
}

impl std::str::FromStr for FeatureLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spherical" => Ok(FeatureLaw::Spherical),
            "low-rank" => Ok(FeatureLaw::LowEffectiveRank),
            other => Err(Error::Config(format!(
                "unknown feature law `{other}` (expected spherical or low-rank)"
            ))),
        }
    }
}

/// `E r^2` for `r ~ U[0.5, 1)`.
pub const MEAN_SQ_FEATURE_NORM: f64 = 7.0 / 12.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationModel {
    kind: ModelKind,
    feature_law: FeatureLaw,
    w_star: Vector,
}

impl PopulationModel {
    pub fn new(kind: ModelKind, feature_law: FeatureLaw, w_star: Vector) -> Result<Self> {
        if w_star.dim() == 0 {
            return Err(invalid("d", "must be >= 1"));
        }
        if let ModelKind::Quadratic { noise } = kind {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(invalid("noise", format!("must be finite and >= 0, got {noise}")));
            }
        }
        Ok(Self {
            kind,
            feature_law,
            w_star,
        })
    }

    /// `w* = norm * e_1`.
    pub fn with_norm(kind: ModelKind, feature_law: FeatureLaw, d: usize, norm: f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "must be >= 1"));
        }
        Self::new(kind, feature_law, Vector::basis(d, 0, norm))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn feature_law(&self) -> FeatureLaw {
        self.feature_law
    }

    pub fn dim(&self) -> usize {
        self.w_star.dim()
    }

    pub fn w_star(&self) -> &Vector {
        &self.w_star
    }

    /// A loss matching the model's label law.
    pub fn natural_loss(&self) -> GlmLoss {
        match self.kind {
            ModelKind::Logistic => GlmLoss::Logistic,
            ModelKind::Quadratic { noise } => GlmLoss::Quadratic {
                max_abs_prediction: 1.0,
                max_abs_label: self.w_star.norm() + noise,
            },
        }
    }

    fn draw_features(&self, rng: &mut RngStream) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        rng.fill_standard_normal(&mut g);
        if self.feature_law == FeatureLaw::LowEffectiveRank {
            for (i, v) in g.iter_mut().enumerate() {
                *v /= (i + 1) as f64;
            }
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = 0.5 + 0.5 * rng.uniform();
        let scale = if norm > 0.0 { r / norm } else { 0.0 };
        g.iter_mut().for_each(|v| *v *= scale);
        g
    }

    fn draw_label(&self, margin: f64, rng: &mut RngStream) -> f64 {
        match self.kind {
            ModelKind::Logistic => {
                let p = 1.0 / (1.0 + (-margin).exp());
                if rng.uniform() < p {
                    1.0
                } else {
                    -1.0
                }
            }
            ModelKind::Quadratic { noise } => margin + noise * (2.0 * rng.uniform() - 1.0),
        }
    }

    pub fn draw_example(&self, rng: &mut RngStream) -> Result<Example> {
        let x = self.draw_features(rng);
        let margin = self.w_star.dot(&x);
        let y = self.draw_label(margin, rng);
        Example::new(Vector::new(x)?, y)
    }

    /// Closed-form population risk of the quadratic model under the spherical law.
    pub fn quadratic_spherical_risk(&self, w: &Vector) -> Option<f64> {
        match (self.kind, self.feature_law) {
            (ModelKind::Quadratic { noise }, FeatureLaw::Spherical) => {
                let dist = w.distance_sq(&self.w_star);
                Some(0.5 * (MEAN_SQ_FEATURE_NORM * dist / self.dim() as f64 + noise * noise / 3.0))
            }
            _ => None,
        }
    }
}

/// `n` i.i.d. examples from `model`.
pub fn draw_dataset(model: &PopulationModel, n: usize, rng: &mut RngStream) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let examples = (0..n).map(|_| model.draw_example(rng)).collect::<Result<Vec<_>>>()?;
    Dataset::new(examples)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct ProjectedPoint {
    s1: f64,
    s2: f64,
    r: f64,
    y: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum HeldOutPoints {
    Projected {
        /// Unit direction of `w*`, or `None` when `w* = 0`.
        axis: Option<Vector>,
        points: Vec<ProjectedPoint>,
    },
    Explicit(Vec<Example>),
}

/// A fixed Monte-Carlo sample from the population, reused across iterates.
#[derive(Clone, Debug, PartialEq)]
pub struct HeldOutSet {
    dim: usize,
    points: HeldOutPoints,
}

impl HeldOutSet {
    /// Projected storage for the spherical law, explicit examples otherwise.
    pub fn draw(model: &PopulationModel, n_test: usize, rng: &mut RngStream) -> Result<Self> {
        match model.feature_law {
            FeatureLaw::Spherical => Self::draw_projected(model, n_test, rng),
            FeatureLaw::LowEffectiveRank => Self::draw_explicit(model, n_test, rng),
        }
    }

    pub fn draw_explicit(model: &PopulationModel, n_test: usize, rng: &mut RngStream) -> Result<Self> {
        check_n_test(n_test)?;
        let examples = (0..n_test)
            .map(|_| model.draw_example(rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: model.dim(),
            points: HeldOutPoints::Explicit(examples),
        })
    }

    fn draw_projected(model: &PopulationModel, n_test: usize, rng: &mut RngStream) -> Result<Self> {
        check_n_test(n_test)?;
        let d = model.dim();
        let star_norm = model.w_star.norm();
        let axis = (star_norm > 0.0).then(|| {
            let mut a = model.w_star.clone();
            a.scale(1.0 / star_norm);
            a
        });
        let rest = (d > 2)
            .then(|| ChiSquared::new((d - 2) as f64).map_err(|e| invalid("d", e.to_string())))
            .transpose()?;
        let mut points = Vec::with_capacity(n_test);
        for _ in 0..n_test {
            let g1 = rng.standard_normal();
            let g2 = if d >= 2 { rng.standard_normal() } else { 0.0 };
            let tail = rest.as_ref().map_or(0.0, |c| c.sample(rng));
            let norm = (g1 * g1 + g2 * g2 + tail).sqrt();
            let r = 0.5 + 0.5 * rng.uniform();
            let (s1, s2) = if norm > 0.0 {
                (r * g1 / norm, r * g2 / norm)
            } else {
                (0.0, 0.0)
            };
            let y = model.draw_label(star_norm * s1, rng);
            points.push(ProjectedPoint { s1, s2, r, y });
        }
        Ok(Self {
            dim: d,
            points: HeldOutPoints::Projected { axis, points },
        })
    }

    pub fn len(&self) -> usize {
        match &self.points {
            HeldOutPoints::Projected { points, .. } => points.len(),
            HeldOutPoints::Explicit(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Calls `f(w^T x, y, ||x||^2)` for every test point.
    fn for_each_margin(&self, w: &Vector, mut f: impl FnMut(f64, f64, f64)) -> Result<()> {
        w.check_dim(self.dim)?;
        match &self.points {
            HeldOutPoints::Projected { axis, points } => {
                let (c1, c2) = match axis {
                    Some(a) => {
                        let c1 = w.dot(a);
                        (c1, (w.norm_sq() - c1 * c1).max(0.0).sqrt())
                    }
                    None => (w.norm(), 0.0),
                };
                for p in points {
                    f(c1 * p.s1 + c2 * p.s2, p.y, p.r * p.r);
                }
            }
            HeldOutPoints::Explicit(examples) => {
                for z in examples {
                    f(w.dot(z.x()), z.y(), z.x().norm_sq());
                }
            }
        }
        Ok(())
    }

    pub fn losses(&self, loss: &GlmLoss, w: &Vector) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_margin(w, |a, y, _| out.push(loss.phi(a, y)))?;
        Ok(out)
    }

    /// Mean loss and its standard error.
    pub fn risk(&self, loss: &GlmLoss, w: &Vector) -> Result<(f64, f64)> {
        Ok(mean_and_se(&self.losses(loss, w)?))
    }

    /// Paired estimate of `risk(w) - risk(comparator)` with its standard error.
    pub fn excess_risk(&self, loss: &GlmLoss, w: &Vector, comparator: &Vector) -> Result<(f64, f64)> {
        let a = self.losses(loss, w)?;
        let b = self.losses(loss, comparator)?;
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        Ok(mean_and_se(&diff))
    }

    /// Mean of `phi''(w^T x, y) ||x||^2` with its standard error.
    pub fn hessian_trace(&self, loss: &GlmLoss, w: &Vector) -> Result<(f64, f64)> {
        let mut vals = Vec::with_capacity(self.len());
        self.for_each_margin(w, |a, y, r2| vals.push(loss.d2phi(a, y) * r2))?;
        Ok(mean_and_se(&vals))
    }
}

impl RiskProbe for HeldOutSet {
    fn population_risk(&self, loss: &GlmLoss, w: &Vector) -> f64 {
        self.risk(loss, w).map(|r| r.0).unwrap_or(f64::NAN)
    }
}

fn check_n_test(n_test: usize) -> Result<()> {
    if n_test < 100 {
        return Err(invalid("n_test", format!("must be >= 100, got {n_test}")));
    }
    Ok(())
}

/// Monte-Carlo population risk on `n_test` fresh draws: `(estimate, standard error)`.
pub fn population_risk(
    loss: &GlmLoss,
    w: &Vector,
    model: &PopulationModel,
    n_test: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    HeldOutSet::draw(model, n_test, rng)?.risk(loss, w)
}

/// Monte-Carlo trace of the per-example Hessian `phi''(w^T x, y) x x^T`.
pub fn hessian_trace_estimate(
    loss: &GlmLoss,
    model: &PopulationModel,
    w: &Vector,
    n_test: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    HeldOutSet::draw(model, n_test, rng)?.hessian_trace(loss, w)
}

/// Writes `d=..,n=..,kind=..`, a column header, then one row per example.
pub fn write_dataset<W: Write>(dataset: &Dataset, kind: &str, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "d={},n={},kind={}", dataset.dim(), dataset.len(), kind)?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    let mut header: Vec<String> = (1..=dataset.dim()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for z in dataset.iter() {
        let row: Vec<String> = z.x().iter().chain([z.y()].iter()).map(|v| v.to_string()).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format produced by [`write_dataset`]; returns the dataset and its kind tag.
pub fn read_dataset<R: BufRead>(mut input: R) -> Result<(Dataset, String)> {
    let mut meta = String::new();
    input.read_line(&mut meta)?;
    let mut d = None;
    let mut n = None;
    let mut kind = None;
    for part in meta.trim().split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad metadata field `{part}`")))?;
        let parse = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad integer `{v}`")))
        };
        match k {
            "d" => d = Some(parse(v)?),
            "n" => n = Some(parse(v)?),
            "kind" => kind = Some(v.to_string()),
            other => return Err(Error::Format(format!("unknown metadata key `{other}`"))),
        }
    }
    let (d, n, kind) = match (d, n, kind) {
        (Some(d), Some(n), Some(k)) => (d, n, k),
        _ => return Err(Error::Format("metadata line needs d, n and kind".into())),
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut examples = Vec::with_capacity(n);
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::Format(format!(
                "row has {} fields, expected {}",
                rec.len(),
                d + 1
            )));
        }
        let vals = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let y = vals[d];
        examples.push(Example::new(Vector::new(vals[..d].to_vec())?, y)?);
    }
    if examples.len() != n {
        return Err(Error::Format(format!("expected {n} rows, found {}", examples.len())));
    }
    Ok((Dataset::new(examples)?, kind))
}
