//! Named experiments with CSV output.
//!
//! Replicate `r` of an experiment with base seed `s` draws everything from
//! `RngStream::new(s, r)`; the shared held-out set comes from a separate
//! stream. Replicates run in parallel and are reduced in index order, so
//! output is identical for identical configurations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{loss_echo, FlatConfig};
use crate::data::Dataset;
use crate::datagen::{draw_dataset, FeatureLaw, HeldOutSet, ModelKind, PopulationModel};
use crate::engine::{coupled_stability_run_with, run_multi_pass, run_single_pass, RunOptions};
use crate::error::{invalid, Error, Result};
use crate::fmtnum::g9;
use crate::losses::GlmLoss;
use crate::oracles::{
    dimension_dependent_rate, mean_and_se, multi_pass_excess_shape, single_pass_excess_bound, stability_bound,
    BoundReport,
};
use crate::privacy::{certify_multi_pass, certify_single_pass};
use crate::rng::{purpose, RngStream};
use crate::schedules::{single_pass_steps_within, MultiPassSchedule, SinglePassSchedule, StepSchedule};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Stream id reserved for the held-out set; replicates use `0..R`.
const HELD_OUT_STREAM: u64 = u64::MAX;

/// Floor applied to excess risks before taking logarithms.
pub const SLOPE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentName {
    ExcessRiskVsN,
    DimensionIndependence,
    Stability,
    PrivacyUtility,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 4] = [
        ExperimentName::ExcessRiskVsN,
        ExperimentName::DimensionIndependence,
        ExperimentName::Stability,
        ExperimentName::PrivacyUtility,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::ExcessRiskVsN => "excess-risk-vs-n",
            ExperimentName::DimensionIndependence => "dimension-independence",
            ExperimentName::Stability => "stability",
            ExperimentName::PrivacyUtility => "privacy-utility",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|e| e.as_str()).collect();
            Error::Config(format!("unknown experiment `{s}`; valid names: {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub loss: GlmLoss,
    pub model_kind: ModelKind,
    pub feature_law: FeatureLaw,
    pub wstar_norm: f64,
    pub n_grid: Vec<usize>,
    /// Dimensions for the fixed-`n` experiments.
    pub d_grid: Vec<usize>,
    /// `d = d_factor * n` in the rate experiment.
    pub d_factor: usize,
    pub epsilon_grid: Vec<f64>,
    /// Fixed privacy target; when absent the single-pass experiments use `n^epsilon_exponent`.
    pub epsilon: Option<f64>,
    pub epsilon_exponent: f64,
    /// When absent: `1e-5` for single-pass experiments and `1/n^2` for multi-pass ones.
    pub delta: Option<f64>,
    pub pass_exponent: f64,
    pub eta0: f64,
    pub replicates: usize,
    pub n_test: usize,
    pub checkpoints: usize,
    pub log_points: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn defaults(name: ExperimentName) -> Self {
        let base = Self {
            name,
            loss: GlmLoss::Logistic,
            model_kind: ModelKind::Logistic,
            feature_law: FeatureLaw::Spherical,
            wstar_norm: 1.0,
            n_grid: vec![128, 256, 512, 1024, 2048],
            d_grid: vec![],
            d_factor: 2,
            epsilon_grid: vec![],
            epsilon: None,
            epsilon_exponent: -0.25,
            delta: None,
            pass_exponent: 1.5,
            eta0: 1.0,
            replicates: 30,
            n_test: 100_000,
            checkpoints: 20,
            log_points: 100,
            seed: 0,
        };
        match name {
            ExperimentName::ExcessRiskVsN => base,
            ExperimentName::DimensionIndependence => Self {
                n_grid: vec![512],
                d_grid: vec![512, 2048, 8192],
                ..base
            },
            ExperimentName::Stability => Self {
                n_grid: vec![100],
                d_grid: vec![16],
                epsilon: Some(1.0),
                replicates: 200,
                ..base
            },
            ExperimentName::PrivacyUtility => Self {
                n_grid: vec![256],
                d_grid: vec![16],
                epsilon_grid: vec![0.1, 0.3, 1.0],
                pass_exponent: 2.0,
                ..base
            },
        }
    }

    /// Defaults for `name` overridden by the keys present in `cfg`. Leftover keys stay in `cfg`.
    pub fn from_flat(name: ExperimentName, cfg: &mut FlatConfig) -> Result<Self> {
        let mut c = Self::defaults(name);
        if cfg.contains("loss.family") {
            c.loss = cfg.take_loss()?;
        }
        let noise = cfg.take_f64("data.noise")?;
        if let Some(kind) = cfg.take_str("data.kind")? {
            c.model_kind = match kind.as_str() {
                "logistic" => ModelKind::Logistic,
                "quadratic" => ModelKind::Quadratic {
                    noise: noise.unwrap_or(0.1),
                },
                other => return Err(Error::Config(format!("unknown data.kind `{other}`"))),
            };
        }
        if let Some(law) = cfg.take_str("data.feature_law")? {
            c.feature_law = law.parse()?;
        }
        macro_rules! take {
            ($field:ident, $getter:ident, $key:expr) => {
                if let Some(v) = cfg.$getter($key)? {
                    c.$field = v;
                }
            };
        }
        take!(wstar_norm, take_f64, "data.wstar_norm");
        take!(n_test, take_usize, "data.n_test");
        take!(n_grid, take_usize_list, "grid.n");
        take!(d_grid, take_usize_list, "grid.d");
        take!(d_factor, take_usize, "grid.d_factor");
        take!(epsilon_grid, take_f64_list, "grid.epsilon");
        take!(epsilon_exponent, take_f64, "schedule.epsilon_exponent");
        take!(pass_exponent, take_f64, "schedule.pass_exponent");
        take!(eta0, take_f64, "schedule.eta0");
        take!(replicates, take_usize, "replicates");
        take!(checkpoints, take_usize, "checkpoints");
        take!(log_points, take_usize, "log_points");
        take!(seed, take_u64, "seed");
        if let Some(e) = cfg.take_f64("schedule.epsilon")? {
            c.epsilon = Some(e);
        }
        if let Some(d) = cfg.take_f64("schedule.delta")? {
            c.delta = Some(d);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(invalid("replicates", "must be >= 2"));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(invalid("grid.n", "must be a nonempty list of positive sizes"));
        }
        match self.name {
            ExperimentName::ExcessRiskVsN => {
                if self.d_factor == 0 {
                    return Err(invalid("grid.d_factor", "must be >= 1"));
                }
            }
            ExperimentName::DimensionIndependence | ExperimentName::Stability => {
                if self.d_grid.is_empty() || self.d_grid.contains(&0) {
                    return Err(invalid("grid.d", "must be a nonempty list of positive dimensions"));
                }
            }
            ExperimentName::PrivacyUtility => {
                if self.d_grid.is_empty() || self.d_grid.contains(&0) {
                    return Err(invalid("grid.d", "must be a nonempty list of positive dimensions"));
                }
                if self.epsilon_grid.is_empty() {
                    return Err(invalid("grid.epsilon", "must be nonempty"));
                }
            }
        }
        if self.name == ExperimentName::Stability && self.epsilon.is_none() {
            return Err(invalid("schedule.epsilon", "stability needs a fixed epsilon"));
        }
        if !(self.wstar_norm >= 0.0) {
            return Err(invalid("data.wstar_norm", "must be >= 0"));
        }
        Ok(())
    }

    fn delta_for(&self, n: usize) -> f64 {
        self.delta.unwrap_or(match self.name {
            ExperimentName::ExcessRiskVsN | ExperimentName::DimensionIndependence => 1e-5,
            ExperimentName::Stability | ExperimentName::PrivacyUtility => 1.0 / (n as f64 * n as f64),
        })
    }

    fn epsilon_for(&self, n: usize) -> f64 {
        self.epsilon.unwrap_or_else(|| (n as f64).powf(self.epsilon_exponent))
    }

    /// Fully resolved settings as `key = value` lines, in a fixed order.
    pub fn echo(&self) -> String {
        let list_usize = |v: &[usize]| format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
        let list_f64 = |v: &[f64]| format!("[{}]", v.iter().map(|x| g9(*x)).collect::<Vec<_>>().join(", "));
        let mut lines: Vec<(String, String)> = vec![
            ("version".into(), VERSION.into()),
            ("experiment".into(), self.name.to_string()),
        ];
        lines.extend(loss_echo(&self.loss));
        lines.push(("data.kind".into(), self.model_kind.name().into()));
        if let ModelKind::Quadratic { noise } = self.model_kind {
            lines.push(("data.noise".into(), g9(noise)));
        }
        lines.extend([
            ("data.feature_law".to_string(), self.feature_law.name().to_string()),
            ("data.wstar_norm".into(), g9(self.wstar_norm)),
            ("data.n_test".into(), self.n_test.to_string()),
            ("grid.n".into(), list_usize(&self.n_grid)),
            ("grid.d".into(), list_usize(&self.d_grid)),
            ("grid.d_factor".into(), self.d_factor.to_string()),
            ("grid.epsilon".into(), list_f64(&self.epsilon_grid)),
            (
                "schedule.epsilon".into(),
                self.epsilon.map(g9).unwrap_or_else(|| "n^epsilon_exponent".into()),
            ),
            ("schedule.epsilon_exponent".into(), g9(self.epsilon_exponent)),
            (
                "schedule.delta".into(),
                self.delta.map(g9).unwrap_or_else(|| match self.name {
                    ExperimentName::ExcessRiskVsN | ExperimentName::DimensionIndependence => g9(1e-5),
                    _ => "1/n^2".into(),
                }),
            ),
            ("schedule.pass_exponent".into(), g9(self.pass_exponent)),
            ("schedule.eta0".into(), g9(self.eta0)),
            ("replicates".into(), self.replicates.to_string()),
            ("checkpoints".into(), self.checkpoints.to_string()),
            ("log_points".into(), self.log_points.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]);
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn model(&self, d: usize) -> Result<PopulationModel> {
        PopulationModel::with_norm(self.model_kind, self.feature_law, d, self.wstar_norm)
    }

    fn held_out(&self, model: &PopulationModel) -> Result<HeldOutSet> {
        let mut rng = RngStream::new(self.seed, HELD_OUT_STREAM).substream(purpose::HELD_OUT);
        HeldOutSet::draw(model, self.n_test, &mut rng)
    }
}

/// One output line. `mean`/`se` hold the experiment's metric: excess risk,
/// coupled squared distance, or time-averaged population risk.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: ExperimentName,
    pub n: usize,
    pub d: usize,
    pub t: usize,
    pub steps: usize,
    pub epsilon_target: f64,
    pub epsilon_accounted: f64,
    pub epsilon_claimed: f64,
    pub delta: f64,
    pub mean: f64,
    pub se: f64,
    pub comparator_risk: f64,
    pub bound: f64,
    pub baseline_rate: f64,
    pub samples_consumed: f64,
    pub satisfied: Option<bool>,
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

impl ResultRow {
    pub const HEADER: [&'static str; 17] = [
        "experiment",
        "n",
        "d",
        "t",
        "steps",
        "epsilon_target",
        "epsilon_accounted",
        "epsilon_claimed",
        "delta",
        "mean",
        "se",
        "comparator_risk",
        "bound",
        "baseline_rate",
        "samples_consumed",
        "satisfied",
        "error",
    ];

    fn empty(experiment: ExperimentName, n: usize, d: usize) -> Self {
        Self {
            experiment,
            n,
            d,
            t: 0,
            steps: 0,
            epsilon_target: f64::NAN,
            epsilon_accounted: f64::NAN,
            epsilon_claimed: f64::NAN,
            delta: f64::NAN,
            mean: f64::NAN,
            se: f64::NAN,
            comparator_risk: f64::NAN,
            bound: f64::NAN,
            baseline_rate: f64::NAN,
            samples_consumed: f64::NAN,
            satisfied: None,
            error: None,
            wall_clock_seconds: 0.0,
        }
    }

    fn record(&self) -> Vec<String> {
        let f = |v: f64| if v.is_nan() { String::new() } else { g9(v) };
        vec![
            self.experiment.to_string(),
            self.n.to_string(),
            self.d.to_string(),
            self.t.to_string(),
            self.steps.to_string(),
            f(self.epsilon_target),
            f(self.epsilon_accounted),
            f(self.epsilon_claimed),
            f(self.delta),
            f(self.mean),
            f(self.se),
            f(self.comparator_risk),
            f(self.bound),
            f(self.baseline_rate),
            f(self.samples_consumed),
            self.satisfied.map(|s| s.to_string()).unwrap_or_default(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares of `ln value` on `ln n`.
pub fn loglog_slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(invalid("points", format!("need at least 3, got {}", points.len())));
    }
    if points.iter().any(|&(n, v)| !(n > 0.0) || !(v > 0.0)) {
        return Err(invalid("points", "all coordinates must be positive"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("points", "need at least two distinct n"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Rows plus derived summary statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub name: ExperimentName,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<(String, String)>,
}

impl ExperimentReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ResultRow::HEADER)?;
        for row in &self.rows {
            w.write_record(row.record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        self.summary.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Runs the configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.name {
        ExperimentName::ExcessRiskVsN => experiment_excess_risk_vs_n(config),
        ExperimentName::DimensionIndependence => experiment_dimension_independence(config),
        ExperimentName::Stability => experiment_stability(config),
        ExperimentName::PrivacyUtility => experiment_privacy_utility(config),
    }
}

/// Writes `<name>.csv`, `<name>.config.txt`, `<name>.summary.txt` and
/// `<name>.timing.txt` into `dir`; returns the CSV path.
pub fn write_outputs(report: &ExperimentReport, config: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let stem = report.name.as_str();
    let csv_path = dir.join(format!("{stem}.csv"));
    report.write_csv(fs::File::create(&csv_path)?)?;
    fs::write(dir.join(format!("{stem}.config.txt")), config.echo())?;
    fs::write(dir.join(format!("{stem}.summary.txt")), report.summary_text())?;
    let timing: String = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "n = {}, d = {}, t = {}, wall_clock_seconds = {:.3}\n",
                r.n, r.d, r.t, r.wall_clock_seconds
            )
        })
        .collect();
    fs::write(dir.join(format!("{stem}.timing.txt")), timing)?;
    Ok(csv_path)
}

fn single_pass_row(config: &ExperimentConfig, n: usize, d: usize) -> ResultRow {
    let start = Instant::now();
    let mut row = ResultRow::empty(config.name, n, d);
    if let Err(e) = fill_single_pass_row(config, n, d, &mut row) {
        row.error = Some(e.to_string());
    }
    row.wall_clock_seconds = start.elapsed().as_secs_f64();
    row
}

fn fill_single_pass_row(config: &ExperimentConfig, n: usize, d: usize, row: &mut ResultRow) -> Result<()> {
    let epsilon = config.epsilon_for(n);
    let delta = config.delta_for(n);
    row.epsilon_target = epsilon;
    row.delta = delta;
    let steps = single_pass_steps_within(n);
    if steps == 0 {
        return Err(invalid("n", "too small for a single step"));
    }
    let bounds = config.loss.bounds();
    let schedule = SinglePassSchedule::new(steps, bounds.g, config.eta0, epsilon, delta)?;
    let cert = certify_single_pass(&schedule)?;
    row.steps = steps;
    row.t = steps;
    row.epsilon_accounted = cert.dp.epsilon;
    row.epsilon_claimed = cert.claimed.epsilon;
    row.bound = single_pass_excess_bound(
        config.wstar_norm,
        n,
        bounds.g,
        config.eta0,
        epsilon,
        delta,
        bounds.hessian_trace,
    )?;
    row.baseline_rate = dimension_dependent_rate(n, d, epsilon);

    let model = config.model(d)?;
    let held = config.held_out(&model)?;
    row.comparator_risk = held.risk(&config.loss, model.w_star())?.0;
    let budget = schedule.sample_budget();
    let excess: Vec<f64> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let rng = RngStream::new(config.seed, r as u64);
            let data = draw_dataset(&model, budget, &mut rng.substream(purpose::DATA))?;
            let opts = RunOptions {
                log_interval: Some(steps),
                ..Default::default()
            };
            let rec = run_single_pass(&data, &config.loss, &schedule, &rng, opts)?;
            Ok(held.excess_risk(&config.loss, &rec.final_iterate, model.w_star())?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, se) = mean_and_se(&excess);
    row.mean = mean;
    row.se = se;
    row.samples_consumed = budget as f64;
    Ok(())
}

fn slope_summary(rows: &[ResultRow], summary: &mut Vec<(String, String)>) {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| (r.n as f64, r.mean.max(SLOPE_FLOOR)))
        .collect();
    match loglog_slope_fit(&points) {
        Ok(fit) => {
            summary.push(("slope".into(), g9(fit.slope)));
            summary.push(("intercept".into(), g9(fit.intercept)));
            summary.push(("r2".into(), g9(fit.r2)));
        }
        Err(e) => summary.push(("slope_error".into(), e.to_string())),
    }
}

/// Single-pass excess risk of the last iterate against `w*` over a grid of `n`, with `d = d_factor n`.
pub fn experiment_excess_risk_vs_n(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let rows: Vec<ResultRow> = config
        .n_grid
        .iter()
        .map(|&n| single_pass_row(config, n, config.d_factor * n))
        .collect();
    let mut summary = Vec::new();
    slope_summary(&rows, &mut summary);
    Ok(ExperimentReport {
        name: config.name,
        rows,
        summary,
    })
}

/// Single-pass excess risk at fixed `n` over a grid of dimensions.
pub fn experiment_dimension_independence(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let n = config.n_grid[0];
    let rows: Vec<ResultRow> = config.d_grid.iter().map(|&d| single_pass_row(config, n, d)).collect();
    let ok: Vec<&ResultRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let mut summary = Vec::new();
    if !ok.is_empty() {
        let max = ok.iter().map(|r| r.mean).fold(f64::NEG_INFINITY, f64::max);
        let min = ok.iter().map(|r| r.mean).fold(f64::INFINITY, f64::min);
        summary.push(("max_min_ratio".into(), g9(max / min)));
        let same_eps = ok
            .iter()
            .all(|r| r.epsilon_accounted.to_bits() == ok[0].epsilon_accounted.to_bits());
        summary.push(("epsilon_identical".into(), same_eps.to_string()));
        let same_bound = ok.iter().all(|r| r.bound.to_bits() == ok[0].bound.to_bits());
        summary.push(("bound_identical".into(), same_bound.to_string()));
    }
    Ok(ExperimentReport {
        name: config.name,
        rows,
        summary,
    })
}

/// Checkpoint steps `T/k, 2T/k, ..., T` (deduplicated, at least one).
fn checkpoints(steps: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, steps.max(1));
    let mut out: Vec<usize> = (1..=count).map(|i| (i * steps) / count).filter(|&t| t >= 1).collect();
    out.dedup();
    out
}

/// Coupled multi-pass chains on neighboring datasets versus the stability bound.
pub fn experiment_stability(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let n = config.n_grid[0];
    let d = config.d_grid[0];
    let epsilon = config.epsilon_for(n);
    let delta = config.delta_for(n);
    let start = Instant::now();
    let bounds = config.loss.bounds();
    let schedule = MultiPassSchedule::new(n, config.pass_exponent, epsilon, delta, config.eta0, bounds.g)?;
    let cert = certify_multi_pass(n, config.pass_exponent, epsilon, delta)?;
    let model = config.model(d)?;
    let distances: Vec<Vec<(usize, f64)>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let rng = RngStream::new(config.seed, r as u64);
            let (data, prime) = neighbors(&model, n, &rng)?;
            coupled_stability_run_with(&data, &prime, &config.loss, &schedule, &rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let etas = schedule.etas();
    let elapsed = start.elapsed().as_secs_f64();
    let marks = checkpoints(schedule.steps(), config.checkpoints);
    let mut rows = Vec::with_capacity(marks.len());
    let mut all_ok = true;
    let mut min_ratio = f64::INFINITY;
    for &t in &marks {
        let vals: Vec<f64> = distances.iter().map(|run| run[t - 1].1).collect();
        let (mean, se) = mean_and_se(&vals);
        let bound = stability_bound(t, n, bounds.g, &etas)?;
        let report = BoundReport::new(bound, mean, se);
        all_ok &= report.satisfied;
        if mean > 0.0 {
            min_ratio = min_ratio.min(bound / mean);
        }
        let mut row = ResultRow::empty(config.name, n, d);
        row.t = t;
        row.steps = schedule.steps();
        row.epsilon_target = epsilon;
        row.epsilon_accounted = cert.exact.epsilon;
        row.epsilon_claimed = cert.claimed.epsilon;
        row.delta = delta;
        row.mean = mean;
        row.se = se;
        row.bound = bound;
        row.samples_consumed = t as f64;
        row.satisfied = Some(report.satisfied);
        row.wall_clock_seconds = elapsed / marks.len() as f64;
        rows.push(row);
    }
    Ok(ExperimentReport {
        name: config.name,
        rows,
        summary: vec![
            ("all_satisfied".into(), all_ok.to_string()),
            ("min_bound_to_empirical_ratio".into(), g9(min_ratio)),
        ],
    })
}

/// A dataset and its neighbor differing in the last example.
fn neighbors(model: &PopulationModel, n: usize, rng: &RngStream) -> Result<(Dataset, Dataset)> {
    let data = draw_dataset(model, n, &mut rng.substream(purpose::DATA))?;
    let replacement = model.draw_example(&mut rng.substream(purpose::NEIGHBOR))?;
    let prime = data.with_replaced(n - 1, replacement)?;
    Ok((data, prime))
}

/// Multi-pass time-averaged population risk over a grid of privacy targets.
pub fn experiment_privacy_utility(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let n = config.n_grid[0];
    let d = config.d_grid[0];
    let delta = config.delta_for(n);
    let model = config.model(d)?;
    let held = config.held_out(&model)?;
    let comparator = held.risk(&config.loss, model.w_star())?.0;
    let bounds = config.loss.bounds();
    let mut rows = Vec::new();
    for &epsilon in &config.epsilon_grid {
        let start = Instant::now();
        let mut row = ResultRow::empty(config.name, n, d);
        row.epsilon_target = epsilon;
        row.delta = delta;
        row.comparator_risk = comparator;
        let result = (|| -> Result<()> {
            let schedule = MultiPassSchedule::new(n, config.pass_exponent, epsilon, delta, config.eta0, bounds.g)?;
            let cert = certify_multi_pass(n, config.pass_exponent, epsilon, delta)?;
            row.steps = schedule.steps();
            row.t = schedule.steps();
            row.epsilon_accounted = cert.exact.epsilon;
            row.epsilon_claimed = cert.claimed.epsilon;
            row.bound = multi_pass_excess_shape(
                config.wstar_norm,
                n,
                config.pass_exponent,
                bounds.g,
                config.eta0,
                epsilon,
                delta,
                bounds.hessian_trace,
            )?;
            row.baseline_rate = dimension_dependent_rate(n, d, epsilon);
            let interval = (schedule.steps() / config.log_points.max(1)).max(1);
            let risks: Vec<f64> = (0..config.replicates)
                .into_par_iter()
                .map(|r| {
                    let rng = RngStream::new(config.seed, r as u64);
                    let data = draw_dataset(&model, n, &mut rng.substream(purpose::DATA))?;
                    let opts = RunOptions {
                        log_interval: Some(interval),
                        probe: Some(&held),
                        ..Default::default()
                    };
                    let rec = run_multi_pass(&data, &config.loss, &schedule, &rng, opts)?;
                    rec.time_averaged_population_risk().ok_or(Error::NonFinite {
                        context: "time-averaged risk",
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, se) = mean_and_se(&risks);
            row.mean = mean;
            row.se = se;
            row.samples_consumed = schedule.steps() as f64;
            Ok(())
        })();
        if let Err(e) = result {
            row.error = Some(e.to_string());
        }
        row.wall_clock_seconds = start.elapsed().as_secs_f64();
        rows.push(row);
    }
    let mut worst: f64 = 0.0;
    let mut sorted: Vec<&ResultRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    sorted.sort_by(|a, b| a.epsilon_target.total_cmp(&b.epsilon_target));
    for pair in sorted.windows(2) {
        let rise = pair[1].mean - pair[0].mean;
        let se = (pair[0].se.powi(2) + pair[1].se.powi(2)).sqrt();
        if rise > 0.0 && se > 0.0 {
            worst = worst.max(rise / se);
        } else if rise > 0.0 {
            worst = f64::INFINITY;
        }
    }
    Ok(ExperimentReport {
        name: config.name,
        rows,
        summary: vec![("max_increase_in_se_units".into(), g9(worst))],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn slope_fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = [128.0, 256.0, 512.0, 1024.0, 2048.0]
            .iter()
            .map(|&n: &f64| (n, 3.0 / n.sqrt()))
            .collect();
        let fit = loglog_slope_fit(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert_relative_eq!(fit.r2, 1.0, max_relative = 1e-12);
        let flat: Vec<(f64, f64)> = pts.iter().map(|&(n, _)| (n, 2.0)).collect();
        assert!(loglog_slope_fit(&flat).unwrap().slope.abs() < 1e-12);
        assert!(loglog_slope_fit(&pts[..2]).is_err());
        assert!(loglog_slope_fit(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn slope_fit_log_factor() {
        let pts: Vec<(f64, f64)> = [128.0, 256.0, 512.0, 1024.0, 2048.0]
            .iter()
            .map(|&n: &f64| (n, n.ln() / n.sqrt()))
            .collect();
        let fit = loglog_slope_fit(&pts).unwrap();
        assert_relative_eq!(fit.slope, -0.3373918511953253, max_relative = 1e-12);
    }

    #[test]
    fn names_round_trip() {
        for e in ExperimentName::ALL {
            assert_eq!(e.as_str().parse::<ExperimentName>().unwrap(), e);
        }
        let err = "bogus".parse::<ExperimentName>().unwrap_err().to_string();
        for e in ExperimentName::ALL {
            assert!(err.contains(e.as_str()));
        }
    }

    #[test]
    fn checkpoint_grid() {
        assert_eq!(checkpoints(1000, 20)[0], 50);
        assert_eq!(checkpoints(1000, 20).len(), 20);
        assert_eq!(checkpoints(3, 20), vec![1, 2, 3]);
    }

    fn small(name: ExperimentName) -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(name);
        c.replicates = 4;
        c.n_test = 2000;
        match name {
            ExperimentName::ExcessRiskVsN => c.n_grid = vec![16, 32, 64],
            ExperimentName::DimensionIndependence => {
                c.n_grid = vec![32];
                c.d_grid = vec![32, 128];
            }
            ExperimentName::Stability => c.n_grid = vec![20],
            ExperimentName::PrivacyUtility => {
                c.n_grid = vec![32];
                c.epsilon_grid = vec![0.5, 1.0];
                c.log_points = 10;
            }
        }
        c
    }

    #[test]
    fn experiments_are_deterministic() {
        for name in ExperimentName::ALL {
            let c = small(name);
            let a = run_experiment(&c).unwrap();
            let b = run_experiment(&c).unwrap();
            let (mut ca, mut cb) = (Vec::new(), Vec::new());
            a.write_csv(&mut ca).unwrap();
            b.write_csv(&mut cb).unwrap();
            assert_eq!(ca, cb, "{name}");
            assert!(a.rows.iter().all(|r| r.error.is_none()), "{name}: {:?}", a.rows);
            assert!(a.rows.iter().all(|r| r.se >= 0.0));
        }
    }

    #[test]
    fn seed_changes_rows() {
        let mut c = small(ExperimentName::Stability);
        let a = run_experiment(&c).unwrap();
        c.seed = 1;
        let b = run_experiment(&c).unwrap();
        let means = |r: &ExperimentReport| r.rows.iter().map(|x| x.mean).collect::<Vec<_>>();
        assert_ne!(means(&a), means(&b));
        assert!(c.echo().contains("seed = 1\n"));
    }

    #[test]
    fn accounted_epsilon_is_the_accountant_value() {
        let c = small(ExperimentName::PrivacyUtility);
        let rep = run_experiment(&c).unwrap();
        for row in &rep.rows {
            let direct = crate::privacy::multi_pass_privacy(row.n, row.steps, row.delta).unwrap();
            assert_eq!(row.epsilon_accounted, direct.epsilon);
            assert_relative_eq!(row.delta, 1.0 / (32.0 * 32.0), max_relative = 1e-15);
        }
    }

    #[test]
    fn infeasible_point_yields_error_row() {
        let mut c = small(ExperimentName::ExcessRiskVsN);
        c.n_grid = vec![16, 32, 64];
        c.epsilon = Some(-1.0);
        let rep = run_experiment(&c).unwrap();
        assert!(rep.rows.iter().all(|r| r.error.is_some()));
    }

    #[test]
    fn from_flat_overrides_and_leaves_unknown_keys() {
        let mut cfg =
            FlatConfig::from_toml_str("replicates = 5\n[grid]\nn = [10, 20, 40]\n[schedule]\netaa0 = 2\n").unwrap();
        let c = ExperimentConfig::from_flat(ExperimentName::ExcessRiskVsN, &mut cfg).unwrap();
        assert_eq!(c.replicates, 5);
        assert_eq!(c.n_grid, vec![10, 20, 40]);
        assert!(cfg.finish().unwrap_err().to_string().contains("etaa0"));
    }
}
