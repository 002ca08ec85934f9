//! The noisy SGD / stochastic gradient Langevin update and its drivers.
//!
//! One step maps `w` to
//!
//! ```text
//! w~  = w - eta_t * mean_{i in M_t} grad l(w, z_i)
//! w' ~ N((1 - lambda_t eta_t) w~, lambda_t eta_t (2 - lambda_t eta_t) beta0 I)
//! ```
//!
//! Runs start from `w_0 ~ N(0, beta0 I)` and take steps `t = 1..=T`. Because
//! `lambda_1 eta_1 = 1`, the first step already yields an exact `N(0, beta0 I)`
//! draw independent of the data.
//!
//! Every run splits its [`RngStream`] into a mini-batch stream and a noise
//! stream, so a coupled pair of runs can share both while seeing different data.

use std::io::Write;

use crate::data::{Dataset, Example};
use crate::error::{invalid, Error, Result};
use crate::fmtnum::g9;
use crate::linalg::Vector;
use crate::losses::GlmLoss;
use crate::rng::{purpose, RngStream};
use crate::schedules::{MultiPassSchedule, SinglePassSchedule, StepParams, StepSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    SinglePass,
    MultiPass,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::SinglePass => "single-pass",
            Mode::MultiPass => "multi-pass",
        }
    }
}

/// Current iterate of a run. `t` counts completed update steps.
#[derive(Clone, Debug)]
pub struct SgldState {
    t: usize,
    w: Vector,
    samples_consumed: usize,
    noise: RngStream,
}

impl SgldState {
    /// Draws the starting point `w_0 ~ N(0, beta0 I)` from `noise`.
    pub fn initial(dim: usize, beta0: f64, mut noise: RngStream) -> Result<Self> {
        if !(beta0 >= 0.0) {
            return Err(invalid("beta0", format!("must be >= 0, got {beta0}")));
        }
        let w = crate::rng::gaussian_vector(&Vector::zeros(dim), beta0, &mut noise)?;
        Ok(Self {
            t: 0,
            w,
            samples_consumed: 0,
            noise,
        })
    }

    pub fn from_parts(t: usize, w: Vector, noise: RngStream) -> Self {
        Self {
            t,
            w,
            samples_consumed: 0,
            noise,
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn w(&self) -> &Vector {
        &self.w
    }

    pub fn samples_consumed(&self) -> usize {
        self.samples_consumed
    }

    pub fn into_iterate(self) -> Vector {
        self.w
    }

    /// One Langevin step on `minibatch`, drawing noise from the state's stream.
    pub fn step(&mut self, minibatch: &[&Example], params: StepParams, beta0: f64, loss: &GlmLoss) -> Result<()> {
        validate_step(minibatch, params, beta0)?;
        let variance = params.noise_variance(beta0);
        let mut noise = vec![0.0; self.w.dim()];
        if variance > 0.0 {
            self.noise.fill_standard_normal(&mut noise);
        }
        self.apply(minibatch, params, variance, loss, &noise)
    }

    /// Step with caller-supplied standard normal noise; used by coupled runs.
    pub(crate) fn step_with_noise(
        &mut self,
        minibatch: &[&Example],
        params: StepParams,
        beta0: f64,
        loss: &GlmLoss,
        noise: &[f64],
    ) -> Result<()> {
        validate_step(minibatch, params, beta0)?;
        self.apply(minibatch, params, params.noise_variance(beta0), loss, noise)
    }

    fn apply(
        &mut self,
        minibatch: &[&Example],
        params: StepParams,
        variance: f64,
        loss: &GlmLoss,
        noise: &[f64],
    ) -> Result<()> {
        let mut next = drift(&self.w, minibatch, params, loss)?;
        if variance > 0.0 {
            next.axpy(variance.sqrt(), noise);
        }
        self.w = next;
        self.t += 1;
        self.samples_consumed += minibatch.len();
        Ok(())
    }
}

fn validate_step(minibatch: &[&Example], params: StepParams, beta0: f64) -> Result<()> {
    if minibatch.is_empty() {
        return Err(invalid("minibatch", "must be nonempty"));
    }
    if !(params.shrink >= 0.0 && params.shrink < 2.0) {
        return Err(invalid(
            "lambda*eta",
            format!(
                "must lie in [0, 2) for a nonnegative noise variance, got {}",
                params.shrink
            ),
        ));
    }
    if !(params.eta >= 0.0 && params.eta.is_finite()) {
        return Err(invalid("eta", format!("must be finite and >= 0, got {}", params.eta)));
    }
    if !(beta0 >= 0.0 && beta0.is_finite()) {
        return Err(invalid("beta0", format!("must be finite and >= 0, got {beta0}")));
    }
    Ok(())
}

/// Deterministic part of a step: `(1 - lambda eta) (w - eta * mean gradient)`.
pub fn drift(w: &Vector, minibatch: &[&Example], params: StepParams, loss: &GlmLoss) -> Result<Vector> {
    let mut out = w.clone();
    let scale = -params.eta / minibatch.len() as f64;
    for z in minibatch {
        w.check_dim(z.dim())?;
        loss.accumulate_gradient(w, z, scale, out.as_mut_slice());
    }
    out.scale(1.0 - params.shrink);
    if !out.is_finite() {
        return Err(Error::NonFinite { context: "iterate" });
    }
    Ok(out)
}

/// Evaluates population risk for logged iterates.
pub trait RiskProbe: Sync {
    fn population_risk(&self, loss: &GlmLoss, w: &Vector) -> f64;
}

/// Logging and bookkeeping options for a run.
#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Log every `k` steps (and always the last). `None` means `max(1, T / 1000)`.
    pub log_interval: Option<usize>,
    pub keep_iterates: bool,
    pub record_consumption: bool,
    pub empirical_risk: bool,
    pub probe: Option<&'a dyn RiskProbe>,
}

impl<'a> RunOptions<'a> {
    pub fn interval_for(&self, steps: usize) -> usize {
        self.log_interval.unwrap_or((steps / 1000).max(1)).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiskPoint {
    pub t: usize,
    pub population: Option<f64>,
    pub empirical: Option<f64>,
    pub iterate_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub mode: Mode,
    pub steps: usize,
    pub final_iterate: Vector,
    pub iterate_log: Vec<(usize, Vector)>,
    pub risk_log: Vec<RiskPoint>,
    pub samples_consumed: usize,
    /// Dataset indices in consumption order, when requested.
    pub consumed: Vec<usize>,
}

impl RunRecord {
    /// Mean population risk over logged iterates, if a probe was attached.
    pub fn time_averaged_population_risk(&self) -> Option<f64> {
        let vals: Vec<f64> = self.risk_log.iter().filter_map(|p| p.population).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    /// Line-oriented record: one row per logged step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "risk_population", "risk_empirical", "iterate_norm"])?;
        let opt = |v: Option<f64>| v.map(g9).unwrap_or_default();
        for p in &self.risk_log {
            w.write_record([p.t.to_string(), opt(p.population), opt(p.empirical), g9(p.iterate_norm)])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Recorder<'a> {
    opts: RunOptions<'a>,
    interval: usize,
    steps: usize,
    iterate_log: Vec<(usize, Vector)>,
    risk_log: Vec<RiskPoint>,
}

impl<'a> Recorder<'a> {
    fn new(opts: RunOptions<'a>, steps: usize) -> Self {
        Self {
            interval: opts.interval_for(steps),
            opts,
            steps,
            iterate_log: Vec::new(),
            risk_log: Vec::new(),
        }
    }

    fn observe(&mut self, t: usize, w: &Vector, loss: &GlmLoss, dataset: &Dataset) -> Result<()> {
        if !t.is_multiple_of(self.interval) && t != self.steps {
            return Ok(());
        }
        if self.opts.keep_iterates {
            self.iterate_log.push((t, w.clone()));
        }
        let population = self.opts.probe.map(|p| p.population_risk(loss, w));
        let empirical = if self.opts.empirical_risk {
            Some(loss.empirical_risk(w, dataset)?)
        } else {
            None
        };
        self.risk_log.push(RiskPoint {
            t,
            population,
            empirical,
            iterate_norm: w.norm(),
        });
        Ok(())
    }
}

/// Single pass: each example feeds exactly one gradient, in blocks of `|M_t|`
/// taken sequentially from a shuffled order. Returns the last iterate `w_T`.
pub fn run_single_pass(
    dataset: &Dataset,
    loss: &GlmLoss,
    schedule: &SinglePassSchedule,
    rng: &RngStream,
    opts: RunOptions<'_>,
) -> Result<RunRecord> {
    let budget = schedule.sample_budget();
    if dataset.len() < budget {
        return Err(Error::InsufficientData {
            required: budget,
            available: dataset.len(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng.substream(purpose::BATCH));
    }
    let beta0 = schedule.beta0();
    let mut state = SgldState::initial(dataset.dim(), beta0, rng.substream(purpose::NOISE))?;
    let mut recorder = Recorder::new(opts, schedule.steps());
    let mut cursor = 0;
    let mut batch: Vec<&Example> = Vec::new();
    for t in 1..=schedule.steps() {
        let size = schedule.batch_size(t);
        batch.clear();
        batch.extend(order[cursor..cursor + size].iter().map(|&i| dataset.get(i)));
        cursor += size;
        state.step(&batch, schedule.step_params(t), beta0, loss)?;
        recorder.observe(t, state.w(), loss, dataset)?;
    }
    let consumed = if opts.record_consumption {
        order[..cursor].to_vec()
    } else {
        Vec::new()
    };
    Ok(RunRecord {
        mode: Mode::SinglePass,
        steps: schedule.steps(),
        samples_consumed: state.samples_consumed(),
        final_iterate: state.into_iterate(),
        iterate_log: recorder.iterate_log,
        risk_log: recorder.risk_log,
        consumed,
    })
}

/// Multi pass: each step uses one example drawn uniformly with replacement.
pub fn run_multi_pass(
    dataset: &Dataset,
    loss: &GlmLoss,
    schedule: &MultiPassSchedule,
    rng: &RngStream,
    opts: RunOptions<'_>,
) -> Result<RunRecord> {
    let beta0 = schedule.beta0();
    let mut batch_rng = rng.substream(purpose::BATCH);
    let mut state = SgldState::initial(dataset.dim(), beta0, rng.substream(purpose::NOISE))?;
    let mut recorder = Recorder::new(opts, schedule.steps());
    let mut consumed = Vec::new();
    for t in 1..=schedule.steps() {
        let i = batch_rng.index(dataset.len());
        if opts.record_consumption {
            consumed.push(i);
        }
        state.step(&[dataset.get(i)], schedule.step_params(t), beta0, loss)?;
        recorder.observe(t, state.w(), loss, dataset)?;
    }
    Ok(RunRecord {
        mode: Mode::MultiPass,
        steps: schedule.steps(),
        samples_consumed: state.samples_consumed(),
        final_iterate: state.into_iterate(),
        iterate_log: recorder.iterate_log,
        risk_log: recorder.risk_log,
        consumed,
    })
}

/// Runs two multi-pass chains on neighboring datasets under shared
/// randomness (same start, same indices, same noise) and returns
/// `(t, ||w_t - w'_t||^2)` for `t = 1..=T`.
pub fn coupled_stability_run(
    dataset: &Dataset,
    dataset_prime: &Dataset,
    loss: &GlmLoss,
    schedule: &MultiPassSchedule,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    coupled_stability_run_with(dataset, dataset_prime, loss, schedule, &RngStream::new(seed, 0))
}

pub fn coupled_stability_run_with(
    dataset: &Dataset,
    dataset_prime: &Dataset,
    loss: &GlmLoss,
    schedule: &MultiPassSchedule,
    rng: &RngStream,
) -> Result<Vec<(usize, f64)>> {
    let diff = dataset.differing_positions(dataset_prime)?;
    if diff.len() > 1 {
        return Err(Error::NotNeighbors { positions: diff.len() });
    }
    if dataset.dim() != dataset_prime.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            actual: dataset_prime.dim(),
        });
    }
    let limit = 1.0 / loss.bounds().smoothness;
    if schedule.steps() > 0 && schedule.eta(1) > limit {
        return Err(invalid("eta_1", format!("{} exceeds 1/L = {limit}", schedule.eta(1))));
    }
    let beta0 = schedule.beta0();
    let mut batch_rng = rng.substream(purpose::BATCH);
    let mut noise_rng = rng.substream(purpose::NOISE);
    let a = SgldState::initial(dataset.dim(), beta0, noise_rng.clone())?;
    // Both chains start from the same draw; advance the shared stream past it.
    noise_rng = {
        let mut r = noise_rng;
        let mut skip = vec![0.0; dataset.dim()];
        if beta0 > 0.0 {
            r.fill_standard_normal(&mut skip);
        }
        r
    };
    let mut b = a.clone();
    let mut a = a;
    let mut noise = vec![0.0; dataset.dim()];
    let mut out = Vec::with_capacity(schedule.steps());
    for t in 1..=schedule.steps() {
        let i = batch_rng.index(dataset.len());
        let params = schedule.step_params(t);
        if params.noise_variance(beta0) > 0.0 {
            noise_rng.fill_standard_normal(&mut noise);
        }
        a.step_with_noise(&[dataset.get(i)], params, beta0, loss, &noise)?;
        b.step_with_noise(&[dataset_prime.get(i)], params, beta0, loss, &noise)?;
        out.push((t, a.w().distance_sq(b.w())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ex(x: Vec<f64>, y: f64) -> Example {
        Example::new(Vector::new(x).unwrap(), y).unwrap()
    }

    #[test]
    fn hand_evaluated_quadratic_step() {
        // w = 1, x = 1, y = 0: grad = 1, w~ = 0.9, mean = 0.5 * 0.9.
        let loss = GlmLoss::quadratic(2.0, 1.0).unwrap();
        let z = ex(vec![1.0], 0.0);
        let mut s = SgldState::from_parts(0, Vector::new(vec![1.0]).unwrap(), RngStream::new(0, 0));
        s.step(&[&z], StepParams::new(0.1, 0.5), 0.0, &loss).unwrap();
        assert_relative_eq!(s.w()[0], 0.45, max_relative = 1e-15);
        assert_eq!(s.t(), 1);
        assert_eq!(s.samples_consumed(), 1);
    }

    #[test]
    fn noise_free_limit_is_sgd() {
        let z = ex(vec![0.6, 0.8], 1.0);
        let w = Vector::new(vec![0.2, -0.1]).unwrap();
        let mut s = SgldState::from_parts(0, w.clone(), RngStream::new(0, 0));
        s.step(&[&z], StepParams::from_lambda(0.3, 0.0), 0.0, &GlmLoss::Logistic)
            .unwrap();
        let mut expect = w.clone();
        expect.axpy(-0.3, &GlmLoss::Logistic.gradient(&w, &z).unwrap());
        assert_eq!(s.w(), &expect);
    }

    #[test]
    fn rejects_bad_shrink_and_empty_batch() {
        let z = ex(vec![0.5], 1.0);
        let mut s = SgldState::from_parts(0, Vector::zeros(1), RngStream::new(0, 0));
        assert!(s
            .step(&[&z], StepParams::new(0.1, 2.0), 1.0, &GlmLoss::Logistic)
            .is_err());
        assert!(s
            .step(&[&z], StepParams::new(0.1, -0.1), 1.0, &GlmLoss::Logistic)
            .is_err());
        assert!(s.step(&[], StepParams::new(0.1, 0.5), 1.0, &GlmLoss::Logistic).is_err());
    }

    #[test]
    fn full_shrink_forgets_the_iterate() {
        // shrink = 1: output ~ N(0, beta0) whatever w is. Mean within 3 SE of 0.
        let z = ex(vec![1.0], 1.0);
        let beta0 = 0.3;
        let reps = 10_000;
        let mut noise = RngStream::new(9, 0);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..reps {
            let mut s = SgldState::from_parts(0, Vector::new(vec![5.0]).unwrap(), noise.clone());
            s.step(&[&z], StepParams::new(0.7, 1.0), beta0, &GlmLoss::Logistic)
                .unwrap();
            noise = s.noise.clone();
            sum += s.w()[0];
            sq += s.w()[0] * s.w()[0];
        }
        let mean = sum / reps as f64;
        let var = sq / reps as f64 - mean * mean;
        assert!(mean.abs() < 3.0 * (beta0 / reps as f64).sqrt(), "{mean}");
        assert!((var - beta0).abs() < 0.05 * beta0, "{var}");
    }

    fn small_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed, 77);
        Dataset::new(
            (0..n)
                .map(|_| {
                    let mut x: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
                    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    x.iter_mut().for_each(|v| *v *= 0.9 / norm);
                    let y = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                    ex(x, y)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_pass_consumes_budget_once() {
        for steps in [8, 100, 1000] {
            let sched = SinglePassSchedule::new(steps, 1.0, 1.0, 0.5, 1e-5).unwrap();
            let data = small_dataset(sched.sample_budget() + 3, 3, steps as u64);
            let opts = RunOptions {
                record_consumption: true,
                ..Default::default()
            };
            let rec = run_single_pass(&data, &GlmLoss::Logistic, &sched, &RngStream::new(1, 0), opts).unwrap();
            assert_eq!(rec.samples_consumed, sched.sample_budget());
            let mut seen = rec.consumed.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), rec.consumed.len());
        }
    }

    #[test]
    fn single_pass_insufficient_data_names_budget() {
        let sched = SinglePassSchedule::new(8, 1.0, 1.0, 0.5, 1e-5).unwrap();
        let data = small_dataset(10, 2, 1);
        let err = run_single_pass(
            &data,
            &GlmLoss::Logistic,
            &sched,
            &RngStream::new(1, 0),
            RunOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientData {
                required: 11,
                available: 10
            }
        ));
        assert!(err.to_string().contains("11"));
    }

    #[test]
    fn runs_are_deterministic() {
        let sched = SinglePassSchedule::new(50, 1.0, 1.0, 0.5, 1e-5).unwrap();
        let data = small_dataset(sched.sample_budget(), 4, 3);
        let opts = RunOptions {
            log_interval: Some(1),
            keep_iterates: true,
            empirical_risk: true,
            ..Default::default()
        };
        let a = run_single_pass(&data, &GlmLoss::Logistic, &sched, &RngStream::new(5, 2), opts).unwrap();
        let b = run_single_pass(&data, &GlmLoss::Logistic, &sched, &RngStream::new(5, 2), opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.iterate_log.last().unwrap().1, &a.final_iterate);
        assert_eq!(a.risk_log.len(), 50);
    }

    #[test]
    fn multi_pass_zero_steps_returns_initial_draw() {
        let sched = MultiPassSchedule::new(10, 2.0, 0.5, 1e-3, 1.0, 1.0)
            .unwrap()
            .with_steps(0);
        let data = small_dataset(10, 3, 4);
        let rng = RngStream::new(8, 0);
        let rec = run_multi_pass(&data, &GlmLoss::Logistic, &sched, &rng, RunOptions::default()).unwrap();
        let init = SgldState::initial(3, sched.beta0(), rng.substream(purpose::NOISE)).unwrap();
        assert_eq!(&rec.final_iterate, init.w());
        assert_eq!(rec.samples_consumed, 0);
    }

    #[test]
    fn multi_pass_singleton_always_uses_it() {
        let sched = MultiPassSchedule::new(10, 2.0, 0.5, 1e-3, 1.0, 1.0).unwrap();
        let data = small_dataset(1, 2, 4);
        let opts = RunOptions {
            record_consumption: true,
            ..Default::default()
        };
        let rec = run_multi_pass(&data, &GlmLoss::Logistic, &sched, &RngStream::new(1, 1), opts).unwrap();
        assert_eq!(rec.consumed.len(), sched.steps());
        assert!(rec.consumed.iter().all(|&i| i == 0));
    }

    #[test]
    fn coupling_on_identical_data_is_zero() {
        let sched = MultiPassSchedule::new(20, 2.0, 0.5, 1e-3, 1.0, 1.0).unwrap();
        let data = small_dataset(20, 3, 4);
        let d = coupled_stability_run(&data, &data, &GlmLoss::Logistic, &sched, 3).unwrap();
        assert_eq!(d.len(), sched.steps());
        assert!(d.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn coupling_starts_together_and_checks_neighbors() {
        let sched = MultiPassSchedule::new(20, 2.0, 0.5, 1e-3, 1.0, 1.0).unwrap();
        let data = small_dataset(20, 3, 4);
        let other = small_dataset(20, 3, 5);
        assert!(matches!(
            coupled_stability_run(&data, &other, &GlmLoss::Logistic, &sched, 3),
            Err(Error::NotNeighbors { .. })
        ));
        let prime = data.with_replaced(19, other.get(0).clone()).unwrap();
        let d = coupled_stability_run(&data, &prime, &GlmLoss::Logistic, &sched, 3).unwrap();
        assert_eq!(d[0], (1, 0.0));
    }

    #[test]
    fn coupling_rejects_large_first_step() {
        // Tiny delta and huge eta0 push eta_1 above 1/L = 1 for the hinge with h = 0.5.
        let sched = MultiPassSchedule::new(20, 1.0, 1.0, 1e-3, 50.0, 1.0).unwrap();
        assert!(sched.eta(1) > 1.0);
        let data = small_dataset(20, 2, 4);
        let loss = GlmLoss::smoothed_hinge(0.5).unwrap();
        assert!(coupled_stability_run(&data, &data, &loss, &sched, 0).is_err());
    }

    #[test]
    fn record_csv_has_header_and_rows() {
        let sched = SinglePassSchedule::new(8, 1.0, 1.0, 0.5, 1e-5).unwrap();
        let data = small_dataset(11, 2, 1);
        let opts = RunOptions {
            log_interval: Some(2),
            empirical_risk: true,
            ..Default::default()
        };
        let rec = run_single_pass(&data, &GlmLoss::Logistic, &sched, &RngStream::new(1, 0), opts).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,risk_population,risk_empirical,iterate_norm");
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[1].starts_with("2,,"));
    }
}
