//! Command-line front end: `run`, `account`, `experiment` and `selftest`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::FlatConfig;
use crate::datagen::{read_dataset, FeatureLaw, HeldOutSet, ModelKind, PopulationModel};
use crate::engine::{run_multi_pass, run_single_pass, RunOptions, RunRecord};
use crate::error::{Error, Result};
use crate::fmtnum::g9;
use crate::harness::{run_experiment, write_outputs, ExperimentConfig, ExperimentName};
use crate::losses::GlmLoss;
use crate::privacy::{multi_pass_report, single_pass_report};
use crate::rng::{purpose, RngStream};
use crate::schedules::{MultiPassSchedule, SinglePassSchedule};

#[derive(Parser, Debug)]
#[command(
    name = "langevin-dp",
    version,
    about = "Private noisy SGD: runs, accounting and experiments"
)]
pub struct Cli {
    /// Suppress reports on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the sampler once and write its record and accounting report.
    Run(Common),
    /// Print the privacy accounting for a schedule.
    Account(Common),
    /// Run a named experiment and write CSV output.
    Experiment {
        /// One of excess-risk-vs-n, dimension-independence, stability, privacy-utility.
        name: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the `seed` key.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<FlatConfig> {
        let mut cfg = match &self.config {
            Some(p) => FlatConfig::from_file(p)?,
            None => FlatConfig::new(),
        };
        for s in &self.set {
            cfg.set(s)?;
        }
        if let Some(seed) = self.seed {
            cfg.insert("seed", toml::Value::Integer(seed as i64));
        }
        Ok(cfg)
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

/// Parses `args` and executes; the process exit status is the return value.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let mut stdout = io::stdout().lock();
    let mut sink = io::sink();
    let out: &mut dyn Write = if cli.quiet { &mut sink } else { &mut stdout };
    match execute(cli.command, out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Returns `Ok(false)` when the work completed but a hard check failed.
pub fn execute(command: Command, out: &mut dyn Write) -> Result<bool> {
    match command {
        Command::Run(common) => cmd_run(&common, out),
        Command::Account(common) => cmd_account(&common, out),
        Command::Experiment { name, common } => cmd_experiment(name.as_deref(), &common, out),
        Command::Selftest => Ok(crate::selftest::run_all(out)?),
    }
}

enum Schedule {
    Single(SinglePassSchedule),
    Multi(MultiPassSchedule),
}

/// Reads `mode` and `schedule.*`; `default_n` fills `schedule.n` for multi-pass runs.
fn take_schedule(cfg: &mut FlatConfig, loss: &GlmLoss, default_n: Option<usize>) -> Result<Schedule> {
    let mode = cfg.take_str("mode")?.unwrap_or_else(|| "single-pass".into());
    let eta0 = cfg.take_f64("schedule.eta0")?.unwrap_or(1.0);
    let epsilon = cfg.take_f64("schedule.epsilon")?.unwrap_or(1.0);
    let delta = cfg.take_f64("schedule.delta")?;
    let g = loss.bounds().g;
    match mode.as_str() {
        "single-pass" => {
            let steps = cfg.take_usize("schedule.steps")?.unwrap_or(100);
            Ok(Schedule::Single(SinglePassSchedule::new(
                steps,
                g,
                eta0,
                epsilon,
                delta.unwrap_or(1e-5),
            )?))
        }
        "multi-pass" => {
            let n = match cfg.take_usize("schedule.n")?.or(default_n) {
                Some(n) => n,
                None => return Err(Error::Config("multi-pass accounting needs `schedule.n`".into())),
            };
            let alpha = cfg.take_f64("schedule.pass_exponent")?.unwrap_or(1.5);
            let delta = delta.unwrap_or(1.0 / (n as f64 * n as f64));
            let mut s = MultiPassSchedule::new(n, alpha, epsilon, delta, eta0, g)?;
            if let Some(steps) = cfg.take_usize("schedule.steps")? {
                s = s.with_steps(steps);
            }
            Ok(Schedule::Multi(s))
        }
        other => Err(Error::Config(format!(
            "unknown mode `{other}` (expected single-pass or multi-pass)"
        ))),
    }
}

fn report_for(schedule: &Schedule) -> Result<String> {
    match schedule {
        Schedule::Single(s) => single_pass_report(s),
        Schedule::Multi(s) => multi_pass_report(s),
    }
}

fn cmd_account(common: &Common, out: &mut dyn Write) -> Result<bool> {
    let mut cfg = common.load()?;
    let loss = cfg.take_loss()?;
    let schedule = take_schedule(&mut cfg, &loss, None)?;
    cfg.take_u64("seed")?;
    cfg.finish()?;
    out.write_all(report_for(&schedule)?.as_bytes())?;
    Ok(true)
}

struct DataSpec {
    file: Option<PathBuf>,
    model: Option<PopulationModel>,
    n: Option<usize>,
    n_test: usize,
}

fn take_data(cfg: &mut FlatConfig) -> Result<DataSpec> {
    let file = cfg.take_str("data.file")?.map(PathBuf::from);
    let kind = cfg.take_str("data.kind")?.unwrap_or_else(|| "logistic".into());
    let noise = cfg.take_f64("data.noise")?.unwrap_or(0.1);
    let law: FeatureLaw = cfg
        .take_str("data.feature_law")?
        .unwrap_or_else(|| "spherical".into())
        .parse()?;
    let d = cfg.take_usize("data.d")?.unwrap_or(10);
    let norm = cfg.take_f64("data.wstar_norm")?.unwrap_or(1.0);
    let n = cfg.take_usize("data.n")?;
    let n_test = cfg.take_usize("data.n_test")?.unwrap_or(10_000);
    let model = if file.is_some() {
        None
    } else {
        let kind = match kind.as_str() {
            "logistic" => ModelKind::Logistic,
            "quadratic" => ModelKind::Quadratic { noise },
            other => return Err(Error::Config(format!("unknown data.kind `{other}`"))),
        };
        Some(PopulationModel::with_norm(kind, law, d, norm)?)
    };
    Ok(DataSpec { file, model, n, n_test })
}

fn cmd_run(common: &Common, out: &mut dyn Write) -> Result<bool> {
    let mut cfg = common.load()?;
    let loss = cfg.take_loss()?;
    let data_spec = take_data(&mut cfg)?;
    let seed = cfg.take_u64("seed")?.unwrap_or(0);
    let log_interval = cfg.take_usize("run.log_interval")?;
    let rng = RngStream::new(seed, 0);

    let file_data = match &data_spec.file {
        Some(path) => Some(read_dataset(io::BufReader::new(fs::File::open(path)?))?.0),
        None => None,
    };
    let default_n = file_data.as_ref().map(|d| d.len()).or(data_spec.n);
    let schedule = take_schedule(&mut cfg, &loss, default_n)?;
    cfg.finish()?;

    let dataset = match (file_data, &data_spec.model) {
        (Some(d), _) => d,
        (None, Some(model)) => {
            let n = match (&schedule, data_spec.n) {
                (_, Some(n)) => n,
                (Schedule::Single(s), None) => s.sample_budget(),
                (Schedule::Multi(s), None) => s.n(),
            };
            crate::datagen::draw_dataset(model, n, &mut rng.substream(purpose::DATA))?
        }
        (None, None) => unreachable!("a model is built whenever no file is given"),
    };
    let held = match &data_spec.model {
        Some(m) => Some(HeldOutSet::draw(
            m,
            data_spec.n_test,
            &mut RngStream::new(seed, u64::MAX).substream(purpose::HELD_OUT),
        )?),
        None => None,
    };
    let opts = RunOptions {
        log_interval,
        empirical_risk: true,
        probe: held.as_ref().map(|h| h as &dyn crate::engine::RiskProbe),
        ..Default::default()
    };
    let record = match &schedule {
        Schedule::Single(s) => run_single_pass(&dataset, &loss, s, &rng, opts)?,
        Schedule::Multi(s) => run_multi_pass(&dataset, &loss, s, &rng, opts)?,
    };

    let dir = common.out_dir("run-output");
    fs::create_dir_all(&dir)?;
    record.write_csv(fs::File::create(dir.join("run.csv"))?)?;
    let mut report = report_for(&schedule)?;
    report.push_str(&run_summary(&record, &loss, held.as_ref(), &dataset)?);
    fs::write(dir.join("run.report.txt"), &report)?;
    out.write_all(report.as_bytes())?;
    Ok(true)
}

fn run_summary(
    record: &RunRecord,
    loss: &GlmLoss,
    held: Option<&HeldOutSet>,
    dataset: &crate::data::Dataset,
) -> Result<String> {
    let mut s = String::new();
    s.push_str(&format!("samples_consumed = {}\n", record.samples_consumed));
    s.push_str(&format!("final_iterate_norm = {}\n", g9(record.final_iterate.norm())));
    s.push_str(&format!(
        "final_empirical_risk = {}\n",
        g9(loss.empirical_risk(&record.final_iterate, dataset)?)
    ));
    if let Some(h) = held {
        let (risk, se) = h.risk(loss, &record.final_iterate)?;
        s.push_str(&format!("final_population_risk = {}\n", g9(risk)));
        s.push_str(&format!("final_population_risk_se = {}\n", g9(se)));
    }
    Ok(s)
}

fn cmd_experiment(name: Option<&str>, common: &Common, out: &mut dyn Write) -> Result<bool> {
    let mut cfg = common.load()?;
    let from_cfg = cfg.take_str("experiment")?;
    let name: ExperimentName = match name.map(str::to_string).or(from_cfg) {
        Some(n) => n.parse()?,
        None => {
            let names: Vec<_> = ExperimentName::ALL.iter().map(|e| e.as_str()).collect();
            return Err(Error::Config(format!(
                "no experiment named; valid names: {}",
                names.join(", ")
            )));
        }
    };
    let config = ExperimentConfig::from_flat(name, &mut cfg)?;
    cfg.finish()?;
    let report = run_experiment(&config)?;
    let path = write_outputs(&report, &config, &common.out_dir("results"))?;
    writeln!(out, "csv = {}", display(&path))?;
    out.write_all(report.summary_text().as_bytes())?;
    let errors = report.rows.iter().filter(|r| r.error.is_some()).count();
    writeln!(out, "error_rows = {errors}")?;
    let hard_ok = report.summary_value("all_satisfied").is_none_or(|v| v == "true");
    Ok(errors == 0 && hard_ok)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
