//! Experiment runner behind the `cpinn` binary.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::networks::{write_checkpoint, NetworkError};
use crate::problems::{Problem, ProblemError};
use crate::reference::{
    deeponet_timestep, rk4_integrate, sample_surrogate, ReferenceError, Trajectory, TrajectorySource,
};
use crate::training::{train_deeponet, train_pinn, TrainConfig, TrainReport, TrainingError};

/// Largest RK4 step used when the step count is derived from the horizon.
pub const RK4_MAX_STEP: f64 = 0.01;

pub const SOLVER_NAMES: [&str; 3] = ["pinn", "deeponet", "rk4"];

const CONFIG_KEYS: [&str; 9] = [
    "problem",
    "solver",
    "conservative",
    "epochs",
    "collocation",
    "projection-steps",
    "rollout-steps",
    "seed",
    "out",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    Parse { key: String, value: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write an empty trajectory")]
    EmptyTrajectory,
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("report serialisation failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for bad input, 2 for numerical failure, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } => 1,
            CliError::Training(TrainingError::Config(_)) => 1,
            CliError::Problem(ProblemError::UnknownProblem(_)) => 1,
            CliError::Io { .. } | CliError::Json(_) => 3,
            CliError::Network(NetworkError::Io(_)) => 3,
            _ => 2,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Pinn,
    DeepONet,
    Rk4,
}

impl Solver {
    pub fn from_name(name: &str) -> Result<Self, CliError> {
        match name {
            "pinn" => Ok(Solver::Pinn),
            "deeponet" => Ok(Solver::DeepONet),
            "rk4" => Ok(Solver::Rk4),
            other => Err(CliError::Usage(format!(
                "unknown solver `{other}`; expected one of: {}",
                SOLVER_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Solver::Pinn => "pinn",
            Solver::DeepONet => "deeponet",
            Solver::Rk4 => "rk4",
        }
    }
}

/// Command-line flags. Every field is optional here so that a config file
/// can supply it; [`parse_config`] checks what is still missing.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "cpinn", version, about = "Train and roll out conservative neural ODE solvers")]
pub struct Args {
    /// One of harmonic_oscillator, rigid_body, double_pendulum, lorenz_conservative, point_vortex3
    #[arg(long)]
    pub problem: Option<String>,
    /// pinn, deeponet or rk4
    #[arg(long)]
    pub solver: Option<String>,
    /// Put the projection layer in the model
    #[arg(long)]
    pub conservative: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Number of collocation points
    #[arg(long)]
    pub collocation: Option<usize>,
    /// Projection iterations at the end of the schedule and at inference
    #[arg(long)]
    pub projection_steps: Option<usize>,
    /// DeepONet time steps, or RK4 horizon in units of the training interval
    #[arg(long)]
    pub rollout_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat key=value file using the flag names as keys
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub solver: Solver,
    pub train: TrainConfig,
    pub rollout_steps: usize,
    pub out: PathBuf,
}

/// Parses a `key = value` file. Blank lines and lines starting with `#` are
/// skipped; unknown or repeated keys are rejected.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected key=value, got {line:?}",
                lineno + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!(
                "config line {}: unknown key `{key}`; expected one of: {}",
                lineno + 1,
                CONFIG_KEYS.join(", ")
            )));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!(
                "config line {}: `{key}` given twice",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| CliError::Parse {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

/// Merges `args` over the file named by `--config` (if any) and fills the
/// rest from the solver defaults.
pub fn parse_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    let from_file = |key: &str| file.get(key).map(String::as_str);
    fn pick<T: std::str::FromStr>(
        key: &str,
        flag: Option<T>,
        file: Option<&str>,
    ) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match (flag, file) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(s)) => parse_value(key, s).map(Some),
            (None, None) => Ok(None),
        }
    }

    let problem_name = pick("problem", args.problem.clone(), from_file("problem"))?
        .ok_or_else(|| CliError::Usage("missing --problem".into()))?;
    let problem = Problem::from_name(&problem_name)?;
    let solver_name = pick("solver", args.solver.clone(), from_file("solver"))?
        .ok_or_else(|| CliError::Usage("missing --solver".into()))?;
    let solver = Solver::from_name(&solver_name)?;
    let conservative = args.conservative
        || pick::<bool>("conservative", None, from_file("conservative"))?.unwrap_or(false);

    let mut train = match solver {
        Solver::DeepONet => TrainConfig::deeponet(),
        Solver::Pinn | Solver::Rk4 => TrainConfig::pinn(),
    };
    train.conservative = conservative;
    if let Some(e) = pick("epochs", args.epochs, from_file("epochs"))? {
        train.epochs = e;
    }
    if let Some(n) = pick("collocation", args.collocation, from_file("collocation"))? {
        train.collocation_count = n;
    }
    if let Some(p) = pick("projection-steps", args.projection_steps, from_file("projection-steps"))? {
        train.projection_cap = p;
    }
    if let Some(s) = pick("seed", args.seed, from_file("seed"))? {
        train.seed = s;
    }
    if solver != Solver::Rk4 {
        train.validate()?;
    }

    let rollout_steps = pick("rollout-steps", args.rollout_steps, from_file("rollout-steps"))?
        .unwrap_or(match (solver, &problem) {
            (Solver::Rk4, Problem::HarmonicOscillator(_) | Problem::RigidBody(_)) => 1,
            _ => problem.default_rollout_steps(),
        });
    if rollout_steps == 0 {
        return Err(CliError::Parse {
            key: "rollout-steps".into(),
            value: "0".into(),
            reason: "must be at least 1".into(),
        });
    }
    let out = pick("out", args.out.clone(), from_file("out"))?.unwrap_or_else(|| PathBuf::from("."));

    Ok(ExperimentConfig {
        problem,
        solver,
        train,
        rollout_steps,
        out,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Writes `t,u0,..,I0,..` rows with 17 significant digits.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    let n = traj.states.first().map_or(0, Vec::len);
    let m = traj.invariant_values.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("u{i}")));
    header.extend((0..m).map(|i| format!("I{i}")));
    writeln!(w, "{}", header.join(","))?;
    for ((t, u), inv) in traj.times.iter().zip(&traj.states).zip(&traj.invariant_values) {
        write!(w, "{t:.16e}")?;
        for x in u.iter().chain(inv) {
            write!(w, ",{x:.16e}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn emit_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    if traj.is_empty() {
        return Err(CliError::EmptyTrajectory);
    }
    write_trajectory_csv(traj, create(path)?).map_err(|e| CliError::io(path, e))
}

/// Absolute and relative error of every integral against its value at the
/// first sample; the relative error divides by `max(1, |I0|)`.
pub fn write_conservation_csv<W: Write>(traj: &Trajectory, names: &[&str], mut w: W) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    for name in names {
        header.push(format!("abs_{name}"));
        header.push(format!("rel_{name}"));
    }
    writeln!(w, "{}", header.join(","))?;
    let Some(first) = traj.invariant_values.first() else {
        return w.flush();
    };
    for (t, inv) in traj.times.iter().zip(&traj.invariant_values) {
        write!(w, "{t:.16e}")?;
        for (v, v0) in inv.iter().zip(first) {
            let abs = (v - v0).abs();
            write!(w, ",{abs:.16e},{:.16e}", abs / v0.abs().max(1.0))?;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Largest relative conservation error over the trajectory, as written to
/// `conservation.csv`.
pub fn max_relative_violation(traj: &Trajectory) -> f64 {
    let Some(first) = traj.invariant_values.first() else {
        return 0.0;
    };
    traj.invariant_values
        .iter()
        .flat_map(|row| row.iter().zip(first).map(|(v, v0)| (v - v0).abs() / v0.abs().max(1.0)))
        .fold(0.0, f64::max)
}

pub fn emit_metrics_json<T: Serialize>(report: &T, path: &Path) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
struct Rk4Report<'a> {
    solver: &'static str,
    problem: &'a str,
    steps: usize,
    step_size: f64,
    max_drift: Vec<f64>,
}

/// What a run produced, for the summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_loss: Option<f64>,
    pub max_violation: f64,
    pub samples: usize,
}

impl RunSummary {
    pub fn line(&self, config: &ExperimentConfig) -> String {
        let label = format!(
            "{} {}{}",
            config.problem.name(),
            config.solver.name(),
            if config.train.conservative && config.solver != Solver::Rk4 {
                " (conservative)"
            } else {
                ""
            }
        );
        match self.final_loss {
            Some(loss) => format!(
                "{label}: final loss {loss:.3e}, max conservation violation {:.3e} over {} samples",
                self.max_violation, self.samples
            ),
            None => format!(
                "{label}: max conservation violation {:.3e} over {} samples",
                self.max_violation, self.samples
            ),
        }
    }
}

/// Held-out initial condition for DeepONet rollouts, independent of the
/// training draws.
pub fn rollout_initial_condition(problem: &Problem, seed: u64) -> Result<Vec<f64>, ProblemError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    problem.sample_initial_condition_with(&mut rng)
}

/// Trains (if needed), rolls out and writes every output file.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary, CliError> {
    fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    let problem = &config.problem;
    let (t0, tf) = config.train.interval_for(problem);
    let projection = if config.train.conservative {
        config.train.projection_cap
    } else {
        0
    };

    let (traj, report): (Trajectory, Option<TrainReport>) = match config.solver {
        Solver::Rk4 => {
            let u0 = problem.sample_initial_condition(config.train.seed)?;
            let horizon = (tf - t0) * config.rollout_steps as f64;
            let steps = (horizon / RK4_MAX_STEP).ceil() as usize;
            info!("rk4: {steps} steps over [{t0}, {}]", t0 + horizon);
            let traj = rk4_integrate(problem, &u0, t0, t0 + horizon, steps)?;
            emit_metrics_json(
                &Rk4Report {
                    solver: "rk4",
                    problem: problem.name(),
                    steps,
                    step_size: horizon / steps as f64,
                    max_drift: traj.max_drift(),
                },
                &config.out.join("report.json"),
            )?;
            (traj, None)
        }
        Solver::Pinn => {
            let run = train_pinn(problem, &config.train)?;
            let path = config.out.join("checkpoint.bin");
            write_checkpoint(create(&path)?, &[&run.model.net])?;
            let source = if projection > 0 {
                TrajectorySource::PinnConservative
            } else {
                TrajectorySource::PinnStandard
            };
            let samples = config.train.collocation_count + 1;
            let traj = sample_surrogate(&run.model, problem, &run.model.u0, (t0, tf), samples, projection, source)?;
            let mut report = run.report;
            report.checkpoint_path = Some("checkpoint.bin".into());
            (traj, Some(report))
        }
        Solver::DeepONet => {
            let run = train_deeponet(problem, &config.train)?;
            let path = config.out.join("checkpoint.bin");
            write_checkpoint(create(&path)?, &[&run.model.branch, &run.model.trunk])?;
            let u0 = rollout_initial_condition(problem, config.train.seed)?;
            let traj = deeponet_timestep(&run.model, problem, &u0, config.rollout_steps, projection)?;
            let mut report = run.report;
            report.checkpoint_path = Some("checkpoint.bin".into());
            (traj, Some(report))
        }
    };

    emit_trajectory_csv(&traj, &config.out.join("trajectory.csv"))?;
    let path = config.out.join("conservation.csv");
    write_conservation_csv(&traj, problem.integral_names(), create(&path)?).map_err(|e| CliError::io(&path, e))?;
    if let Some(report) = &report {
        emit_metrics_json(report, &config.out.join("report.json"))?;
    }
    Ok(RunSummary {
        final_loss: report.map(|r| r.final_loss),
        max_violation: max_relative_violation(&traj),
        samples: traj.len(),
    })
}
