//! Physics-informed loss, Adam and the training loops for PINNs and DeepONets,
//! with or without the projection layer.

use std::time::Instant;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Arith, AutodiffError, Dual, Forward, Plain, Tape};
use crate::networks::{init_mlp, layer_sizes, DeepONetParams, NetworkError, PinnAnsatz};
use crate::problems::{Problem, ProblemError};
use crate::projection::{
    project_in, projection_schedule, soft_update_in, soft_weight, InvariantManifold,
    ProjectionConfig, ProjectionError,
};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("non-finite gradient at epoch {epoch}")]
    NonFiniteGradient { epoch: usize },
    #[error("parameter and gradient lengths differ ({params} vs {grads})")]
    Shape { params: usize, grads: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl From<AutodiffError> for TrainingError {
    fn from(e: AutodiffError) -> Self {
        TrainingError::Problem(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Pinn,
    DeepONet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub projection_cap: usize,
    pub collocation_count: usize,
    pub seed: u64,
    pub conservative: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hidden_layers: usize,
    pub width: usize,
    /// DeepONet latent block width per state component.
    pub latent_width: usize,
    /// Overrides the problem's default `(t0, tf)`.
    pub interval: Option<(f64, f64)>,
}

impl TrainConfig {
    pub fn pinn() -> Self {
        Self {
            epochs: 5000,
            learning_rate: 1e-3,
            projection_cap: 10,
            collocation_count: 2000,
            seed: 0,
            conservative: false,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            hidden_layers: 4,
            width: 40,
            latent_width: 40,
            interval: None,
        }
    }

    pub fn deeponet() -> Self {
        Self {
            collocation_count: 5000,
            ..Self::pinn()
        }
    }

    pub fn for_solver(kind: SolverKind) -> Self {
        match kind {
            SolverKind::Pinn => Self::pinn(),
            SolverKind::DeepONet => Self::deeponet(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::Config(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.collocation_count < 2 {
            return bad("need at least 2 collocation points");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        if self.width == 0 || self.latent_width == 0 {
            return bad("layer widths must be positive");
        }
        if let Some((t0, tf)) = self.interval {
            if !(tf > t0) {
                return bad("interval must have tf > t0");
            }
        }
        Ok(())
    }

    pub fn interval_for(&self, problem: &Problem) -> (f64, f64) {
        self.interval.unwrap_or_else(|| problem.default_interval())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: usize,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place. A non-finite gradient is
/// reported with the index of the step it would have been.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), TrainingError> {
    if params.len() != grads.len() || state.first_moment.len() != params.len() {
        return Err(TrainingError::Shape {
            params: params.len(),
            grads: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(TrainingError::NonFiniteGradient { epoch: state.step });
    }
    state.step += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// A model `u(u0, t; θ)` whose output can be differentiated in `t` and `θ`.
pub trait Surrogate {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, theta: &[f64]);
    fn output_in<C: Arith>(&self, ctx: &mut C, theta: &[C::S], u0: &[f64], t: C::S) -> Vec<C::S>;

    fn predict(&self, u0: &[f64], t: f64) -> Vec<f64> {
        let theta = self.params();
        self.output_in(&mut Plain, &theta, u0, t)
    }
}

/// The initial condition is fixed inside the ansatz, so `u0` is ignored.
impl Surrogate for PinnAnsatz {
    fn params(&self) -> Vec<f64> {
        self.net.params().to_vec()
    }

    fn set_params(&mut self, theta: &[f64]) {
        self.net.params_mut().copy_from_slice(theta);
    }

    fn output_in<C: Arith>(&self, ctx: &mut C, theta: &[C::S], _u0: &[f64], t: C::S) -> Vec<C::S> {
        self.forward_in(ctx, theta, t)
    }
}

impl Surrogate for DeepONetParams {
    fn params(&self) -> Vec<f64> {
        self.flat_params()
    }

    fn set_params(&mut self, theta: &[f64]) {
        self.set_flat_params(theta);
    }

    fn output_in<C: Arith>(&self, ctx: &mut C, theta: &[C::S], u0: &[f64], t: C::S) -> Vec<C::S> {
        self.ansatz_forward_in(ctx, theta, u0, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationPoint {
    pub t: f64,
    pub u0: Vec<f64>,
}

/// PINN: `N + 1` equispaced times from `t0` to `tf`, all sharing the sampled
/// initial condition. DeepONet: `N` pairs of a sampled initial condition and a
/// uniform time in `[t0, tf]`.
pub fn sample_collocation(
    config: &TrainConfig,
    problem: &Problem,
    kind: SolverKind,
) -> Result<Vec<CollocationPoint>, TrainingError> {
    let (t0, tf) = config.interval_for(problem);
    let n = config.collocation_count;
    match kind {
        SolverKind::Pinn => {
            let u0 = problem.sample_initial_condition(config.seed)?;
            Ok((0..=n)
                .map(|i| CollocationPoint {
                    t: if i == n {
                        tf
                    } else {
                        t0 + (tf - t0) * i as f64 / n as f64
                    },
                    u0: u0.clone(),
                })
                .collect())
        }
        SolverKind::DeepONet => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1);
            (0..n)
                .map(|_| {
                    let u0 = problem.sample_initial_condition_with(&mut rng)?;
                    let t = rng.gen_range(t0..=tf);
                    Ok(CollocationPoint { t, u0 })
                })
                .collect()
        }
    }
}

/// Projection applied inside the loss: `steps` iterations, then the output is
/// `(1 − weight)·P_{steps−1} + weight·P_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossProjection {
    pub steps: usize,
    pub weight: f64,
}

impl LossProjection {
    pub const NONE: LossProjection = LossProjection {
        steps: 0,
        weight: 0.0,
    };

    /// Schedule value at `epoch` of `total` (the standard path never projects).
    pub fn at_epoch(config: &TrainConfig, epoch: usize) -> Self {
        if !config.conservative {
            return Self::NONE;
        }
        Self {
            steps: projection_schedule(epoch, config.epochs, config.projection_cap),
            weight: soft_weight(epoch, config.epochs),
        }
    }
}

/// Model output at `(u0, t)` after the projection layer, over any context.
/// A projection failure falls back to the raw output.
pub fn conservative_output_in<C: Arith, M: Surrogate>(
    ctx: &mut C,
    model: &M,
    problem: &Problem,
    theta: &[C::S],
    u0: &[f64],
    t: C::S,
    projection: LossProjection,
) -> Result<Vec<C::S>, TrainingError> {
    let raw = model.output_in(ctx, theta, u0, t);
    if projection.steps == 0 {
        return Ok(raw);
    }
    let man = InvariantManifold::anchored(problem, u0)?;
    let cfg = ProjectionConfig::with_iterations(projection.steps);
    match project_in(ctx, &man, &raw, &cfg) {
        Ok(out) => Ok(soft_update_in(ctx, &out.previous, &out.current, projection.weight)),
        Err(err) => {
            debug!("projection failed at t = {}: {err}; using the raw output", ctx.value(t));
            Ok(raw)
        }
    }
}

/// Squared residual norm `|du/dt − f(u)|²` at one collocation point, and the
/// largest `|g|` of the output.
fn point_residual<C: Arith, M: Surrogate>(
    ctx: &mut C,
    model: &M,
    problem: &Problem,
    theta: &[C::S],
    point: &CollocationPoint,
    projection: LossProjection,
) -> Result<(C::S, f64), TrainingError> {
    let (values, rates) = {
        let mut fwd = Forward::new(ctx);
        let theta_d = fwd.lift_all(theta);
        let tv = fwd.inner().constant(point.t);
        let one = fwd.inner().constant(1.0);
        let t = fwd.variable(tv, one);
        let u = conservative_output_in(&mut fwd, model, problem, &theta_d, &point.u0, t, projection)?;
        let values: Vec<C::S> = u.iter().map(|d: &Dual<C::S>| d.value).collect();
        let rates: Vec<C::S> = u.iter().map(|d| d.tangent).collect();
        (values, rates)
    };
    let f = problem.rhs_in(ctx, point.t, &values)?;
    let r: Vec<C::S> = rates.iter().zip(&f).map(|(&a, &b)| ctx.sub(a, b)).collect();
    let sq = ctx.dot(&r, &r);

    let plain = ctx.values(&values);
    let man = InvariantManifold::anchored(problem, &point.u0)?;
    let violation = match man.residual_in(&mut Plain, &plain) {
        Ok(g) => g.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        Err(_) => f64::INFINITY,
    };
    Ok((sq, violation))
}

/// Mean squared residual over `points` with parameters `theta`, over any
/// context.
pub fn physics_loss_in<C: Arith, M: Surrogate>(
    ctx: &mut C,
    model: &M,
    problem: &Problem,
    theta: &[C::S],
    points: &[CollocationPoint],
    projection: LossProjection,
) -> Result<C::S, TrainingError> {
    let mut terms = Vec::with_capacity(points.len());
    for p in points {
        terms.push(point_residual(ctx, model, problem, theta, p, projection)?.0);
    }
    let total = ctx.sum(&terms);
    Ok(ctx.scale(total, 1.0 / points.len() as f64))
}

pub fn physics_loss<M: Surrogate>(
    model: &M,
    problem: &Problem,
    points: &[CollocationPoint],
    projection: LossProjection,
) -> Result<f64, TrainingError> {
    let theta = model.params();
    physics_loss_in(&mut Plain, model, problem, &theta, points, projection)
}

/// Loss, gradient and largest constraint violation over all points.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub max_violation: f64,
}

/// Points per tape; bounds memory while keeping the per-tape overhead small.
const CHUNK: usize = 16;

/// Reverse-mode loss gradient, recorded chunk by chunk and summed in order.
pub fn loss_and_gradient<M: Surrogate>(
    tape: &mut Tape,
    model: &M,
    problem: &Problem,
    theta: &[f64],
    points: &[CollocationPoint],
    projection: LossProjection,
) -> Result<LossEvaluation, TrainingError> {
    let scale = 1.0 / points.len() as f64;
    let mut gradient = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut max_violation = 0.0f64;
    let mut adj = Vec::new();
    let mut terms = Vec::with_capacity(CHUNK);
    for chunk in points.chunks(CHUNK) {
        tape.clear();
        let vars = tape.inputs(theta);
        terms.clear();
        for p in chunk {
            let (sq, v) = point_residual(tape, model, problem, &vars, p, projection)?;
            terms.push(sq);
            max_violation = max_violation.max(v);
        }
        let total = tape.sum(&terms);
        let part = tape.scale(total, scale);
        loss += tape.get(part);
        tape.adjoints_into(part, &mut adj);
        for (g, v) in gradient.iter_mut().zip(&vars) {
            *g += adj[v.index()];
        }
    }
    Ok(LossEvaluation {
        loss,
        gradient,
        max_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss: Vec<f64>,
    pub max_constraint_violation: Vec<f64>,
    pub wall_time_seconds: f64,
    pub config: TrainConfig,
    pub checkpoint_path: Option<String>,
    /// Loss of the final parameters with the full projection (if any).
    pub final_loss: f64,
    /// Largest `|g|` of the final model with the full projection (if any).
    pub final_max_constraint_violation: f64,
    #[serde(skip)]
    pub final_params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub points: Vec<CollocationPoint>,
    pub report: TrainReport,
}

impl<M> Trained<M> {
    /// Projection applied at inference: the full cap for conservative runs.
    pub fn inference_projection(&self) -> LossProjection {
        inference_projection(&self.report.config)
    }
}

pub fn inference_projection(config: &TrainConfig) -> LossProjection {
    if config.conservative {
        LossProjection {
            steps: config.projection_cap,
            weight: 1.0,
        }
    } else {
        LossProjection::NONE
    }
}

/// Full-batch training with the projection schedule ramping over the epochs.
pub fn train<M: Surrogate>(
    mut model: M,
    problem: &Problem,
    config: &TrainConfig,
    points: Vec<CollocationPoint>,
) -> Result<Trained<M>, TrainingError> {
    config.validate()?;
    let start = Instant::now();
    let mut theta = model.params();
    let adam = config.adam();
    let mut state = AdamState::new(theta.len());
    let mut tape = Tape::new();
    let mut loss = Vec::with_capacity(config.epochs);
    let mut violation = Vec::with_capacity(config.epochs);
    let log_every = (config.epochs / 10).max(1);

    for epoch in 0..config.epochs {
        let projection = LossProjection::at_epoch(config, epoch);
        let eval = loss_and_gradient(&mut tape, &model, problem, &theta, &points, projection)?;
        if !eval.loss.is_finite() {
            return Err(TrainingError::NonFiniteLoss {
                epoch,
                loss: eval.loss,
            });
        }
        adam_step(&mut theta, &eval.gradient, &mut state, &adam).map_err(|e| match e {
            TrainingError::NonFiniteGradient { .. } => TrainingError::NonFiniteGradient { epoch },
            other => other,
        })?;
        model.set_params(&theta);
        if epoch % log_every == 0 {
            info!(
                "epoch {epoch}: loss {:.3e}, p = {}, max |g| {:.3e}",
                eval.loss, projection.steps, eval.max_violation
            );
        }
        debug!("epoch {epoch}: loss {:e}", eval.loss);
        loss.push(eval.loss);
        violation.push(eval.max_violation);
    }

    let final_projection = inference_projection(config);
    let mut final_loss = 0.0;
    let mut final_violation = 0.0f64;
    let n = points.len() as f64;
    for p in &points {
        let (sq, v) = point_residual(&mut Plain, &model, problem, &theta, p, final_projection)?;
        final_loss += sq / n;
        final_violation = final_violation.max(v);
    }

    let report = TrainReport {
        loss,
        max_constraint_violation: violation,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        config: config.clone(),
        checkpoint_path: None,
        final_loss,
        final_max_constraint_violation: final_violation,
        final_params: theta,
    };
    Ok(Trained {
        model,
        points,
        report,
    })
}

/// Untrained PINN for `problem` on the configured interval.
pub fn init_pinn(problem: &Problem, config: &TrainConfig) -> Result<PinnAnsatz, TrainingError> {
    let (t0, tf) = config.interval_for(problem);
    let n = problem.dim();
    let net = init_mlp(&layer_sizes(1, config.hidden_layers, config.width, n), config.seed)?;
    let u0 = problem.sample_initial_condition(config.seed)?;
    Ok(PinnAnsatz::new(net, t0, tf, u0)?)
}

/// Untrained DeepONet for `problem` on the configured interval.
pub fn init_deeponet(problem: &Problem, config: &TrainConfig) -> Result<DeepONetParams, TrainingError> {
    let (t0, tf) = config.interval_for(problem);
    Ok(DeepONetParams::init(
        problem.dim(),
        config.hidden_layers,
        config.width,
        config.latent_width,
        t0,
        tf - t0,
        config.seed,
    )?)
}

pub fn train_pinn(problem: &Problem, config: &TrainConfig) -> Result<Trained<PinnAnsatz>, TrainingError> {
    config.validate()?;
    let model = init_pinn(problem, config)?;
    let points = sample_collocation(config, problem, SolverKind::Pinn)?;
    train(model, problem, config, points)
}

pub fn train_deeponet(
    problem: &Problem,
    config: &TrainConfig,
) -> Result<Trained<DeepONetParams>, TrainingError> {
    config.validate()?;
    let model = init_deeponet(problem, config)?;
    let points = sample_collocation(config, problem, SolverKind::DeepONet)?;
    train(model, problem, config, points)
}
