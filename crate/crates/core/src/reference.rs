//! RK4 baseline and long-horizon rollouts of trained surrogates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::networks::DeepONetParams;
use crate::problems::{Problem, ProblemError};
use crate::projection::{project, InvariantManifold, ProjectionError};
use crate::training::Surrogate;

/// Output samples recorded per DeepONet step, including the step's end point.
pub const SAMPLES_PER_STEP: usize = 10;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("at least one step is required")]
    NoSteps,
    #[error("at least two samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("state has length {actual}, expected {expected}")]
    Shape { expected: usize, actual: usize },
    #[error("projection failed at step {step}: {source}")]
    Projection {
        step: usize,
        #[source]
        source: ProjectionError,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    Rk4,
    PinnStandard,
    PinnConservative,
    DeeponetStandard,
    DeeponetConservative,
}

/// Sampled states of one solution together with the first integrals at each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub invariant_values: Vec<Vec<f64>>,
    pub source: TrajectorySource,
}

impl Trajectory {
    fn with_capacity(source: TrajectorySource, n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            invariant_values: Vec::with_capacity(n),
            source,
        }
    }

    fn push(&mut self, problem: &Problem, t: f64, u: Vec<f64>) -> Result<(), ReferenceError> {
        self.invariant_values.push(problem.invariants(&u)?);
        self.times.push(t);
        self.states.push(u);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest `|I(u(t)) − I(u(t0))|` per integral over the whole trajectory.
    pub fn max_drift(&self) -> Vec<f64> {
        let Some(first) = self.invariant_values.first() else {
            return Vec::new();
        };
        let mut worst = vec![0.0f64; first.len()];
        for row in &self.invariant_values {
            for (w, (v, v0)) in worst.iter_mut().zip(row.iter().zip(first)) {
                *w = w.max((v - v0).abs());
            }
        }
        worst
    }
}

fn axpy(u: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    u.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// One classical four-stage Runge–Kutta step.
pub fn rk4_step(problem: &Problem, t: f64, u: &[f64], h: f64) -> Result<Vec<f64>, ReferenceError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ReferenceError::InvalidStep(h));
    }
    let k1 = problem.rhs(t, u)?;
    let k2 = problem.rhs(t + 0.5 * h, &axpy(u, 0.5 * h, &k1))?;
    let k3 = problem.rhs(t + 0.5 * h, &axpy(u, 0.5 * h, &k2))?;
    let k4 = problem.rhs(t + h, &axpy(u, h, &k3))?;
    Ok((0..u.len())
        .map(|i| u[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// `steps` uniform RK4 steps from `t0` to `tf`, recording every state.
pub fn rk4_integrate(
    problem: &Problem,
    u0: &[f64],
    t0: f64,
    tf: f64,
    steps: usize,
) -> Result<Trajectory, ReferenceError> {
    if steps == 0 {
        return Err(ReferenceError::NoSteps);
    }
    let h = (tf - t0) / steps as f64;
    let mut traj = Trajectory::with_capacity(TrajectorySource::Rk4, steps + 1);
    let mut u = u0.to_vec();
    traj.push(problem, t0, u.clone())?;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        u = rk4_step(problem, t, &u, h)?;
        let t_next = if k + 1 == steps { tf } else { t0 + (k + 1) as f64 * h };
        traj.push(problem, t_next, u.clone())?;
    }
    Ok(traj)
}

/// Time-steps a trained DeepONet: each step feeds the previous step's end
/// state back in as the initial condition. With `projection_steps > 0`, every
/// emitted state is projected onto the level set of the rollout's original
/// `u0`.
pub fn deeponet_timestep(
    model: &DeepONetParams,
    problem: &Problem,
    u0: &[f64],
    n_steps: usize,
    projection_steps: usize,
) -> Result<Trajectory, ReferenceError> {
    if n_steps == 0 {
        return Err(ReferenceError::NoSteps);
    }
    if u0.len() != problem.dim() || model.state_dim() != problem.dim() {
        return Err(ReferenceError::Shape {
            expected: problem.dim(),
            actual: u0.len(),
        });
    }
    let source = if projection_steps > 0 {
        TrajectorySource::DeeponetConservative
    } else {
        TrajectorySource::DeeponetStandard
    };
    let manifold = InvariantManifold::anchored(problem, u0).map_err(|source| ReferenceError::Projection {
        step: 0,
        source,
    })?;
    let (t0, dt) = (model.t0, model.dt);
    let theta = model.flat_params();
    let mut traj = Trajectory::with_capacity(source, n_steps * SAMPLES_PER_STEP + 1);
    traj.push(problem, t0, u0.to_vec())?;

    let mut start = u0.to_vec();
    for step in 0..n_steps {
        let base = t0 + step as f64 * dt;
        for j in 1..=SAMPLES_PER_STEP {
            let local = t0 + j as f64 * dt / SAMPLES_PER_STEP as f64;
            let raw = model.output_in(&mut crate::autodiff::Plain, &theta, &start, local);
            let u = if projection_steps > 0 {
                project(&manifold, &raw, projection_steps)
                    .map_err(|source| ReferenceError::Projection { step, source })?
            } else {
                raw
            };
            let t = if j == SAMPLES_PER_STEP {
                t0 + (step + 1) as f64 * dt
            } else {
                base + j as f64 * dt / SAMPLES_PER_STEP as f64
            };
            traj.push(problem, t, u)?;
        }
        start = traj.states.last().cloned().unwrap_or_default();
    }
    Ok(traj)
}

/// Samples a trained model at `samples` equispaced times of `[t0, tf]` for a
/// fixed initial condition, optionally projecting each output.
pub fn sample_surrogate<M: Surrogate>(
    model: &M,
    problem: &Problem,
    u0: &[f64],
    (t0, tf): (f64, f64),
    samples: usize,
    projection_steps: usize,
    source: TrajectorySource,
) -> Result<Trajectory, ReferenceError> {
    if samples < 2 {
        return Err(ReferenceError::TooFewSamples(samples));
    }
    let manifold = InvariantManifold::anchored(problem, u0).map_err(|source| ReferenceError::Projection {
        step: 0,
        source,
    })?;
    let mut traj = Trajectory::with_capacity(source, samples);
    let h = (tf - t0) / (samples - 1) as f64;
    for i in 0..samples {
        let t = if i + 1 == samples { tf } else { t0 + i as f64 * h };
        let raw = model.predict(u0, t);
        let u = if projection_steps > 0 {
            project(&manifold, &raw, projection_steps)
                .map_err(|source| ReferenceError::Projection { step: i, source })?
        } else {
            raw
        };
        traj.push(problem, t, u)?;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::init_mlp;
    use crate::networks::layer_sizes;

    fn problem(name: &str) -> Problem {
        Problem::from_name(name).unwrap()
    }

    fn exact_oscillator(t: f64) -> [f64; 2] {
        [t.cos() + t.sin(), t.cos() - t.sin()]
    }

    #[test]
    fn oscillator_step_matches_exact_solution() {
        let u = rk4_step(&problem("harmonic_oscillator"), 0.0, &[1.0, 1.0], 0.1).unwrap();
        let e = exact_oscillator(0.1);
        assert!((e[0] - 1.0948376).abs() <= 1e-7 && (e[1] - 0.8951707).abs() <= 1e-7);
        assert!((u[0] - e[0]).abs() <= 1e-7 && (u[1] - e[1]).abs() <= 1e-7);
    }

    #[test]
    fn linear_growth_gives_truncated_exponential() {
        // on u' = λu one step multiplies by Σ_{k≤4} (λh)^k / k!; the
        // oscillator is u' = Au with A² = −I, so the same series applies to A
        let h: f64 = 0.1;
        let series: f64 = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((series - 1.105_170_833_333_333_3).abs() <= 1e-15);
        let (c, s) = (1.0 - h * h / 2.0 + h.powi(4) / 24.0, h - h.powi(3) / 6.0);
        let u = rk4_step(&problem("harmonic_oscillator"), 0.0, &[1.0, 1.0], h).unwrap();
        assert!((u[0] - (c + s)).abs() <= 1e-15);
        assert!((u[1] - (c - s)).abs() <= 1e-15);
    }

    #[test]
    fn rejects_bad_steps() {
        let p = problem("harmonic_oscillator");
        for h in [0.0, -0.1, f64::NAN, f64::INFINITY] {
            assert!(matches!(rk4_step(&p, 0.0, &[1.0, 1.0], h), Err(ReferenceError::InvalidStep(_))));
        }
        assert!(matches!(rk4_integrate(&p, &[1.0, 1.0], 0.0, 1.0, 0), Err(ReferenceError::NoSteps)));
    }

    #[test]
    fn singular_rhs_propagates() {
        let p = problem("point_vortex3");
        let u = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert!(matches!(rk4_step(&p, 0.0, &u, 0.01), Err(ReferenceError::Problem(_))));
    }

    #[test]
    fn one_step_gives_two_points() {
        let tr = rk4_integrate(&problem("rigid_body"), &[1.0, 1.0, 1.0], 0.0, 1.75, 1).unwrap();
        assert_eq!(tr.times, vec![0.0, 1.75]);
        assert_eq!(tr.states.len(), 2);
        assert_eq!(tr.invariant_values.len(), 2);
    }

    fn global_error(steps: usize) -> f64 {
        let tr = rk4_integrate(&problem("harmonic_oscillator"), &[1.0, 1.0], 0.0, 1.0, steps).unwrap();
        let e = exact_oscillator(1.0);
        let u = tr.states.last().unwrap();
        (u[0] - e[0]).abs().max((u[1] - e[1]).abs())
    }

    #[test]
    fn global_order_is_four() {
        for steps in [10, 20, 40] {
            let ratio = global_error(steps) / global_error(2 * steps);
            assert!((14.0..=18.0).contains(&ratio), "{steps}: {ratio}");
        }
    }

    #[test]
    fn local_order_is_five() {
        let p = problem("harmonic_oscillator");
        let err = |h: f64| {
            let u = rk4_step(&p, 0.0, &[1.0, 1.0], h).unwrap();
            let e = exact_oscillator(h);
            (u[0] - e[0]).abs().max((u[1] - e[1]).abs())
        };
        let ratio = err(0.2) / err(0.1);
        assert!((28.0..=36.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn vortices_keep_linear_integrals_only() {
        let p = problem("point_vortex3");
        let u0 = p.sample_initial_condition(3).unwrap();
        let tr = rk4_integrate(&p, &u0, 0.0, 5.0, 500).unwrap();
        let drift = tr.max_drift();
        assert!(drift[2] <= 1e-12 && drift[3] <= 1e-12, "{drift:?}");
        assert!(drift[0] > 1e-12 && drift[1] > 1e-12, "{drift:?}");
    }

    #[test]
    fn oscillator_energy_drift_is_small() {
        let tr = rk4_integrate(&problem("harmonic_oscillator"), &[1.0, 1.0], 0.0, 30.0, 3000).unwrap();
        assert!(tr.max_drift()[0] <= 1e-9);
        assert_eq!(*tr.times.last().unwrap(), 30.0);
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rigid_body_drift_is_at_least_fourth_order() {
        let p = problem("rigid_body");
        let drift = |steps| rk4_integrate(&p, &[1.0, 1.0, 1.0], 0.0, 1.75, steps).unwrap().max_drift();
        let (coarse, fine) = (drift(175), drift(350));
        for (c, f) in coarse.iter().zip(&fine) {
            let ratio = c / f;
            assert!(ratio >= 14.0, "{coarse:?} {fine:?}");
        }
    }

    /// A DeepONet whose branch output is scaled down so steps stay close to
    /// the input state.
    fn small_deeponet(problem: &Problem, scale: f64) -> DeepONetParams {
        let (t0, tf) = problem.default_interval();
        let mut m = DeepONetParams::init(problem.dim(), 2, 8, 3, t0, tf - t0, 11).unwrap();
        let last = m.branch.num_layers() - 1;
        for w in m.branch.weights_mut(last) {
            *w *= scale;
        }
        for b in m.branch.biases_mut(last) {
            *b *= scale;
        }
        m
    }

    #[test]
    fn single_step_covers_one_interval() {
        let p = problem("lorenz_conservative");
        let m = small_deeponet(&p, 0.1);
        let u0 = p.sample_initial_condition(0).unwrap();
        let tr = deeponet_timestep(&m, &p, &u0, 1, 0).unwrap();
        assert_eq!(tr.len(), SAMPLES_PER_STEP + 1);
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(*tr.times.last().unwrap(), 0.25);
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(tr.source, TrajectorySource::DeeponetStandard);
    }

    #[test]
    fn conservative_rollout_holds_integrals() {
        let p = problem("lorenz_conservative");
        let m = small_deeponet(&p, 0.01);
        let u0 = p.sample_initial_condition(2).unwrap();
        let cons = deeponet_timestep(&m, &p, &u0, 500, 10).unwrap();
        let std = deeponet_timestep(&m, &p, &u0, 500, 0).unwrap();
        assert_eq!(*cons.times.last().unwrap(), 125.0);
        let i0 = p.invariants(&u0).unwrap();
        for row in &cons.invariant_values {
            for (v, v0) in row.iter().zip(&i0) {
                assert!((v - v0).abs() <= 1e-10, "{v} vs {v0}");
            }
        }
        let worst = |d: Vec<f64>| d.into_iter().fold(0.0f64, f64::max);
        assert!(worst(std.max_drift()) > worst(cons.max_drift()));
    }

    #[test]
    fn rollout_reports_failing_step() {
        let p = problem("harmonic_oscillator");
        // constant operator output (−1, −1), so the state moves along the diagonal
        let sizes = layer_sizes(2, 1, 2, 2);
        let mut branch = crate::networks::MlpParams::zeros(&sizes).unwrap();
        let last = branch.num_layers() - 1;
        branch.biases_mut(last).copy_from_slice(&[-1.0, -1.0]);
        let mut trunk = init_mlp(&layer_sizes(1, 1, 2, 2), 0).unwrap();
        let tl = trunk.num_layers() - 1;
        trunk.weights_mut(tl).fill(0.0);
        trunk.biases_mut(tl).fill(1.0);
        let m = DeepONetParams::new(branch, trunk, 1, 0.0, 1.0).unwrap();
        // from (1, 1) the output at τ = Δt is (0, 0), where the Gram matrix is singular
        let err = deeponet_timestep(&m, &p, &[1.0, 1.0], 3, 10).unwrap_err();
        assert!(matches!(err, ReferenceError::Projection { step: 0, .. }), "{err}");
    }

    #[test]
    fn surrogate_sampling_is_equispaced() {
        let p = problem("lorenz_conservative");
        let m = small_deeponet(&p, 0.1);
        let u0 = p.sample_initial_condition(0).unwrap();
        let tr = sample_surrogate(&m, &p, &u0, (0.0, 0.25), 6, 0, TrajectorySource::DeeponetStandard).unwrap();
        assert_eq!(tr.len(), 6);
        assert_eq!(tr.states[0], u0);
        assert_eq!(*tr.times.last().unwrap(), 0.25);
        assert!(matches!(
            sample_surrogate(&m, &p, &u0, (0.0, 0.25), 1, 0, TrajectorySource::DeeponetStandard),
            Err(ReferenceError::TooFewSamples(1))
        ));
    }
}
