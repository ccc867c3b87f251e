//! The five benchmark systems: right-hand sides, first integrals with
//! analytic gradients, parameter values and initial-condition samplers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Arith, AutodiffError, Forward};
use crate::projection::FirstIntegrals;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("unknown problem `{0}`; expected one of: {names}", names = PROBLEM_NAMES.join(", "))]
    UnknownProblem(String),
    #[error("vortices {0} and {1} collide")]
    Singularity(usize, usize),
    #[error("state has length {actual}, expected {expected}")]
    Shape { expected: usize, actual: usize },
    #[error("initial-condition sampler gave up after {0} attempts")]
    SamplerExhausted(usize),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub const PROBLEM_NAMES: [&str; 5] = [
    "harmonic_oscillator",
    "rigid_body",
    "double_pendulum",
    "lorenz_conservative",
    "point_vortex3",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicOscillatorParams {
    pub m: f64,
    pub k: f64,
}

impl Default for HarmonicOscillatorParams {
    fn default() -> Self {
        Self { m: 1.0, k: 1.0 }
    }
}

/// Principal moments of inertia.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyParams {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl Default for RigidBodyParams {
    fn default() -> Self {
        Self {
            i1: 0.1,
            i2: 0.2,
            i3: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublePendulumParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub g: f64,
}

impl Default for DoublePendulumParams {
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            g: 9.81,
        }
    }
}

/// `mode = 0` is the conservative model, `mode = 1` the classical one.
/// `beta` only enters through `mode · beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub mode: u8,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            rho: 0.5,
            beta: 8.0 / 3.0,
            mode: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointVortexParams {
    pub strengths: Vec<f64>,
}

impl PointVortexParams {
    pub fn n_vortices(&self) -> usize {
        self.strengths.len()
    }
}

impl Default for PointVortexParams {
    fn default() -> Self {
        Self {
            strengths: vec![1.0; 3],
        }
    }
}

/// A dynamical system `du/dt = f(t, u)` with known first integrals.
///
/// State layouts: oscillator `(q, p)`; rigid body `(w1, w2, w3)`; double
/// pendulum `(q1, q2, p1, p2)`; Lorenz `(x, y, z)`; vortices
/// `(x1, y1, x2, y2, ...)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Problem {
    HarmonicOscillator(HarmonicOscillatorParams),
    RigidBody(RigidBodyParams),
    DoublePendulum(DoublePendulumParams),
    Lorenz(LorenzParams),
    PointVortex(PointVortexParams),
}

const ANNULUS: (f64, f64) = (0.5, 1.5);
const MIN_VORTEX_SEPARATION: f64 = 1e-3;
const MAX_SAMPLER_ATTEMPTS: usize = 1000;

impl Problem {
    pub fn from_name(name: &str) -> Result<Self, ProblemError> {
        Ok(match name {
            "harmonic_oscillator" => Problem::HarmonicOscillator(Default::default()),
            "rigid_body" => Problem::RigidBody(Default::default()),
            "double_pendulum" => Problem::DoublePendulum(Default::default()),
            "lorenz_conservative" => Problem::Lorenz(Default::default()),
            "point_vortex3" => Problem::PointVortex(Default::default()),
            other => return Err(ProblemError::UnknownProblem(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Problem::HarmonicOscillator(_) => PROBLEM_NAMES[0],
            Problem::RigidBody(_) => PROBLEM_NAMES[1],
            Problem::DoublePendulum(_) => PROBLEM_NAMES[2],
            Problem::Lorenz(_) => PROBLEM_NAMES[3],
            Problem::PointVortex(_) => PROBLEM_NAMES[4],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::HarmonicOscillator(_) => 2,
            Problem::RigidBody(_) | Problem::Lorenz(_) => 3,
            Problem::DoublePendulum(_) => 4,
            Problem::PointVortex(p) => 2 * p.n_vortices(),
        }
    }

    pub fn num_integrals(&self) -> usize {
        self.integral_names().len()
    }

    pub fn integral_names(&self) -> &'static [&'static str] {
        match self {
            Problem::HarmonicOscillator(_) | Problem::DoublePendulum(_) => &["H"],
            Problem::RigidBody(_) | Problem::Lorenz(_) => &["H", "L"],
            Problem::PointVortex(_) => &["H", "L", "Px", "Py"],
        }
    }

    /// Linear first integrals are preserved exactly by any Runge–Kutta method.
    pub fn integral_is_linear(&self, i: usize) -> bool {
        matches!(self, Problem::PointVortex(_)) && i >= 2
    }

    /// `(t0, tf)` for PINNs; `(t0, t0 + Δt)` for problems solved by DeepONet
    /// time stepping.
    pub fn default_interval(&self) -> (f64, f64) {
        match self {
            Problem::HarmonicOscillator(_) => (0.0, 30.0),
            Problem::RigidBody(_) => (0.0, 1.75),
            Problem::DoublePendulum(_) => (0.0, 0.5),
            Problem::Lorenz(_) => (0.0, 0.25),
            Problem::PointVortex(_) => (0.0, 0.5),
        }
    }

    /// Number of DeepONet steps in a long-horizon rollout.
    pub fn default_rollout_steps(&self) -> usize {
        match self {
            Problem::DoublePendulum(_) => 20,
            Problem::Lorenz(_) | Problem::PointVortex(_) => 500,
            Problem::HarmonicOscillator(_) | Problem::RigidBody(_) => 20,
        }
    }

    fn check_len(&self, len: usize) -> Result<(), ProblemError> {
        if len != self.dim() {
            Err(ProblemError::Shape {
                expected: self.dim(),
                actual: len,
            })
        } else {
            Ok(())
        }
    }

    pub fn rhs(&self, t: f64, u: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_len(u.len())?;
        self.rhs_in(&mut crate::autodiff::Plain, t, u)
    }

    pub fn invariants(&self, u: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_len(u.len())?;
        self.integrals_in(&mut crate::autodiff::Plain, u)
    }

    /// Row `i` is the gradient of the `i`-th first integral.
    pub fn invariant_gradients(&self, u: &[f64]) -> Result<Vec<Vec<f64>>, ProblemError> {
        self.check_len(u.len())?;
        self.gradients_in(&mut crate::autodiff::Plain, u)
    }

    /// Right-hand side over an arbitrary context (autonomous in `t`).
    pub fn rhs_in<C: Arith>(
        &self,
        ctx: &mut C,
        _t: f64,
        u: &[C::S],
    ) -> Result<Vec<C::S>, ProblemError> {
        match self {
            Problem::HarmonicOscillator(p) => {
                Ok(vec![ctx.scale(u[1], 1.0 / p.m), ctx.scale(u[0], -p.k)])
            }
            Problem::RigidBody(p) => {
                let a = (p.i2 - p.i3) / (p.i2 * p.i3);
                let b = (p.i3 - p.i1) / (p.i1 * p.i3);
                let c = (p.i1 - p.i2) / (p.i1 * p.i2);
                let w23 = ctx.mul(u[1], u[2]);
                let w13 = ctx.mul(u[0], u[2]);
                let w12 = ctx.mul(u[0], u[1]);
                Ok(vec![ctx.scale(w23, a), ctx.scale(w13, b), ctx.scale(w12, c)])
            }
            Problem::DoublePendulum(_) => {
                // canonical equations from the Hamiltonian's gradient
                let mut grad = Vec::with_capacity(4);
                for i in 0..4 {
                    let mut fwd = Forward::new(ctx);
                    let one = fwd.inner().constant(1.0);
                    let zero = fwd.inner().constant(0.0);
                    let x: Vec<_> = (0..4)
                        .map(|j| fwd.variable(u[j], if i == j { one } else { zero }))
                        .collect();
                    grad.push(self.hamiltonian_in(&mut fwd, &x)?.tangent);
                }
                Ok(vec![grad[2], grad[3], ctx.neg(grad[0]), ctx.neg(grad[1])])
            }
            Problem::Lorenz(p) => {
                let m = p.mode as f64;
                let (x, y, z) = (u[0], u[1], u[2]);
                let mx = ctx.scale(x, m);
                let d = ctx.sub(y, mx);
                let dx = ctx.scale(d, p.sigma);
                let rz = ctx.neg(z);
                let rz = ctx.offset(rz, p.rho);
                let xr = ctx.mul(x, rz);
                let my = ctx.scale(y, m);
                let dy = ctx.sub(xr, my);
                let xy = ctx.mul(x, y);
                let bz = ctx.scale(z, p.beta * m);
                let dz = ctx.sub(xy, bz);
                Ok(vec![dx, dy, dz])
            }
            Problem::PointVortex(p) => vortex_rhs(ctx, &p.strengths, u),
        }
    }

    /// Double pendulum Hamiltonian (any other problem: its energy `H`).
    pub fn hamiltonian_in<C: Arith>(&self, ctx: &mut C, u: &[C::S]) -> Result<C::S, ProblemError> {
        match self {
            Problem::DoublePendulum(p) => {
                let (q1, q2, p1, p2) = (u[0], u[1], u[2], u[3]);
                let delta = ctx.sub(q1, q2);
                let c = ctx.cos(delta);
                let s = ctx.sin(delta);
                let p1s = ctx.mul(p1, p1);
                let p2s = ctx.mul(p2, p2);
                let p12 = ctx.mul(p1, p2);
                let p12c = ctx.mul(p12, c);
                let t1 = ctx.scale(p1s, p.m2 * p.l2 * p.l2);
                let t2 = ctx.scale(p2s, (p.m1 + p.m2) * p.l1 * p.l1);
                let t3 = ctx.scale(p12c, -2.0 * p.m2 * p.l1 * p.l2);
                let num = ctx.sum(&[t1, t2, t3]);
                let s2 = ctx.mul(s, s);
                let s2 = ctx.scale(s2, p.m2);
                let den = ctx.offset(s2, p.m1);
                let den = ctx.scale(den, 2.0 * p.m2 * p.l1 * p.l1 * p.l2 * p.l2);
                let kinetic = ctx.div(num, den)?;
                let c1 = ctx.cos(q1);
                let c2 = ctx.cos(q2);
                let v1 = ctx.scale(c1, -(p.m1 + p.m2) * p.g * p.l1);
                let v2 = ctx.scale(c2, -p.m2 * p.g * p.l2);
                Ok(ctx.sum(&[kinetic, v1, v2]))
            }
            _ => Ok(self.integrals_in(ctx, u)?[0]),
        }
    }

    pub fn sample_initial_condition(&self, seed: u64) -> Result<Vec<f64>, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_initial_condition_with(&mut rng)
    }

    pub fn sample_initial_condition_with<R: Rng>(&self, rng: &mut R) -> Result<Vec<f64>, ProblemError> {
        match self {
            Problem::HarmonicOscillator(_) => Ok(vec![1.0, 1.0]),
            Problem::RigidBody(_) => Ok(vec![1.0, 1.0, 1.0]),
            Problem::DoublePendulum(_) => Ok((0..4)
                .map(|_| rng.gen_range(-PI / 6.0..=PI / 6.0))
                .collect()),
            Problem::Lorenz(_) => {
                let (x, y) = sample_annulus(rng);
                Ok(vec![x, y, rng.gen_range(0.5..=1.5)])
            }
            Problem::PointVortex(p) => {
                let n = p.n_vortices();
                for _ in 0..MAX_SAMPLER_ATTEMPTS {
                    let mut u = Vec::with_capacity(2 * n);
                    for _ in 0..n {
                        let (x, y) = sample_annulus(rng);
                        u.extend([x, y]);
                    }
                    if min_pairwise_distance(&u) >= MIN_VORTEX_SEPARATION {
                        return Ok(u);
                    }
                }
                Err(ProblemError::SamplerExhausted(MAX_SAMPLER_ATTEMPTS))
            }
        }
    }
}

/// Uniform in area on the annulus `0.5 ≤ r ≤ 1.5`.
fn sample_annulus<R: Rng>(rng: &mut R) -> (f64, f64) {
    let (r_in, r_out) = ANNULUS;
    let r = rng.gen_range(r_in * r_in..=r_out * r_out).sqrt();
    let theta = rng.gen_range(0.0..2.0 * PI);
    (r * theta.cos(), r * theta.sin())
}

/// Smallest distance between any two vortices of a flattened `(x, y)` state.
pub fn min_pairwise_distance(u: &[f64]) -> f64 {
    let n = u.len() / 2;
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let d = (u[2 * i] - u[2 * j]).hypot(u[2 * i + 1] - u[2 * j + 1]);
            best = best.min(d);
        }
    }
    best
}

/// `(Δx, Δy, r²)` for vortices `i` and `j`.
fn vortex_pair<C: Arith>(
    ctx: &mut C,
    u: &[C::S],
    i: usize,
    j: usize,
) -> Result<(C::S, C::S, C::S), ProblemError> {
    let dx = ctx.sub(u[2 * i], u[2 * j]);
    let dy = ctx.sub(u[2 * i + 1], u[2 * j + 1]);
    let dx2 = ctx.mul(dx, dx);
    let dy2 = ctx.mul(dy, dy);
    let r2 = ctx.add(dx2, dy2);
    if ctx.value(r2) == 0.0 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        return Err(ProblemError::Singularity(a, b));
    }
    Ok((dx, dy, r2))
}

fn vortex_rhs<C: Arith>(
    ctx: &mut C,
    gamma: &[f64],
    u: &[C::S],
) -> Result<Vec<C::S>, ProblemError> {
    let n = gamma.len();
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut sx = Vec::with_capacity(n);
        let mut sy = Vec::with_capacity(n);
        for j in (0..n).filter(|&j| j != i) {
            let (dx, dy, r2) = vortex_pair(ctx, u, i, j)?;
            let fy = ctx.div(dy, r2)?;
            let fx = ctx.div(dx, r2)?;
            sx.push(ctx.scale(fy, -gamma[j] / (2.0 * PI)));
            sy.push(ctx.scale(fx, gamma[j] / (2.0 * PI)));
        }
        out.push(ctx.sum(&sx));
        out.push(ctx.sum(&sy));
    }
    Ok(out)
}

impl FirstIntegrals for Problem {
    fn state_dim(&self) -> usize {
        self.dim()
    }

    fn num_integrals(&self) -> usize {
        Problem::num_integrals(self)
    }

    fn integrals_in<C: Arith>(&self, ctx: &mut C, u: &[C::S]) -> Result<Vec<C::S>, ProblemError> {
        match self {
            Problem::HarmonicOscillator(p) => {
                let p2 = ctx.mul(u[1], u[1]);
                let q2 = ctx.mul(u[0], u[0]);
                let a = ctx.scale(p2, 0.5 / p.m);
                let b = ctx.scale(q2, 0.5 * p.k);
                Ok(vec![ctx.add(a, b)])
            }
            Problem::RigidBody(p) => {
                let sq: Vec<_> = u.iter().map(|&w| ctx.mul(w, w)).collect();
                let h = [
                    ctx.scale(sq[0], 0.5 / p.i1),
                    ctx.scale(sq[1], 0.5 / p.i2),
                    ctx.scale(sq[2], 0.5 / p.i3),
                ];
                let h = ctx.sum(&h);
                let l = ctx.sum(&sq);
                Ok(vec![h, ctx.scale(l, 0.5)])
            }
            Problem::DoublePendulum(_) => Ok(vec![self.hamiltonian_in(ctx, u)?]),
            Problem::Lorenz(p) => {
                let (x, y, z) = (u[0], u[1], u[2]);
                let x2 = ctx.mul(x, x);
                let x2 = ctx.scale(x2, -0.5 / p.sigma);
                let h = ctx.add(z, x2);
                let y2 = ctx.mul(y, y);
                let z2 = ctx.mul(z, z);
                let yz = ctx.add(y2, z2);
                let yz = ctx.scale(yz, 0.5);
                let rz = ctx.scale(z, -p.rho);
                Ok(vec![h, ctx.add(yz, rz)])
            }
            Problem::PointVortex(p) => {
                let g = &p.strengths;
                let n = g.len();
                let mut h_terms = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        let (_, _, r2) = vortex_pair(ctx, u, i, j)?;
                        // ln r = ½ ln r²
                        let l = ctx.ln(r2)?;
                        h_terms.push(ctx.scale(l, -g[i] * g[j] / (8.0 * PI)));
                    }
                }
                let h = ctx.sum(&h_terms);
                let mut l_terms = Vec::with_capacity(n);
                for i in 0..n {
                    let x2 = ctx.mul(u[2 * i], u[2 * i]);
                    let y2 = ctx.mul(u[2 * i + 1], u[2 * i + 1]);
                    let r2 = ctx.add(x2, y2);
                    l_terms.push(ctx.scale(r2, g[i]));
                }
                let l = ctx.sum(&l_terms);
                let gs = ctx.constants(g);
                let xs: Vec<_> = (0..n).map(|i| u[2 * i]).collect();
                let ys: Vec<_> = (0..n).map(|i| u[2 * i + 1]).collect();
                let px = ctx.dot(&gs, &xs);
                let py = ctx.dot(&gs, &ys);
                Ok(vec![h, l, px, py])
            }
        }
    }

    fn gradients_in<C: Arith>(
        &self,
        ctx: &mut C,
        u: &[C::S],
    ) -> Result<Vec<Vec<C::S>>, ProblemError> {
        match self {
            Problem::HarmonicOscillator(p) => {
                Ok(vec![vec![ctx.scale(u[0], p.k), ctx.scale(u[1], 1.0 / p.m)]])
            }
            Problem::RigidBody(p) => {
                let gh = vec![
                    ctx.scale(u[0], 1.0 / p.i1),
                    ctx.scale(u[1], 1.0 / p.i2),
                    ctx.scale(u[2], 1.0 / p.i3),
                ];
                Ok(vec![gh, u.to_vec()])
            }
            Problem::DoublePendulum(p) => Ok(vec![pendulum_gradient(ctx, p, u)?]),
            Problem::Lorenz(p) => {
                let zero = ctx.constant(0.0);
                let one = ctx.constant(1.0);
                let gh = vec![ctx.scale(u[0], -1.0 / p.sigma), zero, one];
                let gl = vec![zero, u[1], ctx.offset(u[2], -p.rho)];
                Ok(vec![gh, gl])
            }
            Problem::PointVortex(p) => {
                let g = &p.strengths;
                let n = g.len();
                let mut gh = Vec::with_capacity(2 * n);
                for i in 0..n {
                    let mut tx = Vec::with_capacity(n);
                    let mut ty = Vec::with_capacity(n);
                    for j in (0..n).filter(|&j| j != i) {
                        let (dx, dy, r2) = vortex_pair(ctx, u, i, j)?;
                        let fx = ctx.div(dx, r2)?;
                        let fy = ctx.div(dy, r2)?;
                        let c = -g[i] * g[j] / (4.0 * PI);
                        tx.push(ctx.scale(fx, c));
                        ty.push(ctx.scale(fy, c));
                    }
                    gh.push(ctx.sum(&tx));
                    gh.push(ctx.sum(&ty));
                }
                let gl: Vec<_> = (0..2 * n).map(|k| ctx.scale(u[k], 2.0 * g[k / 2])).collect();
                let zero = ctx.constant(0.0);
                let mut gpx = Vec::with_capacity(2 * n);
                let mut gpy = Vec::with_capacity(2 * n);
                for &gi in g {
                    let c = ctx.constant(gi);
                    gpx.extend([c, zero]);
                    gpy.extend([zero, c]);
                }
                Ok(vec![gh, gl, gpx, gpy])
            }
        }
    }
}

/// Hand-derived gradient of the double pendulum Hamiltonian.
fn pendulum_gradient<C: Arith>(
    ctx: &mut C,
    p: &DoublePendulumParams,
    u: &[C::S],
) -> Result<Vec<C::S>, ProblemError> {
    let (q1, q2, p1, p2) = (u[0], u[1], u[2], u[3]);
    let k = 2.0 * p.m2 * p.l1 * p.l1 * p.l2 * p.l2;
    let delta = ctx.sub(q1, q2);
    let c = ctx.cos(delta);
    let s = ctx.sin(delta);
    let p1s = ctx.mul(p1, p1);
    let p2s = ctx.mul(p2, p2);
    let p12 = ctx.mul(p1, p2);
    let p12c = ctx.mul(p12, c);
    let t1 = ctx.scale(p1s, p.m2 * p.l2 * p.l2);
    let t2 = ctx.scale(p2s, (p.m1 + p.m2) * p.l1 * p.l1);
    let t3 = ctx.scale(p12c, -2.0 * p.m2 * p.l1 * p.l2);
    let num = ctx.sum(&[t1, t2, t3]);
    let s2 = ctx.mul(s, s);
    let s2m = ctx.scale(s2, p.m2);
    let den = ctx.offset(s2m, p.m1);
    let den = ctx.scale(den, k);

    // ∂H/∂p1 = (2 m2 l2² p1 − 2 m2 l1 l2 p2 cos Δ) / den
    let a = ctx.scale(p1, 2.0 * p.m2 * p.l2 * p.l2);
    let p2c = ctx.mul(p2, c);
    let b = ctx.scale(p2c, -2.0 * p.m2 * p.l1 * p.l2);
    let n1 = ctx.add(a, b);
    let dp1 = ctx.div(n1, den)?;
    // ∂H/∂p2 = (2 (m1+m2) l1² p2 − 2 m2 l1 l2 p1 cos Δ) / den
    let a = ctx.scale(p2, 2.0 * (p.m1 + p.m2) * p.l1 * p.l1);
    let p1c = ctx.mul(p1, c);
    let b = ctx.scale(p1c, -2.0 * p.m2 * p.l1 * p.l2);
    let n2 = ctx.add(a, b);
    let dp2 = ctx.div(n2, den)?;

    // ∂(num/den)/∂Δ with num' = 2 m2 l1 l2 p1 p2 sin Δ, den' = 2 k m2 sin Δ cos Δ
    let p12s = ctx.mul(p12, s);
    let num_d = ctx.scale(p12s, 2.0 * p.m2 * p.l1 * p.l2);
    let sc = ctx.mul(s, c);
    let den_d = ctx.scale(sc, 2.0 * k * p.m2);
    let a = ctx.mul(num_d, den);
    let b = ctx.mul(num, den_d);
    let top = ctx.sub(a, b);
    let den2 = ctx.mul(den, den);
    let d_delta = ctx.div(top, den2)?;

    let sin1 = ctx.sin(q1);
    let sin2 = ctx.sin(q2);
    let g1 = ctx.scale(sin1, (p.m1 + p.m2) * p.g * p.l1);
    let g2 = ctx.scale(sin2, p.m2 * p.g * p.l2);
    let dq1 = ctx.add(d_delta, g1);
    let dq2 = ctx.sub(g2, d_delta);
    Ok(vec![dq1, dq2, dp1, dp2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use approx::assert_relative_eq;

    fn all() -> Vec<Problem> {
        PROBLEM_NAMES
            .iter()
            .map(|n| Problem::from_name(n).unwrap())
            .collect()
    }

    #[test]
    fn names_round_trip() {
        for p in all() {
            assert_eq!(Problem::from_name(p.name()).unwrap(), p);
        }
        let err = Problem::from_name("kepler").unwrap_err();
        assert!(err.to_string().contains("lorenz_conservative"));
    }

    #[test]
    fn rhs_examples() {
        let osc = Problem::from_name("harmonic_oscillator").unwrap();
        assert_eq!(osc.rhs(0.0, &[1.0, 1.0]).unwrap(), vec![1.0, -1.0]);

        let rb = Problem::from_name("rigid_body").unwrap();
        let f = rb.rhs(0.0, &[1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(f[0], -5.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(f[1], 20.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(f[2], -5.0, epsilon = 1e-12);

        let lz = Problem::from_name("lorenz_conservative").unwrap();
        assert_eq!(lz.rhs(0.0, &[1.0, 1.0, 1.0]).unwrap(), vec![1.0, -0.5, 1.0]);

        let dp = Problem::from_name("double_pendulum").unwrap();
        assert_eq!(dp.rhs(0.0, &[0.0; 4]).unwrap(), vec![0.0; 4]);

        let two = Problem::PointVortex(PointVortexParams {
            strengths: vec![1.0, 1.0],
        });
        let f = two.rhs(0.0, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(f[0], 0.0);
        assert_relative_eq!(f[1], -0.15915494, epsilon = 1e-8);
    }

    #[test]
    fn classical_lorenz_mode() {
        let p = Problem::Lorenz(LorenzParams {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            mode: 1,
        });
        let f = p.rhs(0.0, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f, vec![10.0, 1.0 * 25.0 - 2.0, 2.0 - 8.0]);
    }

    #[test]
    fn collisions_are_reported() {
        let p = Problem::from_name("point_vortex3").unwrap();
        let u = [0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(p.rhs(0.0, &u).unwrap_err(), ProblemError::Singularity(1, 2));
        assert_eq!(p.invariants(&u).unwrap_err(), ProblemError::Singularity(1, 2));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let p = Problem::from_name("rigid_body").unwrap();
        assert!(matches!(p.rhs(0.0, &[1.0]), Err(ProblemError::Shape { .. })));
    }

    #[test]
    fn invariant_examples() {
        let osc = Problem::from_name("harmonic_oscillator").unwrap();
        assert_eq!(osc.invariants(&[1.0, 1.0]).unwrap(), vec![1.0]);

        let rb = Problem::from_name("rigid_body").unwrap();
        let i = rb.invariants(&[1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(i[0], 0.5 * (10.0 + 5.0 + 10.0 / 3.0), epsilon = 1e-12);
        assert_eq!(i[1], 1.5);

        let lz = Problem::from_name("lorenz_conservative").unwrap();
        assert_eq!(lz.invariants(&[1.0, 1.0, 1.0]).unwrap(), vec![0.5, 0.5]);

        let dp = Problem::from_name("double_pendulum").unwrap();
        assert_relative_eq!(dp.invariants(&[0.0; 4]).unwrap()[0], -29.43, epsilon = 1e-12);

        let pv = Problem::from_name("point_vortex3").unwrap();
        let mut u = Vec::new();
        for k in 0..3 {
            let a = 2.0 * PI * k as f64 / 3.0;
            u.extend([a.cos(), a.sin()]);
        }
        let i = pv.invariants(&u).unwrap();
        assert_relative_eq!(i[0], -(3.0 / (8.0 * PI)) * 3f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(i[0], -0.1311372, epsilon = 1e-7);
        assert_relative_eq!(i[1], 3.0, epsilon = 1e-12);
        assert!(i[2].abs() < 1e-12 && i[3].abs() < 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let osc = Problem::from_name("harmonic_oscillator").unwrap();
        assert_eq!(osc.invariant_gradients(&[1.0, 1.0]).unwrap(), vec![vec![1.0, 1.0]]);
        let rb = Problem::from_name("rigid_body").unwrap();
        assert_eq!(rb.invariant_gradients(&[1.0, 1.0, 1.0]).unwrap()[1], vec![1.0; 3]);
        let lz = Problem::from_name("lorenz_conservative").unwrap();
        assert_eq!(
            lz.invariant_gradients(&[1.0, 1.0, 1.0]).unwrap()[0],
            vec![-1.0, 0.0, 1.0]
        );
        let pv = Problem::from_name("point_vortex3").unwrap();
        let g = pv
            .invariant_gradients(&[0.3, 0.1, -1.0, 0.4, 0.2, -0.9])
            .unwrap();
        assert_eq!(g[2], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(g[3], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    fn random_state(p: &Problem, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match p {
            Problem::PointVortex(_) => p.sample_initial_condition_with(rng).unwrap(),
            _ => (0..p.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        }
    }

    #[test]
    fn first_integral_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for p in all() {
            for _ in 0..1000 {
                let u = random_state(&p, &mut rng);
                let f = p.rhs(0.0, &u).unwrap();
                for (i, g) in p.invariant_gradients(&u).unwrap().iter().enumerate() {
                    let d: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
                    assert!(d.abs() <= 1e-10, "{} integral {i}: {d}", p.name());
                }
            }
        }
    }

    #[test]
    fn analytic_gradients_match_autodiff() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in all() {
            for _ in 0..50 {
                let u = random_state(&p, &mut rng);
                let analytic = p.invariant_gradients(&u).unwrap();
                for (i, row) in analytic.iter().enumerate() {
                    let mut tape = Tape::new();
                    let x = tape.inputs(&u);
                    let ints = p.integrals_in(&mut tape, &x).unwrap();
                    let auto = tape.gradient(ints[i], &x);
                    for (a, b) in row.iter().zip(&auto) {
                        assert!(
                            (a - b).abs() <= 1e-10 * b.abs().max(1.0),
                            "{} integral {i}: {a} vs {b}",
                            p.name()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn samplers_respect_their_contracts() {
        let osc = Problem::from_name("harmonic_oscillator").unwrap();
        assert_eq!(osc.sample_initial_condition(99).unwrap(), vec![1.0, 1.0]);
        let rb = Problem::from_name("rigid_body").unwrap();
        assert_eq!(rb.sample_initial_condition(3).unwrap(), vec![1.0, 1.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lz = Problem::from_name("lorenz_conservative").unwrap();
        let pv = Problem::from_name("point_vortex3").unwrap();
        let dp = Problem::from_name("double_pendulum").unwrap();
        for _ in 0..10_000 {
            let u = lz.sample_initial_condition_with(&mut rng).unwrap();
            let r = u[0].hypot(u[1]);
            assert!((0.5..=1.5).contains(&r), "radius {r}");
            assert!((0.5..=1.5).contains(&u[2]));

            let v = pv.sample_initial_condition_with(&mut rng).unwrap();
            assert!(min_pairwise_distance(&v) >= 1e-3);
            for k in 0..3 {
                let r = v[2 * k].hypot(v[2 * k + 1]);
                assert!((0.5 - 1e-12..=1.5 + 1e-12).contains(&r));
            }

            let w = dp.sample_initial_condition_with(&mut rng).unwrap();
            assert!(w.iter().all(|x| x.abs() <= PI / 6.0));
        }
        assert_eq!(
            lz.sample_initial_condition(5).unwrap(),
            lz.sample_initial_condition(5).unwrap()
        );
    }
}
