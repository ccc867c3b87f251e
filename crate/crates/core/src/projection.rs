//! Projection onto the invariant manifold `{u : I(u) = I(u0)}`.
//!
//! [`project_in`] runs a simplified Newton iteration on the Lagrange
//! multipliers with the constraint Jacobian frozen at the candidate. It is
//! written against [`Arith`], so on a [`Tape`](crate::autodiff::Tape) the whole
//! iteration is recorded and can be differentiated like any other layer.

use thiserror::Error;

use crate::autodiff::{Arith, AutodiffError, Plain};
use crate::problems::ProblemError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error("Gram matrix is singular (pivot {pivot:e} below tolerance)")]
    Singular { pivot: f64 },
    #[error("projection diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("{what} has length {actual}, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{integrals} integrals on a {dim}-dimensional state")]
    TooManyIntegrals { integrals: usize, dim: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

impl From<AutodiffError> for ProjectionError {
    fn from(e: AutodiffError) -> Self {
        ProjectionError::Problem(e.into())
    }
}

/// A set of first integrals `I(u)` with their gradients, over any context.
pub trait FirstIntegrals {
    fn state_dim(&self) -> usize;
    fn num_integrals(&self) -> usize;
    fn integrals_in<C: Arith>(&self, ctx: &mut C, u: &[C::S]) -> Result<Vec<C::S>, ProblemError>;
    /// Row `i` is `∇Iᵢ(u)`.
    fn gradients_in<C: Arith>(
        &self,
        ctx: &mut C,
        u: &[C::S],
    ) -> Result<Vec<Vec<C::S>>, ProblemError>;
}

impl<T: FirstIntegrals + ?Sized> FirstIntegrals for &T {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn num_integrals(&self) -> usize {
        (**self).num_integrals()
    }
    fn integrals_in<C: Arith>(&self, ctx: &mut C, u: &[C::S]) -> Result<Vec<C::S>, ProblemError> {
        (**self).integrals_in(ctx, u)
    }
    fn gradients_in<C: Arith>(
        &self,
        ctx: &mut C,
        u: &[C::S],
    ) -> Result<Vec<Vec<C::S>>, ProblemError> {
        (**self).gradients_in(ctx, u)
    }
}

/// The level set of a system's first integrals through a reference state.
#[derive(Debug, Clone)]
pub struct InvariantManifold<F> {
    integrals: F,
    reference: Vec<f64>,
}

impl<F: FirstIntegrals> InvariantManifold<F> {
    /// Manifold through `u0`.
    pub fn anchored(integrals: F, u0: &[f64]) -> Result<Self, ProjectionError> {
        check_len("state", integrals.state_dim(), u0.len())?;
        let reference = integrals.integrals_in(&mut Plain, u0)?;
        Self::with_reference(integrals, reference)
    }

    pub fn with_reference(integrals: F, reference: Vec<f64>) -> Result<Self, ProjectionError> {
        let (m, n) = (integrals.num_integrals(), integrals.state_dim());
        if m > n {
            return Err(ProjectionError::TooManyIntegrals { integrals: m, dim: n });
        }
        check_len("reference values", m, reference.len())?;
        Ok(Self {
            integrals,
            reference,
        })
    }

    pub fn integrals(&self) -> &F {
        &self.integrals
    }

    pub fn reference_values(&self) -> &[f64] {
        &self.reference
    }

    pub fn dim(&self) -> usize {
        self.integrals.state_dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.reference.len()
    }

    /// `g(u) = I(u) − I₀` over any context.
    pub fn residual_in<C: Arith>(&self, ctx: &mut C, u: &[C::S]) -> Result<Vec<C::S>, ProblemError> {
        let vals = self.integrals.integrals_in(ctx, u)?;
        Ok(vals
            .into_iter()
            .zip(&self.reference)
            .map(|(v, &r)| ctx.offset(v, -r))
            .collect())
    }
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), ProjectionError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ProjectionError::Shape {
            what,
            expected,
            actual,
        })
    }
}

pub fn constraint_residual<F: FirstIntegrals>(
    man: &InvariantManifold<F>,
    u: &[f64],
) -> Result<Vec<f64>, ProjectionError> {
    check_len("state", man.dim(), u.len())?;
    Ok(man.residual_in(&mut Plain, u)?)
}

pub fn constraint_jacobian<F: FirstIntegrals>(
    man: &InvariantManifold<F>,
    u: &[f64],
) -> Result<Vec<Vec<f64>>, ProjectionError> {
    check_len("state", man.dim(), u.len())?;
    Ok(man.integrals.gradients_in(&mut Plain, u)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    pub max_iterations: usize,
    pub singular_tolerance: f64,
}

impl ProjectionConfig {
    pub fn with_iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            ..Self::default()
        }
    }
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            singular_tolerance: 1e-12,
        }
    }
}

/// The last two iterates of a projection: `current` after `p` steps and
/// `previous` after `p − 1`. Both are the candidate when `p = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected<S> {
    pub current: Vec<S>,
    pub previous: Vec<S>,
}

/// LU factors of a small dense matrix with row pivoting.
struct Lu<S> {
    lu: Vec<Vec<S>>,
    perm: Vec<usize>,
}

impl<S: Copy> Lu<S> {
    fn factor<C: Arith<S = S>>(ctx: &mut C, mut a: Vec<Vec<S>>, tol: f64) -> Result<Self, ProjectionError> {
        let m = a.len();
        let mut perm: Vec<usize> = (0..m).collect();
        for k in 0..m {
            let (piv, mag) = (k..m)
                .map(|i| (i, ctx.value(a[i][k]).abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if !(mag >= tol) {
                return Err(ProjectionError::Singular { pivot: mag });
            }
            a.swap(k, piv);
            perm.swap(k, piv);
            for i in k + 1..m {
                let l = ctx.div(a[i][k], a[k][k])?;
                for j in k + 1..m {
                    let t = ctx.mul(l, a[k][j]);
                    a[i][j] = ctx.sub(a[i][j], t);
                }
                a[i][k] = l;
            }
        }
        Ok(Self { lu: a, perm })
    }

    fn solve<C: Arith<S = S>>(&self, ctx: &mut C, b: &[S]) -> Result<Vec<S>, ProjectionError> {
        let m = self.lu.len();
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..m {
            let s = ctx.dot(&self.lu[i][..i], &x[..i]);
            x[i] = ctx.sub(x[i], s);
        }
        for i in (0..m).rev() {
            let s = ctx.dot(&self.lu[i][i + 1..], &x[i + 1..]);
            let r = ctx.sub(x[i], s);
            x[i] = ctx.div(r, self.lu[i][i])?;
        }
        Ok(x)
    }
}

fn all_finite<C: Arith>(ctx: &C, xs: &[C::S]) -> bool {
    xs.iter().all(|&x| ctx.value(x).is_finite())
}

/// Simplified Newton projection of `candidate` onto `man` with
/// `cfg.max_iterations` steps, over any context.
pub fn project_in<C: Arith, F: FirstIntegrals>(
    ctx: &mut C,
    man: &InvariantManifold<F>,
    candidate: &[C::S],
    cfg: &ProjectionConfig,
) -> Result<Projected<C::S>, ProjectionError> {
    check_len("state", man.dim(), candidate.len())?;
    let p = cfg.max_iterations;
    if p == 0 {
        return Ok(Projected {
            current: candidate.to_vec(),
            previous: candidate.to_vec(),
        });
    }
    let n = candidate.len();
    let grads = man.integrals.gradients_in(ctx, candidate)?;
    if grads.iter().any(|row| !all_finite(ctx, row)) {
        return Err(ProjectionError::Diverged { iteration: 0 });
    }
    let m = grads.len();
    let gram: Vec<Vec<C::S>> = (0..m)
        .map(|i| (0..m).map(|j| ctx.dot(&grads[i], &grads[j])).collect())
        .collect();
    let lu = Lu::factor(ctx, gram, cfg.singular_tolerance)?;
    // columns of G, for forming Gᵀλ
    let cols: Vec<Vec<C::S>> = (0..n)
        .map(|j| grads.iter().map(|row| row[j]).collect())
        .collect();

    let mut lambda: Vec<C::S> = Vec::new();
    let mut previous = candidate.to_vec();
    let mut current = candidate.to_vec();
    for k in 0..p {
        let g = man.residual_in(ctx, &current)?;
        if !all_finite(ctx, &g) {
            return Err(ProjectionError::Diverged { iteration: k });
        }
        let step = lu.solve(ctx, &g)?;
        lambda = if k == 0 {
            step.iter().map(|&s| ctx.neg(s)).collect()
        } else {
            lambda
                .iter()
                .zip(&step)
                .map(|(&l, &s)| ctx.sub(l, s))
                .collect()
        };
        let next: Vec<C::S> = (0..n)
            .map(|j| {
                let shift = ctx.dot(&cols[j], &lambda);
                ctx.add(candidate[j], shift)
            })
            .collect();
        if !all_finite(ctx, &next) {
            return Err(ProjectionError::Diverged { iteration: k + 1 });
        }
        previous = std::mem::replace(&mut current, next);
    }
    Ok(Projected { current, previous })
}

/// `p` simplified Newton steps from `candidate`.
pub fn project<F: FirstIntegrals>(
    man: &InvariantManifold<F>,
    candidate: &[f64],
    p: usize,
) -> Result<Vec<f64>, ProjectionError> {
    project_with(man, candidate, &ProjectionConfig::with_iterations(p))
}

pub fn project_with<F: FirstIntegrals>(
    man: &InvariantManifold<F>,
    candidate: &[f64],
    cfg: &ProjectionConfig,
) -> Result<Vec<f64>, ProjectionError> {
    Ok(project_in(&mut Plain, man, candidate, cfg)?.current)
}

/// Number of projection steps at epoch `epoch` of `total`, ramping from 0 to
/// `cap`.
pub fn projection_schedule(epoch: usize, total: usize, cap: usize) -> usize {
    assert!(total >= 1, "schedule needs at least one epoch");
    let raw = (epoch as u128 * (cap as u128 + 1)) / total as u128;
    raw.min(cap as u128) as usize
}

/// Blend weight `e / E` between the last two projection iterates.
pub fn soft_weight(epoch: usize, total: usize) -> f64 {
    epoch as f64 / total as f64
}

/// `(1 − s)·previous + s·current`.
pub fn soft_update(previous: &[f64], current: &[f64], s: f64) -> Result<Vec<f64>, ProjectionError> {
    check_len("current iterate", previous.len(), current.len())?;
    Ok(soft_update_in(&mut Plain, previous, current, s))
}

pub fn soft_update_in<C: Arith>(ctx: &mut C, previous: &[C::S], current: &[C::S], s: f64) -> Vec<C::S> {
    previous
        .iter()
        .zip(current)
        .map(|(&a, &b)| {
            if s == 0.0 {
                a
            } else if s == 1.0 {
                b
            } else {
                let a = ctx.scale(a, 1.0 - s);
                let b = ctx.scale(b, s);
                ctx.add(a, b)
            }
        })
        .collect()
}
