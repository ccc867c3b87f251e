//! Scalar automatic differentiation.
//!
//! Every numeric routine in this crate (networks, right-hand sides, first
//! integrals, the projection layer) is written once against the [`Arith`]
//! trait and can then be run in several modes:
//!
//! - [`Plain`]: ordinary `f64` evaluation.
//! - [`Tape`]: records a Wengert list for reverse-mode gradients.
//! - [`Forward`]: wraps another context and carries one tangent per scalar.
//!   `Forward<Plain>` is classic dual-number forward mode; `Forward<Tape>`
//!   records both value and tangent on a tape so that a time derivative can
//!   itself be differentiated with respect to the network parameters.

mod check;
mod dual;
mod forward;
mod tape;

pub use check::{
    evaluate_with_gradient, finite_difference_check, forward_gradient, time_derivative,
    ScalarProgram, VectorProgram,
};
pub use dual::DualScalar;
pub use forward::{Dual, Forward};
pub use tape::{Tape, Var};

use thiserror::Error;

/// Primitive that rejected its argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Div,
    Ln,
    Sqrt,
    Powf,
}

impl std::fmt::Display for Primitive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Primitive::Div => "div",
            Primitive::Ln => "ln",
            Primitive::Sqrt => "sqrt",
            Primitive::Powf => "powf",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("domain error in `{primitive}`: argument {argument}")]
    Domain { primitive: Primitive, argument: f64 },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("expected {expected} inputs, got {actual}")]
    Arity { expected: usize, actual: usize },
}

pub(crate) fn check_div(den: f64) -> Result<(), AutodiffError> {
    if den == 0.0 {
        Err(AutodiffError::Domain {
            primitive: Primitive::Div,
            argument: den,
        })
    } else {
        Ok(())
    }
}

pub(crate) fn check_ln(x: f64) -> Result<(), AutodiffError> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(AutodiffError::Domain {
            primitive: Primitive::Ln,
            argument: x,
        })
    }
}

pub(crate) fn check_sqrt(x: f64) -> Result<(), AutodiffError> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(AutodiffError::Domain {
            primitive: Primitive::Sqrt,
            argument: x,
        })
    }
}

pub(crate) fn check_powf(x: f64, p: f64) -> Result<(), AutodiffError> {
    if x > 0.0 || (x == 0.0 && p >= 1.0) {
        Ok(())
    } else {
        Err(AutodiffError::Domain {
            primitive: Primitive::Powf,
            argument: x,
        })
    }
}

/// An evaluation context for scalar programs.
///
/// Scalars are opaque `Copy` handles; all arithmetic goes through the
/// context so that taping contexts can record it.
pub trait Arith {
    type S: Copy;

    fn constant(&mut self, c: f64) -> Self::S;
    fn value(&self, a: Self::S) -> f64;

    /// True if `a` is known to be exactly zero without looking at its value
    /// (used by [`Forward`] to skip zero tangents).
    fn is_structural_zero(&self, _a: Self::S) -> bool {
        false
    }

    fn add(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn sub(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn mul(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn neg(&mut self, a: Self::S) -> Self::S;
    /// `c * a`
    fn scale(&mut self, a: Self::S, c: f64) -> Self::S;
    /// `a + c`
    fn offset(&mut self, a: Self::S, c: f64) -> Self::S;
    fn div(&mut self, a: Self::S, b: Self::S) -> Result<Self::S, AutodiffError>;
    fn tanh(&mut self, a: Self::S) -> Self::S;
    fn sin(&mut self, a: Self::S) -> Self::S;
    fn cos(&mut self, a: Self::S) -> Self::S;
    fn ln(&mut self, a: Self::S) -> Result<Self::S, AutodiffError>;
    fn sqrt(&mut self, a: Self::S) -> Result<Self::S, AutodiffError>;
    fn powi(&mut self, a: Self::S, n: i32) -> Self::S;
    fn powf(&mut self, a: Self::S, p: f64) -> Result<Self::S, AutodiffError>;
    fn sum(&mut self, xs: &[Self::S]) -> Self::S;
    /// Inner product of two equal-length slices.
    fn dot(&mut self, a: &[Self::S], b: &[Self::S]) -> Self::S;

    fn values(&self, xs: &[Self::S]) -> Vec<f64> {
        xs.iter().map(|&x| self.value(x)).collect()
    }

    fn constants(&mut self, cs: &[f64]) -> Vec<Self::S> {
        cs.iter().map(|&c| self.constant(c)).collect()
    }
}

/// Plain `f64` arithmetic.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

/// Left-to-right accumulation shared by every context, so that replaying a
/// tape reproduces plain evaluation bit for bit.
#[inline]
pub(crate) fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub(crate) fn sum_f64(xs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for x in xs {
        acc += x;
    }
    acc
}

impl Arith for Plain {
    type S = f64;

    fn constant(&mut self, c: f64) -> f64 {
        c
    }
    fn value(&self, a: f64) -> f64 {
        a
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    fn scale(&mut self, a: f64, c: f64) -> f64 {
        c * a
    }
    fn offset(&mut self, a: f64, c: f64) -> f64 {
        a + c
    }
    fn div(&mut self, a: f64, b: f64) -> Result<f64, AutodiffError> {
        check_div(b)?;
        Ok(a / b)
    }
    fn tanh(&mut self, a: f64) -> f64 {
        a.tanh()
    }
    fn sin(&mut self, a: f64) -> f64 {
        a.sin()
    }
    fn cos(&mut self, a: f64) -> f64 {
        a.cos()
    }
    fn ln(&mut self, a: f64) -> Result<f64, AutodiffError> {
        check_ln(a)?;
        Ok(a.ln())
    }
    fn sqrt(&mut self, a: f64) -> Result<f64, AutodiffError> {
        check_sqrt(a)?;
        Ok(a.sqrt())
    }
    fn powi(&mut self, a: f64, n: i32) -> f64 {
        a.powi(n)
    }
    fn powf(&mut self, a: f64, p: f64) -> Result<f64, AutodiffError> {
        check_powf(a, p)?;
        Ok(a.powf(p))
    }
    fn sum(&mut self, xs: &[f64]) -> f64 {
        sum_f64(xs)
    }
    fn dot(&mut self, a: &[f64], b: &[f64]) -> f64 {
        dot_f64(a, b)
    }
}
