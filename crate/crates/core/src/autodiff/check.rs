use super::{Arith, AutodiffError, Forward, Plain, Tape};

/// A scalar-valued program over any [`Arith`] context.
pub trait ScalarProgram {
    type Error: From<AutodiffError>;

    fn eval<C: Arith>(&self, ctx: &mut C, x: &[C::S]) -> Result<C::S, Self::Error>;
}

/// A vector-valued program of one scalar (typically time).
pub trait VectorProgram {
    type Error: From<AutodiffError>;

    fn eval<C: Arith>(&self, ctx: &mut C, t: C::S) -> Result<Vec<C::S>, Self::Error>;
}

/// Value and reverse-mode gradient of `func` at `inputs`.
pub fn evaluate_with_gradient<P: ScalarProgram>(
    func: &P,
    inputs: &[f64],
) -> Result<(f64, Vec<f64>), P::Error> {
    let mut tape = Tape::new();
    let xs = tape.inputs(inputs);
    let y = func.eval(&mut tape, &xs)?;
    Ok((tape.get(y), tape.gradient(y, &xs)))
}

/// Gradient assembled from one forward-mode pass per coordinate.
pub fn forward_gradient<P: ScalarProgram>(func: &P, inputs: &[f64]) -> Result<Vec<f64>, P::Error> {
    let mut plain = Plain;
    let mut grad = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut fwd = Forward::new(&mut plain);
        let xs: Vec<_> = inputs
            .iter()
            .enumerate()
            .map(|(j, &x)| fwd.variable(x, if i == j { 1.0 } else { 0.0 }))
            .collect();
        grad.push(func.eval(&mut fwd, &xs)?.tangent);
    }
    Ok(grad)
}

/// d/dt of a vector program, by forward mode with unit tangent on `t`.
pub fn time_derivative<P: VectorProgram>(ansatz: &P, t: f64) -> Result<Vec<f64>, P::Error> {
    let mut plain = Plain;
    let mut fwd = Forward::new(&mut plain);
    let tv = fwd.variable(t, 1.0);
    Ok(ansatz.eval(&mut fwd, tv)?.iter().map(|d| d.tangent).collect())
}

/// Largest coordinatewise discrepancy between central differences and the
/// reverse-mode gradient, relative to `max(1, |gradient|)`.
pub fn finite_difference_check<P: ScalarProgram>(
    func: &P,
    inputs: &[f64],
    step: f64,
) -> Result<f64, P::Error> {
    if !(step > 0.0) {
        return Err(AutodiffError::InvalidStep(step).into());
    }
    let (_, grad) = evaluate_with_gradient(func, inputs)?;
    let mut plain = Plain;
    let mut x = inputs.to_vec();
    let mut worst = 0.0f64;
    for i in 0..inputs.len() {
        x[i] = inputs[i] + step;
        let fp = func.eval(&mut plain, &x)?;
        x[i] = inputs[i] - step;
        let fm = func.eval(&mut plain, &x)?;
        x[i] = inputs[i];
        let fd = (fp - fm) / (2.0 * step);
        let err = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::DualScalar;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Square;
    impl ScalarProgram for Square {
        type Error = AutodiffError;
        fn eval<C: Arith>(&self, c: &mut C, x: &[C::S]) -> Result<C::S, AutodiffError> {
            Ok(c.mul(x[0], x[0]))
        }
    }

    struct Tanh;
    impl ScalarProgram for Tanh {
        type Error = AutodiffError;
        fn eval<C: Arith>(&self, c: &mut C, x: &[C::S]) -> Result<C::S, AutodiffError> {
            Ok(c.tanh(x[0]))
        }
    }

    struct Affine(Vec<f64>, f64);
    impl ScalarProgram for Affine {
        type Error = AutodiffError;
        fn eval<C: Arith>(&self, c: &mut C, x: &[C::S]) -> Result<C::S, AutodiffError> {
            let w = c.constants(&self.0);
            let d = c.dot(&w, x);
            Ok(c.offset(d, self.1))
        }
    }

    /// One primitive applied to a shifted input so every domain is valid on [-2, 2].
    #[derive(Clone, Copy, Debug)]
    enum Unary {
        Add,
        Sub,
        Mul,
        Div,
        Tanh,
        Sin,
        Cos,
        Ln,
        Sqrt,
        Powi,
        Powf,
        Sum,
        Dot,
    }

    struct Prim(Unary);
    impl ScalarProgram for Prim {
        type Error = AutodiffError;
        fn eval<C: Arith>(&self, c: &mut C, x: &[C::S]) -> Result<C::S, AutodiffError> {
            let (a, b) = (x[0], x[1]);
            // 3 + a is in [1, 5], always a valid ln/sqrt/div argument
            let pos = c.offset(a, 3.0);
            Ok(match self.0 {
                Unary::Add => c.add(a, b),
                Unary::Sub => c.sub(a, b),
                Unary::Mul => c.mul(a, b),
                Unary::Div => c.div(b, pos)?,
                Unary::Tanh => c.tanh(a),
                Unary::Sin => c.sin(a),
                Unary::Cos => c.cos(a),
                Unary::Ln => c.ln(pos)?,
                Unary::Sqrt => c.sqrt(pos)?,
                Unary::Powi => c.powi(a, 3),
                Unary::Powf => c.powf(pos, 1.7)?,
                Unary::Sum => c.sum(&[a, b, pos]),
                Unary::Dot => c.dot(&[a, b], &[pos, a]),
            })
        }
    }

    const ALL: [Unary; 13] = [
        Unary::Add,
        Unary::Sub,
        Unary::Mul,
        Unary::Div,
        Unary::Tanh,
        Unary::Sin,
        Unary::Cos,
        Unary::Ln,
        Unary::Sqrt,
        Unary::Powi,
        Unary::Powf,
        Unary::Sum,
        Unary::Dot,
    ];

    #[test]
    fn square_at_three() {
        let (v, g) = evaluate_with_gradient(&Square, &[3.0]).unwrap();
        assert_eq!((v, g), (9.0, vec![6.0]));
    }

    #[test]
    fn tanh_at_zero() {
        let (v, g) = evaluate_with_gradient(&Tanh, &[0.0]).unwrap();
        assert_eq!((v, g), (0.0, vec![1.0]));
    }

    #[test]
    fn fd_check_on_square_and_tanh() {
        assert!(finite_difference_check(&Square, &[3.0], 1e-6).unwrap() <= 1e-9);
        assert!(finite_difference_check(&Tanh, &[0.5], 1e-6).unwrap() <= 1e-8);
    }

    #[test]
    fn fd_check_rejects_bad_step() {
        assert!(matches!(
            finite_difference_check(&Square, &[3.0], 0.0),
            Err(AutodiffError::InvalidStep(_))
        ));
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for op in ALL {
            for _ in 0..100 {
                let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let err = finite_difference_check(&Prim(op), &x, 1e-6).unwrap();
                assert!(err <= 1e-6, "{op:?} at {x:?}: {err}");
            }
        }
    }

    #[test]
    fn reverse_equals_forward_coordinatewise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for op in ALL {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let (_, rev) = evaluate_with_gradient(&Prim(op), &x).unwrap();
            let fwd = forward_gradient(&Prim(op), &x).unwrap();
            for (r, f) in rev.iter().zip(&fwd) {
                assert!((r - f).abs() <= 1e-12, "{op:?}: {r} vs {f}");
            }
        }
    }

    struct Constant(Vec<f64>);
    impl VectorProgram for Constant {
        type Error = AutodiffError;
        fn eval<C: Arith>(&self, c: &mut C, _t: C::S) -> Result<Vec<C::S>, AutodiffError> {
            Ok(c.constants(&self.0))
        }
    }

    struct Ramp {
        u0: Vec<f64>,
        c: Vec<f64>,
        t0: f64,
        tf: f64,
    }
    impl VectorProgram for Ramp {
        type Error = AutodiffError;
        fn eval<C: Arith>(&self, c: &mut C, t: C::S) -> Result<Vec<C::S>, AutodiffError> {
            let s = c.offset(t, -self.t0);
            let s = c.scale(s, 1.0 / (self.tf - self.t0));
            Ok(self
                .u0
                .iter()
                .zip(&self.c)
                .map(|(&u, &k)| {
                    let kk = c.constant(k);
                    let p = c.mul(s, kk);
                    c.offset(p, u)
                })
                .collect())
        }
    }

    struct Oscillator;
    impl VectorProgram for Oscillator {
        type Error = AutodiffError;
        fn eval<C: Arith>(&self, c: &mut C, t: C::S) -> Result<Vec<C::S>, AutodiffError> {
            let (co, si) = (c.cos(t), c.sin(t));
            Ok(vec![c.add(co, si), c.sub(co, si)])
        }
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        assert_eq!(
            time_derivative(&Constant(vec![1.0, 2.0]), 0.3).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn derivative_of_ramp() {
        let r = Ramp {
            u0: vec![1.0, -1.0],
            c: vec![2.0, 5.0],
            t0: 1.0,
            tf: 5.0,
        };
        let d = time_derivative(&r, 2.7).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15);
        assert!((d[1] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_oscillator_solution() {
        assert_eq!(time_derivative(&Oscillator, 0.0).unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn dual_scalar_agrees_with_forward_plain() {
        let t = DualScalar::variable(0.4);
        let u = (t.cos() + t.sin()).tanh();
        struct P;
        impl VectorProgram for P {
            type Error = AutodiffError;
            fn eval<C: Arith>(&self, c: &mut C, t: C::S) -> Result<Vec<C::S>, AutodiffError> {
                let (co, si) = (c.cos(t), c.sin(t));
                let s = c.add(co, si);
                Ok(vec![c.tanh(s)])
            }
        }
        assert_eq!(time_derivative(&P, 0.4).unwrap()[0], u.derivative);
    }

    proptest! {
        #[test]
        fn affine_functions_are_exact(w in proptest::collection::vec(-3.0..3.0f64, 3), b in -3.0..3.0f64,
                                     x in proptest::collection::vec(-2.0..2.0f64, 3)) {
            // central differences of an affine map are exact up to rounding,
            // which a wide step keeps far below the bound
            let err = finite_difference_check(&Affine(w, b), &x, 0.5).unwrap();
            prop_assert!(err <= 1e-12, "{}", err);
        }
    }
}
