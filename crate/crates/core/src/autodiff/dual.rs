use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Dual;

/// Forward-mode dual number `value + derivative·ε`, `ε² = 0`.
///
/// A standalone operator-overloaded type for quick derivatives of closed-form
/// expressions. Programs written against [`Arith`](super::Arith) get the same
/// thing through `Forward<Plain>`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualScalar {
    pub value: f64,
    pub derivative: f64,
}

impl DualScalar {
    pub fn new(value: f64, derivative: f64) -> Self {
        Self { value, derivative }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, 0.0)
    }

    /// Independent variable with unit tangent.
    pub fn variable(value: f64) -> Self {
        Self::new(value, 1.0)
    }

    pub fn tanh(self) -> Self {
        let y = self.value.tanh();
        Self::new(y, (1.0 - y * y) * self.derivative)
    }

    pub fn sin(self) -> Self {
        Self::new(self.value.sin(), self.value.cos() * self.derivative)
    }

    pub fn cos(self) -> Self {
        Self::new(self.value.cos(), -self.value.sin() * self.derivative)
    }

    pub fn ln(self) -> Self {
        Self::new(self.value.ln(), self.derivative / self.value)
    }

    pub fn sqrt(self) -> Self {
        let y = self.value.sqrt();
        Self::new(y, self.derivative / (2.0 * y))
    }

    pub fn powi(self, n: i32) -> Self {
        Self::new(
            self.value.powi(n),
            n as f64 * self.value.powi(n - 1) * self.derivative,
        )
    }
}

impl From<Dual<f64>> for DualScalar {
    fn from(d: Dual<f64>) -> Self {
        Self::new(d.value, d.tangent)
    }
}

impl From<DualScalar> for Dual<f64> {
    fn from(d: DualScalar) -> Self {
        Dual {
            value: d.value,
            tangent: d.derivative,
        }
    }
}

impl Add for DualScalar {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.derivative + rhs.derivative)
    }
}

impl Sub for DualScalar {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.derivative - rhs.derivative)
    }
}

impl Mul for DualScalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.derivative * rhs.value + self.value * rhs.derivative,
        )
    }
}

impl Div for DualScalar {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        Self::new(q, (self.derivative - q * rhs.derivative) / rhs.value)
    }
}

impl Neg for DualScalar {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.derivative)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn product_rule(a in -10.0..10.0f64, da in -10.0..10.0f64, b in -10.0..10.0f64, db in -10.0..10.0f64) {
            let p = DualScalar::new(a, da) * DualScalar::new(b, db);
            prop_assert_eq!(p.value, a * b);
            prop_assert!((p.derivative - (da * b + a * db)).abs() <= 1e-12 * (1.0 + (da * b).abs() + (a * db).abs()));
        }
    }

    #[test]
    fn quotient_and_chain() {
        // d/dx sin(x)/x at x = 1
        let x = DualScalar::variable(1.0);
        let f = x.sin() / x;
        let expected = 1.0f64.cos() - 1.0f64.sin();
        assert!((f.derivative - expected).abs() < 1e-15);
    }
}
