use super::{Arith, AutodiffError};

/// Value/tangent pair over an inner context's scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<S> {
    pub value: S,
    pub tangent: S,
}

/// Forward-mode wrapper: carries one directional derivative alongside every
/// value, with all arithmetic delegated to the inner context.
///
/// Tangents that the inner context reports as structurally zero are
/// dropped from products and sums, which keeps `Forward<Tape>` from
/// recording the (large) zero-tangent half of a network's weight products.
pub struct Forward<'a, C: Arith> {
    inner: &'a mut C,
    lhs: Vec<C::S>,
    rhs: Vec<C::S>,
}

impl<'a, C: Arith> Forward<'a, C> {
    pub fn new(inner: &'a mut C) -> Self {
        Self {
            inner,
            lhs: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn inner(&mut self) -> &mut C {
        self.inner
    }

    pub fn variable(&mut self, value: C::S, tangent: C::S) -> Dual<C::S> {
        Dual { value, tangent }
    }

    /// Lifts an inner scalar with zero tangent.
    pub fn lift(&mut self, value: C::S) -> Dual<C::S> {
        let tangent = self.inner.constant(0.0);
        Dual { value, tangent }
    }

    pub fn lift_all(&mut self, values: &[C::S]) -> Vec<Dual<C::S>> {
        values.iter().map(|&v| self.lift(v)).collect()
    }

    fn zero(&self, a: C::S) -> bool {
        self.inner.is_structural_zero(a)
    }

    fn zero_tangent(&mut self) -> C::S {
        self.inner.constant(0.0)
    }

    /// `factor * t` for a tangent `t`, short-circuiting structural zeros.
    fn chain(&mut self, t: C::S, factor: C::S) -> C::S {
        if self.zero(t) {
            t
        } else {
            self.inner.mul(factor, t)
        }
    }
}

impl<C: Arith> Arith for Forward<'_, C> {
    type S = Dual<C::S>;

    fn constant(&mut self, c: f64) -> Self::S {
        let value = self.inner.constant(c);
        self.lift(value)
    }

    fn value(&self, a: Self::S) -> f64 {
        self.inner.value(a.value)
    }

    fn add(&mut self, a: Self::S, b: Self::S) -> Self::S {
        let value = self.inner.add(a.value, b.value);
        let tangent = match (self.zero(a.tangent), self.zero(b.tangent)) {
            (true, _) => b.tangent,
            (_, true) => a.tangent,
            _ => self.inner.add(a.tangent, b.tangent),
        };
        Dual { value, tangent }
    }

    fn sub(&mut self, a: Self::S, b: Self::S) -> Self::S {
        let value = self.inner.sub(a.value, b.value);
        let tangent = match (self.zero(a.tangent), self.zero(b.tangent)) {
            (_, true) => a.tangent,
            (true, false) => self.inner.neg(b.tangent),
            _ => self.inner.sub(a.tangent, b.tangent),
        };
        Dual { value, tangent }
    }

    fn mul(&mut self, a: Self::S, b: Self::S) -> Self::S {
        let value = self.inner.mul(a.value, b.value);
        let tangent = match (self.zero(a.tangent), self.zero(b.tangent)) {
            (true, true) => a.tangent,
            (true, false) => self.inner.mul(a.value, b.tangent),
            (false, true) => self.inner.mul(a.tangent, b.value),
            (false, false) => {
                let l = self.inner.mul(a.value, b.tangent);
                let r = self.inner.mul(a.tangent, b.value);
                self.inner.add(l, r)
            }
        };
        Dual { value, tangent }
    }

    fn neg(&mut self, a: Self::S) -> Self::S {
        let value = self.inner.neg(a.value);
        let tangent = if self.zero(a.tangent) {
            a.tangent
        } else {
            self.inner.neg(a.tangent)
        };
        Dual { value, tangent }
    }

    fn scale(&mut self, a: Self::S, c: f64) -> Self::S {
        let value = self.inner.scale(a.value, c);
        let tangent = if self.zero(a.tangent) {
            a.tangent
        } else {
            self.inner.scale(a.tangent, c)
        };
        Dual { value, tangent }
    }

    fn offset(&mut self, a: Self::S, c: f64) -> Self::S {
        let value = self.inner.offset(a.value, c);
        Dual {
            value,
            tangent: a.tangent,
        }
    }

    fn div(&mut self, a: Self::S, b: Self::S) -> Result<Self::S, AutodiffError> {
        let value = self.inner.div(a.value, b.value)?;
        // (a/b)' = (a' - q b') / b
        let tangent = match (self.zero(a.tangent), self.zero(b.tangent)) {
            (true, true) => a.tangent,
            (false, true) => self.inner.div(a.tangent, b.value)?,
            (za, false) => {
                let qb = self.inner.mul(value, b.tangent);
                let num = if za {
                    self.inner.neg(qb)
                } else {
                    self.inner.sub(a.tangent, qb)
                };
                self.inner.div(num, b.value)?
            }
        };
        Ok(Dual { value, tangent })
    }

    fn tanh(&mut self, a: Self::S) -> Self::S {
        let value = self.inner.tanh(a.value);
        let tangent = if self.zero(a.tangent) {
            a.tangent
        } else {
            let y2 = self.inner.mul(value, value);
            let ny2 = self.inner.neg(y2);
            let d = self.inner.offset(ny2, 1.0);
            self.inner.mul(d, a.tangent)
        };
        Dual { value, tangent }
    }

    fn sin(&mut self, a: Self::S) -> Self::S {
        let value = self.inner.sin(a.value);
        let tangent = if self.zero(a.tangent) {
            a.tangent
        } else {
            let d = self.inner.cos(a.value);
            self.inner.mul(d, a.tangent)
        };
        Dual { value, tangent }
    }

    fn cos(&mut self, a: Self::S) -> Self::S {
        let value = self.inner.cos(a.value);
        let tangent = if self.zero(a.tangent) {
            a.tangent
        } else {
            let s = self.inner.sin(a.value);
            let d = self.inner.neg(s);
            self.inner.mul(d, a.tangent)
        };
        Dual { value, tangent }
    }

    fn ln(&mut self, a: Self::S) -> Result<Self::S, AutodiffError> {
        let value = self.inner.ln(a.value)?;
        let tangent = if self.zero(a.tangent) {
            a.tangent
        } else {
            self.inner.div(a.tangent, a.value)?
        };
        Ok(Dual { value, tangent })
    }

    fn sqrt(&mut self, a: Self::S) -> Result<Self::S, AutodiffError> {
        let value = self.inner.sqrt(a.value)?;
        let tangent = if self.zero(a.tangent) {
            a.tangent
        } else {
            let two_y = self.inner.scale(value, 2.0);
            self.inner.div(a.tangent, two_y)?
        };
        Ok(Dual { value, tangent })
    }

    fn powi(&mut self, a: Self::S, n: i32) -> Self::S {
        let value = self.inner.powi(a.value, n);
        let tangent = if self.zero(a.tangent) || n == 0 {
            self.zero_tangent()
        } else {
            let p = self.inner.powi(a.value, n - 1);
            let d = self.inner.scale(p, n as f64);
            self.chain(a.tangent, d)
        };
        Dual { value, tangent }
    }

    fn powf(&mut self, a: Self::S, p: f64) -> Result<Self::S, AutodiffError> {
        let value = self.inner.powf(a.value, p)?;
        let tangent = if self.zero(a.tangent) {
            a.tangent
        } else {
            let q = self.inner.powf(a.value, p - 1.0)?;
            let d = self.inner.scale(q, p);
            self.inner.mul(d, a.tangent)
        };
        Ok(Dual { value, tangent })
    }

    fn sum(&mut self, xs: &[Self::S]) -> Self::S {
        let mut lhs = std::mem::take(&mut self.lhs);
        lhs.clear();
        lhs.extend(xs.iter().map(|d| d.value));
        let value = self.inner.sum(&lhs);
        lhs.clear();
        lhs.extend(
            xs.iter()
                .map(|d| d.tangent)
                .filter(|&t| !self.inner.is_structural_zero(t)),
        );
        let tangent = if lhs.is_empty() {
            self.zero_tangent()
        } else {
            self.inner.sum(&lhs)
        };
        self.lhs = lhs;
        Dual { value, tangent }
    }

    fn dot(&mut self, a: &[Self::S], b: &[Self::S]) -> Self::S {
        assert_eq!(a.len(), b.len(), "dot: length mismatch");
        let mut lhs = std::mem::take(&mut self.lhs);
        let mut rhs = std::mem::take(&mut self.rhs);
        lhs.clear();
        rhs.clear();
        lhs.extend(a.iter().map(|d| d.value));
        rhs.extend(b.iter().map(|d| d.value));
        let value = self.inner.dot(&lhs, &rhs);
        lhs.clear();
        rhs.clear();
        for (x, y) in a.iter().zip(b) {
            if !self.inner.is_structural_zero(y.tangent) {
                lhs.push(x.value);
                rhs.push(y.tangent);
            }
            if !self.inner.is_structural_zero(x.tangent) {
                lhs.push(x.tangent);
                rhs.push(y.value);
            }
        }
        let tangent = if lhs.is_empty() {
            self.zero_tangent()
        } else {
            self.inner.dot(&lhs, &rhs)
        };
        self.lhs = lhs;
        self.rhs = rhs;
        Dual { value, tangent }
    }
}
