use super::{
    check_div, check_ln, check_powf, check_sqrt, dot_f64, sum_f64, Arith, AutodiffError,
};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Neg,
    Scale(f64),
    Offset(f64),
    Div,
    Tanh,
    Sin,
    Cos,
    Ln,
    Sqrt,
    Powi(i32),
    Powf(f64),
    Sum,
    Dot,
}

/// Wengert list of scalar operations.
///
/// Each node stores its value, its parents and the local partial derivative
/// with respect to each parent. Parents always precede children, so a single
/// reverse sweep accumulates adjoints. Node 0 is a constant zero used as the
/// structural zero tangent by [`Forward`](super::Forward).
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<f64>,
    arg_start: Vec<u32>,
    args: Vec<u32>,
    partials: Vec<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

const ZERO: Var = Var(0);

impl Tape {
    pub fn new() -> Self {
        let mut tape = Self {
            ops: Vec::new(),
            values: Vec::new(),
            arg_start: vec![0],
            args: Vec::new(),
            partials: Vec::new(),
        };
        tape.push_leaf(Op::Const, 0.0);
        tape
    }

    /// Drops every node but keeps the allocations.
    pub fn clear(&mut self) {
        self.ops.clear();
        self.values.clear();
        self.arg_start.clear();
        self.arg_start.push(0);
        self.args.clear();
        self.partials.clear();
        self.push_leaf(Op::Const, 0.0);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        // the zero constant is always present
        false
    }

    pub fn input(&mut self, x: f64) -> Var {
        self.push_leaf(Op::Input, x)
    }

    pub fn inputs(&mut self, xs: &[f64]) -> Vec<Var> {
        xs.iter().map(|&x| self.input(x)).collect()
    }

    pub fn get(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn parents(&self, v: Var) -> impl Iterator<Item = Var> + '_ {
        let (lo, hi) = self.arg_range(v.index());
        self.args[lo..hi].iter().map(|&i| Var(i))
    }

    fn arg_range(&self, node: usize) -> (usize, usize) {
        (
            self.arg_start[node] as usize,
            self.arg_start[node + 1] as usize,
        )
    }

    fn push_leaf(&mut self, op: Op, value: f64) -> Var {
        let id = self.values.len();
        self.ops.push(op);
        self.values.push(value);
        self.arg_start.push(self.args.len() as u32);
        Var(id as u32)
    }

    fn push1(&mut self, op: Op, value: f64, a: Var, da: f64) -> Var {
        self.args.push(a.0);
        self.partials.push(da);
        self.push_leaf(op, value)
    }

    fn push2(&mut self, op: Op, value: f64, a: Var, da: f64, b: Var, db: f64) -> Var {
        self.args.push(a.0);
        self.partials.push(da);
        self.args.push(b.0);
        self.partials.push(db);
        self.push_leaf(op, value)
    }

    /// Adjoint of every node with respect to `output`.
    pub fn adjoints(&self, output: Var) -> Vec<f64> {
        let mut adj = Vec::new();
        self.adjoints_into(output, &mut adj);
        adj
    }

    /// Reverse sweep into a caller-owned buffer.
    ///
    /// Nodes with a zero adjoint are skipped, so dead branches holding
    /// non-finite values (an abandoned projection, say) never pollute the
    /// result with `0 * inf`.
    pub fn adjoints_into(&self, output: Var, adj: &mut Vec<f64>) {
        adj.clear();
        adj.resize(self.values.len(), 0.0);
        adj[output.index()] = 1.0;
        for node in (0..=output.index()).rev() {
            let a = adj[node];
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = self.arg_range(node);
            for k in lo..hi {
                adj[self.args[k] as usize] += self.partials[k] * a;
            }
        }
    }

    /// Gradient of `output` with respect to the given nodes.
    pub fn gradient(&self, output: Var, wrt: &[Var]) -> Vec<f64> {
        let adj = self.adjoints(output);
        wrt.iter().map(|v| adj[v.index()]).collect()
    }

    /// Recomputes every non-leaf value from its parents.
    pub fn replay(&self) -> Vec<f64> {
        let mut vals = Vec::with_capacity(self.values.len());
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for (node, op) in self.ops.iter().enumerate() {
            let (lo, hi) = self.arg_range(node);
            let arg = |k: usize, vals: &Vec<f64>| vals[self.args[lo + k] as usize];
            let v = match *op {
                Op::Input | Op::Const => self.values[node],
                Op::Add => arg(0, &vals) + arg(1, &vals),
                Op::Sub => arg(0, &vals) - arg(1, &vals),
                Op::Mul => arg(0, &vals) * arg(1, &vals),
                Op::Neg => -arg(0, &vals),
                Op::Scale(c) => c * arg(0, &vals),
                Op::Offset(c) => arg(0, &vals) + c,
                Op::Div => arg(0, &vals) / arg(1, &vals),
                Op::Tanh => arg(0, &vals).tanh(),
                Op::Sin => arg(0, &vals).sin(),
                Op::Cos => arg(0, &vals).cos(),
                Op::Ln => arg(0, &vals).ln(),
                Op::Sqrt => arg(0, &vals).sqrt(),
                Op::Powi(n) => arg(0, &vals).powi(n),
                Op::Powf(p) => arg(0, &vals).powf(p),
                Op::Sum => {
                    lhs.clear();
                    lhs.extend(self.args[lo..hi].iter().map(|&i| vals[i as usize]));
                    sum_f64(&lhs)
                }
                Op::Dot => {
                    let half = (hi - lo) / 2;
                    lhs.clear();
                    rhs.clear();
                    lhs.extend(self.args[lo..lo + half].iter().map(|&i| vals[i as usize]));
                    rhs.extend(self.args[lo + half..hi].iter().map(|&i| vals[i as usize]));
                    dot_f64(&lhs, &rhs)
                }
            };
            vals.push(v);
        }
        vals
    }

    pub fn recorded_values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_topologically_ordered(&self) -> bool {
        (0..self.values.len()).all(|node| {
            let (lo, hi) = self.arg_range(node);
            self.args[lo..hi].iter().all(|&p| (p as usize) < node)
        })
    }
}

impl Arith for Tape {
    type S = Var;

    fn constant(&mut self, c: f64) -> Var {
        if c == 0.0 && c.is_sign_positive() {
            ZERO
        } else {
            self.push_leaf(Op::Const, c)
        }
    }

    fn value(&self, a: Var) -> f64 {
        self.get(a)
    }

    fn is_structural_zero(&self, a: Var) -> bool {
        a == ZERO
    }

    fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.get(a) + self.get(b);
        self.push2(Op::Add, v, a, 1.0, b, 1.0)
    }

    fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.get(a) - self.get(b);
        self.push2(Op::Sub, v, a, 1.0, b, -1.0)
    }

    fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.get(a), self.get(b));
        self.push2(Op::Mul, x * y, a, y, b, x)
    }

    fn neg(&mut self, a: Var) -> Var {
        let v = -self.get(a);
        self.push1(Op::Neg, v, a, -1.0)
    }

    fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.get(a);
        self.push1(Op::Scale(c), v, a, c)
    }

    fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.get(a) + c;
        self.push1(Op::Offset(c), v, a, 1.0)
    }

    fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.get(a), self.get(b));
        check_div(y)?;
        let q = x / y;
        Ok(self.push2(Op::Div, q, a, 1.0 / y, b, -q / y))
    }

    fn tanh(&mut self, a: Var) -> Var {
        let y = self.get(a).tanh();
        self.push1(Op::Tanh, y, a, 1.0 - y * y)
    }

    fn sin(&mut self, a: Var) -> Var {
        let x = self.get(a);
        self.push1(Op::Sin, x.sin(), a, x.cos())
    }

    fn cos(&mut self, a: Var) -> Var {
        let x = self.get(a);
        self.push1(Op::Cos, x.cos(), a, -x.sin())
    }

    fn ln(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let x = self.get(a);
        check_ln(x)?;
        Ok(self.push1(Op::Ln, x.ln(), a, 1.0 / x))
    }

    fn sqrt(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let x = self.get(a);
        check_sqrt(x)?;
        let y = x.sqrt();
        Ok(self.push1(Op::Sqrt, y, a, 0.5 / y))
    }

    fn powi(&mut self, a: Var, n: i32) -> Var {
        let x = self.get(a);
        let d = if n == 0 { 0.0 } else { n as f64 * x.powi(n - 1) };
        self.push1(Op::Powi(n), x.powi(n), a, d)
    }

    fn powf(&mut self, a: Var, p: f64) -> Result<Var, AutodiffError> {
        let x = self.get(a);
        check_powf(x, p)?;
        Ok(self.push1(Op::Powf(p), x.powf(p), a, p * x.powf(p - 1.0)))
    }

    fn sum(&mut self, xs: &[Var]) -> Var {
        let mut acc = 0.0;
        for &x in xs {
            acc += self.get(x);
            self.args.push(x.0);
            self.partials.push(1.0);
        }
        self.push_leaf(Op::Sum, acc)
    }

    fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        assert_eq!(a.len(), b.len(), "dot: length mismatch");
        let mut acc = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            acc += self.values[x.index()] * self.values[y.index()];
        }
        self.args.extend(a.iter().map(|v| v.0));
        self.args.extend(b.iter().map(|v| v.0));
        self.partials.extend(b.iter().map(|v| self.values[v.index()]));
        self.partials.extend(a.iter().map(|v| self.values[v.index()]));
        self.push_leaf(Op::Dot, acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_gradient_two_x() {
        let mut t = Tape::new();
        let x = t.input(3.0);
        let y = t.mul(x, x);
        assert_eq!(t.get(y), 9.0);
        assert_eq!(t.gradient(y, &[x]), vec![6.0]);
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        // f = x*y + sin(x), df/dx = y + cos(x), df/dy = x
        let mut t = Tape::new();
        let x = t.input(0.7);
        let y = t.input(-1.3);
        let xy = t.mul(x, y);
        let s = t.sin(x);
        let f = t.add(xy, s);
        let g = t.gradient(f, &[x, y]);
        assert_eq!(g[0], -1.3 + 0.7f64.cos());
        assert_eq!(g[1], 0.7);
    }

    #[test]
    fn domain_errors_name_the_primitive() {
        let mut t = Tape::new();
        let z = t.input(0.0);
        let one = t.input(1.0);
        let neg = t.input(-1.0);
        assert!(matches!(
            t.div(one, z),
            Err(AutodiffError::Domain { primitive: super::super::Primitive::Div, .. })
        ));
        assert!(matches!(
            t.ln(z),
            Err(AutodiffError::Domain { primitive: super::super::Primitive::Ln, .. })
        ));
        assert!(matches!(
            t.sqrt(neg),
            Err(AutodiffError::Domain { primitive: super::super::Primitive::Sqrt, .. })
        ));
    }

    #[test]
    fn replay_is_bit_exact_and_ordered() {
        let mut t = Tape::new();
        let xs = t.inputs(&[0.3, -1.1, 2.5, 0.01]);
        let d = t.dot(&xs[..2], &xs[2..]);
        let s = t.sum(&xs);
        let th = t.tanh(d);
        let p = t.powi(s, 3);
        let q = t.div(th, p).unwrap();
        let r = t.sqrt(xs[2]).unwrap();
        let l = t.ln(r).unwrap();
        let c = t.cos(l);
        let e = t.scale(c, 1.5);
        let f = t.offset(e, -0.25);
        let _ = t.add(q, f);
        assert!(t.is_topologically_ordered());
        let replayed = t.replay();
        for (a, b) in replayed.iter().zip(t.recorded_values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn dead_branches_do_not_poison_gradients() {
        let mut t = Tape::new();
        let x = t.input(1.0);
        let big = t.powi(x, 2);
        let huge = t.scale(big, f64::MAX);
        let _inf = t.scale(huge, 10.0);
        let y = t.mul(x, x);
        assert_eq!(t.gradient(y, &[x]), vec![2.0]);
    }

    #[test]
    fn clear_keeps_the_zero_node() {
        let mut t = Tape::new();
        let x = t.input(2.0);
        let _ = t.mul(x, x);
        t.clear();
        assert_eq!(t.len(), 1);
        let z = t.constant(0.0);
        assert!(t.is_structural_zero(z));
    }
}
