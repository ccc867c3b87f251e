//! Tanh multilayer perceptrons, the hard-constraint PINN ansatz and the
//! branch/trunk DeepONet.
//!
//! Parameters live in one flat `Vec<f64>` per network: for each layer the
//! weight matrix (row-major, `out × in`) followed by the bias vector. The
//! `*_in` functions evaluate a network over any [`Arith`] context given the
//! parameters as context scalars, which is how training puts them on a tape.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Arith, AutodiffError, Plain, VectorProgram};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid layer sizes {0:?}: need at least two positive sizes")]
    InvalidLayerSizes(Vec<usize>),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("latent width must be positive and output sizes must be {n}·r")]
    Latent { n: usize },
    #[error("invalid time interval [{t0}, {tf}]")]
    Interval { t0: f64, tf: f64 },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

fn check_sizes(layer_sizes: &[usize]) -> Result<(), NetworkError> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        Err(NetworkError::InvalidLayerSizes(layer_sizes.to_vec()))
    } else {
        Ok(())
    }
}

/// Number of weights and biases of an MLP with the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// `[input, width × hidden, output]`
pub fn layer_sizes(input: usize, hidden: usize, width: usize, output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat_n(width, hidden));
    sizes.push(output);
    sizes
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<MlpParams, NetworkError> {
    check_sizes(layer_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(param_count(layer_sizes));
    for w in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(MlpParams {
        layer_sizes: layer_sizes.to_vec(),
        params,
    })
}

impl MlpParams {
    pub fn from_flat(layer_sizes: Vec<usize>, params: Vec<f64>) -> Result<Self, NetworkError> {
        check_sizes(&layer_sizes)?;
        let expected = param_count(&layer_sizes);
        if params.len() != expected {
            return Err(NetworkError::Shape {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self {
            layer_sizes,
            params,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, NetworkError> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, k: usize) -> usize {
        param_count(&self.layer_sizes[..=k])
    }

    /// Row-major weight matrix of layer `k` (`out × in`).
    pub fn weights(&self, k: usize) -> &[f64] {
        let off = self.layer_offset(k);
        let (i, o) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
        &self.params[off..off + i * o]
    }

    pub fn weights_mut(&mut self, k: usize) -> &mut [f64] {
        let off = self.layer_offset(k);
        let (i, o) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
        &mut self.params[off..off + i * o]
    }

    pub fn biases(&self, k: usize) -> &[f64] {
        let off = self.layer_offset(k);
        let (i, o) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
        &self.params[off + i * o..off + i * o + o]
    }

    pub fn biases_mut(&mut self, k: usize) -> &mut [f64] {
        let off = self.layer_offset(k);
        let (i, o) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
        &mut self.params[off + i * o..off + i * o + o]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        mlp_forward(self, x)
    }
}

pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
    if x.len() != params.input_dim() {
        return Err(NetworkError::Shape {
            expected: params.input_dim(),
            actual: x.len(),
        });
    }
    Ok(mlp_forward_in(&mut Plain, &params.layer_sizes, &params.params, x))
}

/// Affine–tanh composition over an arbitrary context; identity on the last
/// layer. Shapes are the caller's responsibility.
pub fn mlp_forward_in<C: Arith>(
    ctx: &mut C,
    layer_sizes: &[usize],
    theta: &[C::S],
    x: &[C::S],
) -> Vec<C::S> {
    debug_assert_eq!(theta.len(), param_count(layer_sizes));
    debug_assert_eq!(x.len(), layer_sizes[0]);
    let layers = layer_sizes.len() - 1;
    let mut act = x.to_vec();
    let mut off = 0;
    for k in 0..layers {
        let (nin, nout) = (layer_sizes[k], layer_sizes[k + 1]);
        let w = &theta[off..off + nin * nout];
        let b = &theta[off + nin * nout..off + nin * nout + nout];
        off += nin * nout + nout;
        let mut next = Vec::with_capacity(nout);
        for j in 0..nout {
            let z = ctx.dot(&w[j * nin..(j + 1) * nin], &act);
            let z = ctx.add(z, b[j]);
            next.push(if k + 1 < layers { ctx.tanh(z) } else { z });
        }
        act = next;
    }
    act
}

/// `u0 + (t - t0)/(tf - t0) · net(t)`: the initial condition holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnAnsatz {
    pub net: MlpParams,
    pub t0: f64,
    pub tf: f64,
    pub u0: Vec<f64>,
}

impl PinnAnsatz {
    pub fn new(net: MlpParams, t0: f64, tf: f64, u0: Vec<f64>) -> Result<Self, NetworkError> {
        if !(tf > t0) {
            return Err(NetworkError::Interval { t0, tf });
        }
        if net.input_dim() != 1 || net.output_dim() != u0.len() {
            return Err(NetworkError::Shape {
                expected: u0.len(),
                actual: net.output_dim(),
            });
        }
        Ok(Self { net, t0, tf, u0 })
    }

    pub fn forward(&self, t: f64) -> Vec<f64> {
        pinn_ansatz_forward(self, t)
    }

    /// Evaluates with the network parameters supplied as context scalars.
    pub fn forward_in<C: Arith>(&self, ctx: &mut C, theta: &[C::S], t: C::S) -> Vec<C::S> {
        let shifted = ctx.offset(t, -self.t0);
        let ramp = ctx.scale(shifted, 1.0 / (self.tf - self.t0));
        let scaled = ctx.scale(ramp, 2.0);
        let input = ctx.offset(scaled, -1.0);
        let raw = mlp_forward_in(ctx, self.net.layer_sizes(), theta, &[input]);
        raw.into_iter()
            .zip(&self.u0)
            .map(|(n, &u)| {
                let r = ctx.mul(ramp, n);
                ctx.offset(r, u)
            })
            .collect()
    }
}

pub fn pinn_ansatz_forward(ansatz: &PinnAnsatz, t: f64) -> Vec<f64> {
    let theta = ansatz.net.params().to_vec();
    ansatz.forward_in(&mut Plain, &theta, t)
}

impl VectorProgram for PinnAnsatz {
    type Error = AutodiffError;

    fn eval<C: Arith>(&self, ctx: &mut C, t: C::S) -> Result<Vec<C::S>, AutodiffError> {
        let theta = ctx.constants(self.net.params());
        Ok(self.forward_in(ctx, &theta, t))
    }
}

/// Branch net on `u0`, trunk net on `t`, combined per state component by a
/// dot product over a latent block of width `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepONetParams {
    pub branch: MlpParams,
    pub trunk: MlpParams,
    pub latent_width: usize,
    pub t0: f64,
    pub dt: f64,
}

impl DeepONetParams {
    pub fn new(
        branch: MlpParams,
        trunk: MlpParams,
        latent_width: usize,
        t0: f64,
        dt: f64,
    ) -> Result<Self, NetworkError> {
        let n = branch.input_dim();
        if latent_width == 0
            || branch.output_dim() != n * latent_width
            || trunk.output_dim() != n * latent_width
        {
            return Err(NetworkError::Latent { n });
        }
        if trunk.input_dim() != 1 {
            return Err(NetworkError::Shape {
                expected: 1,
                actual: trunk.input_dim(),
            });
        }
        if !(dt > 0.0) {
            return Err(NetworkError::Interval { t0, tf: t0 + dt });
        }
        Ok(Self {
            branch,
            trunk,
            latent_width,
            t0,
            dt,
        })
    }

    /// Glorot-initialised branch and trunk with `hidden` tanh layers of `width`.
    pub fn init(
        n: usize,
        hidden: usize,
        width: usize,
        latent_width: usize,
        t0: f64,
        dt: f64,
        seed: u64,
    ) -> Result<Self, NetworkError> {
        let branch = init_mlp(&layer_sizes(n, hidden, width, n * latent_width), seed)?;
        let trunk = init_mlp(
            &layer_sizes(1, hidden, width, n * latent_width),
            seed ^ 0x9e37_79b9_7f4a_7c15,
        )?;
        Self::new(branch, trunk, latent_width, t0, dt)
    }

    pub fn state_dim(&self) -> usize {
        self.branch.input_dim()
    }

    pub fn num_params(&self) -> usize {
        self.branch.params().len() + self.trunk.params().len()
    }

    /// Branch parameters followed by trunk parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.branch.params().to_vec();
        v.extend_from_slice(self.trunk.params());
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let nb = self.branch.params().len();
        self.branch.params_mut().copy_from_slice(&flat[..nb]);
        self.trunk.params_mut().copy_from_slice(&flat[nb..]);
    }

    fn check_state(&self, u0: &[f64]) -> Result<(), NetworkError> {
        if u0.len() != self.state_dim() {
            return Err(NetworkError::Shape {
                expected: self.state_dim(),
                actual: u0.len(),
            });
        }
        Ok(())
    }

    /// Operator output for parameters `theta` (branch then trunk).
    pub fn forward_in<C: Arith>(
        &self,
        ctx: &mut C,
        theta: &[C::S],
        u0: &[C::S],
        t: C::S,
    ) -> Vec<C::S> {
        let nb = self.branch.params().len();
        let b = mlp_forward_in(ctx, self.branch.layer_sizes(), &theta[..nb], u0);
        let tr = mlp_forward_in(ctx, self.trunk.layer_sizes(), &theta[nb..], &[t]);
        let r = self.latent_width;
        (0..self.state_dim())
            .map(|i| ctx.dot(&b[i * r..(i + 1) * r], &tr[i * r..(i + 1) * r]))
            .collect()
    }

    /// `u0 + (t - t0)/dt · G(u0)(t)`.
    pub fn ansatz_forward_in<C: Arith>(
        &self,
        ctx: &mut C,
        theta: &[C::S],
        u0: &[f64],
        t: C::S,
    ) -> Vec<C::S> {
        let u0s = ctx.constants(u0);
        let raw = self.forward_in(ctx, theta, &u0s, t);
        let shifted = ctx.offset(t, -self.t0);
        let ramp = ctx.scale(shifted, 1.0 / self.dt);
        raw.into_iter()
            .zip(u0)
            .map(|(n, &u)| {
                let r = ctx.mul(ramp, n);
                ctx.offset(r, u)
            })
            .collect()
    }
}

pub fn deeponet_forward(
    params: &DeepONetParams,
    u0: &[f64],
    t: f64,
) -> Result<Vec<f64>, NetworkError> {
    params.check_state(u0)?;
    let theta = params.flat_params();
    Ok(params.forward_in(&mut Plain, &theta, u0, t))
}

pub fn deeponet_ansatz_forward(
    params: &DeepONetParams,
    u0: &[f64],
    t: f64,
) -> Result<Vec<f64>, NetworkError> {
    params.check_state(u0)?;
    let theta = params.flat_params();
    Ok(params.ansatz_forward_in(&mut Plain, &theta, u0, t))
}

/// Writes one `mlp <d0> ... <dk>` header line followed by the parameters as
/// little-endian `f64`s, for each network in order.
pub fn write_checkpoint<W: Write>(mut w: W, nets: &[&MlpParams]) -> Result<(), NetworkError> {
    for net in nets {
        let sizes: Vec<String> = net.layer_sizes().iter().map(|d| d.to_string()).collect();
        writeln!(w, "mlp {}", sizes.join(" "))?;
        for p in net.params() {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads back every network written by [`write_checkpoint`].
pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<Vec<MlpParams>, NetworkError> {
    let mut nets = Vec::new();
    loop {
        let mut header = Vec::new();
        if r.read_until(b'\n', &mut header)? == 0 {
            break;
        }
        let line = std::str::from_utf8(&header)
            .map_err(|_| NetworkError::Checkpoint("header is not UTF-8".into()))?
            .trim_end_matches('\n');
        let mut words = line.split(' ');
        if words.next() != Some("mlp") {
            return Err(NetworkError::Checkpoint(format!("bad header {line:?}")));
        }
        let sizes = words
            .map(|w| w.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| NetworkError::Checkpoint(format!("bad layer size in {line:?}: {e}")))?;
        check_sizes(&sizes)?;
        let count = param_count(&sizes);
        let mut params = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)
                .map_err(|_| NetworkError::Checkpoint("truncated parameter block".into()))?;
            params.push(f64::from_le_bytes(buf));
        }
        nets.push(MlpParams::from_flat(sizes, params)?);
    }
    Ok(nets)
}
