//! Dense feed-forward networks with hand-written reverse mode.
//!
//! Parameters of all layers live in one flat vector so optimizers and target
//! blending operate on plain slices. Layer `l` stores its weights as an
//! `in × out` row-major block followed by `out` biases. Batches are row-major
//! `batch × features` matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Tanh,
    Identity,
}

/// `c = op(a) · op(b) + beta · c` for row-major operands, where `op(a)` is
/// `m × k` and `op(b)` is `k × n`. A transposed operand is stored with its
/// dimensions swapped.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the assertion above bounds every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Activations recorded by a batched forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], |v| v.as_slice())
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
    output: OutputActivation,
}

impl Mlp {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new(dims: &[usize], output: OutputActivation, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(dims, output)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let count = w[0] * w[1] + w[1];
            for p in &mut net.params[offset..offset + count] {
                *p = rng.gen_range(-bound..bound);
            }
            offset += count;
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize], output: OutputActivation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {dims:?}")));
        }
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp {
            dims: dims.to_vec(),
            params: vec![0.0; n],
            output,
        })
    }

    pub fn from_params(dims: &[usize], output: OutputActivation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(dims, output)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (start, fan_in, fan_out) = self.layer_span(l);
        let w_end = start + fan_in * fan_out;
        (&self.params[start..w_end], &self.params[w_end..w_end + fan_out])
    }

    fn layer_span(&self, l: usize) -> (usize, usize, usize) {
        let start = self.dims[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (start, self.dims[l], self.dims[l + 1])
    }

    /// Runs a batch of `batch` rows through the network, recording activations.
    pub fn forward_batch(&self, input: &[f64], batch: usize, tape: &mut Tape) {
        assert_eq!(input.len(), batch * self.input_dim(), "input shape");
        let layers = self.n_layers();
        tape.batch = batch;
        tape.acts.resize_with(layers + 1, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(input);
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let (prev, rest) = tape.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let z = &mut rest[0];
            z.clear();
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            gemm(batch, fan_in, fan_out, x, false, w, false, 1.0, z);
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if self.output == OutputActivation::Tanh {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut tape = Tape::default();
        self.forward_batch(input, 1, &mut tape);
        Ok(tape.output().to_vec())
    }

    /// Reverse pass for the batch recorded in `tape`.
    ///
    /// `upstream` is `∂L/∂output` (`batch × out`). Parameter gradients are
    /// added into `grads` when given; `∂L/∂input` is written into
    /// `input_grad` when given.
    pub fn backward(
        &self,
        tape: &Tape,
        upstream: &[f64],
        mut grads: Option<&mut [f64]>,
        input_grad: Option<&mut Vec<f64>>,
    ) {
        let batch = tape.batch;
        let layers = self.n_layers();
        assert_eq!(upstream.len(), batch * self.output_dim(), "upstream shape");
        if let Some(g) = grads.as_deref() {
            assert_eq!(g.len(), self.params.len(), "gradient buffer shape");
        }

        let y = &tape.acts[layers];
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Tanh => upstream.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect(),
            OutputActivation::Identity => upstream.to_vec(),
        };
        let mut next = Vec::new();
        for l in (0..layers).rev() {
            let (start, fan_in, fan_out) = self.layer_span(l);
            let x = &tape.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let (dw, rest) = g[start..].split_at_mut(fan_in * fan_out);
                gemm(fan_in, batch, fan_out, x, true, &delta, false, 1.0, dw);
                let db = &mut rest[..fan_out];
                for row in delta.chunks_exact(fan_out) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }
            if l == 0 && input_grad.is_none() {
                break;
            }
            let (w, _) = self.layer(l);
            next.clear();
            next.resize(batch * fan_in, 0.0);
            gemm(batch, fan_out, fan_in, &delta, false, w, true, 0.0, &mut next);
            if l > 0 {
                for (d, a) in next.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            std::mem::swap(&mut delta, &mut next);
        }
        if let Some(out) = input_grad {
            out.clear();
            out.extend_from_slice(&delta);
        }
    }

    /// Parameter gradients of `sum(upstream ⊙ f(input))` for a batch.
    pub fn gradients(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        if input.is_empty() || !input.len().is_multiple_of(self.input_dim()) {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let batch = input.len() / self.input_dim();
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: batch * self.output_dim(),
                got: upstream.len(),
            });
        }
        let mut tape = Tape::default();
        self.forward_batch(input, batch, &mut tape);
        let mut grads = vec![0.0; self.params.len()];
        self.backward(&tape, upstream, Some(&mut grads), None);
        Ok(grads)
    }

    /// `self ← tau·online + (1 − tau)·self`, written as a step toward
    /// `online` so equal parameters stay bit-identical.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) {
        assert_eq!(self.dims, online.dims);
        if tau == 1.0 {
            self.params.copy_from_slice(&online.params);
            return;
        }
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t += tau * (o - *t);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[4, 8, 8, 2], OutputActivation::Tanh).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_weight_tanh() {
        let net = Mlp::from_params(&[1, 1], OutputActivation::Tanh, vec![0.7, 0.0]).unwrap();
        let y = net.forward(&[1.3]).unwrap();
        assert_eq!(y[0], (0.7f64 * 1.3).tanh());
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[3, 2], OutputActivation::Identity).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::ShapeMismatch { .. })));
        assert!(net.gradients(&[1.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(net.gradients(&[1.0, 2.0, 3.0], &[1.0]).is_err());
        assert!(Mlp::zeros(&[3], OutputActivation::Identity).is_err());
    }

    #[test]
    fn random_net_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[20, 128, 128, 2], OutputActivation::Tanh, &mut rng).unwrap();
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1 - 1.0).collect();
        let y = net.forward(&x).unwrap();
        assert!(y.iter().all(|v| v.is_finite() && v.abs() <= 1.0));
    }

    #[test]
    fn batch_matches_single_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[5, 7, 3], OutputActivation::Identity, &mut rng).unwrap();
        let xs: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::default();
        net.forward_batch(&xs, 3, &mut tape);
        for r in 0..3 {
            let single = net.forward(&xs[r * 5..(r + 1) * 5]).unwrap();
            for (a, b) in single.iter().zip(&tape.output()[r * 3..(r + 1) * 3]) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_upstream_zero_gradient_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[4, 8, 8, 2], OutputActivation::Tanh, &mut rng).unwrap();
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g0 = net.gradients(&x, &[0.0; 6]).unwrap();
        assert!(g0.iter().all(|&g| g == 0.0));
        let up: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up2: Vec<f64> = up.iter().map(|u| 2.0 * u).collect();
        let g1 = net.gradients(&x, &up).unwrap();
        let g2 = net.gradients(&x, &up2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn soft_update_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let online = Mlp::new(&[3, 4, 2], OutputActivation::Tanh, &mut rng).unwrap();
        let target0 = Mlp::new(&[3, 4, 2], OutputActivation::Tanh, &mut rng).unwrap();
        let mut t = target0.clone();
        t.soft_update_from(&online, 0.0);
        assert_eq!(t, target0);
        t.soft_update_from(&online, 1.0);
        assert_eq!(t, online);
    }

    #[test]
    fn adam_zero_lr_is_identity() {
        let mut params = vec![0.3, -0.2, 1.5];
        let before = params.clone();
        let mut opt = Adam::new(3, 0.0);
        opt.step(&mut params, &[1.0, -2.0, 0.5]);
        assert_eq!(params, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut params = vec![1.0, 1.0];
        let mut opt = Adam::new(2, 0.01);
        opt.step(&mut params, &[3.0, -0.5]);
        assert!((params[0] - 0.99).abs() < 1e-9);
        assert!((params[1] - 1.01).abs() < 1e-9);
    }
}
