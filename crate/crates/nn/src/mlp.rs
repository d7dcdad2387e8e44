//! Two-hidden-layer perceptron with ReLU activations and an explicit
//! reverse pass.
//!
//! Parameters live in one flat vector laid out as
//! `[W0, b0, W1, b1, W2, b2]`, with each `W` stored row-major as
//! `fan_in x fan_out`. Gradient buffers use the same layout so optimizers and
//! Polyak averaging can work on plain slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{gemm, Op, Real, Tensor};
use crate::NnError;

/// Hidden width used by every actor and critic in this project.
pub const HIDDEN_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<R> {
    widths: [usize; 4],
    params: Vec<R>,
}

/// Activations cached by [`Mlp::forward_tape`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct MlpTape<R> {
    input: Tensor<R>,
    hidden0: Vec<R>,
    hidden1: Vec<R>,
}

impl<R> MlpTape<R> {
    pub fn input(&self) -> &Tensor<R> {
        &self.input
    }
}

fn param_count(widths: &[usize; 4]) -> usize {
    (0..3).map(|l| widths[l] * widths[l + 1] + widths[l + 1]).sum()
}

impl<R: Real> Mlp<R> {
    /// All-zero network.
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        let widths = [input, hidden, hidden, output];
        Self { widths, params: vec![R::zero(); param_count(&widths)] }
    }

    /// Fan-in scaled uniform initialisation, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases. The output layer is multiplied by `output_scale`.
    pub fn init<G: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        output_scale: f64,
        rng: &mut G,
    ) -> Self {
        let mut net = Self::zeros(input, hidden, output);
        for layer in 0..3 {
            let fan_in = net.widths[layer];
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let scale = if layer == 2 { output_scale } else { 1.0 };
            let (w, b) = net.layer_ranges(layer);
            for i in w.start..b.end {
                let u: f64 = rng.random_range(-bound..bound);
                net.params[i] = R::lit(u * scale);
            }
        }
        net
    }

    /// Rebuild from serialized parts, checking the layout.
    pub fn from_parts(widths: [usize; 4], params: Vec<R>) -> Result<Self, NnError> {
        if widths[1] != widths[2] {
            return Err(NnError::Shape(format!("hidden widths differ: {widths:?}")));
        }
        let expected = param_count(&widths);
        if params.len() != expected {
            return Err(NnError::Shape(format!(
                "layer widths {widths:?} need {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NnError::NonFinite("network parameters".into()));
        }
        Ok(Self { widths, params })
    }

    pub fn widths(&self) -> [usize; 4] {
        self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        self.widths[3]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[R] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [R] {
        &mut self.params
    }

    /// Index ranges of the weight and bias blocks of `layer`.
    pub fn layer_ranges(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for l in 0..layer {
            off += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        let w_len = self.widths[layer] * self.widths[layer + 1];
        let b_len = self.widths[layer + 1];
        (off..off + w_len, off + w_len..off + w_len + b_len)
    }

    fn affine(&self, layer: usize, x: &[R], rows: usize, relu: bool) -> Vec<R> {
        let (w, b) = self.layer_ranges(layer);
        let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
        let bias = &self.params[b];
        let mut out = Vec::with_capacity(rows * fan_out);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        gemm(x, rows, fan_in, Op::N, &self.params[w], fan_in, fan_out, Op::N, R::one(), &mut out);
        if relu {
            for v in &mut out {
                if *v < R::zero() {
                    *v = R::zero();
                }
            }
        }
        out
    }

    fn check_input(&self, x: &Tensor<R>) -> Result<usize, NnError> {
        if x.shape().len() != 2 || x.cols() != self.widths[0] {
            return Err(NnError::Shape(format!(
                "network expects [batch, {}] input, got {:?}",
                self.widths[0],
                x.shape()
            )));
        }
        Ok(x.rows())
    }

    /// `W2 relu(W1 relu(W0 x + b0) + b1) + b2`, row-wise over the batch.
    pub fn forward(&self, x: &Tensor<R>) -> Result<Tensor<R>, NnError> {
        let rows = self.check_input(x)?;
        let h0 = self.affine(0, x.data(), rows, true);
        let h1 = self.affine(1, &h0, rows, true);
        let out = self.affine(2, &h1, rows, false);
        Tensor::matrix(rows, self.widths[3], out)
    }

    /// Forward pass that keeps what [`Mlp::backward`] needs.
    pub fn forward_tape(&self, x: Tensor<R>) -> Result<(Tensor<R>, MlpTape<R>), NnError> {
        let rows = self.check_input(&x)?;
        let hidden0 = self.affine(0, x.data(), rows, true);
        let hidden1 = self.affine(1, &hidden0, rows, true);
        let out = self.affine(2, &hidden1, rows, false);
        let out = Tensor::matrix(rows, self.widths[3], out)?;
        Ok((out, MlpTape { input: x, hidden0, hidden1 }))
    }

    /// Reverse pass. Parameter gradients are *added* into `grads`, which must
    /// have [`Mlp::param_count`] entries. Returns the gradient with respect to
    /// the input when `want_input_grad` is set.
    pub fn backward(
        &self,
        tape: &MlpTape<R>,
        d_out: &Tensor<R>,
        grads: &mut [R],
        want_input_grad: bool,
    ) -> Option<Tensor<R>> {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer has wrong length");
        let rows = tape.input.rows();
        assert_eq!(d_out.shape(), &[rows, self.widths[3]], "upstream gradient shape");

        let layer_inputs: [&[R]; 3] = [tape.input.data(), &tape.hidden0, &tape.hidden1];
        let mut upstream = d_out.data().to_vec();
        for layer in (0..3).rev() {
            let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
            let (w, b) = self.layer_ranges(layer);
            let input = layer_inputs[layer];
            gemm(input, rows, fan_in, Op::T, &upstream, rows, fan_out, Op::N, R::one(), &mut grads[w.clone()]);
            let db = &mut grads[b];
            for r in 0..rows {
                for (g, &u) in db.iter_mut().zip(&upstream[r * fan_out..(r + 1) * fan_out]) {
                    *g += u;
                }
            }
            if layer == 0 && !want_input_grad {
                return None;
            }
            let mut down = vec![R::zero(); rows * fan_in];
            gemm(&upstream, rows, fan_out, Op::N, &self.params[w], fan_in, fan_out, Op::T, R::zero(), &mut down);
            if layer > 0 {
                // relu mask from the post-activation values
                for (d, &h) in down.iter_mut().zip(input) {
                    if h <= R::zero() {
                        *d = R::zero();
                    }
                }
            }
            upstream = down;
        }
        Some(Tensor::matrix(rows, self.widths[0], upstream).expect("input gradient shape"))
    }

    /// Gradient with respect to the input only, skipping parameter gradients.
    pub fn input_grad(&self, tape: &MlpTape<R>, d_out: &Tensor<R>) -> Tensor<R> {
        let rows = tape.input.rows();
        assert_eq!(d_out.shape(), &[rows, self.widths[3]], "upstream gradient shape");
        let hidden: [&[R]; 2] = [&tape.hidden0, &tape.hidden1];
        let mut upstream = d_out.data().to_vec();
        for layer in (0..3).rev() {
            let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
            let (w, _) = self.layer_ranges(layer);
            let mut down = vec![R::zero(); rows * fan_in];
            gemm(&upstream, rows, fan_out, Op::N, &self.params[w], fan_in, fan_out, Op::T, R::zero(), &mut down);
            if layer > 0 {
                for (d, &h) in down.iter_mut().zip(hidden[layer - 1]) {
                    if h <= R::zero() {
                        *d = R::zero();
                    }
                }
            }
            upstream = down;
        }
        Tensor::matrix(rows, self.widths[0], upstream).expect("input gradient shape")
    }

    /// Polyak averaging: `self <- (1 - tau) self + tau src`.
    pub fn soft_update_from(&mut self, src: &Mlp<R>, tau: R) {
        assert_eq!(self.widths, src.widths, "soft update between different architectures");
        let keep = R::one() - tau;
        for (t, &s) in self.params.iter_mut().zip(&src.params) {
            *t = keep * *t + tau * s;
        }
    }

    pub fn cast<S: Real>(&self) -> Mlp<S> {
        Mlp {
            widths: self.widths,
            params: self.params.iter().map(|v| S::from_f64(v.to_f64().unwrap_or(0.0)).unwrap()).collect(),
        }
    }
}
