//! The transmit-side generator: a small residual network mapping the
//! fixed normalized-phase seed vector to continuous pre-quantization
//! values, with hand-written reverse-mode adjoints.
//!
//! Architecture: input affine + tanh, `depth` residual blocks (two
//! affine layers with tanh between, skip around both), output affine +
//! sigmoid so the output lies in (0, 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Layer dimensions; all parameter offsets derive from this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub output_dim: usize,
}

impl NetShape {
    pub fn new(input_dim: usize, depth: usize, width: usize) -> Self {
        Self { input_dim, width, depth, output_dim: input_dim }
    }

    fn block_len(&self) -> usize {
        2 * self.width * self.width + 2 * self.width
    }

    /// Offset of (w_in, b_in, blocks.., w_out, b_out) segments.
    fn w_in(&self) -> usize {
        0
    }

    fn b_in(&self) -> usize {
        self.width * self.input_dim
    }

    fn block(&self, k: usize) -> usize {
        self.b_in() + self.width + k * self.block_len()
    }

    fn w_out(&self) -> usize {
        self.block(self.depth)
    }

    fn b_out(&self) -> usize {
        self.w_out() + self.output_dim * self.width
    }

    /// Total trainable parameter count:
    /// `D (2 W^2 + 2 W) + (in W + W) + (W out + out)`.
    pub fn param_count(&self) -> usize {
        self.b_out() + self.output_dim
    }
}

/// Flat parameter vector plus its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams<T> {
    pub shape: NetShape,
    pub data: Vec<T>,
}

/// Cached forward pass: the seed input, each residual-block input, each
/// inner tanh activation and the squashed output. Replaying it redoes
/// the forward pass bit-exactly.
#[derive(Debug, Clone)]
pub struct TapeRecord<T> {
    pub input: Vec<T>,
    /// Block inputs u_0 .. u_depth (u_0 is the squashed input affine).
    pub block_inputs: Vec<Vec<T>>,
    /// Inner tanh activations per block.
    pub inner_tanh: Vec<Vec<T>>,
    /// Final output after the sigmoid.
    pub output: Vec<T>,
}

/// Seeded fan-in-scaled uniform initialization; biases start at zero.
pub fn net_init<T: Real>(seed: u64, input_dim: usize, depth: usize, width: usize) -> NetParams<T> {
    let shape = NetShape::new(input_dim, depth, width);
    let mut data = vec![T::zero(); shape.param_count()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |slice: &mut [T], fan_in: usize| {
        let limit = (3.0 / fan_in as f64).sqrt();
        for v in slice.iter_mut() {
            *v = T::of(rng.gen_range(-limit..limit));
        }
    };
    let w = shape.width;
    let (i0, i1) = (shape.w_in(), shape.b_in());
    fill(&mut data[i0..i1], input_dim);
    for k in 0..depth {
        let b = shape.block(k);
        fill(&mut data[b..b + w * w], w);
        // b1 zeros
        fill(&mut data[b + w * w + w..b + 2 * w * w + w], w);
        // b2 zeros
    }
    let (o0, o1) = (shape.w_out(), shape.b_out());
    fill(&mut data[o0..o1], w);
    NetParams { shape, data }
}

#[inline]
fn matvec<T: Real>(w: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
    }
}

/// out += W^T g
#[inline]
fn matvec_transpose_acc<T: Real>(w: &[T], rows: usize, cols: usize, g: &[T], out: &mut [T]) {
    debug_assert_eq!(out.len(), cols);
    debug_assert_eq!(g.len(), rows);
    for (row, &gv) in w.chunks_exact(cols).zip(g) {
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += wv * gv;
        }
    }
}

/// dW += g x^T
#[inline]
fn outer_acc<T: Real>(dw: &mut [T], g: &[T], x: &[T]) {
    for (row, &gv) in dw.chunks_exact_mut(x.len()).zip(g) {
        for (o, &xv) in row.iter_mut().zip(x) {
            *o += gv * xv;
        }
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Forward pass; returns the output in (0,1) and the tape for adjoints.
pub fn net_forward<T: Real>(params: &NetParams<T>, input: &[T]) -> Result<(Vec<T>, TapeRecord<T>)> {
    let s = params.shape;
    if input.len() != s.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "net input has {} entries, expected {}",
            input.len(),
            s.input_dim
        )));
    }
    let w = s.width;
    let d = &params.data;

    let mut u = vec![T::zero(); w];
    matvec(&d[s.w_in()..s.b_in()], w, s.input_dim, input, &mut u);
    for (uv, &b) in u.iter_mut().zip(&d[s.b_in()..s.b_in() + w]) {
        *uv = (*uv + b).tanh();
    }

    let mut block_inputs = Vec::with_capacity(s.depth + 1);
    let mut inner_tanh = Vec::with_capacity(s.depth);
    block_inputs.push(u.clone());
    let mut a = vec![T::zero(); w];
    let mut v = vec![T::zero(); w];
    for k in 0..s.depth {
        let b = s.block(k);
        let (w1, rest) = (&d[b..b + w * w], b + w * w);
        let (b1, rest) = (&d[rest..rest + w], rest + w);
        let (w2, rest) = (&d[rest..rest + w * w], rest + w * w);
        let b2 = &d[rest..rest + w];
        matvec(w1, w, w, &u, &mut a);
        for ((av, &bv), _) in a.iter_mut().zip(b1).zip(0..w) {
            *av = (*av + bv).tanh();
        }
        inner_tanh.push(a.clone());
        matvec(w2, w, w, &a, &mut v);
        for ((uv, &vv), &bv) in u.iter_mut().zip(&v).zip(b2) {
            *uv += vv + bv;
        }
        block_inputs.push(u.clone());
    }

    let mut z = vec![T::zero(); s.output_dim];
    matvec(&d[s.w_out()..s.b_out()], s.output_dim, w, &u, &mut z);
    for (zv, &b) in z.iter_mut().zip(&d[s.b_out()..s.b_out() + s.output_dim]) {
        *zv = sigmoid(*zv + b);
    }

    let tape = TapeRecord { input: input.to_vec(), block_inputs, inner_tanh, output: z.clone() };
    Ok((z, tape))
}

/// Gradients of a scalar loss with respect to every parameter and the
/// input, from the upstream adjoint `dL/dz`.
pub struct NetGrad<T> {
    pub data: Vec<T>,
    pub d_input: Vec<T>,
}

/// Exact reverse-mode adjoints of the recorded forward pass.
pub fn net_backward<T: Real>(
    params: &NetParams<T>,
    tape: &TapeRecord<T>,
    upstream: &[T],
) -> Result<NetGrad<T>> {
    let s = params.shape;
    if upstream.len() != s.output_dim {
        return Err(Error::DimensionMismatch(format!(
            "upstream has {} entries, expected {}",
            upstream.len(),
            s.output_dim
        )));
    }
    if tape.block_inputs.len() != s.depth + 1 || tape.inner_tanh.len() != s.depth {
        return Err(Error::DimensionMismatch("tape does not match network depth".into()));
    }
    let w = s.width;
    let d = &params.data;
    let mut grad = vec![T::zero(); s.param_count()];

    // output affine + sigmoid
    let d_pre_out: Vec<T> = upstream
        .iter()
        .zip(&tape.output)
        .map(|(&g, &z)| g * z * (T::one() - z))
        .collect();
    let u_last = &tape.block_inputs[s.depth];
    outer_acc(&mut grad[s.w_out()..s.b_out()], &d_pre_out, u_last);
    grad[s.b_out()..s.b_out() + s.output_dim].copy_from_slice(&d_pre_out);
    let mut d_u = vec![T::zero(); w];
    matvec_transpose_acc(&d[s.w_out()..s.b_out()], s.output_dim, w, &d_pre_out, &mut d_u);

    // residual blocks in reverse
    let mut d_a = vec![T::zero(); w];
    for k in (0..s.depth).rev() {
        let b = s.block(k);
        let w1 = &d[b..b + w * w];
        let w2 = &d[b + w * w + w..b + 2 * w * w + w];
        let u_k = &tape.block_inputs[k];
        let t_k = &tape.inner_tanh[k];

        // v = W2 t + b2, u_{k+1} = u_k + v  =>  d_v = d_u
        outer_acc(&mut grad[b + w * w + w..b + 2 * w * w + w], &d_u, t_k);
        for (g, &du) in grad[b + 2 * w * w + w..b + 2 * w * w + 2 * w].iter_mut().zip(&d_u) {
            *g += du;
        }
        let mut d_t = vec![T::zero(); w];
        matvec_transpose_acc(w2, w, w, &d_u, &mut d_t);
        for ((da, &dt), &t) in d_a.iter_mut().zip(&d_t).zip(t_k) {
            *da = dt * (T::one() - t * t);
        }
        outer_acc(&mut grad[b..b + w * w], &d_a, u_k);
        for (g, &da) in grad[b + w * w..b + w * w + w].iter_mut().zip(&d_a) {
            *g += da;
        }
        // skip connection: d_u_k = d_u_{k+1} + W1^T d_a
        matvec_transpose_acc(w1, w, w, &d_a, &mut d_u);
    }

    // input affine + tanh
    let u0 = &tape.block_inputs[0];
    let d_pre_in: Vec<T> = d_u
        .iter()
        .zip(u0)
        .map(|(&g, &u)| g * (T::one() - u * u))
        .collect();
    outer_acc(&mut grad[s.w_in()..s.b_in()], &d_pre_in, &tape.input);
    grad[s.b_in()..s.b_in() + w].copy_from_slice(&d_pre_in);
    let mut d_input = vec![T::zero(); s.input_dim];
    matvec_transpose_acc(&d[s.w_in()..s.b_in()], w, s.input_dim, &d_pre_in, &mut d_input);

    Ok(NetGrad { data: grad, d_input })
}
