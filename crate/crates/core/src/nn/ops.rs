//! Layer kernels over flat buffers.
//!
//! Sequence activations are stored position-major, channel-minor:
//! element `(t, c)` of an `L x C` tensor lives at `t * C + c`. Convolution
//! weights are `F x K x C_in` in the same row-major order, so the receptive
//! field of output position `t` is the contiguous slice
//! `x[t*S*C .. (t*S + K)*C]` and lines up with one filter's weights.
//!
//! Everything here is generic over the float type so gradient checks can
//! run at both single and double precision.

use num_traits::Float;

use super::NnError;

/// Output length of a valid (unpadded) window of `window` with `stride`.
pub fn window_out_len(len: usize, window: usize, stride: usize) -> Option<usize> {
    (window >= 1 && stride >= 1 && len >= window).then(|| (len - window) / stride + 1)
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn axpy<T: Float>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub len: usize,
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn out_len(&self) -> Result<usize, NnError> {
        window_out_len(self.len, self.kernel, self.stride).ok_or_else(|| {
            NnError::Shape(format!("conv1d: input length {} shorter than kernel {}", self.len, self.kernel))
        })
    }

    pub fn weight_len(&self) -> usize {
        self.filters * self.kernel * self.in_channels
    }
}

/// Pre-activation convolution output, `out_len x filters`.
pub fn conv1d_forward<T: Float>(x: &[T], w: &[T], b: &[T], g: &ConvGeometry) -> Result<Vec<T>, NnError> {
    let out_len = g.out_len()?;
    let field = g.kernel * g.in_channels;
    debug_assert_eq!(x.len(), g.len * g.in_channels);
    debug_assert_eq!(w.len(), g.weight_len());
    let mut out = vec![T::zero(); out_len * g.filters];
    for t in 0..out_len {
        let start = t * g.stride * g.in_channels;
        let window = &x[start..start + field];
        let row = &mut out[t * g.filters..(t + 1) * g.filters];
        for (f, o) in row.iter_mut().enumerate() {
            *o = b[f] + dot(&w[f * field..(f + 1) * field], window);
        }
    }
    Ok(out)
}

/// Gradients of a convolution given the gradient at its pre-activation
/// output. Returns `(d_input, d_weights, d_bias)`.
pub fn conv1d_backward<T: Float>(x: &[T], w: &[T], grad_out: &[T], g: &ConvGeometry) -> (Vec<T>, Vec<T>, Vec<T>) {
    let out_len = grad_out.len() / g.filters;
    let field = g.kernel * g.in_channels;
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = vec![T::zero(); g.filters];
    for t in 0..out_len {
        let start = t * g.stride * g.in_channels;
        for f in 0..g.filters {
            let go = grad_out[t * g.filters + f];
            if go == T::zero() {
                continue;
            }
            gb[f] = gb[f] + go;
            axpy(go, &x[start..start + field], &mut gw[f * field..(f + 1) * field]);
            axpy(go, &w[f * field..(f + 1) * field], &mut gx[start..start + field]);
        }
    }
    (gx, gw, gb)
}

pub fn relu_in_place<T: Float>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `grad` by the sign of the ReLU output it flows back through.
pub fn relu_backward_in_place<T: Float>(output: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(output) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Windowed max over positions, per channel. Returns the output and, for
/// each output element, the input position holding the maximum (the first
/// one on ties).
pub fn maxpool1d_forward<T: Float>(
    x: &[T],
    len: usize,
    channels: usize,
    pool: usize,
    stride: usize,
) -> Result<(Vec<T>, Vec<usize>), NnError> {
    let out_len = window_out_len(len, pool, stride)
        .ok_or_else(|| NnError::Shape(format!("max_pool1d: input length {len} shorter than pool {pool}")))?;
    let mut out = Vec::with_capacity(out_len * channels);
    let mut argmax = Vec::with_capacity(out_len * channels);
    for t in 0..out_len {
        for c in 0..channels {
            let mut best = t * stride;
            for p in t * stride + 1..t * stride + pool {
                if x[p * channels + c] > x[best * channels + c] {
                    best = p;
                }
            }
            out.push(x[best * channels + c]);
            argmax.push(best);
        }
    }
    Ok((out, argmax))
}

pub fn maxpool1d_backward<T: Float>(grad_out: &[T], argmax: &[usize], len: usize, channels: usize) -> Vec<T> {
    let mut gx = vec![T::zero(); len * channels];
    for (i, (&g, &pos)) in grad_out.iter().zip(argmax).enumerate() {
        let c = i % channels;
        gx[pos * channels + c] = gx[pos * channels + c] + g;
    }
    gx
}

pub fn global_avg_pool_forward<T: Float>(x: &[T], len: usize, channels: usize) -> Result<Vec<T>, NnError> {
    if len == 0 {
        return Err(NnError::Shape("global_avg_pool1d: empty input".into()));
    }
    let mut out = vec![T::zero(); channels];
    for row in x.chunks_exact(channels) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
    let n = T::from(len).expect("length fits in float");
    Ok(out.into_iter().map(|s| s / n).collect())
}

pub fn global_avg_pool_backward<T: Float>(grad_out: &[T], len: usize) -> Vec<T> {
    let n = T::from(len).expect("length fits in float");
    let scaled: Vec<T> = grad_out.iter().map(|&g| g / n).collect();
    let mut gx = Vec::with_capacity(len * grad_out.len());
    for _ in 0..len {
        gx.extend_from_slice(&scaled);
    }
    gx
}

/// Logits `w . x + b` for a `units x inputs` weight matrix.
pub fn dense_forward<T: Float>(x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let inputs = x.len();
    b.iter().enumerate().map(|(u, &bu)| bu + dot(&w[u * inputs..(u + 1) * inputs], x)).collect()
}

pub fn dense_backward<T: Float>(x: &[T], w: &[T], grad_logits: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let inputs = x.len();
    let mut gx = vec![T::zero(); inputs];
    let mut gw = vec![T::zero(); w.len()];
    for (u, &g) in grad_logits.iter().enumerate() {
        axpy(g, x, &mut gw[u * inputs..(u + 1) * inputs]);
        axpy(g, &w[u * inputs..(u + 1) * inputs], &mut gx);
    }
    (gx, gw, grad_logits.to_vec())
}

pub fn softmax<T: Float>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid<T: Float>(z: &[T]) -> Vec<T> {
    z.iter()
        .map(|&v| {
            // split by sign so exp never overflows
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        })
        .collect()
}
