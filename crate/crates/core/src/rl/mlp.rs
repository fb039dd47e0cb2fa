//! Dense ELU network with hand-written backpropagation.
//!
//! All parameters live in one flat vector. Layer `l` stores its weights as an
//! `in × out` row-major block followed by `out` biases, so a batch forward pass
//! is `X · W + b` with `X` laid out `batch × in`.

use std::fmt::Debug;

use nalgebra::DMatrix;
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floating point type the network can run in.
pub trait Real: Float + Debug + Default + Send + Sync + std::iter::Sum + std::ops::AddAssign + 'static {
    /// `C = A·B + beta·C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], rsa: isize, csa: isize, b: &[Self], rsb: isize, csb: isize, beta: Self, c: &mut [Self], rsc: isize, csc: isize);

    fn cast_from(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], rsa: isize, csa: isize, b: &[f32], rsb: isize, csb: isize, beta: f32, c: &mut [f32], rsc: isize, csc: isize) {
        if m == 0 || n == 0 {
            return;
        }
        // SAFETY: callers pass slices whose extents cover the strided m×k, k×n and m×n views.
        unsafe { matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), rsc, csc) }
    }
    fn cast_from(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: isize, csa: isize, b: &[f64], rsb: isize, csb: isize, beta: f64, c: &mut [f64], rsc: isize, csc: isize) {
        if m == 0 || n == 0 {
            return;
        }
        // SAFETY: callers pass slices whose extents cover the strided m×k, k×n and m×n views.
        unsafe { matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), rsc, csc) }
    }
    fn cast_from(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

pub fn elu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of ELU written in terms of its output.
fn elu_grad_from_output<T: Real>(y: T) -> T {
    if y > T::zero() {
        T::one()
    } else {
        y + T::one()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    /// Layer widths, input first.
    pub dims: Vec<usize>,
    pub params: Vec<T>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Vec<T>>,
    pub batch: usize,
}

impl<T: Real> Mlp<T> {
    /// All-zero network with the given layer widths.
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self { dims: dims.to_vec(), params: vec![T::zero(); n] }
    }

    /// Orthogonal weights scaled by `hidden_gain` (or `output_gain` on the last
    /// layer), zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(dims: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(dims);
        let layers = net.num_layers();
        for l in 0..layers {
            let (inp, out) = (dims[l], dims[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let q = orthogonal_matrix(inp, out, rng);
            let (w, _) = net.layer_range(l);
            for i in 0..inp {
                for j in 0..out {
                    net.params[w.start + i * out + j] = T::cast_from(gain * q[(i, j)]);
                }
            }
        }
        net
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Index ranges of layer `l`'s weights and biases in `params`.
    pub fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = self.dims.windows(2).take(l).map(|w| w[0] * w[1] + w[1]).sum();
        let (inp, out) = (self.dims[l], self.dims[l + 1]);
        let w_end = start + inp * out;
        (start..w_end, w_end..w_end + out)
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        if x.len() != batch * self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "network expects {} inputs per row, got {} values for {batch} rows",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Batch forward pass; returns `batch × output_dim` row-major.
    pub fn forward(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        Ok(self.forward_cached(x, batch)?.acts.pop().unwrap())
    }

    pub fn forward_cached(&self, x: &[T], batch: usize) -> Result<MlpCache<T>> {
        self.check_input(x, batch)?;
        let layers = self.num_layers();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (inp, out) = (self.dims[l], self.dims[l + 1]);
            let (w, b) = self.layer_range(l);
            let bias = &self.params[b];
            let mut y = Vec::with_capacity(batch * out);
            for _ in 0..batch {
                y.extend_from_slice(bias);
            }
            T::gemm(batch, inp, out, &acts[l], inp as isize, 1, &self.params[w], out as isize, 1, T::one(), &mut y, out as isize, 1);
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = elu(*v));
            }
            acts.push(y);
        }
        Ok(MlpCache { acts, batch })
    }

    /// Accumulate parameter gradients into `grad` (same layout as `params`)
    /// given `d loss / d output`. Returns `d loss / d input`.
    pub fn backward(&self, cache: &MlpCache<T>, grad_out: &[T], grad: &mut [T]) -> Vec<T> {
        let batch = cache.batch;
        let mut delta = grad_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (inp, out) = (self.dims[l], self.dims[l + 1]);
            let (w, b) = self.layer_range(l);
            let x = &cache.acts[l];
            // dW += Xᵀ · δ
            T::gemm(inp, batch, out, x, 1, inp as isize, &delta, out as isize, 1, T::one(), &mut grad[w.clone()], out as isize, 1);
            let gb = &mut grad[b];
            for row in delta.chunks_exact(out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += *d;
                }
            }
            // dX = δ · Wᵀ
            let mut dx = vec![T::zero(); batch * inp];
            T::gemm(batch, out, inp, &delta, out as isize, 1, &self.params[w], 1, out as isize, T::zero(), &mut dx, inp as isize, 1);
            if l > 0 {
                for (d, y) in dx.iter_mut().zip(x) {
                    *d = *d * elu_grad_from_output(*y);
                }
            }
            delta = dx;
        }
        delta
    }

    /// Same network in another float type.
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp { dims: self.dims.clone(), params: self.params.iter().map(|v| U::cast_from(v.as_f64())).collect() }
    }
}

/// `rows × cols` matrix with orthonormal columns (or rows, when wider than tall).
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix so the distribution is uniform over orthogonal matrices.
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn elu_values() {
        assert!((elu(-1.0f64) - (-0.632_120_558_8)).abs() < 1e-9);
        assert_eq!(elu(2.0f64), 2.0);
        assert_eq!(elu(0.0f64), 0.0);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f32>::zeros(&[5, 8, 3]);
        let y = net.forward(&[1.0; 10], 2).unwrap();
        assert_eq!(y, vec![0.0; 6]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Mlp::<f64>::zeros(&[3, 3]);
        for i in 0..3 {
            net.params[i * 3 + i] = 1.0;
        }
        assert_eq!(net.forward(&[0.5, -2.0, 7.0], 1).unwrap(), vec![0.5, -2.0, 7.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = Mlp::<f32>::zeros(&[4, 2]);
        assert!(matches!(net.forward(&[1.0; 3], 1), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn batch_matches_per_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::<f32>::orthogonal(&[6, 16, 16, 2], 2f64.sqrt(), 1.0, &mut rng);
        let x: Vec<f32> = (0..6 * 9).map(|i| (i as f32 * 0.37).sin()).collect();
        let batched = net.forward(&x, 9).unwrap();
        for b in 0..9 {
            let single = net.forward(&x[b * 6..(b + 1) * 6], 1).unwrap();
            for j in 0..2 {
                assert!((single[j] - batched[b * 2 + j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn orthogonal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (r, c) in [(7, 4), (4, 7), (5, 5)] {
            let q = orthogonal_matrix(r, c, &mut rng);
            let g = if r >= c { q.transpose() * &q } else { &q * q.transpose() };
            let n = r.min(c);
            assert!((g - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::<f64>::orthogonal(&[3, 5, 4, 2], 1.4, 1.0, &mut rng);
        for p in net.params.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let batch = 4;
        let x: Vec<f64> = (0..batch * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..batch * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |n: &Mlp<f64>| n.forward(&x, batch).unwrap().iter().zip(&w).map(|(y, w)| y * w).sum::<f64>();

        let cache = net.forward_cached(&x, batch).unwrap();
        let mut grad = vec![0.0; net.params.len()];
        net.backward(&cache, &w, &mut grad);
        for i in 0..net.params.len() {
            let orig = net.params[i];
            net.params[i] = orig + 1e-6;
            let lp = loss(&net);
            net.params[i] = orig - 1e-6;
            let lm = loss(&net);
            net.params[i] = orig;
            let fd = (lp - lm) / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }
}
