//! Fully connected tanh network over a flat parameter vector.

use crate::scalar::Real;

/// Layer widths `[n_in, w, …, w, n_out]`; tanh after every layer but the
/// last. Each layer stores its weight matrix (row-major, out × in)
/// followed by its bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

/// Activations of one forward pass; `acts[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    pub acts: Vec<Vec<T>>,
    delta: Vec<T>,
    back: Vec<T>,
}

impl Mlp {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let mut offsets = Vec::with_capacity(dims.len());
        let mut off = 0;
        for w in dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        offsets.push(off);
        Self { dims, offsets }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        *self.offsets.last().expect("non-empty")
    }

    /// Range of layer `l`'s weights and biases inside θ.
    pub fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    pub fn tape<T: Real>(&self) -> Tape<T> {
        Tape {
            acts: self.dims.iter().map(|&n| vec![T::zero(); n]).collect(),
            delta: Vec::new(),
            back: Vec::new(),
        }
    }

    /// Runs the network on `tape.acts[0]`; the output is left in the last
    /// activation.
    pub fn forward<T: Real>(&self, theta: &[T], tape: &mut Tape<T>) {
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.offsets[l];
            let (w, b) = theta[off..off + n_in * n_out + n_out].split_at(n_in * n_out);
            let (before, after) = tape.acts.split_at_mut(l + 1);
            let x = &before[l];
            let y = &mut after[0];
            for (o, yo) in y.iter_mut().enumerate() {
                let acc = b[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
                *yo = if l < last { tanh(acc) } else { acc };
            }
        }
    }

    pub fn output<'a, T>(&self, tape: &'a Tape<T>) -> &'a [T] {
        tape.acts.last().expect("non-empty")
    }

    /// Reverse pass for the cotangent `g_out` of the last forward call:
    /// writes the parameter cotangent into `g_theta` and the input
    /// cotangent into `g_in`.
    pub fn backward<T: Real>(&self, theta: &[T], tape: &mut Tape<T>, g_out: &[T], g_theta: &mut [T], g_in: &mut [T]) {
        let Tape { acts, delta, back } = tape;
        delta.clear();
        delta.extend_from_slice(g_out);
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.offsets[l];
            let x = &acts[l];
            {
                let (gw, gb) = g_theta[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] = d;
                    for (g, &xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x.iter()) {
                        *g = d * xi;
                    }
                }
            }
            back.clear();
            back.resize(n_in, T::zero());
            let w = &theta[off..off + n_in * n_out];
            for (o, &d) in delta.iter().enumerate() {
                if d != T::zero() {
                    for (bi, &wi) in back.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *bi += d * wi;
                    }
                }
            }
            if l > 0 {
                for (bi, &a) in back.iter_mut().zip(x.iter()) {
                    *bi *= T::one() - a * a;
                }
                std::mem::swap(delta, back);
            } else {
                g_in.copy_from_slice(back);
            }
        }
    }
}

/// `tanh` through one `exp`; absolute error near machine epsilon.
#[inline]
fn tanh<T: Real>(x: T) -> T {
    let two = T::lit(2.0);
    if x.abs() > T::lit(20.0) {
        return x.signum();
    }
    T::one() - two / ((two * x).exp() + T::one())
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, ra) = a.split_at(a.len() - a.len() % 8);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(8).zip(cb.chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut sum = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}
