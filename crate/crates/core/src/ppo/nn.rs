//! Small fully-connected network: tanh hidden layers, linear output.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as a
//! row-major `out × in` weight block followed by its `out` biases.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    /// Layer inputs; `acts[0]` is the network input.
    acts: Vec<Vec<f64>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Gaussian init scaled by `1/sqrt(fan_in)`; the output layer is further
    /// scaled by `out_gain`. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs an input and an output layer");
        let mut params = Vec::with_capacity(param_count(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let gain = if l + 1 == layers { out_gain } else { 1.0 };
            let scale = gain / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = StandardNormal.sample(rng);
                params.push(z * scale);
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Biases of the output layer, the last `output_dim` parameters.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let start = self.params.len() - self.output_dim();
        &mut self.params[start..]
    }

    fn layer(&self, x: &[f64], offset: usize, n_in: usize, n_out: usize, out: &mut Vec<f64>) {
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        out.clear();
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            out.push(b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = Cache::default();
        self.forward_cached(x, &mut cache)
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut Cache) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.sizes[0]);
        let layers = self.sizes.len() - 1;
        cache.acts.clear();
        cache.acts.push(x.to_vec());
        let mut offset = 0;
        let mut out = Vec::new();
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            self.layer(&cache.acts[l], offset, n_in, n_out, &mut out);
            offset += n_in * n_out + n_out;
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
                cache.acts.push(out.clone());
            }
        }
        out
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
    pub fn backward(&self, cache: &Cache, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut o = 0;
        for l in 0..layers {
            offsets.push(o);
            o += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.acts[l];
            for j in 0..n_out {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                let g = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += dj * xi;
                }
                grad[off + n_in * n_out + j] += dj;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for j in 0..n_out {
                    let dj = delta[j];
                    if dj == 0.0 {
                        continue;
                    }
                    for (p, wi) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *p += dj * wi;
                    }
                }
                // Input of layer l is tanh output of layer l-1.
                for (p, a) in prev.iter_mut().zip(x) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}
