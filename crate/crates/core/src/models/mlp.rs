//! Payment network: `d -> ceil(d/2) -> ceil(d/4) -> 1`, ReLU hidden layers and
//! a softplus output so that payments stay positive.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use core::ops::Range;

use super::Matrix;
use crate::error::{invalid, Error, Result};
use crate::exec::stream_rng;
use crate::math::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpPolicy {
    layer_sizes: Vec<usize>,
    layers: Vec<DenseLayer>,
}

/// Hidden widths for a `d`-dimensional context, at least two nodes each.
pub fn hidden_sizes(d: usize) -> (usize, usize) {
    (d.div_ceil(2).max(2), d.div_ceil(4).max(2))
}

fn architecture(d: usize) -> Vec<usize> {
    let (h1, h2) = hidden_sizes(d);
    vec![d, h1, h2, 1]
}

impl MlpPolicy {
    /// Glorot-uniform weights `U(+-sqrt(6 / (fan_in + fan_out)))`, zero biases.
    pub fn new(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("MLP input dimension must be at least 1"));
        }
        let sizes = architecture(d);
        let mut rng = stream_rng(seed, 0);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                DenseLayer {
                    weights: (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self { layer_sizes: sizes, layers })
    }

    pub fn zeros(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("MLP input dimension must be at least 1"));
        }
        let sizes = architecture(d);
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer { weights: vec![0.0; w[0] * w[1]], biases: vec![0.0; w[1]] })
            .collect();
        Ok(Self { layer_sizes: sizes, layers })
    }

    /// Builds a network from explicit layers; the last layer must have one output.
    pub fn from_layers(layer_sizes: Vec<usize>, layers: Vec<DenseLayer>) -> Result<Self> {
        if layer_sizes.len() < 2 || layers.len() != layer_sizes.len() - 1 {
            return Err(invalid("layer_sizes must list one more entry than layers"));
        }
        if *layer_sizes.last().unwrap() != 1 || layer_sizes.contains(&0) {
            return Err(invalid("layer sizes must be positive with a single output"));
        }
        for (l, layer) in layers.iter().enumerate() {
            let (i, o) = (layer_sizes[l], layer_sizes[l + 1]);
            if layer.weights.len() != i * o || layer.biases.len() != o {
                return Err(invalid(alloc::format!("layer {l} shape does not match {i}x{o}")));
            }
        }
        Ok(Self { layer_sizes, layers })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dimension(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn set_output_bias(&mut self, bias: f64) {
        self.layers.last_mut().unwrap().biases[0] = bias;
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dimension() {
            return Err(Error::DimensionMismatch { expected: self.input_dimension(), found: x.len() });
        }
        Ok(())
    }

    // Pre-activations of every layer.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut input: Vec<f64> = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let fan_in = self.layer_sizes[l];
            let z: Vec<f64> = layer
                .biases
                .iter()
                .enumerate()
                .map(|(o, b)| b + crate::math::dot(&layer.weights[o * fan_in..(o + 1) * fan_in], &input))
                .collect();
            input = z.iter().map(|v| v.max(0.0)).collect();
            pre.push(z);
        }
        pre
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let pre = self.pre_activations(x);
        Ok(softplus(pre.last().unwrap()[0]))
    }

    /// Gradients of `upstream * forward(x)` with respect to every parameter and
    /// to the input. The ReLU subgradient at 0 is 0.
    pub fn backward(&self, x: &[f64], upstream: f64) -> Result<MlpGradients> {
        self.check(x)?;
        let pre = self.pre_activations(x);
        let nl = self.layers.len();
        let mut grads = MlpGradients::zeros_like(self);
        let mut delta = vec![upstream * sigmoid(pre[nl - 1][0])];
        for l in (0..nl).rev() {
            let fan_in = self.layer_sizes[l];
            let activation: Vec<f64> = if l == 0 { x.to_vec() } else { pre[l - 1].iter().map(|v| v.max(0.0)).collect() };
            let layer = &self.layers[l];
            let mut back = vec![0.0; fan_in];
            for (o, &dz) in delta.iter().enumerate() {
                grads.biases[l][o] = dz;
                let row = &layer.weights[o * fan_in..(o + 1) * fan_in];
                let grow = &mut grads.weights[l][o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    grow[i] = dz * activation[i];
                    back[i] += row[i] * dz;
                }
            }
            if l == 0 {
                grads.input = back;
            } else {
                delta = back.iter().zip(&pre[l - 1]).map(|(g, z)| if *z > 0.0 { *g } else { 0.0 }).collect();
            }
        }
        Ok(grads)
    }

    /// Forward pass over rows `range` of `xs`.
    pub fn forward_rows(&self, xs: &Matrix, range: Range<usize>) -> Result<Vec<f64>> {
        self.check(xs.row(0))?;
        let mut buf = Buffers::new(&self.layer_sizes);
        Ok(range.map(|i| softplus(self.pre_into(xs.row(i), &mut buf))).collect())
    }

    /// Sum over rows `range` of `xs` of the parameter gradients of
    /// `upstream[i] * forward(x_i)`. Input gradients are left at zero.
    pub fn gradient_rows(&self, xs: &Matrix, range: Range<usize>, upstream: &[f64]) -> Result<MlpGradients> {
        self.check(xs.row(0))?;
        let mut buf = Buffers::new(&self.layer_sizes);
        let mut grads = MlpGradients::zeros_like(self);
        let nl = self.layers.len();
        for i in range {
            let x = xs.row(i);
            let z = self.pre_into(x, &mut buf);
            buf.delta[nl - 1][0] = upstream[i] * sigmoid(z);
            for l in (0..nl).rev() {
                let fan_in = self.layer_sizes[l];
                let layer = &self.layers[l];
                let (lower, upper) = buf.delta.split_at_mut(l);
                let delta = &upper[0];
                let activation: &[f64] = if l == 0 { x } else { &buf.act[l - 1] };
                if l > 0 {
                    lower[l - 1].iter_mut().for_each(|v| *v = 0.0);
                }
                for (o, &dz) in delta.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    grads.biases[l][o] += dz;
                    let row = &layer.weights[o * fan_in..(o + 1) * fan_in];
                    let grow = &mut grads.weights[l][o * fan_in..(o + 1) * fan_in];
                    for k in 0..fan_in {
                        grow[k] += dz * activation[k];
                    }
                    if l > 0 {
                        for k in 0..fan_in {
                            lower[l - 1][k] += row[k] * dz;
                        }
                    }
                }
                if l > 0 {
                    for (g, z) in lower[l - 1].iter_mut().zip(&buf.pre[l - 1]) {
                        if *z <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
            }
        }
        Ok(grads)
    }

    // Fills the buffers' pre-activations and activations; returns the output
    // pre-activation.
    fn pre_into(&self, x: &[f64], buf: &mut Buffers) -> f64 {
        for (l, layer) in self.layers.iter().enumerate() {
            let fan_in = self.layer_sizes[l];
            let (done, rest) = buf.act.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &done[l - 1] };
            for (o, bias) in layer.biases.iter().enumerate() {
                let z = bias + crate::math::dot(&layer.weights[o * fan_in..(o + 1) * fan_in], input);
                buf.pre[l][o] = z;
                rest[0][o] = z.max(0.0);
            }
        }
        buf.pre[self.layers.len() - 1][0]
    }

    /// `W <- W - step * g`.
    pub fn apply_gradient(&mut self, grads: &MlpGradients, step: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
            layer.weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= step * g);
            layer.biases.iter_mut().zip(gb).for_each(|(b, g)| *b -= step * g);
        }
    }

    /// All parameters, layer by layer (weights then biases).
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let total: usize = self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum();
        if params.len() != total {
            return Err(Error::LengthMismatch { expected: total, found: params.len() });
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
        Ok(())
    }
}

struct Buffers {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Buffers {
    fn new(sizes: &[usize]) -> Self {
        let per_layer = || sizes[1..].iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Self { pre: per_layer(), act: per_layer(), delta: per_layer() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// d output / d input.
    pub input: Vec<f64>,
}

impl MlpGradients {
    pub fn zeros_like(mlp: &MlpPolicy) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: mlp.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            input: vec![0.0; mlp.input_dimension()],
        }
    }

    pub fn add_assign(&mut self, other: &MlpGradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.input.iter_mut().zip(&other.input).for_each(|(x, y)| *x += y);
    }

    /// Parameter gradients in [`MlpPolicy::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn architecture_sizes() {
        assert_eq!(architecture(8), vec![8, 4, 2, 1]);
        assert_eq!(architecture(6), vec![6, 3, 2, 1]);
        assert_eq!(architecture(1), vec![1, 2, 2, 1]);
        let m = MlpPolicy::new(5, 1).unwrap();
        assert_eq!(m.layer_sizes(), &[5, 3, 2, 1]);
    }

    #[test]
    fn zero_network_outputs_ln2() {
        let m = MlpPolicy::zeros(4).unwrap();
        let y = m.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert!((y - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn hand_built_chain() {
        // 1-1-1-1: z1 = 2x + 0.5, z2 = -1.5 relu(z1) + 4, z3 = 0.25 relu(z2) - 1.
        let layers = vec![
            DenseLayer { weights: vec![2.0], biases: vec![0.5] },
            DenseLayer { weights: vec![-1.5], biases: vec![4.0] },
            DenseLayer { weights: vec![0.25], biases: vec![-1.0] },
        ];
        let m = MlpPolicy::from_layers(vec![1, 1, 1, 1], layers).unwrap();
        // x = 0.75: z1 = 2.0, z2 = 1.0, z3 = -0.75, out = ln(1 + e^-0.75).
        let expected = libm::log(1.0 + libm::exp(-0.75));
        assert!((m.forward(&[0.75]).unwrap() - expected).abs() < 1e-12);
        // x = 2: z1 = 4.5, z2 = -2.75 -> relu 0, z3 = -1.
        assert!((m.forward(&[2.0]).unwrap() - libm::log(1.0 + libm::exp(-1.0))).abs() < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = MlpPolicy::new(6, 3).unwrap();
        let g = m.backward(&[0.1, 0.2, -0.3, 0.4, 1.0, -1.0], 0.0).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
        assert!(g.input.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_network_output_bias_gradient() {
        let m = MlpPolicy::zeros(3).unwrap();
        let g = m.backward(&[0.3, -0.2, 0.9], 2.5).unwrap();
        assert!((g.biases[2][0] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn positive_for_random_networks() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for s in 0..1000u64 {
            let mut m = MlpPolicy::new(4, s).unwrap();
            let scale: f64 = 2.0;
            let p: Vec<f64> = m.parameters().iter().map(|_| { let z: f64 = StandardNormal.sample(&mut rng); scale * z }).collect();
            m.set_parameters(&p).unwrap();
            let x: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y = m.forward(&x).unwrap();
            assert!(y > 0.0 && y.is_finite());
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for s in 0..40u64 {
            let d = 3 + (s as usize % 4);
            let mut m = MlpPolicy::new(d, s).unwrap();
            let p: Vec<f64> = m.parameters().iter().map(|_| StandardNormal.sample(&mut rng)).collect();
            m.set_parameters(&p).unwrap();
            let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            // Finite differences are meaningless across a ReLU kink.
            if m.pre_activations(&x).iter().flatten().any(|z| z.abs() < 1e-3) {
                continue;
            }
            let up = 1.7;
            let g = m.backward(&x, up).unwrap();
            let analytic = g.flatten();
            let base = m.parameters();
            let h = 1e-5;
            for (k, &a) in analytic.iter().enumerate() {
                let mut p = base.clone();
                p[k] += h;
                let mut mp = m.clone();
                mp.set_parameters(&p).unwrap();
                let fp = mp.forward(&x).unwrap();
                p[k] -= 2.0 * h;
                mp.set_parameters(&p).unwrap();
                let fm = mp.forward(&x).unwrap();
                let fd = up * (fp - fm) / (2.0 * h);
                let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-8);
                assert!(rel < 1e-4 || (fd - a).abs() < 1e-9, "seed {s} param {k}: fd {fd} vs {a}");
            }
            for i in 0..d {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = up * (m.forward(&xp).unwrap() - m.forward(&xm).unwrap()) / (2.0 * h);
                assert!((fd - g.input[i]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn batch_paths_match_single_record_paths() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for s in 0..10u64 {
            let d = 2 + s as usize;
            let mut m = MlpPolicy::new(d, s).unwrap();
            let p: Vec<f64> = m.parameters().iter().map(|_| StandardNormal.sample(&mut rng)).collect();
            m.set_parameters(&p).unwrap();
            let n = 30;
            let data: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let xs = Matrix::new(data, n, d).unwrap();
            let up: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let fwd = m.forward_rows(&xs, 0..n).unwrap();
            let mut expected = MlpGradients::zeros_like(&m);
            for i in 0..n {
                assert_eq!(fwd[i], m.forward(xs.row(i)).unwrap());
                let mut g = m.backward(xs.row(i), up[i]).unwrap();
                g.input.iter_mut().for_each(|v| *v = 0.0);
                expected.add_assign(&g);
            }
            let batch = m.gradient_rows(&xs, 0..n, &up).unwrap();
            for (a, b) in batch.flatten().iter().zip(expected.flatten()) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn dimension_checked() {
        let m = MlpPolicy::zeros(3).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.backward(&[1.0], 1.0), Err(Error::DimensionMismatch { .. })));
    }
}
