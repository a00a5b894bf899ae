//! Minimal fixed-topology multilayer perceptrons.
//!
//! Networks are dense stacks with ReLU on hidden layers and a linear output
//! layer. Forward and backward passes are written out analytically (no
//! autodiff graph); the backward pass returns exact reverse-mode gradients
//! for the forward computation, with the ReLU subgradient at zero fixed to
//! zero so gradients are deterministic.

mod adam;
mod io;

pub use adam::{AdamHyper, AdamState, VecAdam};
pub use io::{load_params, save_params};

use rand::Rng;

use crate::{Error, Result};

/// Hidden-layer activation. Output layers are always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

/// Network topology: layer widths from input to output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    /// Validates and builds a spec. `layer_widths` runs input, hidden..., output.
    pub fn new(layer_widths: Vec<usize>) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output widths, got {:?}",
                layer_widths
            )));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "all layer widths must be >= 1, got {:?}",
                layer_widths
            )));
        }
        Ok(Self {
            layer_widths,
            activation: Activation::Relu,
        })
    }

    /// Input, `hidden_layers` hidden layers of `hidden_width`, output.
    pub fn with_hidden(input: usize, hidden_width: usize, hidden_layers: usize, output: usize) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden_layers + 2);
        widths.push(input);
        widths.extend(std::iter::repeat(hidden_width).take(hidden_layers));
        widths.push(output);
        Self::new(widths)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Number of weight layers (affine maps), one less than width entries.
    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

/// One dense layer: row-major `weights` with shape `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    /// `z = W x + b`
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for row in 0..self.out_dim {
            let w = &self.weights[row * self.in_dim..(row + 1) * self.in_dim];
            let mut acc = self.biases[row];
            for (wi, xi) in w.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// All parameters of one network. Doubles as the gradient container: a
/// gradient has exactly the same shape as the parameters it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    spec: MlpSpec,
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// Deterministic scaled-uniform initialization: weights drawn from
    /// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        let mut rng = crate::seeds::rng(seed);
        let mut layers = Vec::with_capacity(spec.n_layers());
        for l in 0..spec.n_layers() {
            let (fan_in, fan_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut layer = DenseLayer::zeros(fan_in, fan_out);
            for w in layer.weights.iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
            layers.push(layer);
        }
        Ok(Self { spec, layers })
    }

    /// All-zero parameters with the shape of `spec` (gradient/moment buffers).
    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = (0..spec.n_layers())
            .map(|l| DenseLayer::zeros(spec.layer_widths[l], spec.layer_widths[l + 1]))
            .collect();
        Self { spec, layers }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_dim() {
            return Err(Error::Dimension(format!(
                "input length {} != network input width {}",
                input.len(),
                self.spec.input_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite network input".into()));
        }
        Ok(())
    }

    /// Forward pass: ReLU on hidden layers, identity on the output layer.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if l != last {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Reverse-mode gradients of `cotangent . forward(input)` with respect to
    /// every parameter and to the input. The ReLU subgradient at 0 is 0.
    pub fn backward(&self, input: &[f64], cotangent: &[f64]) -> Result<(MlpParams, Vec<f64>)> {
        self.check_input(input)?;
        if cotangent.len() != self.spec.output_dim() {
            return Err(Error::Dimension(format!(
                "cotangent length {} != network output width {}",
                cotangent.len(),
                self.spec.output_dim()
            )));
        }

        // Forward with cached pre-activation signs and post-activation values.
        let last = self.layers.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if l != last {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(next.clone());
            std::mem::swap(&mut cur, &mut next);
        }

        // Backward.
        let mut grads = MlpParams::zeros(self.spec.clone());
        let mut delta = cotangent.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            // Post-activation output of this layer was zeroed where ReLU
            // clipped (hidden layers only); cached value 0 marks both the
            // clipped region and genuine zeros, and the subgradient is 0 at
            // both, so gating on the cached activation is exact.
            if l != last {
                for (d, &a) in delta.iter_mut().zip(&activations[l + 1]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let upstream = &activations[l];
            let g = &mut grads.layers[l];
            for row in 0..layer.out_dim {
                let d = delta[row];
                g.biases[row] += d;
                let gw = &mut g.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
                for (gwi, xi) in gw.iter_mut().zip(upstream) {
                    *gwi += d * xi;
                }
            }
            let mut prev = vec![0.0; layer.in_dim];
            for row in 0..layer.out_dim {
                let d = delta[row];
                let w = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
                for (pi, wi) in prev.iter_mut().zip(w) {
                    *pi += d * wi;
                }
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    /// Accumulate `scale * other` into self (shape must match).
    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) {
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            for (w, ow) in l.weights.iter_mut().zip(&o.weights) {
                *w += scale * ow;
            }
            for (b, ob) in l.biases.iter_mut().zip(&o.biases) {
                *b += scale * ob;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in self.layers.iter_mut() {
            for w in l.weights.iter_mut() {
                *w *= factor;
            }
            for b in l.biases.iter_mut() {
                *b *= factor;
            }
        }
    }

    /// Flat view of all parameters, weights before biases per layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_line_forward(params: &MlpParams, input: &[f64]) -> Vec<f64> {
        // Independent layer-by-layer evaluation used as the forward oracle.
        let mut x = input.to_vec();
        let n = params.layers.len();
        for (l, layer) in params.layers.iter().enumerate() {
            let mut y = vec![0.0; layer.out_dim];
            for i in 0..layer.out_dim {
                y[i] = layer.biases[i];
                for j in 0..layer.in_dim {
                    y[i] += layer.weights[i * layer.in_dim + j] * x[j];
                }
                if l + 1 != n && y[i] < 0.0 {
                    y[i] = 0.0;
                }
            }
            x = y;
        }
        x
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = MlpSpec::new(vec![2, 4, 1]).unwrap();
        let a = MlpParams::init(spec.clone(), 7).unwrap();
        let b = MlpParams::init(spec.clone(), 7).unwrap();
        assert_eq!(a, b);
        let c = MlpParams::init(spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_shapes_match_spec() {
        let spec = MlpSpec::new(vec![3, 8, 8, 2]).unwrap();
        let p = MlpParams::init(spec, 0).unwrap();
        let dims: Vec<(usize, usize)> = p.layers.iter().map(|l| (l.out_dim, l.in_dim)).collect();
        assert_eq!(dims, vec![(8, 3), (8, 8), (2, 8)]);
        assert!(p.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn zero_width_spec_rejected() {
        assert!(MlpSpec::new(vec![2, 0, 1]).is_err());
        assert!(MlpSpec::new(vec![3]).is_err());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = MlpSpec::new(vec![3, 5, 2]).unwrap();
        let p = MlpParams::zeros(spec);
        assert_eq!(p.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer_passes_through() {
        let spec = MlpSpec::new(vec![2, 2]).unwrap();
        let mut p = MlpParams::zeros(spec);
        p.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        // Single layer is the output layer: identity activation, negatives survive.
        assert_eq!(p.forward(&[1.0, -3.0]).unwrap(), vec![1.0, -3.0]);
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let spec = MlpSpec::new(vec![4, 7, 6, 3]).unwrap();
        let p = MlpParams::init(spec, 13).unwrap();
        let mut rng = crate::seeds::rng(99);
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = p.forward(&x).unwrap();
            let want = straight_line_forward(&p, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "forward {g} vs oracle {w}");
            }
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let spec = MlpSpec::new(vec![2, 2]).unwrap();
        let p = MlpParams::zeros(spec);
        assert!(p.forward(&[1.0]).is_err());
        assert!(p.forward(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn backward_zero_cotangent_gives_zero_grads() {
        let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
        let p = MlpParams::init(spec, 1).unwrap();
        let (g, gx) = p.backward(&[0.3, -0.1, 0.8], &[0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_linear_1x1_is_analytic() {
        // y = w*x + b, cotangent 1: dW = x, dInput = w, dB = 1.
        let spec = MlpSpec::new(vec![1, 1]).unwrap();
        let mut p = MlpParams::zeros(spec);
        p.layers[0].weights[0] = 2.5;
        let x0 = 0.7;
        let (g, gx) = p.backward(&[x0], &[1.0]).unwrap();
        assert!((g.layers[0].weights[0] - x0).abs() < 1e-15);
        assert!((g.layers[0].biases[0] - 1.0).abs() < 1e-15);
        assert!((gx[0] - 2.5).abs() < 1e-15);
    }

    /// Central finite differences over every parameter and input entry.
    fn finite_difference_check(widths: Vec<usize>, seed: u64) -> f64 {
        let spec = MlpSpec::new(widths).unwrap();
        let p = MlpParams::init(spec.clone(), seed).unwrap();
        let mut rng = crate::seeds::rng(seed ^ 0xabcd);
        let x: Vec<f64> = (0..spec.input_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let cot: Vec<f64> = (0..spec.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (grads, gx) = p.backward(&x, &cot).unwrap();

        let h = 1e-5;
        let scalar = |p: &MlpParams, x: &[f64]| -> f64 {
            p.forward(x).unwrap().iter().zip(&cot).map(|(y, c)| y * c).sum()
        };
        let mut max_rel = 0.0f64;
        let mut record = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max((analytic - numeric).abs() / denom);
        };
        for l in 0..p.layers.len() {
            for i in 0..p.layers[l].weights.len() {
                let mut pp = p.clone();
                pp.layers[l].weights[i] += h;
                let mut pm = p.clone();
                pm.layers[l].weights[i] -= h;
                record(grads.layers[l].weights[i], scalar(&pp, &x), scalar(&pm, &x));
            }
            for i in 0..p.layers[l].biases.len() {
                let mut pp = p.clone();
                pp.layers[l].biases[i] += h;
                let mut pm = p.clone();
                pm.layers[l].biases[i] -= h;
                record(grads.layers[l].biases[i], scalar(&pp, &x), scalar(&pm, &x));
            }
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            record(gx[i], scalar(&p, &xp), scalar(&p, &xm));
        }
        max_rel
    }

    #[test]
    fn backward_matches_finite_differences() {
        let err = finite_difference_check(vec![3, 6, 5, 2], 42);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn backward_matches_finite_differences_deep() {
        let err = finite_difference_check(vec![4, 8, 8, 8, 8, 3], 3);
        assert!(err < 1e-4, "max relative error {err}");
    }
}
