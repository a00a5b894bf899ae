//! Bias-corrected Adam, over whole networks and over flat vectors.

use super::MlpParams;
use crate::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// One bias-corrected update over parallel slices. `t` is the 1-based step index.
fn update_slice(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, h: &AdamHyper) {
    let bc1 = 1.0 - h.beta1.powi(t as i32);
    let bc2 = 1.0 - h.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
    }
}

/// Adam state for a full [`MlpParams`]: first/second moments with the same
/// shape as the parameters, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: MlpParams,
    second_moment: MlpParams,
    step_count: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(spec: super::MlpSpec, hyper: AdamHyper) -> Self {
        Self {
            first_moment: MlpParams::zeros(spec.clone()),
            second_moment: MlpParams::zeros(spec),
            step_count: 0,
            hyper,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one Adam step of `grads` to `params`. Rejects non-finite
    /// gradients without touching parameters or moments.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if params.spec() != grads.spec() || params.spec() != self.first_moment.spec() {
            return Err(Error::Dimension(
                "adam step: parameter, gradient, and moment shapes disagree".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Numerical("adam step: non-finite gradient".into()));
        }
        self.step_count += 1;
        for l in 0..params.layers.len() {
            update_slice(
                &mut params.layers[l].weights,
                &grads.layers[l].weights,
                &mut self.first_moment.layers[l].weights,
                &mut self.second_moment.layers[l].weights,
                self.step_count,
                &self.hyper,
            );
            update_slice(
                &mut params.layers[l].biases,
                &grads.layers[l].biases,
                &mut self.first_moment.layers[l].biases,
                &mut self.second_moment.layers[l].biases,
                self.step_count,
                &self.hyper,
            );
        }
        Ok(())
    }
}

/// Adam over a plain parameter vector (used for the policy's log-std).
#[derive(Debug, Clone)]
pub struct VecAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    step_count: u64,
    pub hyper: AdamHyper,
}

impl VecAdam {
    pub fn new(dim: usize, hyper: AdamHyper) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step_count: 0,
            hyper,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension("vec adam: length mismatch".into()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("vec adam: non-finite gradient".into()));
        }
        self.step_count += 1;
        update_slice(params, grads, &mut self.m, &mut self.v, self.step_count, &self.hyper);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;

    fn tiny_net(seed: u64) -> MlpParams {
        MlpParams::init(MlpSpec::new(vec![2, 3, 1]).unwrap(), seed).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = tiny_net(5);
        let before = p.clone();
        let g = MlpParams::zeros(p.spec().clone());
        let mut adam = AdamState::new(p.spec().clone(), AdamHyper::default());
        adam.step(&mut p, &g).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // With m = g, v = g^2 after bias correction, the first update is
        // -lr * g / (|g| + eps) which is -lr * sign(g) up to eps rounding.
        let spec = MlpSpec::new(vec![1, 1]).unwrap();
        let mut p = MlpParams::zeros(spec.clone());
        let mut g = MlpParams::zeros(spec.clone());
        g.layers[0].weights[0] = 0.37;
        g.layers[0].biases[0] = -2.0;
        let hyper = AdamHyper::with_lr(1e-3);
        let mut adam = AdamState::new(spec, hyper);
        adam.step(&mut p, &g).unwrap();
        assert!((p.layers[0].weights[0] - (-1e-3)).abs() < 1e-9);
        assert!((p.layers[0].biases[0] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn nan_gradient_rejected_without_side_effects() {
        let mut p = tiny_net(5);
        let before = p.clone();
        let mut g = MlpParams::zeros(p.spec().clone());
        g.layers[0].weights[0] = f64::NAN;
        let mut adam = AdamState::new(p.spec().clone(), AdamHyper::default());
        assert!(adam.step(&mut p, &g).is_err());
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 0);
    }

    /// Straight-line Adam reimplementation over flattened parameters.
    fn reference_adam_trace(p0: &[f64], grads: &[Vec<f64>], h: &AdamHyper) -> Vec<f64> {
        let mut p = p0.to_vec();
        let mut m = vec![0.0; p.len()];
        let mut v = vec![0.0; p.len()];
        for (step, g) in grads.iter().enumerate() {
            let t = (step + 1) as i32;
            for i in 0..p.len() {
                m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
                v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
                let mh = m[i] / (1.0 - h.beta1.powi(t));
                let vh = v[i] / (1.0 - h.beta2.powi(t));
                p[i] -= h.lr * mh / (vh.sqrt() + h.eps);
            }
        }
        p
    }

    #[test]
    fn sequential_steps_match_reference_trace() {
        use rand::Rng;
        let spec = MlpSpec::new(vec![3, 4, 2]).unwrap();
        let mut p = MlpParams::init(spec.clone(), 11).unwrap();
        let p0 = p.flatten();
        let hyper = AdamHyper::with_lr(1e-2);
        let mut adam = AdamState::new(spec.clone(), hyper);

        let mut rng = crate::seeds::rng(77);
        let mut traces = Vec::new();
        for _ in 0..2 {
            let mut g = MlpParams::zeros(spec.clone());
            for l in g.layers.iter_mut() {
                for w in l.weights.iter_mut() {
                    *w = rng.random_range(-1.0..1.0);
                }
                for b in l.biases.iter_mut() {
                    *b = rng.random_range(-1.0..1.0);
                }
            }
            traces.push(g.flatten());
            adam.step(&mut p, &g).unwrap();
        }
        let want = reference_adam_trace(&p0, &traces, &hyper);
        for (a, b) in p.flatten().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
