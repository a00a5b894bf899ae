//! Learned forward models and the variance-thresholded binary reward.
//!
//! A [`SingleDynamics`] model maps `concat(state, action)` to a predicted
//! state delta. An [`EnsembleDynamics`] holds several such models that differ
//! only in initialization and data shuffling order; their prediction variance
//! separates state-actions covered by the demonstrations (members agree) from
//! everything else (members diverge), and thresholding it yields the binary
//! reward the learner trains against.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::demos::DemoSet;
use crate::nn::{load_params, save_params, AdamHyper, AdamState, MlpParams, MlpSpec};
use crate::{Error, Result};

/// Default hidden-layer count for dynamics networks.
pub const DYNAMICS_HIDDEN_LAYERS: usize = 4;

/// One forward model predicting the state delta `s' - s`.
#[derive(Debug, Clone)]
pub struct SingleDynamics {
    pub net: MlpParams,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Init seed, recorded for the ensemble manifest.
    pub seed: u64,
}

impl SingleDynamics {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden_width: usize,
        hidden_layers: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = MlpSpec::with_hidden(state_dim + action_dim, hidden_width, hidden_layers, state_dim)?;
        Ok(Self {
            net: MlpParams::init(spec, seed)?,
            state_dim,
            action_dim,
            seed,
        })
    }

    fn input(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::Dimension(format!(
                "dynamics model expects dims ({}, {}), got ({}, {})",
                self.state_dim,
                self.action_dim,
                state.len(),
                action.len()
            )));
        }
        let mut x = Vec::with_capacity(self.state_dim + self.action_dim);
        x.extend_from_slice(state);
        x.extend_from_slice(action);
        Ok(x)
    }

    pub fn predict_delta(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let x = self.input(state, action)?;
        self.net.forward(&x)
    }

    /// Predicted next state `s + delta`.
    pub fn predict(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let delta = self.predict_delta(state, action)?;
        Ok(state.iter().zip(&delta).map(|(s, d)| s + d).collect())
    }
}

/// Supervised training settings for dynamics models.
#[derive(Debug, Clone, Copy)]
pub struct DynamicsTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for DynamicsTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 64,
            lr: 1e-3,
        }
    }
}

/// Mean squared error of the model's delta prediction over a demo set.
pub fn delta_mse(model: &SingleDynamics, demos: &DemoSet) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for t in demos.iter_transitions() {
        let pred = model.predict_delta(&t.state, &t.action)?;
        for (i, p) in pred.iter().enumerate() {
            let target = t.next_state[i] - t.state[i];
            total += (p - target) * (p - target);
        }
        count += pred.len();
    }
    if count == 0 {
        return Err(Error::Config("empty demo set".into()));
    }
    Ok(total / count as f64)
}

/// Per-epoch loss record from [`train_dynamics`].
#[derive(Debug, Clone, Copy)]
pub struct EpochMse {
    pub epoch: usize,
    pub train_mse: f64,
    pub eval_mse: f64,
}

/// Minimizes the delta-prediction MSE with shuffled minibatch Adam.
/// Deterministic per seed. `eval` may be empty-free but must match dims; its
/// MSE is reported per epoch and never influences training.
pub fn train_dynamics(
    model: &mut SingleDynamics,
    train: &DemoSet,
    eval: &DemoSet,
    cfg: DynamicsTrainConfig,
    seed: u64,
) -> Result<Vec<EpochMse>> {
    if train.n_transitions() == 0 {
        return Err(Error::Config("dynamics training needs a non-empty train set".into()));
    }
    if train.state_dim() != model.state_dim || train.action_dim() != model.action_dim {
        return Err(Error::Dimension(format!(
            "demo dims ({}, {}) do not match model dims ({}, {})",
            train.state_dim(),
            train.action_dim(),
            model.state_dim,
            model.action_dim
        )));
    }
    let transitions: Vec<_> = train.iter_transitions().collect();
    let mut rng = crate::seeds::rng(seed);
    let mut adam = AdamState::new(model.net.spec().clone(), AdamHyper::with_lr(cfg.lr));
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..transitions.len()).collect();
    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size.max(1)) {
            let mut grads = MlpParams::zeros(model.net.spec().clone());
            let norm = 1.0 / (chunk.len() * model.state_dim) as f64;
            for &i in chunk {
                let t = transitions[i];
                let x = model.input(&t.state, &t.action)?;
                let pred = model.net.forward(&x)?;
                let cot: Vec<f64> = pred
                    .iter()
                    .enumerate()
                    .map(|(d, p)| 2.0 * (p - (t.next_state[d] - t.state[d])) * norm)
                    .collect();
                let (g, _) = model.net.backward(&x, &cot)?;
                grads.add_scaled(&g, 1.0);
            }
            adam.step(&mut model.net, &grads)?;
        }
        let train_mse = delta_mse(model, train)?;
        let eval_mse = if eval.n_transitions() == 0 {
            f64::NAN
        } else {
            delta_mse(model, eval)?
        };
        log.push(EpochMse {
            epoch,
            train_mse,
            eval_mse,
        });
    }
    Ok(log)
}

/// An ensemble of forward models sharing one spec, differing only by init
/// seed and shuffling order.
#[derive(Debug, Clone)]
pub struct EnsembleDynamics {
    pub members: Vec<SingleDynamics>,
}

impl EnsembleDynamics {
    pub fn new(
        n_members: usize,
        state_dim: usize,
        action_dim: usize,
        hidden_width: usize,
        hidden_layers: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_members < 2 {
            return Err(Error::Config(format!(
                "an ensemble needs at least 2 members, got {n_members}"
            )));
        }
        let members = (0..n_members)
            .map(|k| {
                SingleDynamics::new(
                    state_dim,
                    action_dim,
                    hidden_width,
                    hidden_layers,
                    crate::seeds::derive(seed, k as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn state_dim(&self) -> usize {
        self.members[0].state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.members[0].action_dim
    }

    /// Trains every member on the same data; members keep their own shuffle
    /// streams, so they stay distinct. Each member's training is independent
    /// of the others and of ordering.
    pub fn train(
        &mut self,
        train: &DemoSet,
        eval: &DemoSet,
        cfg: DynamicsTrainConfig,
        seed: u64,
    ) -> Result<Vec<Vec<EpochMse>>> {
        self.members
            .iter_mut()
            .enumerate()
            .map(|(k, m)| train_dynamics(m, train, eval, cfg, crate::seeds::derive(seed, 1000 + k as u64)))
            .collect()
    }

    /// Unbiased sample variance of the member predictions, per output
    /// dimension, averaged over dimensions. Permutation-invariant and >= 0.
    pub fn variance(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let n = self.members.len();
        let dim = self.state_dim();
        let mut preds = Vec::with_capacity(n);
        for m in &self.members {
            let p = m.predict(state, action)?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite ensemble member prediction".into()));
            }
            preds.push(p);
        }
        let mut total = 0.0;
        for d in 0..dim {
            let mean: f64 = preds.iter().map(|p| p[d]).sum::<f64>() / n as f64;
            let ss: f64 = preds.iter().map(|p| (p[d] - mean) * (p[d] - mean)).sum();
            total += ss / (n - 1) as f64;
        }
        Ok(total / dim as f64)
    }
}

/// Reward settings: the calibrated variance threshold and the inequality
/// direction. By default low variance (in-distribution) earns reward 1; the
/// `reward_on_high_variance` flag flips the inequality for ablations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    threshold: Option<f64>,
    pub quantile: f64,
    pub reward_on_high_variance: bool,
}

impl RewardConfig {
    /// An uncalibrated config; [`calibrate_threshold`] fills the threshold.
    pub fn new(quantile: f64) -> Result<Self> {
        if !(quantile > 0.0 && quantile <= 1.0) {
            return Err(Error::Config(format!(
                "calibration quantile must be in (0,1], got {quantile}"
            )));
        }
        Ok(Self {
            threshold: None,
            quantile,
            reward_on_high_variance: false,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::Config(format!(
                "variance threshold must be finite and >= 0, got {threshold}"
            )));
        }
        self.threshold = Some(threshold);
        Ok(self)
    }

    pub fn with_high_variance_reward(mut self, flag: bool) -> Self {
        self.reward_on_high_variance = flag;
        self
    }

    pub fn threshold(&self) -> Result<f64> {
        self.threshold
            .ok_or_else(|| Error::Config("reward threshold not calibrated".into()))
    }

    pub fn is_calibrated(&self) -> bool {
        self.threshold.is_some()
    }
}

/// Sets the threshold to the nearest-rank empirical quantile of the ensemble
/// variance over the held-out expert state-action pairs.
pub fn calibrate_threshold(
    ensemble: &EnsembleDynamics,
    held_out: &DemoSet,
    quantile: f64,
) -> Result<RewardConfig> {
    let cfg = RewardConfig::new(quantile)?;
    if held_out.n_transitions() == 0 {
        return Err(Error::Config("calibration needs a non-empty held-out set".into()));
    }
    let mut variances = Vec::with_capacity(held_out.n_transitions());
    for t in held_out.iter_transitions() {
        variances.push(ensemble.variance(&t.state, &t.action)?);
    }
    cfg.with_threshold(nearest_rank_quantile(&mut variances, quantile))
}

/// Nearest-rank quantile: the `ceil(q * n)`-th smallest value (1-indexed).
pub fn nearest_rank_quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN variances"));
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

/// The binary reward: 1.0 iff the ensemble variance is on the rewarded side
/// of the threshold (boundary inclusive for the low-variance reading), else
/// 0.0.
pub fn ensemble_reward(
    ensemble: &EnsembleDynamics,
    cfg: &RewardConfig,
    state: &[f64],
    action: &[f64],
) -> Result<f64> {
    let threshold = cfg.threshold()?;
    let var = ensemble.variance(state, action)?;
    let rewarded = if cfg.reward_on_high_variance {
        var > threshold
    } else {
        var <= threshold
    };
    Ok(if rewarded { 1.0 } else { 0.0 })
}

/// Writes one parameter file per member plus `m0` and a manifest with seeds
/// and the calibrated threshold.
pub fn save_ensemble(
    dir: &Path,
    ensemble: &EnsembleDynamics,
    m0: &SingleDynamics,
    reward: &RewardConfig,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (k, m) in ensemble.members.iter().enumerate() {
        save_params(&m.net, &dir.join(format!("member_{k}.nn")))?;
    }
    save_params(&m0.net, &dir.join("m0.nn"))?;
    let mut manifest = String::from("mrfil-ensemble v1\n");
    manifest.push_str(&format!("state_dim={}\n", ensemble.state_dim()));
    manifest.push_str(&format!("action_dim={}\n", ensemble.action_dim()));
    manifest.push_str(&format!("members={}\n", ensemble.n_members()));
    for m in &ensemble.members {
        manifest.push_str(&format!("member_seed={}\n", m.seed));
    }
    manifest.push_str(&format!("m0_seed={}\n", m0.seed));
    manifest.push_str(&format!(
        "threshold={}\n",
        match reward.threshold {
            Some(t) => crate::demos::format_float(t),
            None => "uncalibrated".into(),
        }
    ));
    manifest.push_str(&format!("quantile={}\n", crate::demos::format_float(reward.quantile)));
    manifest.push_str(&format!(
        "reward_on_high_variance={}\n",
        reward.reward_on_high_variance
    ));
    fs::write(dir.join("ensemble.txt"), manifest)?;
    Ok(())
}

/// Loads what [`save_ensemble`] wrote.
pub fn load_ensemble(dir: &Path) -> Result<(EnsembleDynamics, SingleDynamics, RewardConfig)> {
    let manifest = fs::read_to_string(dir.join("ensemble.txt"))?;
    let mut state_dim = None;
    let mut action_dim = None;
    let mut n_members = None;
    let mut member_seeds = Vec::new();
    let mut m0_seed = None;
    let mut threshold = None;
    let mut quantile = None;
    let mut high_var = false;
    for (i, line) in manifest.lines().enumerate() {
        if i == 0 {
            if line != "mrfil-ensemble v1" {
                return Err(Error::Format(format!("bad ensemble manifest header '{line}'")));
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad manifest line '{line}'")))?;
        match key {
            "state_dim" => state_dim = Some(parse_usize(value)?),
            "action_dim" => action_dim = Some(parse_usize(value)?),
            "members" => n_members = Some(parse_usize(value)?),
            "member_seed" => member_seeds.push(parse_u64(value)?),
            "m0_seed" => m0_seed = Some(parse_u64(value)?),
            "threshold" => {
                threshold = if value == "uncalibrated" {
                    None
                } else {
                    Some(value.parse::<f64>().map_err(|_| Error::Format("bad threshold".into()))?)
                }
            }
            "quantile" => {
                quantile = Some(value.parse::<f64>().map_err(|_| Error::Format("bad quantile".into()))?)
            }
            "reward_on_high_variance" => {
                high_var = value
                    .parse::<bool>()
                    .map_err(|_| Error::Format("bad reward_on_high_variance".into()))?
            }
            other => return Err(Error::Format(format!("unknown manifest key '{other}'"))),
        }
    }
    let state_dim = state_dim.ok_or_else(|| Error::Format("manifest missing state_dim".into()))?;
    let action_dim = action_dim.ok_or_else(|| Error::Format("manifest missing action_dim".into()))?;
    let n_members = n_members.ok_or_else(|| Error::Format("manifest missing members".into()))?;
    if member_seeds.len() != n_members {
        return Err(Error::Format("member seed count mismatch".into()));
    }
    let mut members = Vec::with_capacity(n_members);
    for (k, &seed) in member_seeds.iter().enumerate() {
        let net = load_params(&dir.join(format!("member_{k}.nn")))?;
        if net.input_dim() != state_dim + action_dim || net.output_dim() != state_dim {
            return Err(Error::Format(format!("member {k} has inconsistent dims")));
        }
        members.push(SingleDynamics {
            net,
            state_dim,
            action_dim,
            seed,
        });
    }
    let m0 = SingleDynamics {
        net: load_params(&dir.join("m0.nn"))?,
        state_dim,
        action_dim,
        seed: m0_seed.ok_or_else(|| Error::Format("manifest missing m0_seed".into()))?,
    };
    let mut reward = RewardConfig::new(
        quantile.ok_or_else(|| Error::Format("manifest missing quantile".into()))?,
    )?
    .with_high_variance_reward(high_var);
    if let Some(t) = threshold {
        reward = reward.with_threshold(t)?;
    }
    Ok((EnsembleDynamics { members }, m0, reward))
}

fn parse_usize(v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Format(format!("bad integer '{v}'")))
}

fn parse_u64(v: &str) -> Result<u64> {
    v.parse().map_err(|_| Error::Format(format!("bad integer '{v}'")))
}
