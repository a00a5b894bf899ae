//! Experiment configuration: a flat INI-style file with sections. Unknown
//! sections or keys are rejected so typos cannot silently fall back to
//! defaults; omitted keys take the documented defaults.

use std::path::{Path, PathBuf};

use mrfil_core::agent::{BcConfig, TrainConfig};
use mrfil_core::dynmodel::DynamicsTrainConfig;
use mrfil_core::envs::{ContinuousEnv, EnvKind};
use mrfil_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct EnvSection {
    pub kind: EnvKind,
    pub horizon: usize,
    pub obs_noise_std: f64,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct DemosSection {
    pub episodes: usize,
    pub train_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct DynamicsSection {
    pub ensemble_size: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct RewardSection {
    pub quantile: f64,
    pub reward_on_high_variance: bool,
}

#[derive(Debug, Clone)]
pub struct BcSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSection {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub entropy_coeff: f64,
    pub exploration_noise_std: f64,
    pub branch_count: usize,
    pub explore_len: usize,
    pub exploit_len: usize,
    pub batch_size: usize,
    pub max_env_steps: u64,
    pub plateau_window: usize,
    pub hidden_width: usize,
    pub replay_capacity: usize,
    pub target_polyak: f64,
    pub advantage_centering: bool,
    pub advantage_normalization: bool,
    pub eval_episodes: usize,
}

#[derive(Debug, Clone)]
pub struct VerifySection {
    pub joint_tvd_trials: usize,
    pub joint_tvd_max_dim: usize,
    pub chain_pairs: usize,
    pub chain_horizon: usize,
    pub chain_max_states: usize,
    pub identity_trials: usize,
    pub return_gap_trials: usize,
    pub return_gap_scales: Vec<f64>,
    pub duality_trials: usize,
}

#[derive(Debug, Clone)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// The full experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub demos: DemosSection,
    pub dynamics: DynamicsSection,
    pub reward: RewardSection,
    pub bc: BcSection,
    pub train: TrainSection,
    pub verify: VerifySection,
    pub run: RunSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let d = DynamicsTrainConfig::default();
        let b = BcConfig::default();
        Self {
            env: EnvSection {
                kind: EnvKind::PointMass2d,
                horizon: 50,
                obs_noise_std: 0.2,
                dt: 0.1,
            },
            demos: DemosSection {
                episodes: 100,
                train_fraction: 0.7,
            },
            dynamics: DynamicsSection {
                ensemble_size: 5,
                hidden_width: 64,
                hidden_layers: mrfil_core::dynmodel::DYNAMICS_HIDDEN_LAYERS,
                epochs: d.epochs,
                batch_size: d.batch_size,
                lr: d.lr,
            },
            reward: RewardSection {
                quantile: 0.95,
                reward_on_high_variance: false,
            },
            bc: BcSection {
                epochs: b.epochs,
                batch_size: b.batch_size,
                lr: b.lr,
            },
            train: TrainSection {
                actor_lr: t.actor_lr,
                critic_lr: t.critic_lr,
                gamma: t.gamma,
                tau: t.tau,
                entropy_coeff: t.entropy_coeff,
                exploration_noise_std: t.exploration_noise_std,
                branch_count: t.branch_count,
                explore_len: t.explore_len,
                exploit_len: t.exploit_len,
                batch_size: t.batch_size,
                max_env_steps: t.max_env_steps,
                plateau_window: t.plateau_window,
                hidden_width: t.hidden_width,
                replay_capacity: t.replay_capacity,
                target_polyak: t.target_polyak,
                advantage_centering: t.advantage_centering,
                advantage_normalization: t.advantage_normalization,
                eval_episodes: 40,
            },
            verify: VerifySection {
                joint_tvd_trials: 1000,
                joint_tvd_max_dim: 8,
                chain_pairs: 100,
                chain_horizon: 20,
                chain_max_states: 6,
                identity_trials: 100,
                return_gap_trials: 100,
                return_gap_scales: vec![0.01, 0.05, 0.1],
                duality_trials: 100,
            },
            run: RunSection {
                seed: 1,
                out_dir: PathBuf::from("runs/default"),
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses INI text over the defaults. Every section and key must be one
    /// of the known names.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                match section.as_str() {
                    "env" | "demos" | "dynamics" | "reward" | "bc" | "train" | "verify"
                    | "run" => {}
                    other => {
                        return Err(Error::Config(format!(
                            "line {}: unknown config section '[{other}]'",
                            lineno + 1
                        )))
                    }
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(&section, key, value).map_err(|e| {
                Error::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value '{value}' for key '{key}'")))
        }
        match (section, key) {
            ("env", "kind") => self.env.kind = EnvKind::from_id(value)?,
            ("env", "horizon") => self.env.horizon = p(key, value)?,
            ("env", "obs_noise_std") => self.env.obs_noise_std = p(key, value)?,
            ("env", "dt") => self.env.dt = p(key, value)?,
            ("demos", "episodes") => self.demos.episodes = p(key, value)?,
            ("demos", "train_fraction") => self.demos.train_fraction = p(key, value)?,
            ("dynamics", "ensemble_size") => self.dynamics.ensemble_size = p(key, value)?,
            ("dynamics", "hidden_width") => self.dynamics.hidden_width = p(key, value)?,
            ("dynamics", "hidden_layers") => self.dynamics.hidden_layers = p(key, value)?,
            ("dynamics", "epochs") => self.dynamics.epochs = p(key, value)?,
            ("dynamics", "batch_size") => self.dynamics.batch_size = p(key, value)?,
            ("dynamics", "lr") => self.dynamics.lr = p(key, value)?,
            ("reward", "quantile") => self.reward.quantile = p(key, value)?,
            ("reward", "reward_on_high_variance") => {
                self.reward.reward_on_high_variance = p(key, value)?
            }
            ("bc", "epochs") => self.bc.epochs = p(key, value)?,
            ("bc", "batch_size") => self.bc.batch_size = p(key, value)?,
            ("bc", "lr") => self.bc.lr = p(key, value)?,
            ("train", "actor_lr") => self.train.actor_lr = p(key, value)?,
            ("train", "critic_lr") => self.train.critic_lr = p(key, value)?,
            ("train", "gamma") => self.train.gamma = p(key, value)?,
            ("train", "tau") => self.train.tau = p(key, value)?,
            ("train", "entropy_coeff") => self.train.entropy_coeff = p(key, value)?,
            ("train", "exploration_noise_std") => {
                self.train.exploration_noise_std = p(key, value)?
            }
            ("train", "branch_count") => self.train.branch_count = p(key, value)?,
            ("train", "explore_len") => self.train.explore_len = p(key, value)?,
            ("train", "exploit_len") => self.train.exploit_len = p(key, value)?,
            ("train", "batch_size") => self.train.batch_size = p(key, value)?,
            ("train", "max_env_steps") => self.train.max_env_steps = p(key, value)?,
            ("train", "plateau_window") => self.train.plateau_window = p(key, value)?,
            ("train", "hidden_width") => self.train.hidden_width = p(key, value)?,
            ("train", "replay_capacity") => self.train.replay_capacity = p(key, value)?,
            ("train", "target_polyak") => self.train.target_polyak = p(key, value)?,
            ("train", "advantage_centering") => {
                self.train.advantage_centering = p(key, value)?
            }
            ("train", "advantage_normalization") => {
                self.train.advantage_normalization = p(key, value)?
            }
            ("train", "eval_episodes") => self.train.eval_episodes = p(key, value)?,
            ("verify", "joint_tvd_trials") => self.verify.joint_tvd_trials = p(key, value)?,
            ("verify", "joint_tvd_max_dim") => self.verify.joint_tvd_max_dim = p(key, value)?,
            ("verify", "chain_pairs") => self.verify.chain_pairs = p(key, value)?,
            ("verify", "chain_horizon") => self.verify.chain_horizon = p(key, value)?,
            ("verify", "chain_max_states") => self.verify.chain_max_states = p(key, value)?,
            ("verify", "identity_trials") => self.verify.identity_trials = p(key, value)?,
            ("verify", "return_gap_trials") => self.verify.return_gap_trials = p(key, value)?,
            ("verify", "return_gap_scales") => {
                self.verify.return_gap_scales = value
                    .split(',')
                    .map(|v| p::<f64>(key, v.trim()))
                    .collect::<Result<Vec<f64>>>()?
            }
            ("verify", "duality_trials") => self.verify.duality_trials = p(key, value)?,
            ("run", "seed") => self.run.seed = p(key, value)?,
            ("run", "out_dir") => self.run.out_dir = PathBuf::from(value),
            ("", k) => {
                return Err(Error::Config(format!(
                    "key '{k}' appears before any [section] header"
                )))
            }
            (s, k) => {
                return Err(Error::Config(format!("unknown key '{k}' in section '[{s}]'")))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.env.horizon == 0 {
            return Err(Error::Config("env horizon must be >= 1".into()));
        }
        if !(self.env.dt > 0.0) {
            return Err(Error::Config("env dt must be > 0".into()));
        }
        if self.env.obs_noise_std < 0.0 {
            return Err(Error::Config("obs_noise_std must be >= 0".into()));
        }
        if !(self.demos.train_fraction > 0.0 && self.demos.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0,1)".into()));
        }
        if self.dynamics.ensemble_size < 2 {
            return Err(Error::Config("ensemble_size must be >= 2".into()));
        }
        if !(self.reward.quantile > 0.0 && self.reward.quantile <= 1.0) {
            return Err(Error::Config("reward quantile must be in (0,1]".into()));
        }
        self.to_train_config().validate()
    }

    /// Canonical serialization: every key in a fixed order.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        s.push_str("[env]\n");
        s.push_str(&format!("kind = {}\n", self.env.kind.id()));
        s.push_str(&format!("horizon = {}\n", self.env.horizon));
        s.push_str(&format!("obs_noise_std = {}\n", self.env.obs_noise_std));
        s.push_str(&format!("dt = {}\n", self.env.dt));
        s.push_str("\n[demos]\n");
        s.push_str(&format!("episodes = {}\n", self.demos.episodes));
        s.push_str(&format!("train_fraction = {}\n", self.demos.train_fraction));
        s.push_str("\n[dynamics]\n");
        s.push_str(&format!("ensemble_size = {}\n", self.dynamics.ensemble_size));
        s.push_str(&format!("hidden_width = {}\n", self.dynamics.hidden_width));
        s.push_str(&format!("hidden_layers = {}\n", self.dynamics.hidden_layers));
        s.push_str(&format!("epochs = {}\n", self.dynamics.epochs));
        s.push_str(&format!("batch_size = {}\n", self.dynamics.batch_size));
        s.push_str(&format!("lr = {}\n", self.dynamics.lr));
        s.push_str("\n[reward]\n");
        s.push_str(&format!("quantile = {}\n", self.reward.quantile));
        s.push_str(&format!(
            "reward_on_high_variance = {}\n",
            self.reward.reward_on_high_variance
        ));
        s.push_str("\n[bc]\n");
        s.push_str(&format!("epochs = {}\n", self.bc.epochs));
        s.push_str(&format!("batch_size = {}\n", self.bc.batch_size));
        s.push_str(&format!("lr = {}\n", self.bc.lr));
        s.push_str("\n[train]\n");
        s.push_str(&format!("actor_lr = {}\n", self.train.actor_lr));
        s.push_str(&format!("critic_lr = {}\n", self.train.critic_lr));
        s.push_str(&format!("gamma = {}\n", self.train.gamma));
        s.push_str(&format!("tau = {}\n", self.train.tau));
        s.push_str(&format!("entropy_coeff = {}\n", self.train.entropy_coeff));
        s.push_str(&format!(
            "exploration_noise_std = {}\n",
            self.train.exploration_noise_std
        ));
        s.push_str(&format!("branch_count = {}\n", self.train.branch_count));
        s.push_str(&format!("explore_len = {}\n", self.train.explore_len));
        s.push_str(&format!("exploit_len = {}\n", self.train.exploit_len));
        s.push_str(&format!("batch_size = {}\n", self.train.batch_size));
        s.push_str(&format!("max_env_steps = {}\n", self.train.max_env_steps));
        s.push_str(&format!("plateau_window = {}\n", self.train.plateau_window));
        s.push_str(&format!("hidden_width = {}\n", self.train.hidden_width));
        s.push_str(&format!("replay_capacity = {}\n", self.train.replay_capacity));
        s.push_str(&format!("target_polyak = {}\n", self.train.target_polyak));
        s.push_str(&format!(
            "advantage_centering = {}\n",
            self.train.advantage_centering
        ));
        s.push_str(&format!(
            "advantage_normalization = {}\n",
            self.train.advantage_normalization
        ));
        s.push_str(&format!("eval_episodes = {}\n", self.train.eval_episodes));
        s.push_str("\n[verify]\n");
        s.push_str(&format!("joint_tvd_trials = {}\n", self.verify.joint_tvd_trials));
        s.push_str(&format!("joint_tvd_max_dim = {}\n", self.verify.joint_tvd_max_dim));
        s.push_str(&format!("chain_pairs = {}\n", self.verify.chain_pairs));
        s.push_str(&format!("chain_horizon = {}\n", self.verify.chain_horizon));
        s.push_str(&format!("chain_max_states = {}\n", self.verify.chain_max_states));
        s.push_str(&format!("identity_trials = {}\n", self.verify.identity_trials));
        s.push_str(&format!("return_gap_trials = {}\n", self.verify.return_gap_trials));
        s.push_str(&format!(
            "return_gap_scales = {}\n",
            self.verify
                .return_gap_scales
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        s.push_str(&format!("duality_trials = {}\n", self.verify.duality_trials));
        s.push_str("\n[run]\n");
        s.push_str(&format!("seed = {}\n", self.run.seed));
        s.push_str(&format!("out_dir = {}\n", self.run.out_dir.display()));
        s
    }

    pub fn to_env(&self) -> ContinuousEnv {
        let mut env = ContinuousEnv::new(self.env.kind);
        env.horizon = self.env.horizon;
        env.obs_noise_std = self.env.obs_noise_std;
        env.dt = self.env.dt;
        env
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            actor_lr: self.train.actor_lr,
            critic_lr: self.train.critic_lr,
            gamma: self.train.gamma,
            tau: self.train.tau,
            entropy_coeff: self.train.entropy_coeff,
            exploration_noise_std: self.train.exploration_noise_std,
            branch_count: self.train.branch_count,
            explore_len: self.train.explore_len,
            exploit_len: self.train.exploit_len,
            batch_size: self.train.batch_size,
            max_env_steps: self.train.max_env_steps,
            plateau_window: self.train.plateau_window,
            hidden_width: self.train.hidden_width,
            replay_capacity: self.train.replay_capacity,
            target_polyak: self.train.target_polyak,
            advantage_centering: self.train.advantage_centering,
            advantage_normalization: self.train.advantage_normalization,
        }
    }

    pub fn to_dynamics_config(&self) -> DynamicsTrainConfig {
        DynamicsTrainConfig {
            epochs: self.dynamics.epochs,
            batch_size: self.dynamics.batch_size,
            lr: self.dynamics.lr,
        }
    }

    pub fn to_bc_config(&self) -> BcConfig {
        BcConfig {
            epochs: self.bc.epochs,
            batch_size: self.bc.batch_size,
            lr: self.bc.lr,
            hidden_width: self.train.hidden_width,
        }
    }
}
