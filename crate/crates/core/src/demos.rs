//! Expert demonstrations: generation, lossless persistence, episode-level
//! train/eval splitting, and the off-policy replay pool.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::envs::{ContinuousEnv, EnvSession};
use crate::{Error, Result};

/// One environment step. `reward` is `None` for raw demonstrations and gets
/// filled by the ensemble reward during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: Option<f64>,
    pub done: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.state
            .iter()
            .chain(&self.action)
            .chain(&self.next_state)
            .all(|v| v.is_finite())
            && self.reward.map_or(true, |r| r.is_finite())
    }
}

/// Episode-structured demonstration data.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub episodes: Vec<Vec<Transition>>,
    pub env_id: String,
    pub seed: u64,
}

impl DemoSet {
    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    pub fn iter_transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flatten()
    }

    pub fn state_dim(&self) -> usize {
        self.episodes
            .first()
            .and_then(|e| e.first())
            .map_or(0, |t| t.state.len())
    }

    pub fn action_dim(&self) -> usize {
        self.episodes
            .first()
            .and_then(|e| e.first())
            .map_or(0, |t| t.action.len())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(
            w,
            "mrfil-demos v1, env={}, episodes={}, dims={},{}, seed={}",
            self.env_id,
            self.n_episodes(),
            self.state_dim(),
            self.action_dim(),
            self.seed
        )?;
        for (ep, episode) in self.episodes.iter().enumerate() {
            for (step, t) in episode.iter().enumerate() {
                let mut fields = Vec::with_capacity(3 + t.state.len() * 2 + t.action.len());
                fields.push(ep.to_string());
                fields.push(step.to_string());
                for v in t.state.iter().chain(&t.action).chain(&t.next_state) {
                    fields.push(format_float(*v));
                }
                fields.push(if t.done { "1".into() } else { "0".into() });
                writeln!(w, "{}", fields.join(","))?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DemoSet> {
        let r = BufReader::new(File::open(path)?);
        Self::read_from(r)
    }

    pub fn read_from(r: impl BufRead) -> Result<DemoSet> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty demo file".into()))??;
        let (env_id, n_episodes, state_dim, action_dim, seed) = parse_header(&header)?;
        let mut episodes: Vec<Vec<Transition>> = vec![Vec::new(); n_episodes];
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let expected = 2 + 2 * state_dim + action_dim + 1;
            if fields.len() != expected {
                return Err(Error::Format(format!(
                    "demo row has {} fields, expected {expected}",
                    fields.len()
                )));
            }
            let ep: usize = fields[0]
                .parse()
                .map_err(|_| Error::Format("bad episode index".into()))?;
            if ep >= n_episodes {
                return Err(Error::Format(format!("episode index {ep} out of range")));
            }
            let mut cursor = 2;
            let mut take = |n: usize| -> Result<Vec<f64>> {
                let vals: Result<Vec<f64>> = fields[cursor..cursor + n]
                    .iter()
                    .map(|f| {
                        f.parse::<f64>()
                            .map_err(|_| Error::Format(format!("bad float '{f}'")))
                    })
                    .collect();
                cursor += n;
                vals
            };
            let state = take(state_dim)?;
            let action = take(action_dim)?;
            let next_state = take(state_dim)?;
            let done = match fields[cursor] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Format(format!("bad done flag '{other}'"))),
            };
            episodes[ep].push(Transition {
                state,
                action,
                next_state,
                reward: None,
                done,
            });
        }
        Ok(DemoSet {
            episodes,
            env_id,
            seed,
        })
    }
}

/// 17 significant digits: enough for a lossless f64 text round-trip.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_header(header: &str) -> Result<(String, usize, usize, usize, u64)> {
    let parts: Vec<&str> = header.split(", ").collect();
    if parts.first() != Some(&"mrfil-demos v1") {
        return Err(Error::Format(format!("bad demo header '{header}'")));
    }
    let mut env_id = None;
    let mut episodes = None;
    let mut dims = None;
    let mut seed = None;
    for part in &parts[1..] {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field '{part}'")))?;
        match key {
            "env" => env_id = Some(value.to_string()),
            "episodes" => {
                episodes =
                    Some(value.parse().map_err(|_| Error::Format("bad episode count".into()))?)
            }
            "dims" => {
                let (s, a) = value
                    .split_once(',')
                    .ok_or_else(|| Error::Format("bad dims field".into()))?;
                dims = Some((
                    s.parse().map_err(|_| Error::Format("bad state dim".into()))?,
                    a.parse().map_err(|_| Error::Format("bad action dim".into()))?,
                ));
            }
            "seed" => seed = Some(value.parse().map_err(|_| Error::Format("bad seed".into()))?),
            other => return Err(Error::Format(format!("unknown header field '{other}'"))),
        }
    }
    let (state_dim, action_dim) = dims.ok_or_else(|| Error::Format("header missing dims".into()))?;
    Ok((
        env_id.ok_or_else(|| Error::Format("header missing env".into()))?,
        episodes.ok_or_else(|| Error::Format("header missing episodes".into()))?,
        state_dim,
        action_dim,
        seed.ok_or_else(|| Error::Format("header missing seed".into()))?,
    ))
}

/// Rolls out `n_episodes` full expert episodes. Deterministic per seed.
pub fn generate_demos(env: &ContinuousEnv, n_episodes: usize, seed: u64) -> Result<DemoSet> {
    if n_episodes == 0 {
        return Err(Error::Config("demo generation needs n_episodes >= 1".into()));
    }
    let mut episodes = Vec::with_capacity(n_episodes);
    for ep in 0..n_episodes {
        let mut session = EnvSession::new(env.clone(), crate::seeds::derive(seed, ep as u64));
        let mut obs = session.reset();
        let mut episode = Vec::new();
        loop {
            let action = env.expert_action(&obs);
            let (next_obs, done) = session.step(&action)?;
            episode.push(Transition {
                state: obs,
                action,
                next_state: next_obs.clone(),
                reward: None,
                done,
            });
            obs = next_obs;
            if done {
                break;
            }
        }
        episodes.push(episode);
    }
    Ok(DemoSet {
        episodes,
        env_id: env.kind.id().to_string(),
        seed,
    })
}

/// Episode-level random split into disjoint, exhaustive train/eval sets.
/// The train side gets `round(train_fraction * n)` episodes, clamped so both
/// sides are non-empty.
pub fn split_train_eval(
    demos: &DemoSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(DemoSet, DemoSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let n = demos.n_episodes();
    if n < 2 {
        return Err(Error::Config(format!(
            "need at least 2 episodes to split, got {n}"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = crate::seeds::rng(seed);
    // Fisher-Yates, written out so the shuffle is stable across rand versions.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let mut train_idx: Vec<usize> = indices[..n_train].to_vec();
    let mut eval_idx: Vec<usize> = indices[n_train..].to_vec();
    train_idx.sort_unstable();
    eval_idx.sort_unstable();
    let pick = |idx: &[usize]| DemoSet {
        episodes: idx.iter().map(|&i| demos.episodes[i].clone()).collect(),
        env_id: demos.env_id.clone(),
        seed: demos.seed,
    };
    Ok((pick(&train_idx), pick(&eval_idx)))
}

/// Fixed-capacity FIFO replay pool with uniform with-replacement sampling.
#[derive(Debug, Clone)]
pub struct ReplayPool {
    capacity: usize,
    entries: VecDeque<Transition>,
}

impl ReplayPool {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest entry is evicted when full.
    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    /// Uniform sampling with replacement, deterministic per seed.
    pub fn sample(&self, batch_size: usize, seed: u64) -> Result<Vec<Transition>> {
        self.sample_with(batch_size, &mut crate::seeds::rng(seed))
    }

    pub fn sample_with(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<Transition>> {
        if self.entries.is_empty() {
            return Err(Error::Config("cannot sample from an empty replay pool".into()));
        }
        Ok((0..batch_size)
            .map(|_| self.entries[rng.random_range(0..self.entries.len())].clone())
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;

    fn small_demos(n: usize) -> DemoSet {
        let env = ContinuousEnv::new(EnvKind::PointMass1d);
        generate_demos(&env, n, 7).unwrap()
    }

    #[test]
    fn zero_episode_request_rejected() {
        let env = ContinuousEnv::new(EnvKind::PointMass1d);
        assert!(generate_demos(&env, 0, 1).is_err());
    }

    #[test]
    fn episodes_respect_horizon() {
        let env = ContinuousEnv::new(EnvKind::PointMass1d).with_horizon(50);
        let demos = generate_demos(&env, 5, 3).unwrap();
        assert_eq!(demos.n_episodes(), 5);
        for ep in &demos.episodes {
            assert!(!ep.is_empty() && ep.len() <= 50);
            assert!(ep.last().unwrap().done);
        }
    }

    #[test]
    fn same_seed_serializes_byte_identical() {
        let env = ContinuousEnv::new(EnvKind::PointMass2d);
        let a = generate_demos(&env, 4, 11).unwrap();
        let b = generate_demos(&env, 4, 11).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.write_to(&mut buf_a).unwrap();
        b.write_to(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let demos = small_demos(6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.csv");
        demos.save(&path).unwrap();
        let loaded = DemoSet::load(&path).unwrap();
        assert_eq!(demos, loaded);
    }

    #[test]
    fn split_70_30_on_ten_episodes() {
        let demos = small_demos(10);
        let (train, eval) = split_train_eval(&demos, 0.7, 1).unwrap();
        assert_eq!(train.n_episodes(), 7);
        assert_eq!(eval.n_episodes(), 3);
    }

    #[test]
    fn split_half_on_two_episodes() {
        let demos = small_demos(2);
        let (train, eval) = split_train_eval(&demos, 0.5, 1).unwrap();
        assert_eq!(train.n_episodes(), 1);
        assert_eq!(eval.n_episodes(), 1);
    }

    #[test]
    fn split_is_a_partition() {
        let demos = small_demos(9);
        let (train, eval) = split_train_eval(&demos, 0.7, 5).unwrap();
        let mut merged: Vec<Vec<Transition>> = train
            .episodes
            .iter()
            .chain(&eval.episodes)
            .cloned()
            .collect();
        let mut original = demos.episodes.clone();
        let key = |e: &Vec<Transition>| format!("{:?}", e.first().map(|t| t.next_state.clone()));
        merged.sort_by_key(key);
        original.sort_by_key(key);
        assert_eq!(merged, original);
    }

    #[test]
    fn split_rejects_single_episode() {
        let demos = small_demos(1);
        assert!(split_train_eval(&demos, 0.7, 1).is_err());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let demos = small_demos(8);
        let a = split_train_eval(&demos, 0.7, 3).unwrap();
        let b = split_train_eval(&demos, 0.7, 3).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    fn transition_with_marker(m: f64) -> Transition {
        Transition {
            state: vec![m],
            action: vec![0.0],
            next_state: vec![m],
            reward: Some(0.0),
            done: false,
        }
    }

    #[test]
    fn pool_evicts_oldest_when_full() {
        let mut pool = ReplayPool::new(3).unwrap();
        for i in 0..4 {
            pool.push(transition_with_marker(i as f64));
        }
        assert_eq!(pool.len(), 3);
        let markers: Vec<f64> = pool.iter().map(|t| t.state[0]).collect();
        assert_eq!(markers, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sampling_single_entry_pool_repeats_it() {
        let mut pool = ReplayPool::new(4).unwrap();
        pool.push(transition_with_marker(5.0));
        let batch = pool.sample(6, 0).unwrap();
        assert_eq!(batch.len(), 6);
        assert!(batch.iter().all(|t| t.state[0] == 5.0));
    }

    #[test]
    fn empty_pool_sampling_rejected() {
        let pool = ReplayPool::new(4).unwrap();
        assert!(pool.sample(1, 0).is_err());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut pool = ReplayPool::new(10).unwrap();
        for i in 0..10 {
            pool.push(transition_with_marker(i as f64));
        }
        let n = 100_000;
        let batch = pool.sample(n, 123).unwrap();
        let mut counts = [0usize; 10];
        for t in &batch {
            counts[t.state[0] as usize] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!(
                (0.095..=0.105).contains(&freq),
                "element {i} frequency {freq}"
            );
        }
    }

    #[test]
    fn replay_never_returns_foreign_transitions() {
        let mut pool = ReplayPool::new(5).unwrap();
        for i in 0..5 {
            pool.push(transition_with_marker(i as f64));
        }
        let batch = pool.sample(200, 9).unwrap();
        assert!(batch.iter().all(|t| (0.0..5.0).contains(&t.state[0])));
    }

    #[test]
    fn next_state_chains_to_following_state() {
        // Observations are recorded as emitted, so adjacent transitions share
        // the exact same vector.
        let demos = small_demos(3);
        for ep in &demos.episodes {
            for pair in ep.windows(2) {
                assert_eq!(pair[0].next_state, pair[1].state);
            }
        }
    }
}
