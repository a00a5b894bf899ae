//! Subcommand implementations. Each stage reads its upstream artifacts from
//! the run directory, writes its own versioned outputs there, and derives its
//! RNG streams from the run seed, so a rerun with the same config reproduces
//! every file byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use mrfil_core::agent::{
    bc_mse, bc_train, evaluate_policy, load_policy, mbsr_pretrain, mrfil_train, save_policy,
    Agent, BcPolicy, MetricsLog,
};
use mrfil_core::demos::{generate_demos, split_train_eval, DemoSet, ReplayPool};
use mrfil_core::dynmodel::{
    calibrate_threshold, load_ensemble, save_ensemble, train_dynamics, EnsembleDynamics,
    SingleDynamics,
};
use mrfil_core::envs::EnvSession;
use mrfil_core::nn::{load_params, save_params};
use mrfil_core::theory::{
    check_dual_identity, check_joint_tvd_chain_rule, check_markov_marginal_drift,
    check_occupancy_identities, check_return_gap_bound, CheckReport, CheckRow, DualProblem,
};
use mrfil_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::svg::{line_chart, Series};

// Stage streams for seed derivation.
const STREAM_DEMOS: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_M0_INIT: u64 = 3;
const STREAM_M0_TRAIN: u64 = 4;
const STREAM_ENS_INIT: u64 = 5;
const STREAM_ENS_TRAIN: u64 = 6;
const STREAM_BC: u64 = 7;
const STREAM_AGENT: u64 = 8;
const STREAM_MBSR: u64 = 9;
const STREAM_ENV: u64 = 10;
const STREAM_TRAIN: u64 = 11;
const STREAM_EVAL: u64 = 12;
const STREAM_VERIFY: u64 = 20;

fn stage_seed(cfg: &ExperimentConfig, stream: u64) -> u64 {
    mrfil_core::seeds::derive(cfg.run.seed, stream)
}

/// Writes the effective config and the derived seed manifest into the run
/// directory. Called by every stage; idempotent.
pub fn write_run_manifest(cfg: &ExperimentConfig) -> Result<()> {
    let dir = &cfg.run.out_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.ini"), cfg.serialize())?;
    let mut seeds = String::new();
    for (name, stream) in [
        ("demos", STREAM_DEMOS),
        ("split", STREAM_SPLIT),
        ("m0_init", STREAM_M0_INIT),
        ("m0_train", STREAM_M0_TRAIN),
        ("ensemble_init", STREAM_ENS_INIT),
        ("ensemble_train", STREAM_ENS_TRAIN),
        ("bc", STREAM_BC),
        ("agent", STREAM_AGENT),
        ("mbsr", STREAM_MBSR),
        ("env", STREAM_ENV),
        ("train", STREAM_TRAIN),
        ("eval", STREAM_EVAL),
        ("verify", STREAM_VERIFY),
    ] {
        seeds.push_str(&format!("{name}={}\n", stage_seed(cfg, stream)));
    }
    fs::write(dir.join("seeds.txt"), seeds)?;
    Ok(())
}

fn require_artifact(path: &Path, produced_by: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "missing artifact '{}': run `{produced_by}` first",
            path.display()
        )));
    }
    Ok(())
}

/// Generates expert demonstrations and writes the train/eval split.
pub fn cmd_gen_demos(cfg: &ExperimentConfig) -> Result<()> {
    write_run_manifest(cfg)?;
    let env = cfg.to_env();
    let demos = generate_demos(&env, cfg.demos.episodes, stage_seed(cfg, STREAM_DEMOS))?;
    let (train, eval) = split_train_eval(
        &demos,
        cfg.demos.train_fraction,
        stage_seed(cfg, STREAM_SPLIT),
    )?;
    train.save(&cfg.run.out_dir.join("demos_train.csv"))?;
    eval.save(&cfg.run.out_dir.join("demos_eval.csv"))?;
    println!(
        "gen-demos: {} episodes -> {} train / {} eval ({} transitions)",
        demos.n_episodes(),
        train.n_episodes(),
        eval.n_episodes(),
        demos.n_transitions()
    );
    Ok(())
}

fn load_demo_split(cfg: &ExperimentConfig) -> Result<(DemoSet, DemoSet)> {
    let train_path = cfg.run.out_dir.join("demos_train.csv");
    let eval_path = cfg.run.out_dir.join("demos_eval.csv");
    require_artifact(&train_path, "gen-demos")?;
    require_artifact(&eval_path, "gen-demos")?;
    Ok((DemoSet::load(&train_path)?, DemoSet::load(&eval_path)?))
}

/// Trains the single model and the ensemble, calibrates the reward threshold
/// on held-out expert data, and persists everything.
pub fn cmd_train_dynamics(cfg: &ExperimentConfig) -> Result<()> {
    write_run_manifest(cfg)?;
    let (train, eval) = load_demo_split(cfg)?;
    let env = cfg.to_env();
    let dcfg = cfg.to_dynamics_config();

    let mut m0 = SingleDynamics::new(
        env.state_dim(),
        env.action_dim(),
        cfg.dynamics.hidden_width,
        cfg.dynamics.hidden_layers,
        stage_seed(cfg, STREAM_M0_INIT),
    )?;
    let m0_log = train_dynamics(&mut m0, &train, &eval, dcfg, stage_seed(cfg, STREAM_M0_TRAIN))?;

    let mut ensemble = EnsembleDynamics::new(
        cfg.dynamics.ensemble_size,
        env.state_dim(),
        env.action_dim(),
        cfg.dynamics.hidden_width,
        cfg.dynamics.hidden_layers,
        stage_seed(cfg, STREAM_ENS_INIT),
    )?;
    let member_logs = ensemble.train(&train, &eval, dcfg, stage_seed(cfg, STREAM_ENS_TRAIN))?;

    let reward_cfg = calibrate_threshold(&ensemble, &eval, cfg.reward.quantile)?
        .with_high_variance_reward(cfg.reward.reward_on_high_variance);
    save_ensemble(&cfg.run.out_dir, &ensemble, &m0, &reward_cfg)?;

    let mut mse_csv = String::from("model,epoch,train_mse,eval_mse\n");
    for e in &m0_log {
        mse_csv.push_str(&format!("m0,{},{:.9e},{:.9e}\n", e.epoch, e.train_mse, e.eval_mse));
    }
    for (k, log) in member_logs.iter().enumerate() {
        for e in log {
            mse_csv.push_str(&format!(
                "member_{k},{},{:.9e},{:.9e}\n",
                e.epoch, e.train_mse, e.eval_mse
            ));
        }
    }
    fs::write(cfg.run.out_dir.join("dynamics_mse.csv"), mse_csv)?;
    println!(
        "train-dynamics: m0 final train MSE {:.3e}, eval MSE {:.3e}; threshold {:.6e}",
        m0_log.last().map_or(f64::NAN, |e| e.train_mse),
        m0_log.last().map_or(f64::NAN, |e| e.eval_mse),
        reward_cfg.threshold()?
    );
    Ok(())
}

/// Behavioral cloning plus offline multi-branch short-rollout pre-training.
pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<()> {
    write_run_manifest(cfg)?;
    let (train, _eval) = load_demo_split(cfg)?;
    require_artifact(&cfg.run.out_dir.join("ensemble.txt"), "train-dynamics")?;
    let (ensemble, m0, reward_cfg) = load_ensemble(&cfg.run.out_dir)?;
    let env = cfg.to_env();

    let bc = bc_train(
        &train,
        env.action_bounds(),
        cfg.to_bc_config(),
        stage_seed(cfg, STREAM_BC),
    )?;
    save_policy(&cfg.run.out_dir, "bc", bc.policy())?;
    let bc_fit = bc_mse(&bc, &train)?;

    let tcfg = cfg.to_train_config();
    let mut agent = Agent::new(
        env.state_dim(),
        env.action_dim(),
        env.action_bounds(),
        &tcfg,
        stage_seed(cfg, STREAM_AGENT),
    )?;
    let log = mbsr_pretrain(
        &mut agent,
        &bc,
        &m0,
        &ensemble,
        &reward_cfg,
        &train,
        &tcfg,
        stage_seed(cfg, STREAM_MBSR),
    )?;
    save_policy(&cfg.run.out_dir, "policy_pre", &agent.policy)?;
    save_params(&agent.critic.net, &cfg.run.out_dir.join("critic_pre.nn"))?;

    let mut csv = String::from("branch,avg_reward\n");
    for (b, r) in log.branch_rewards.iter().enumerate() {
        csv.push_str(&format!("{b},{r:.9}\n"));
    }
    csv.push_str(&format!("summary,avg_reward={:.9},model_steps={}\n", log.avg_reward, log.model_steps));
    fs::write(cfg.run.out_dir.join("mbsr_log.csv"), csv)?;
    println!(
        "pretrain: BC fit MSE {bc_fit:.3e}; {} branches, {} model steps, avg model reward {:.3}",
        log.branches, log.model_steps, log.avg_reward
    );
    Ok(())
}

/// The online stage: environment interaction with ensemble rewards, then a
/// frozen-policy evaluation against the behavioral-cloning baseline.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    write_run_manifest(cfg)?;
    let dir = cfg.run.out_dir.clone();
    let (_train_demos, _) = load_demo_split(cfg)?;
    require_artifact(&dir.join("ensemble.txt"), "train-dynamics")?;
    require_artifact(&dir.join("policy_pre_mean.nn"), "pretrain")?;
    require_artifact(&dir.join("bc_mean.nn"), "pretrain")?;
    let (ensemble, _m0, reward_cfg) = load_ensemble(&dir)?;
    let env = cfg.to_env();
    let tcfg = cfg.to_train_config();

    let bc = BcPolicy::from_policy(load_policy(&dir, "bc")?);
    let mut agent = Agent::new(
        env.state_dim(),
        env.action_dim(),
        env.action_bounds(),
        &tcfg,
        stage_seed(cfg, STREAM_AGENT),
    )?;
    agent.policy = load_policy(&dir, "policy_pre")?;
    agent.critic.net = load_params(&dir.join("critic_pre.nn"))?;
    if tcfg.target_polyak > 0.0 {
        agent.target_critic = Some(agent.critic.clone());
    }

    let mut session = EnvSession::new(env.clone(), stage_seed(cfg, STREAM_ENV));
    let mut pool = ReplayPool::new(tcfg.replay_capacity)?;
    let metrics = mrfil_train(
        &mut agent,
        &bc,
        &ensemble,
        &reward_cfg,
        &mut session,
        &mut pool,
        &tcfg,
        stage_seed(cfg, STREAM_TRAIN),
    )?;
    assert_eq!(
        metrics.total_interactions,
        session.interactions(),
        "interaction accounting must be exact"
    );
    metrics.save(&dir.join("metrics.csv"))?;
    save_policy(&dir, "policy", &agent.policy)?;
    save_params(&agent.critic.net, &dir.join("critic.nn"))?;

    // Learning curve: per-episode task return against cumulative interactions.
    let curve: Vec<(f64, f64)> = metrics
        .rows
        .iter()
        .map(|r| (r.env_steps as f64, r.task_return))
        .collect();
    let svg = line_chart(
        "task return vs environment interactions",
        "environment interactions",
        "task return",
        &[Series {
            label: "training episodes".into(),
            points: curve,
        }],
        true,
    );
    fs::write(dir.join("learning_curve.svg"), svg)?;

    // Frozen-policy evaluation, same protocol for the learner and the
    // behavioral-cloning baseline.
    let eval_seed = stage_seed(cfg, STREAM_EVAL);
    let n_eval = cfg.train.eval_episodes;
    let mrfil_return = evaluate_policy(&env, &agent.policy, n_eval, eval_seed)?;
    let bc_return = evaluate_policy(&env, bc.policy(), n_eval, eval_seed)?;
    let mut eval_csv = String::from("policy,episodes,mean_task_return\n");
    eval_csv.push_str(&format!("mrfil,{n_eval},{mrfil_return:.9}\n"));
    eval_csv.push_str(&format!("bc,{n_eval},{bc_return:.9}\n"));
    fs::write(dir.join("eval.csv"), eval_csv)?;

    println!(
        "train: {} episodes, {} interactions; final eval return {:.4} (bc baseline {:.4})",
        metrics.rows.len(),
        metrics.total_interactions,
        mrfil_return,
        bc_return
    );
    Ok(())
}

fn format_check_row(row: &CheckRow) -> String {
    format!(
        "{},{},{:.12e},{:.12e},{:.12e},{}\n",
        row.check, row.trial, row.lhs, row.rhs, row.margin, row.satisfied
    )
}

/// Runs the full verification battery. `bound_scale` rescales the return-gap
/// bound before the comparison; anything other than 1.0 is a detector
/// self-test hook.
pub fn run_verification(cfg: &ExperimentConfig, bound_scale: f64) -> Result<CheckReport> {
    let v = &cfg.verify;
    let seed = stage_seed(cfg, STREAM_VERIFY);
    let mut report = CheckReport::default();
    report.extend(check_occupancy_identities(
        v.identity_trials,
        mrfil_core::seeds::derive(seed, 1),
    )?);
    report.extend(check_joint_tvd_chain_rule(
        v.joint_tvd_trials,
        v.joint_tvd_max_dim,
        mrfil_core::seeds::derive(seed, 2),
    ));
    report.extend(check_markov_marginal_drift(
        v.chain_pairs,
        v.chain_horizon,
        v.chain_max_states,
        mrfil_core::seeds::derive(seed, 3),
    ));
    for (i, scale) in v.return_gap_scales.iter().enumerate() {
        let bounds = check_return_gap_bound(
            v.return_gap_trials,
            *scale,
            mrfil_core::seeds::derive(seed, 4 + i as u64),
        )?;
        for b in &bounds {
            let rhs = b.bound_value * bound_scale;
            report.rows.push(CheckRow {
                check: "return_gap_bound",
                trial: b.trial + i * v.return_gap_trials,
                lhs: b.measured_gap,
                rhs,
                margin: rhs - b.measured_gap,
                satisfied: b.measured_gap <= rhs + 1e-9,
            });
        }
    }
    for (i, which) in [
        DualProblem::OccupancyMatching,
        DualProblem::EntropyRegularized,
        DualProblem::SupervisedAugmented,
    ]
    .iter()
    .enumerate()
    {
        report.extend(check_dual_identity(
            *which,
            v.duality_trials,
            mrfil_core::seeds::derive(seed, 10 + i as u64),
        )?);
    }
    Ok(report)
}

/// Writes `verification.csv` and returns the number of violations.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<usize> {
    write_run_manifest(cfg)?;
    let report = run_verification(cfg, 1.0)?;
    let violations = report.violations();
    let mut csv = String::from("check,trial,lhs,rhs,margin,satisfied\n");
    for row in &report.rows {
        csv.push_str(&format_check_row(row));
    }
    csv.push_str(&format!(
        "summary,total={},violations={}\n",
        report.rows.len(),
        violations
    ));
    fs::write(cfg.run.out_dir.join("verification.csv"), csv)?;
    println!(
        "verify: {} checks, {} violations",
        report.rows.len(),
        violations
    );
    Ok(violations)
}

/// Final evaluation rows from one run directory.
fn load_eval_rows(dir: &Path) -> Result<Vec<(String, f64)>> {
    let path = dir.join("eval.csv");
    require_artifact(&path, "train")?;
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Format(format!("bad eval row '{line}'")));
        }
        rows.push((
            f[0].to_string(),
            f[2].parse::<f64>()
                .map_err(|_| Error::Format(format!("bad eval value '{}'", f[2])))?,
        ));
    }
    Ok(rows)
}

/// Aggregates completed runs: mean and spread of the task return against
/// interactions on a shared grid, plus a final-evaluation comparison table.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<()> {
    if run_dirs.is_empty() {
        return Err(Error::Config("report needs at least one run directory".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut logs = Vec::new();
    for dir in run_dirs {
        let path = dir.join("metrics.csv");
        require_artifact(&path, "train")?;
        logs.push(MetricsLog::load(&path)?);
    }

    // Shared interaction grid, log-spaced up to the longest run.
    let max_steps = logs
        .iter()
        .filter_map(|l| l.rows.last().map(|r| r.env_steps))
        .max()
        .unwrap_or(1)
        .max(1);
    let grid_points = 40usize;
    let log_max = (max_steps as f64).log10();
    let grid: Vec<u64> = (0..=grid_points)
        .map(|i| 10f64.powf(log_max * i as f64 / grid_points as f64).round() as u64)
        .collect();

    // Task return at a grid point: trailing 5-episode mean at the last
    // episode finishing within the budget.
    let value_at = |log: &MetricsLog, steps: u64| -> Option<f64> {
        let idx = log.rows.iter().rposition(|r| r.env_steps <= steps)?;
        let lo = idx.saturating_sub(4);
        let window = &log.rows[lo..=idx];
        Some(window.iter().map(|r| r.task_return).sum::<f64>() / window.len() as f64)
    };

    let mut csv = String::from(
        "env_steps,mean_task_return,std_task_return,min_task_return,max_task_return,n_runs\n",
    );
    let mut mean_curve = Vec::new();
    for &g in &grid {
        let vals: Vec<f64> = logs.iter().filter_map(|l| value_at(l, g)).collect();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = if vals.len() > 1 {
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        csv.push_str(&format!(
            "{g},{mean:.9},{std:.9},{min:.9},{max:.9},{}\n",
            vals.len()
        ));
        mean_curve.push((g as f64, mean));
    }
    fs::write(out_dir.join("report.csv"), csv)?;

    // Final-eval comparison across runs, grouped by policy name.
    let mut by_policy: Vec<(String, Vec<f64>)> = Vec::new();
    for dir in run_dirs {
        if let Ok(rows) = load_eval_rows(dir) {
            for (name, value) in rows {
                match by_policy.iter_mut().find(|(n, _)| *n == name) {
                    Some((_, vals)) => vals.push(value),
                    None => by_policy.push((name, vec![value])),
                }
            }
        }
    }
    let mut cmp = String::from("policy,n_runs,mean_return,std_return,min_return,max_return\n");
    for (name, vals) in &by_policy {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = if vals.len() > 1 {
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        cmp.push_str(&format!("{name},{},{mean:.9},{std:.9},{min:.9},{max:.9}\n", vals.len()));
    }
    fs::write(out_dir.join("comparison.csv"), cmp)?;

    let mut series = vec![Series {
        label: format!("mean over {} runs", logs.len()),
        points: mean_curve,
    }];
    for (i, log) in logs.iter().enumerate() {
        series.push(Series {
            label: format!("run {i}"),
            points: log
                .rows
                .iter()
                .map(|r| (r.env_steps as f64, r.task_return))
                .collect(),
        });
    }
    let svg = line_chart(
        "aggregated task return",
        "environment interactions",
        "task return",
        &series,
        true,
    );
    fs::write(out_dir.join("report.svg"), svg)?;
    println!("report: aggregated {} runs into {}", logs.len(), out_dir.display());
    Ok(())
}
