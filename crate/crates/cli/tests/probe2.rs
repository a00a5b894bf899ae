use mrfil_core::agent::*;
use mrfil_core::demos::{DemoSet, ReplayPool, Transition};
use mrfil_core::dynmodel::*;
use mrfil_core::envs::{ContinuousEnv, EnvKind};
use std::path::Path;

use rand::Rng;

#[test]
#[ignore]
fn probe_mbsr_dynamics() {
    let dir = Path::new("/tmp/smoke/run1");
    let env = ContinuousEnv::new(EnvKind::PointMass2d);
    let demos = DemoSet::load(&dir.join("demos_train.csv")).unwrap();
    let (ensemble, m0, reward_cfg) = load_ensemble(dir).unwrap();
    let bc = BcPolicy::from_policy(load_policy(dir, "bc").unwrap());
    let tcfg = TrainConfig { hidden_width: 32, batch_size: 128, gamma: 0.9, tau: 5.0, ..TrainConfig::default() };
    let mut agent = Agent::new(4, 2, env.action_bounds(), &tcfg, 42).unwrap();

    let mut rng = mrfil_core::seeds::rng(7);
    let starts: Vec<Vec<f64>> = demos.iter_transitions().map(|t| t.state.clone()).collect();
    let mut pool = ReplayPool::new(100_000).unwrap();
    let mut step = 0u64;
    for _branch in 0..200 {
        let mut state = starts[rng.random_range(0..starts.len())].clone();
        for phase in 0..2 {
            let (len, noise) = if phase == 0 { (5, 0.3) } else { (20, 0.0) };
            for _ in 0..len {
                let (mut action, _) = agent.policy.sample(&state, &mut rng).unwrap();
                if noise > 0.0 {
                    use rand_distr::{Distribution, StandardNormal};
                    for a in action.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *a += noise * z;
                    }
                    agent.policy.clip_action(&mut action);
                }
                let mut next = m0.predict(&state, &action).unwrap();
                for v in next.iter_mut() { *v = v.clamp(-2.0, 2.0); }
                let r = ensemble_reward(&ensemble, &reward_cfg, &state, &action).unwrap();
                pool.push(Transition { state: state.clone(), action, next_state: next.clone(), reward: Some(r), done: false });
                let sampled = pool.sample_with(tcfg.batch_size.min(pool.len()), &mut rng).unwrap();
                let next_actions: Vec<Vec<f64>> = sampled.iter().map(|t| agent.policy.sample(&t.next_state, &mut rng).unwrap().0).collect();
                let batch = TransitionBatch::from_transitions(&sampled, next_actions).unwrap();
                if step % 500 == 0 {
                    let (pg, sup, diag) = actor_gradient_parts(&agent.policy, &agent.critic, &bc, &batch, &tcfg).unwrap();
                    let norm = |v: &Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let pgn = norm(&pg.mean_net.flatten());
                    let supn = norm(&sup.mean_net.flatten());
                    let mu0 = agent.policy.mean(&[0.0, 0.0, 0.0, 0.0]).unwrap();
                    let q0 = agent.critic.value(&[0.0,0.0,0.0,0.0], &[1.0,1.0]).unwrap();
                    println!("step {step}: |pg|={pgn:.3} |sup|={supn:.3} adv={:.3} loss={:.3} mu0=({:.2},{:.2}) q0={q0:.2} supdist={:.2}",
                        diag.mean_advantage, diag.pg_term, mu0[0], mu0[1], diag.supervised_term);
                }
                agent.update(&bc, &batch, &tcfg).unwrap();
                state = next;
                step += 1;
            }
        }
    }
}
