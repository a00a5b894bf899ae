use mrfil_core::agent::{evaluate_policy, load_policy};
use mrfil_core::envs::{ContinuousEnv, EnvKind, EnvSession, rollout_task_return};
use std::path::Path;

#[test]
#[ignore]
fn probe_noise_sensitivity() {
    let dir = Path::new("/tmp/smoke/run1");
    let bc = load_policy(dir, "bc").unwrap();
    let post = load_policy(dir, "policy").unwrap();
    for noise in [0.2, 0.3, 0.4, 0.5] {
        let env = ContinuousEnv::new(EnvKind::PointMass2d).with_noise(noise);
        // expert return
        let mut expert_total = 0.0;
        for ep in 0..40u64 {
            let mut s = EnvSession::new(env.clone(), 7_000 + ep);
            expert_total += rollout_task_return(&mut s, |obs| s_expert(&env, obs)).unwrap();
        }
        let e = expert_total / 40.0;
        let b = evaluate_policy(&env, &bc, 40, 123).unwrap();
        let m = evaluate_policy(&env, &post, 40, 123).unwrap();
        println!("noise {noise}: expert {e:.4} bc {b:.4} mrfil {m:.4}  (0.8*expert = {:.4})", 0.8 * e);
    }
}

fn s_expert(env: &ContinuousEnv, obs: &[f64]) -> Vec<f64> {
    env.expert_action(obs)
}
