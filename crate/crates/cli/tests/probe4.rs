use mrfil_core::envs::{ContinuousEnv, EnvKind, EnvSession, rollout_task_return};

#[test]
#[ignore]
fn probe_gain_grid() {
    let env = ContinuousEnv::new(EnvKind::PointMass2d);
    let eval_gains = |kp: f64, kd: f64| -> f64 {
        let mut total = 0.0;
        for seed in 0..100u64 {
            let mut s = EnvSession::new(env.clone(), seed);
            let r = rollout_task_return(&mut s, |obs| {
                let goal = [1.0, 1.0];
                (0..2).map(|i| (kp * (goal[i] - obs[i]) - kd * obs[2 + i]).clamp(-1.0, 1.0)).collect()
            }).unwrap();
            total += r;
        }
        total / 100.0
    };
    for kp in [3.0, 4.0, 5.0, 6.0, 8.0, 10.0] {
        let mut line = format!("kp {kp:4}:");
        for kd in [3.0, 4.0, 5.0, 6.0, 8.0, 10.0] {
            line += &format!(" kd{kd}={:.3}", eval_gains(kp, kd));
        }
        println!("{line}");
    }
}
